use crate::data::IndicatorMatrix;
use crate::error::{shape_err, Result};
use crate::nn::DenseMatrix;

/// Per-sample mean of the available views' features.
pub fn fuse_mean(per_view: &[DenseMatrix], mask: &IndicatorMatrix) -> Result<DenseMatrix> {
    if per_view.len() != mask.n_views() {
        return Err(shape_err!(
            "{} views of features, mask has {}",
            per_view.len(),
            mask.n_views()
        ));
    }
    let n = mask.n_samples();
    let d = per_view.first().map_or(0, DenseMatrix::cols);
    for (v, h) in per_view.iter().enumerate() {
        if h.shape() != (n, d) {
            return Err(shape_err!(
                "view {v} features are {:?}, expected {:?}",
                h.shape(),
                (n, d)
            ));
        }
    }
    let mut out = DenseMatrix::zeros(n, d);
    for i in 0..n {
        let row = out.row_mut(i);
        for (v, h) in per_view.iter().enumerate() {
            if mask.available(i, v) {
                for (o, x) in row.iter_mut().zip(h.row(i)) {
                    *o += x;
                }
            }
        }
        let k = mask.views_available(i) as f64;
        row.iter_mut().for_each(|o| *o /= k);
    }
    Ok(out)
}
