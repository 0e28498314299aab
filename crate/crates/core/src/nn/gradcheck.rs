use crate::error::{GlcError, Result};
use crate::nn::matrix::DenseMatrix;

/// Compare analytic gradients against central finite differences.
///
/// `loss` evaluates the objective at the given parameters; `analytic` holds
/// the gradient for each parameter at `params`. Returns the largest
/// `|analytic - numeric| / max(1, |numeric|)` over all entries.
pub fn grad_check<F>(mut loss: F, params: &[DenseMatrix], analytic: &[DenseMatrix], epsilon: f64) -> Result<f64>
where
    F: FnMut(&[DenseMatrix]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(GlcError::Shape(format!(
            "{} params but {} gradients",
            params.len(),
            analytic.len()
        )));
    }
    let mut point = params.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..point.len() {
        point[k].check_same_shape(&analytic[k], "grad_check")?;
        for idx in 0..point[k].len() {
            let orig = point[k].as_slice()[idx];
            point[k].as_mut_slice()[idx] = orig + epsilon;
            let up = loss(&point)?;
            point[k].as_mut_slice()[idx] = orig - epsilon;
            let down = loss(&point)?;
            point[k].as_mut_slice()[idx] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(GlcError::Numeric(format!(
                    "non-finite loss while perturbing param {k}[{idx}]"
                )));
            }
            let numeric = (up - down) / (2.0 * epsilon);
            let err = (analytic[k].as_slice()[idx] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
