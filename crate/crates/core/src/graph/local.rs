use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, GlcError, Result};
use crate::nn::matrix::squared_distance;
use crate::nn::tape::{contrastive_value, AnchorTerms, ContrastiveSpec};
use crate::nn::{DenseMatrix, Tape};

/// Kernel scale for the local Gaussian graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// Median squared cross-view distance, recomputed per view pair and batch.
    Median,
    Fixed(f64),
}

impl SigmaMode {
    pub fn resolve(self, h_u: &DenseMatrix, h_v: &DenseMatrix) -> Result<f64> {
        match self {
            SigmaMode::Median => Ok(median_sigma(h_u, h_v)),
            SigmaMode::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
            SigmaMode::Fixed(s) => Err(config_err!("sigma must be positive, got {s}")),
        }
    }
}

/// Cross-view kernel, within-view kernel and their propagation for one
/// view pair over co-available samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HighOrderLocalGraph {
    pub cross: DenseMatrix,
    pub within: DenseMatrix,
    pub propagated: DenseMatrix,
    pub sigma: f64,
}

impl HighOrderLocalGraph {
    pub fn build(h_u: &DenseMatrix, h_v: &DenseMatrix, sigma: f64) -> Result<Self> {
        let cross = local_affinity(h_u, h_v, sigma)?;
        let within = local_affinity(h_v, h_v, sigma)?;
        let propagated = high_order_graph(&cross, &within)?;
        Ok(Self {
            cross,
            within,
            propagated,
            sigma,
        })
    }
}

fn check_pair(h_u: &DenseMatrix, h_v: &DenseMatrix) -> Result<()> {
    if h_u.rows() != h_v.rows() || (h_u.rows() > 0 && h_u.cols() != h_v.cols()) {
        return Err(shape_err!(
            "co-available features must match: {:?} vs {:?}",
            h_u.shape(),
            h_v.shape()
        ));
    }
    Ok(())
}

/// `W_ij = exp(−‖h_i^u − h_j^v‖² / σ)`.
pub fn local_affinity(h_u: &DenseMatrix, h_v: &DenseMatrix, sigma: f64) -> Result<DenseMatrix> {
    if !(sigma > 0.0) {
        return Err(config_err!("sigma must be positive, got {sigma}"));
    }
    check_pair(h_u, h_v)?;
    let n = h_u.rows();
    let mut w = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            w.set(i, j, (-squared_distance(h_u.row(i), h_v.row(j)) / sigma).exp());
        }
    }
    Ok(w)
}

/// `Ŵ = W_uv · W_vvᵀ`.
pub fn high_order_graph(cross: &DenseMatrix, within: &DenseMatrix) -> Result<DenseMatrix> {
    if cross.rows() != cross.cols() || cross.shape() != within.shape() {
        return Err(shape_err!(
            "high-order graph needs two n x n kernels, got {:?} and {:?}",
            cross.shape(),
            within.shape()
        ));
    }
    cross.matmul_nt(within)
}

/// Diagonal of `W_uv · W_vvᵀ` without forming either kernel:
/// `Ŵ_ii = Σ_k exp(−(‖h_i^u − h_k^v‖² + ‖h_i^v − h_k^v‖²)/σ)`.
pub fn high_order_diagonal(h_u: &DenseMatrix, h_v: &DenseMatrix, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(config_err!("sigma must be positive, got {sigma}"));
    }
    check_pair(h_u, h_v)?;
    let n = h_u.rows();
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    let a = squared_distance(h_u.row(i), h_v.row(k));
                    let b = squared_distance(h_v.row(i), h_v.row(k));
                    (-a / sigma).exp() * (-b / sigma).exp()
                })
                .sum()
        })
        .collect())
}

/// Median of the `n²` squared cross-view distances; `1.0` when that median
/// is zero.
pub fn median_sigma(h_u: &DenseMatrix, h_v: &DenseMatrix) -> f64 {
    let mut d: Vec<f64> = (0..h_u.rows())
        .flat_map(|i| (0..h_v.rows()).map(move |j| (i, j)))
        .map(|(i, j)| squared_distance(h_u.row(i), h_v.row(j)))
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let m = d.len();
    let (_, &mut hi, _) = d.select_nth_unstable_by(m / 2, f64::total_cmp);
    let median = if m % 2 == 1 {
        hi
    } else {
        let lo = d[..m / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    if median > 0.0 && median.is_finite() {
        median
    } else {
        1.0
    }
}

/// Contrastive specification over the scores of the stacked `[H_u; H_v]`
/// (`2n x 2n`): anchor `i` pairs with `n + i`, and every other sample of
/// both views is a negative.
pub fn cross_view_spec(n: usize, log_weights: &[f64], tau: f64) -> ContrastiveSpec {
    let anchors = (0..n)
        .map(|i| AnchorTerms {
            anchor: i,
            positives: vec![(n + i, log_weights.get(i).copied().unwrap_or(0.0))],
            negatives: (0..n)
                .filter(|&j| j != i)
                .chain((0..n).filter(|&j| j != i).map(|j| n + j))
                .collect(),
        })
        .collect();
    ContrastiveSpec {
        anchors,
        temperature: tau,
        include_positive_in_denominator: false,
    }
}

fn cosine_scores(h_u: &DenseMatrix, h_v: &DenseMatrix) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let stacked = tape.constant(DenseMatrix::vstack(&[h_u, h_v])?);
    let unit = tape.normalize_rows(stacked)?;
    let scores = tape.matmul_nt(unit, unit)?;
    Ok(tape.value(scores).clone())
}

/// Log of the positive weights `Ŵ_ii`, optionally after dividing by the
/// largest diagonal entry.
pub fn log_weights(diagonal: &[f64], normalize: bool) -> Result<Vec<f64>> {
    let scale = if normalize {
        diagonal.iter().copied().fold(0.0, f64::max)
    } else {
        1.0
    };
    diagonal
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let w = w / scale;
            if !(w > 0.0) || !w.is_finite() {
                return Err(GlcError::Numeric(format!("local weight {i} is {w}")));
            }
            Ok(w.ln())
        })
        .collect()
}

/// `−Σ_i log( Ŵ_ii e^{P_ii/τ} / Σ_{neg} e^{P_ij/τ} )` with `P` the cosine
/// similarity. Only the diagonal of `w_hat` is read. Fewer than two
/// co-available samples contribute zero.
pub fn lwc_loss(h_u: &DenseMatrix, h_v: &DenseMatrix, w_hat: &DenseMatrix, tau: f64) -> Result<f64> {
    check_pair(h_u, h_v)?;
    let n = h_u.rows();
    if n < 2 {
        log::warn!("local-graph contrastive term skipped: {n} co-available samples");
        return Ok(0.0);
    }
    if w_hat.shape() != (n, n) {
        return Err(shape_err!("Ŵ is {:?}, expected {n}x{n}", w_hat.shape()));
    }
    let diag: Vec<f64> = (0..n).map(|i| w_hat.get(i, i)).collect();
    let spec = cross_view_spec(n, &log_weights(&diag, false)?, tau);
    contrastive_value(&cosine_scores(h_u, h_v)?, &spec)
}

/// Unweighted cross-view contrastive loss (all positive weights equal 1).
pub fn pairwise_contrastive_loss(h_u: &DenseMatrix, h_v: &DenseMatrix, tau: f64) -> Result<f64> {
    check_pair(h_u, h_v)?;
    let n = h_u.rows();
    if n < 2 {
        return Ok(0.0);
    }
    let spec = cross_view_spec(n, &[], tau);
    contrastive_value(&cosine_scores(h_u, h_v)?, &spec)
}

/// Features of one view for the samples of a batch it observes.
#[derive(Debug, Clone, Copy)]
pub struct ViewEmbedding<'a> {
    pub features: &'a DenseMatrix,
    /// Batch position of each feature row, ascending.
    pub positions: &'a [usize],
}

/// Local row indices of the samples both views observe.
pub fn co_available(pos_u: &[usize], pos_v: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let (mut a, mut b) = (0, 0);
    let (mut ru, mut rv) = (Vec::new(), Vec::new());
    while a < pos_u.len() && b < pos_v.len() {
        match pos_u[a].cmp(&pos_v[b]) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                ru.push(a);
                rv.push(b);
                a += 1;
                b += 1;
            }
        }
    }
    (ru, rv)
}

/// Options shared by every local-graph term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    pub tau: f64,
    pub sigma: SigmaMode,
    pub normalize_weights: bool,
}

/// Co-available rows of `(u, v)` and the positive log-weights for them.
#[derive(Debug, Clone, PartialEq)]
pub struct PairWeights {
    pub rows_u: Vec<usize>,
    pub rows_v: Vec<usize>,
    pub log_weights: Vec<f64>,
}

/// Build the co-available restriction and `log Ŵ_ii` for one view pair;
/// `None` when fewer than two samples are shared.
pub fn pair_weights(u: ViewEmbedding<'_>, v: ViewEmbedding<'_>, opts: &LocalOptions) -> Result<Option<PairWeights>> {
    let (rows_u, rows_v) = co_available(u.positions, v.positions);
    if rows_u.len() < 2 {
        return Ok(None);
    }
    let hu = u.features.select_rows(&rows_u);
    let hv = v.features.select_rows(&rows_v);
    let sigma = opts.sigma.resolve(&hu, &hv)?;
    let diag = high_order_diagonal(&hu, &hv, sigma)?;
    Ok(Some(PairWeights {
        rows_u,
        rows_v,
        log_weights: log_weights(&diag, opts.normalize_weights)?,
    }))
}

/// Sum of the local-graph loss over all view pairs `u < v`.
pub fn lwc_total(views: &[ViewEmbedding<'_>], opts: &LocalOptions) -> Result<f64> {
    let mut total = 0.0;
    for u in 0..views.len() {
        for v in u + 1..views.len() {
            let Some(pw) = pair_weights(views[u], views[v], opts)? else {
                continue;
            };
            let hu = views[u].features.select_rows(&pw.rows_u);
            let hv = views[v].features.select_rows(&pw.rows_v);
            let spec = cross_view_spec(pw.rows_u.len(), &pw.log_weights, opts.tau);
            total += contrastive_value(&cosine_scores(&hu, &hv)?, &spec)?;
        }
    }
    Ok(total)
}
