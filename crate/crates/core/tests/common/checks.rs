//! Per-fixture checks shared by the focused test files and the acceptance
//! harness. Each returns the worst discrepancy it observed.

use std::sync::Arc;

use glc_core::error::Result;
use glc_core::graph::{
    build_global_graph, cross_view_spec, ggc_loss, ggc_spec, high_order_diagonal, high_order_graph, local_affinity,
    lwc_loss, median_sigma, pairwise_contrastive_loss, select_pairs, HighOrderLocalGraph,
};
use glc_core::nn::{grad_check, DenseMatrix, Tape};
use glc_core::pipeline::{batch_objective, batch_objective_frozen, TrainConfig};
use rand::Rng;

use super::*;

pub const GRAD_EPS: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-5;
pub const ORACLE_TOL: f64 = 1e-9;

fn size(r: &mut ChaCha8Rng) -> (usize, usize) {
    (r.random_range(2..=6), r.random_range(2..=8))
}

/// Cross-view pairwise loss with respect to both feature matrices.
pub fn grad_pairwise(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let (n, d) = size(&mut r);
    let (hu, hv) = (uniform(&mut r, n, d), uniform(&mut r, n, d));
    let tau = r.random_range(0.2..1.0);
    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(hu.clone()), tape.leaf(hv.clone()));
    let s = tape.concat_rows(&[a, b])?;
    let u = tape.normalize_rows(s)?;
    let p = tape.matmul_nt(u, u)?;
    let l = tape.contrastive(p, Arc::new(cross_view_spec(n, &[], tau)))?;
    let g = tape.backward(l)?;
    grad_check(
        |x| pairwise_contrastive_loss(&x[0], &x[1], tau),
        &[hu, hv],
        &[g.wrt(a), g.wrt(b)],
        GRAD_EPS,
    )
}

/// Global-graph loss with respect to each view's features; pair sets fixed
/// at the base point.
pub fn grad_ggc(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let d = r.random_range(2..=8);
    let views: Vec<DenseMatrix> = (0..2)
        .map(|_| {
            let n = r.random_range(2..=6);
            uniform(&mut r, n, d)
        })
        .collect();
    let tau = r.random_range(0.2..1.0);
    let include = r.random_bool(0.5);
    let pairs = select_pairs(&build_global_graph(&views)?.similarity, 20.0, 50.0)?;
    let spec = Arc::new(ggc_spec(&pairs, tau, include)?);
    let mut tape = Tape::new();
    let leaves: Vec<_> = views.iter().map(|h| tape.leaf(h.clone())).collect();
    let s = tape.concat_rows(&leaves)?;
    let u = tape.normalize_rows(s)?;
    let g = tape.matmul_nt(u, u)?;
    let l = tape.contrastive(g, spec)?;
    let grads = tape.backward(l)?;
    let analytic: Vec<DenseMatrix> = leaves.iter().map(|&v| grads.wrt(v)).collect();
    grad_check(
        |x| ggc_loss(&build_global_graph(x)?, &pairs, tau, include),
        &views,
        &analytic,
        GRAD_EPS,
    )
}

/// Local-graph weighted loss with `Ŵ` held constant.
pub fn grad_lwc(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let (n, d) = size(&mut r);
    let (hu, hv) = (uniform(&mut r, n, d), uniform(&mut r, n, d));
    let tau = r.random_range(0.2..1.0);
    let w_hat = HighOrderLocalGraph::build(&hu, &hv, median_sigma(&hu, &hv))?.propagated;
    let logw: Vec<f64> = (0..n).map(|i| w_hat.get(i, i).ln()).collect();
    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(hu.clone()), tape.leaf(hv.clone()));
    let s = tape.concat_rows(&[a, b])?;
    let u = tape.normalize_rows(s)?;
    let p = tape.matmul_nt(u, u)?;
    let l = tape.contrastive(p, Arc::new(cross_view_spec(n, &logw, tau)))?;
    let g = tape.backward(l)?;
    grad_check(
        |x| lwc_loss(&x[0], &x[1], &w_hat, tau),
        &[hu, hv],
        &[g.wrt(a), g.wrt(b)],
        GRAD_EPS,
    )
}

fn model_check(
    seed: u64,
    cfg: &TrainConfig,
    masked: bool,
    pick: fn(&glc_core::pipeline::BatchLosses) -> f64,
) -> Result<f64> {
    let mut r = rng(seed);
    let n = r.random_range(3..=6);
    let dims: Vec<usize> = (0..2).map(|_| r.random_range(2..=8)).collect();
    let ds = small_dataset(&mut r, n, &dims, masked);
    let batch = full_batch(&ds);
    let model = tiny_model(&dims, seed);
    let base = batch_objective(&model, &batch, cfg)?;
    let grads = base.tape.backward(base.loss)?;
    let analytic: Vec<DenseMatrix> = base.params.iter().map(|&p| grads.wrt(p)).collect();
    let params: Vec<DenseMatrix> = model.params().cloned().collect();
    grad_check(
        |x| {
            Ok(pick(
                &batch_objective_frozen(&with_params(&model, x), &batch, cfg, &base.selection)?.losses,
            ))
        },
        &params,
        &analytic,
        GRAD_EPS,
    )
}

/// Reconstruction loss with respect to every network parameter.
pub fn grad_rec(seed: u64) -> Result<f64> {
    let cfg = TrainConfig {
        alpha: 0.0,
        beta: 0.0,
        ..TrainConfig::desk()
    };
    model_check(seed, &cfg, true, |l| l.rec)
}

/// Full objective with respect to every network parameter; pair sets and
/// local weights fixed at the base point.
pub fn grad_total(seed: u64) -> Result<f64> {
    let mut r = rng(seed ^ 0x5eed);
    let cfg = TrainConfig {
        alpha: r.random_range(0.05..1.0),
        beta: r.random_range(0.2..1.0),
        pos: 20.0,
        neg: 50.0,
        ..TrainConfig::desk()
    };
    model_check(seed, &cfg, false, |l| l.total)
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Vectorized global graph and loss against loop oracles, `N_c <= 12`.
pub fn oracle_ggc(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let d = r.random_range(2..=8);
    let n_views = r.random_range(1..=3);
    let views: Vec<DenseMatrix> = (0..n_views)
        .map(|_| {
            let n = r.random_range(1..=4);
            uniform(&mut r, n, d)
        })
        .collect();
    let stacked: Vec<Vec<f64>> = views.iter().flat_map(rows_of).collect();
    if stacked.len() < 3 {
        return Ok(0.0);
    }
    let graph = build_global_graph(&views)?;
    let g = cosine_oracle(&stacked);
    let (pos, neg) = (r.random_range(1..=40) as f64, r.random_range(10..=60) as f64);
    let pairs = select_pairs(&graph.similarity, pos, neg)?;
    let tau = r.random_range(0.1..2.0);
    let include = r.random_bool(0.5);
    let mut off = graph.similarity.clone();
    let mut g_off = g.clone();
    for (i, row) in g_off.iter_mut().enumerate() {
        row[i] = 0.0;
        off.set(i, i, 0.0);
    }
    let loss = ggc_loss(&graph, &pairs, tau, include)?;
    Ok(max_diff(&rows_of(&off), &g_off).max((loss - ggc_oracle(&g, &pairs, tau, include)).abs()))
}

/// Weighted local loss against the loop oracle, `2n <= 12`.
pub fn oracle_lwc(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let (n, d) = size(&mut r);
    let (hu, hv) = (uniform(&mut r, n, d), uniform(&mut r, n, d));
    let tau = r.random_range(0.1..2.0);
    let w_data = (0..n * n).map(|_| r.random_range(0.05..4.0)).collect();
    let w_hat = DenseMatrix::from_vec(n, n, w_data)?;
    let diag: Vec<f64> = (0..n).map(|i| w_hat.get(i, i)).collect();
    let oracle = cross_view_oracle(&rows_of(&hu), &rows_of(&hv), tau, Some(&diag));
    Ok((lwc_loss(&hu, &hv, &w_hat, tau)? - oracle).abs())
}

/// Unweighted cross-view loss against the loop oracle.
pub fn oracle_pairwise(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let (n, d) = size(&mut r);
    let (hu, hv) = (uniform(&mut r, n, d), uniform(&mut r, n, d));
    let tau = r.random_range(0.1..2.0);
    let oracle = cross_view_oracle(&rows_of(&hu), &rows_of(&hv), tau, None);
    Ok((pairwise_contrastive_loss(&hu, &hv, tau)? - oracle).abs())
}

/// Kernels, propagated graph and its fast diagonal against loop oracles.
pub fn oracle_high_order(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let n = r.random_range(1..=12);
    let d = r.random_range(1..=8);
    let (hu, hv) = (uniform(&mut r, n, d), uniform(&mut r, n, d));
    let sigma = r.random_range(0.1..3.0);
    let (u, v) = (rows_of(&hu), rows_of(&hv));
    let cross = local_affinity(&hu, &hv, sigma)?;
    let within = local_affinity(&hv, &hv, sigma)?;
    let (kc, kw) = (kernel_oracle(&u, &v, sigma), kernel_oracle(&v, &v, sigma));
    let w_hat = high_order_graph(&cross, &within)?;
    let oracle = product_oracle(&kc, &kw);
    let diag = high_order_diagonal(&hu, &hv, sigma)?;
    let diag_err = (0..n).map(|i| (diag[i] - oracle[i][i]).abs()).fold(0.0, f64::max);
    Ok(max_diff(&rows_of(&cross), &kc)
        .max(max_diff(&rows_of(&within), &kw))
        .max(max_diff(&rows_of(&w_hat), &oracle))
        .max(diag_err))
}

/// `select_pairs` on a random 20x20 graph (values on a coarse grid so ties
/// occur) against the full-sort oracle. Returns the number of rows that
/// disagree.
pub fn selection_mismatches(seed: u64) -> Result<usize> {
    let mut r = rng(seed);
    let n = 20;
    let data = (0..n * n).map(|_| (r.random_range(-10..=10) as f64) / 10.0).collect();
    let g = DenseMatrix::from_vec(n, n, data)?;
    let pos = r.random_range(1..=50usize);
    let neg = r.random_range(1..=100 - pos);
    let pairs = select_pairs(&g, pos as f64, neg as f64)?;
    let mut bad = 0;
    for i in 0..n {
        let (p, q) = selection_oracle(g.row(i), i, pos, neg);
        if pairs.positives[i] != p || pairs.negatives[i] != q {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Rescale every feature row by a positive power of two (exact in floating
/// point) and report whether graph, pair sets and loss are bit-identical.
/// Also checks arbitrary positive factors agree to 1e-12 with identical
/// pair sets.
pub fn scale_invariant(seed: u64) -> Result<bool> {
    let mut r = rng(seed);
    let d = r.random_range(2..=8);
    let n = r.random_range(3..=12);
    let h = uniform(&mut r, n, d);
    let tau = 0.5;
    let base = build_global_graph(std::slice::from_ref(&h))?;
    let pairs = select_pairs(&base.similarity, 10.0, 50.0)?;
    let loss = ggc_loss(&base, &pairs, tau, false)?;

    let mut exact = h.clone();
    let mut arbitrary = h.clone();
    for i in 0..h.rows() {
        let p = 2f64.powi(r.random_range(-6..=6));
        let c = r.random_range(0.01..100.0);
        exact.row_mut(i).iter_mut().for_each(|x| *x *= p);
        arbitrary.row_mut(i).iter_mut().for_each(|x| *x *= c);
    }
    let g1 = build_global_graph(&[exact])?;
    let p1 = select_pairs(&g1.similarity, 10.0, 50.0)?;
    let exact_ok = g1.similarity == base.similarity && p1 == pairs && ggc_loss(&g1, &p1, tau, false)? == loss;

    let g2 = build_global_graph(&[arbitrary])?;
    let p2 = select_pairs(&g2.similarity, 10.0, 50.0)?;
    let close = g2.similarity.max_abs_diff(&base.similarity)? < 1e-12
        && p2 == pairs
        && (ggc_loss(&g2, &p2, tau, false)? - loss).abs() < 1e-12;
    Ok(exact_ok && close)
}

pub const PROTOCOL_RATES_TENTHS: [usize; 6] = [0, 1, 3, 5, 7, 10];
pub const PROTOCOL_VIEWS: [usize; 4] = [2, 3, 4, 12];

/// Generate masks for every rate and view count over `seeds` seeds and count
/// those with the wrong number of incomplete rows or any all-zero row.
pub fn mask_failures(n: usize, seeds: u64) -> Result<usize> {
    let mut bad = 0;
    for tenths in PROTOCOL_RATES_TENTHS {
        let expected = tenths * n / 10;
        for v in PROTOCOL_VIEWS {
            for seed in 0..seeds {
                let m = glc_core::data::generate_missing_mask(n, v, tenths as f64 / 10.0, seed)?;
                let incomplete = (0..n).filter(|&i| m.row(i).iter().any(|&b| !b)).count();
                let empty = (0..n).filter(|&i| m.row(i).iter().all(|&b| !b)).count();
                if incomplete != expected || empty != 0 {
                    bad += 1;
                }
            }
        }
    }
    Ok(bad)
}

/// Inject noise at rate 1 into an all-zero two-view dataset so every
/// perturbed entry is a raw draw; returns (draws, mean, std).
pub fn noise_moments(std: f64, seed: u64) -> Result<(usize, f64, f64)> {
    let (n, d) = (10_000, 10);
    let views = vec![DenseMatrix::zeros(n, d), DenseMatrix::zeros(n, d)];
    let ds = MultiViewDataset::new(views, None, None, 2)?;
    let noisy = glc_core::data::inject_noise(&ds, 1.0, std, seed)?;
    let flags = noisy.noise_flags.as_ref().expect("noise flags recorded");
    let mut draws = Vec::new();
    for (v, x) in noisy.views.iter().enumerate() {
        for i in 0..n {
            if flags.get(i, v) {
                draws.extend_from_slice(x.row(i));
            }
        }
    }
    let m = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / m;
    let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    Ok((draws.len(), mean, var.sqrt()))
}

pub struct MetricFixture {
    pub pred: Vec<usize>,
    pub truth: Vec<usize>,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Partitions with ACC, NMI and ARI worked out by hand from their
/// contingency tables.
pub fn metric_fixtures() -> Vec<MetricFixture> {
    let ln2 = 2f64.ln();
    let h338 = -(2.0 * 0.375 * 0.375f64.ln() + 0.25 * 0.25f64.ln());
    let mi338 = 0.5 * (16.0f64 / 9.0).ln() + 0.125 * ((8.0f64 / 9.0).ln() + 2.0 * (4.0f64 / 3.0).ln() + 2f64.ln());
    vec![
        // one pure cluster, one split evenly between two classes
        MetricFixture {
            pred: vec![0, 0, 1, 1],
            truth: vec![1, 1, 0, 2],
            acc: 0.75,
            nmi: ln2 / (0.5 * (ln2 + 1.5 * ln2)),
            ari: 4.0 / 7.0,
        },
        // independent partitions
        MetricFixture {
            pred: vec![0, 0, 1, 1],
            truth: vec![0, 1, 0, 1],
            acc: 0.5,
            nmi: 0.0,
            ari: -0.5,
        },
        // constant prediction against two balanced classes
        MetricFixture {
            pred: vec![4; 6],
            truth: vec![0, 0, 0, 1, 1, 1],
            acc: 0.5,
            nmi: 0.0,
            ari: 0.0,
        },
        // counts [[2,1,0],[0,1,2]]
        MetricFixture {
            pred: vec![0, 0, 0, 1, 1, 1],
            truth: vec![0, 0, 1, 1, 2, 2],
            acc: 4.0 / 6.0,
            nmi: (2.0 / 3.0 * ln2) / (0.5 * (ln2 + 3f64.ln())),
            ari: 8.0 / 33.0,
        },
        // counts [[0,2,1],[1,1,0],[1,0,2]]
        MetricFixture {
            pred: vec![0, 0, 1, 1, 2, 2, 2, 0],
            truth: vec![1, 1, 1, 0, 0, 2, 2, 2],
            acc: 5.0 / 8.0,
            nmi: mi338 / h338,
            ari: 1.0 / 21.0,
        },
        // relabeled perfect clustering
        MetricFixture {
            pred: vec![7, 7, 3, 3, 5, 5],
            truth: vec![0, 0, 1, 1, 2, 2],
            acc: 1.0,
            nmi: 1.0,
            ari: 1.0,
        },
    ]
}

/// Largest deviation from the hand values over all fixtures, including
/// every relabeling of both label sets by a rotation of names.
pub fn metric_max_error() -> Result<f64> {
    use glc_core::pipeline::{accuracy, ari, nmi};
    let mut worst: f64 = 0.0;
    for f in metric_fixtures() {
        for shift in 0..4 {
            let relabel = |xs: &[usize], k: usize| -> Vec<usize> { xs.iter().map(|x| (x + k) % 11 * 3).collect() };
            let (p, t) = (relabel(&f.pred, shift), relabel(&f.truth, 3 - shift));
            worst = worst
                .max((accuracy(&p, &t)? - f.acc).abs())
                .max((nmi(&p, &t)? - f.nmi).abs())
                .max((ari(&p, &t)? - f.ari).abs());
        }
    }
    Ok(worst)
}
