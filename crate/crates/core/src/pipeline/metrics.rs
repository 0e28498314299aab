use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

/// Clustering quality of one partition against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Contingency counts between two labelings, with labels compacted to
/// `0..k` in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    /// `counts[p][t]`.
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = std::collections::BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(shape_err!("{} predictions for {} labels", pred.len(), truth.len()));
        }
        let (p, kp) = compact(pred);
        let (t, kt) = compact(truth);
        let mut counts = vec![vec![0u64; kt]; kp];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        Ok(Self {
            counts,
            n: pred.len() as u64,
        })
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let k = self.counts.first().map_or(0, Vec::len);
        (0..k).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    /// Both labelings induce the same partition.
    fn identical(&self) -> bool {
        self.counts.len() == self.col_sums().len()
            && self.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }
}

/// Fraction of samples matched under the best one-to-one mapping of
/// clusters to classes.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.n == 0 {
        return Ok(0.0);
    }
    let kp = c.counts.len();
    let kt = c.col_sums().len();
    let k = kp.max(kt);
    let mut w = Matrix::new(k, k, 0i64);
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            w[(i, j)] = v as i64;
        }
    }
    let (matched, _) = kuhn_munkres(&w);
    Ok(matched as f64 / c.n as f64)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.n == 0 {
        return Ok(0.0);
    }
    let n = c.n as f64;
    let (rows, cols) = (c.row_sums(), c.col_sums());
    let (hp, ht) = (entropy(&rows, n), entropy(&cols, n));
    if c.identical() {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0 {
                let v = v as f64;
                mi += v / n * (n * v / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (0.5 * (hp + ht))).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let index: f64 = c.counts.iter().flatten().map(|&v| pairs(v)).sum();
    let a: f64 = c.row_sums().into_iter().map(pairs).sum();
    let b: f64 = c.col_sums().into_iter().map(pairs).sum();
    let total = pairs(c.n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = 0.5 * (a + b);
    if max - expected == 0.0 {
        return Ok(if c.identical() { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

pub fn metrics(pred: &[usize], truth: &[usize]) -> Result<Metrics> {
    Ok(Metrics {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}
