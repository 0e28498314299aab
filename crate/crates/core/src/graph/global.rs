use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, GlcError, Result};
use crate::nn::tape::{contrastive_value, AnchorTerms, ContrastiveSpec};
use crate::nn::{DenseMatrix, Tape};

/// Cosine-similarity graph over every available contrastive feature of a
/// batch, all views stacked.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAffinityGraph {
    /// `N_c x d_h` stacked features.
    pub features: DenseMatrix,
    /// `(view, row within that view)` for each stacked row.
    pub owners: Vec<(usize, usize)>,
    /// `N_c x N_c` cosine similarities.
    pub similarity: DenseMatrix,
}

impl GlobalAffinityGraph {
    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }
}

/// Stack every view's features and compute `G_ij = cos(h_i, h_j)`.
pub fn build_global_graph(per_view: &[DenseMatrix]) -> Result<GlobalAffinityGraph> {
    let nonempty: Vec<&DenseMatrix> = per_view.iter().filter(|h| h.rows() > 0).collect();
    if nonempty.is_empty() {
        return Err(shape_err!("global graph needs at least one nonempty view"));
    }
    let features = DenseMatrix::vstack(&nonempty)?;
    let owners = per_view
        .iter()
        .enumerate()
        .flat_map(|(v, h)| (0..h.rows()).map(move |r| (v, r)))
        .collect();

    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let unit = tape.normalize_rows(x)?;
    let sim = tape.matmul_nt(unit, unit)?;
    let mut similarity = tape.value(sim).clone();
    for i in 0..similarity.rows() {
        for j in 0..similarity.cols() {
            let g = if i == j {
                1.0
            } else {
                similarity.get(i, j).clamp(-1.0, 1.0)
            };
            similarity.set(i, j, g);
        }
    }
    Ok(GlobalAffinityGraph {
        features,
        owners,
        similarity,
    })
}

/// Mined positive and negative sets per anchor row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSets {
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
    pub pos_percent: f64,
    pub neg_percent: f64,
}

impl PairSets {
    /// Every `(anchor, positive)` pair.
    pub fn positive_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.positives
            .iter()
            .enumerate()
            .flat_map(|(i, ps)| ps.iter().map(move |&j| (i, j)))
    }
}

/// `ceil(percent/100 · others)`, robust to representation error in the
/// product.
pub fn selection_count(percent: f64, others: usize) -> usize {
    let x = percent / 100.0 * others as f64;
    let c = (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as usize;
    c.min(others)
}

/// Per row: the `ceil(pos%·(N_c−1))` most similar other rows become
/// positives and the `ceil(neg%·(N_c−1))` least similar of the remainder
/// become negatives. Ties go to the lower index.
pub fn select_pairs(similarity: &DenseMatrix, pos: f64, neg: f64) -> Result<PairSets> {
    if !(pos > 0.0) || !(neg > 0.0) || pos + neg > 100.0 {
        return Err(config_err!(
            "need 0 < pos, 0 < neg, pos + neg <= 100; got pos = {pos}, neg = {neg}"
        ));
    }
    let n = similarity.rows();
    if similarity.cols() != n {
        return Err(shape_err!("similarity must be square, got {:?}", similarity.shape()));
    }
    let others = n.saturating_sub(1);
    let n_pos = selection_count(pos, others);
    let n_neg = selection_count(neg, others).min(others - n_pos);

    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(others);
    for i in 0..n {
        let row = similarity.row(i);
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        // descending similarity, lower index first on ties
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let pos_i: Vec<usize> = order[..n_pos].to_vec();
        let rest = &mut order[n_pos..];
        rest.sort_by(|&a, &b| match row[a].total_cmp(&row[b]) {
            Ordering::Equal => a.cmp(&b),
            o => o,
        });
        negatives.push(rest[..n_neg].to_vec());
        positives.push(pos_i);
    }
    Ok(PairSets {
        positives,
        negatives,
        pos_percent: pos,
        neg_percent: neg,
    })
}

/// Contrastive specification for the global-graph loss over `G`.
pub fn ggc_spec(pairs: &PairSets, tau: f64, include_positive_in_denominator: bool) -> Result<ContrastiveSpec> {
    let anchors = pairs
        .positives
        .iter()
        .zip(&pairs.negatives)
        .enumerate()
        .filter(|(_, (p, _))| !p.is_empty())
        .map(|(i, (p, n))| {
            if n.is_empty() {
                return Err(config_err!("anchor {i} has positives but no negatives"));
            }
            Ok(AnchorTerms {
                anchor: i,
                positives: p.iter().map(|&j| (j, 0.0)).collect(),
                negatives: n.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContrastiveSpec {
        anchors,
        temperature: tau,
        include_positive_in_denominator,
    })
}

/// `−Σ_{(i,j)∈P} log( e^{G_ij/τ} / Σ_{k∈N(i)} e^{G_ik/τ} )`.
pub fn ggc_loss(
    graph: &GlobalAffinityGraph,
    pairs: &PairSets,
    tau: f64,
    include_positive_in_denominator: bool,
) -> Result<f64> {
    if pairs.positives.len() != graph.len() {
        return Err(GlcError::Shape(format!(
            "pair sets for {} anchors, graph has {}",
            pairs.positives.len(),
            graph.len()
        )));
    }
    let spec = ggc_spec(pairs, tau, include_positive_in_denominator)?;
    contrastive_value(&graph.similarity, &spec)
}
