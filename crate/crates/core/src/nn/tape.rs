//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records each primitive as a node holding its forward value.
//! Nodes are appended in evaluation order, so walking them backwards is a
//! valid topological order for the chain rule.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{shape_err, GlcError, Result};
use crate::nn::matrix::{dot, DenseMatrix};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// One anchor row of a contrastive objective over a score matrix.
///
/// Each positive `(col, log_weight)` contributes
/// `-(s[anchor, col] / τ + log_weight - logsumexp_k s[anchor, k] / τ)`
/// where `k` ranges over `negatives` (plus the positive itself when the
/// denominator includes it).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTerms {
    pub anchor: usize,
    pub positives: Vec<(usize, f64)>,
    pub negatives: Vec<usize>,
}

/// Full specification of a contrastive negative log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveSpec {
    pub anchors: Vec<AnchorTerms>,
    pub temperature: f64,
    pub include_positive_in_denominator: bool,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMulNt(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    NormalizeRows(Var, Vec<f64>),
    SquaredError(Var, DenseMatrix),
    SumSquares(Var),
    Sum(Var),
    LinComb(Vec<(Var, f64)>),
    Contrastive(Var, Arc<ContrastiveSpec>),
}

#[derive(Debug, Clone)]
struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    shapes: Vec<(usize, usize)>,
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when the loss does not depend
    /// on it.
    pub fn wrt(&self, var: Var) -> DenseMatrix {
        assert_eq!(var.tape, self.tape, "variable belongs to a different tape");
        match &self.grads[var.index] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.index];
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register a differentiable input (a parameter).
    pub fn leaf(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Register an input that receives no gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &DenseMatrix {
        self.check(var).expect("variable not on this tape");
        &self.nodes[var.index].value
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, var: Var) -> Result<()> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(GlcError::Usage(format!("{var:?} is not on tape {}", self.id)));
        }
        Ok(())
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index].requires_grad)
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = self.value(a).matmul_nt(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMulNt(a, b), rg))
    }

    /// Add a `1 x m` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.check(a)?;
        self.check(bias)?;
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(shape_err!(
                "bias {}x{} for input with {} columns",
                bv.rows(),
                bv.cols(),
                av.cols()
            ));
        }
        let mut value = av.clone();
        for r in 0..value.rows() {
            for (x, b) in value.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *x += b;
            }
        }
        let rg = self.needs(&[a, bias]);
        Ok(self.push(value, Op::AddBias(a, bias), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Relu(a), rg))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        self.check(a)?;
        let av = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= av.rows()) {
            return Err(shape_err!("row {bad} out of range for {} rows", av.rows()));
        }
        let value = av.select_rows(indices);
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let mats: Vec<&DenseMatrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = DenseMatrix::vstack(&mats)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Scale each row to unit Euclidean norm. A zero row is a numeric error.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let av = self.value(a);
        let mut value = av.clone();
        let mut norms = Vec::with_capacity(av.rows());
        for r in 0..av.rows() {
            let n = dot(av.row(r), av.row(r)).sqrt();
            if !(n > 0.0) || !n.is_finite() {
                return Err(GlcError::Numeric(format!(
                    "row {r} has norm {n}; cannot normalize a degenerate embedding"
                )));
            }
            value.row_mut(r).iter_mut().for_each(|x| *x /= n);
            norms.push(n);
        }
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::NormalizeRows(a, norms), rg))
    }

    /// Scalar `Σ (a - target)²`; `target` is constant.
    pub fn squared_error(&mut self, a: Var, target: &DenseMatrix) -> Result<Var> {
        self.check(a)?;
        let av = self.value(a);
        av.check_same_shape(target, "squared_error")?;
        let s = av
            .as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(x, t)| (x - t) * (x - t))
            .sum();
        let rg = self.needs(&[a]);
        Ok(self.push(DenseMatrix::scalar(s), Op::SquaredError(a, target.clone()), rg))
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.value(a).sum_squares();
        let rg = self.needs(&[a]);
        Ok(self.push(DenseMatrix::scalar(s), Op::SumSquares(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.value(a).sum();
        let rg = self.needs(&[a]);
        Ok(self.push(DenseMatrix::scalar(s), Op::Sum(a), rg))
    }

    /// `Σ cᵢ·aᵢ` over same-shaped operands.
    pub fn lin_comb(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let first = terms
            .first()
            .ok_or_else(|| GlcError::Usage("empty linear combination".into()))?;
        self.check(first.0)?;
        let mut value = DenseMatrix::zeros(self.value(first.0).rows(), self.value(first.0).cols());
        for &(v, c) in terms {
            self.check(v)?;
            value.add_assign(&self.value(v).scaled(c))?;
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.needs(&vars);
        Ok(self.push(value, Op::LinComb(terms.to_vec()), rg))
    }

    /// Contrastive negative log-likelihood over a score matrix.
    pub fn contrastive(&mut self, scores: Var, spec: Arc<ContrastiveSpec>) -> Result<Var> {
        self.check(scores)?;
        let value = contrastive_value(self.value(scores), &spec)?;
        let rg = self.needs(&[scores]);
        Ok(self.push(DenseMatrix::scalar(value), Op::Contrastive(scores, spec), rg))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        if self.nodes[loss.index].value.shape() != (1, 1) {
            let (r, c) = self.nodes[loss.index].value.shape();
            return Err(GlcError::Usage(format!("loss must be a scalar, got {r}x{c}")));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=loss.index).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &upstream, &mut grads)?;
            grads[idx] = Some(upstream);
        }

        let mut shapes: Vec<(usize, usize)> = self.nodes.iter().map(|n| n.value.shape()).collect();
        shapes.truncate(self.nodes.len());
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            tape: self.id,
            shapes,
            grads,
        })
    }

    fn propagate(&self, node: &Node, up: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.index].value;
        let wants = |v: Var| self.nodes[v.index].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMulNt(a, b) => {
                // out = a·bᵀ: da = up·b, db = upᵀ·a
                if wants(*a) {
                    accumulate(grads, *a, up.matmul(val(*b))?)?;
                }
                if wants(*b) {
                    accumulate(grads, *b, up.matmul_tn(val(*a))?)?;
                }
            }
            Op::AddBias(a, bias) => {
                if wants(*a) {
                    accumulate(grads, *a, up.clone())?;
                }
                if wants(*bias) {
                    let mut g = DenseMatrix::zeros(1, up.cols());
                    for r in 0..up.rows() {
                        for (o, x) in g.as_mut_slice().iter_mut().zip(up.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(grads, *bias, g)?;
                }
            }
            Op::Relu(a) => {
                let mut g = up.clone();
                for (gx, &y) in g.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                    if y <= 0.0 {
                        *gx = 0.0;
                    }
                }
                accumulate(grads, *a, g)?;
            }
            Op::GatherRows(a, indices) => {
                let src = val(*a);
                let mut g = DenseMatrix::zeros(src.rows(), src.cols());
                for (k, &i) in indices.iter().enumerate() {
                    for (o, x) in g.row_mut(i).iter_mut().zip(up.row(k)) {
                        *o += x;
                    }
                }
                accumulate(grads, *a, g)?;
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = val(p).rows();
                    if wants(p) {
                        let idx: Vec<usize> = (offset..offset + rows).collect();
                        let mut g = up.select_rows(&idx);
                        if rows == 0 {
                            g = DenseMatrix::zeros(0, val(p).cols());
                        }
                        accumulate(grads, p, g)?;
                    }
                    offset += rows;
                }
            }
            Op::NormalizeRows(a, norms) => {
                // y = x/‖x‖: dx = (up - y·⟨up, y⟩)/‖x‖
                let y = &node.value;
                let mut g = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let proj = dot(up.row(r), y.row(r));
                    for ((o, &u), &yy) in g.row_mut(r).iter_mut().zip(up.row(r)).zip(y.row(r)) {
                        *o = (u - yy * proj) / norms[r];
                    }
                }
                accumulate(grads, *a, g)?;
            }
            Op::SquaredError(a, target) => {
                let s = up.item()?;
                let mut g = val(*a).clone();
                for (x, t) in g.as_mut_slice().iter_mut().zip(target.as_slice()) {
                    *x = 2.0 * s * (*x - t);
                }
                accumulate(grads, *a, g)?;
            }
            Op::SumSquares(a) => {
                let s = up.item()?;
                accumulate(grads, *a, val(*a).scaled(2.0 * s))?;
            }
            Op::Sum(a) => {
                let s = up.item()?;
                let (r, c) = val(*a).shape();
                accumulate(grads, *a, DenseMatrix::filled(r, c, s))?;
            }
            Op::LinComb(terms) => {
                for &(v, c) in terms {
                    if wants(v) {
                        accumulate(grads, v, up.scaled(c))?;
                    }
                }
            }
            Op::Contrastive(scores, spec) => {
                let g = contrastive_grad(val(*scores), spec, up.item()?);
                accumulate(grads, *scores, g)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], var: Var, g: DenseMatrix) -> Result<()> {
    match &mut grads[var.index] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Numerically stable `log Σ exp(xᵢ)`, with the softmax weights written to
/// `weights` when given.
pub fn log_sum_exp(values: &[f64], weights: Option<&mut Vec<f64>>) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let total: f64 = values.iter().map(|v| (v - max).exp()).sum();
    let lse = max + total.ln();
    if let Some(w) = weights {
        w.clear();
        w.extend(values.iter().map(|v| (v - lse).exp()));
    }
    lse
}

fn validate_spec(scores: &DenseMatrix, spec: &ContrastiveSpec) -> Result<()> {
    if !(spec.temperature > 0.0) {
        return Err(GlcError::Config(format!(
            "temperature must be positive, got {}",
            spec.temperature
        )));
    }
    let (r, c) = scores.shape();
    for a in &spec.anchors {
        if a.anchor >= r || a.positives.iter().any(|&(p, _)| p >= c) || a.negatives.iter().any(|&k| k >= c) {
            return Err(shape_err!("contrastive index out of range for {r}x{c} scores"));
        }
        if !a.positives.is_empty() && a.negatives.is_empty() {
            return Err(GlcError::Config(format!(
                "anchor {} has positives but no negatives",
                a.anchor
            )));
        }
    }
    Ok(())
}

fn term_logits(scores: &DenseMatrix, a: &AnchorTerms, tau: f64, buf: &mut Vec<f64>) {
    buf.clear();
    let row = scores.row(a.anchor);
    buf.extend(a.negatives.iter().map(|&k| row[k] / tau));
}

pub(crate) fn contrastive_value(scores: &DenseMatrix, spec: &ContrastiveSpec) -> Result<f64> {
    validate_spec(scores, spec)?;
    let tau = spec.temperature;
    let mut logits = Vec::new();
    let mut total = 0.0;
    for a in &spec.anchors {
        if a.positives.is_empty() {
            continue;
        }
        let row = scores.row(a.anchor);
        term_logits(scores, a, tau, &mut logits);
        let shared = log_sum_exp(&logits, None);
        for &(p, log_w) in &a.positives {
            let pos = row[p] / tau;
            let denom = if spec.include_positive_in_denominator {
                logits.push(pos);
                let d = log_sum_exp(&logits, None);
                logits.pop();
                d
            } else {
                shared
            };
            total -= pos + log_w - denom;
        }
    }
    Ok(total)
}

fn contrastive_grad(scores: &DenseMatrix, spec: &ContrastiveSpec, upstream: f64) -> DenseMatrix {
    let tau = spec.temperature;
    let scale = upstream / tau;
    let mut g = DenseMatrix::zeros(scores.rows(), scores.cols());
    let mut logits = Vec::new();
    let mut soft = Vec::new();
    for a in &spec.anchors {
        if a.positives.is_empty() {
            continue;
        }
        let row = scores.row(a.anchor);
        term_logits(scores, a, tau, &mut logits);
        if spec.include_positive_in_denominator {
            for &(p, _) in &a.positives {
                logits.push(row[p] / tau);
                log_sum_exp(&logits, Some(&mut soft));
                logits.pop();
                let grow = g.row_mut(a.anchor);
                for (&k, &s) in a.negatives.iter().zip(&soft) {
                    grow[k] += scale * s;
                }
                grow[p] += scale * (soft[a.negatives.len()] - 1.0);
            }
        } else {
            log_sum_exp(&logits, Some(&mut soft));
            let count = a.positives.len() as f64;
            let grow = g.row_mut(a.anchor);
            for (&k, &s) in a.negatives.iter().zip(&soft) {
                grow[k] += scale * count * s;
            }
            for &(p, _) in &a.positives {
                grow[p] -= scale;
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_parameters_has_unit_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, 9.0]]).unwrap());
        let loss = tape.sum(x).unwrap();
        let g = tape.backward(loss).unwrap().wrt(x);
        assert_eq!(g, DenseMatrix::filled(2, 3, 1.0));
    }

    #[test]
    fn squared_norm_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap());
        let loss = tape.sum_squares(x).unwrap();
        assert_eq!(tape.value(loss).item().unwrap(), 5.0);
        let g = tape.backward(loss).unwrap().wrt(x);
        assert_eq!(g.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn unreferenced_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::filled(2, 2, 1.0));
        let unused = tape.leaf(DenseMatrix::filled(3, 1, 4.0));
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(unused), DenseMatrix::zeros(3, 1));
    }

    #[test]
    fn loss_from_another_tape_is_rejected() {
        let mut a = Tape::new();
        let b = Tape::new();
        let x = a.leaf(DenseMatrix::scalar(1.0));
        assert!(matches!(b.backward(x), Err(GlcError::Usage(_))));
        let y = a.leaf(DenseMatrix::zeros(2, 2));
        assert!(matches!(a.backward(y), Err(GlcError::Usage(_))));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::from_rows(&[[0.0, 1.0, -1.0]]).unwrap());
        let r = tape.relu(x).unwrap();
        let loss = tape.sum(r).unwrap();
        let g = tape.backward(loss).unwrap().wrt(x);
        assert_eq!(g.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn normalize_rejects_zero_rows() {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::from_rows(&[[0.0, 0.0]]).unwrap());
        assert!(matches!(tape.normalize_rows(x), Err(GlcError::Numeric(_))));
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v, None) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
