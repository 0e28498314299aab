use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{epoch_batches, Batch, MultiViewDataset};
use crate::error::{GlcError, Result};
use crate::graph::{cross_view_spec, ggc_spec, pair_weights, select_pairs, LocalOptions, PairWeights, ViewEmbedding};
use crate::model::{reconstruction_loss_on_tape, GlcModel, ViewNodes};
use crate::nn::{AdamState, ContrastiveSpec, DenseMatrix, Tape, Var};
use crate::pipeline::config::TrainConfig;
use crate::pipeline::evaluate::{cluster_features, fused_features};
use crate::pipeline::metrics::Metrics;
use crate::rng::{stream, GlcRng, Stream};

/// `L_rec + α·L_ggc + β·L_lwc`.
pub fn total_loss(rec: f64, ggc: f64, lwc: f64, alpha: f64, beta: f64) -> f64 {
    rec + alpha * ggc + beta * lwc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Train,
}

/// Mean per-batch losses of one epoch, plus optional clustering metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub rec: f64,
    pub ggc: f64,
    pub lwc: f64,
    pub total: f64,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    pub const CSV_HEADER: &'static str = "epoch,phase,L_rec,L_ggc,L_lwc,L_total,acc,nmi,ari";

    /// CSV with one row per epoch; metric cells are empty where the epoch was
    /// not evaluated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let phase = match r.phase {
                Phase::Pretrain => "pretrain",
                Phase::Train => "train",
            };
            let (acc, nmi, ari) = match &r.metrics {
                Some(m) => (m.acc.to_string(), m.nmi.to_string(), m.ari.to_string()),
                None => Default::default(),
            };
            out.push_str(&format!(
                "{},{phase},{},{},{},{},{acc},{nmi},{ari}\n",
                r.epoch, r.rec, r.ggc, r.lwc, r.total
            ));
        }
        out
    }
}

/// Loss values of one mini-batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLosses {
    pub rec: f64,
    pub ggc: f64,
    pub lwc: f64,
    pub total: f64,
    /// Number of view pairs that contributed a local term.
    pub local_pairs: usize,
}

/// Discrete choices made while building a batch objective: the global pair
/// sets and the per-view-pair local weights. Neither carries gradient.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub global: Option<Arc<ContrastiveSpec>>,
    /// `(u, v, weights)` for every view pair that contributed a local term.
    pub local: Vec<(usize, usize, PairWeights)>,
}

/// The recorded objective for one batch.
pub struct BatchObjective {
    pub tape: Tape,
    pub loss: Var,
    pub params: Vec<Var>,
    pub losses: BatchLosses,
    pub selection: Selection,
}

fn global_term(
    tape: &mut Tape,
    nodes: &[ViewNodes],
    cfg: &TrainConfig,
    frozen: Option<&Selection>,
) -> Result<Option<(Var, Arc<ContrastiveSpec>)>> {
    let parts: Vec<Var> = nodes
        .iter()
        .map(|n| n.contrastive)
        .filter(|&h| tape.value(h).rows() > 0)
        .collect();
    let stacked = tape.concat_rows(&parts)?;
    if tape.value(stacked).rows() < 2 {
        return Ok(None);
    }
    let unit = tape.normalize_rows(stacked)?;
    let sim = tape.matmul_nt(unit, unit)?;
    let spec = match frozen {
        Some(sel) => match &sel.global {
            Some(spec) => spec.clone(),
            None => return Ok(None),
        },
        None => {
            let pairs = select_pairs(tape.value(sim), cfg.pos, cfg.neg)?;
            Arc::new(ggc_spec(&pairs, cfg.tau, cfg.include_positive_in_denominator)?)
        }
    };
    Ok(Some((tape.contrastive(sim, spec.clone())?, spec)))
}

fn local_terms(
    tape: &mut Tape,
    nodes: &[ViewNodes],
    batch: &Batch,
    cfg: &TrainConfig,
    frozen: Option<&Selection>,
) -> Result<Vec<(Var, (usize, usize, PairWeights))>> {
    let selected = match frozen {
        Some(sel) => sel.local.clone(),
        None => {
            let opts = LocalOptions {
                tau: cfg.tau,
                sigma: cfg.sigma,
                normalize_weights: cfg.normalize_local_weights,
            };
            let mut out = Vec::new();
            for u in 0..nodes.len() {
                for v in u + 1..nodes.len() {
                    let pw = pair_weights(
                        ViewEmbedding {
                            features: tape.value(nodes[u].contrastive),
                            positions: &batch.views[u].positions,
                        },
                        ViewEmbedding {
                            features: tape.value(nodes[v].contrastive),
                            positions: &batch.views[v].positions,
                        },
                        &opts,
                    )?;
                    if let Some(pw) = pw {
                        out.push((u, v, pw));
                    }
                }
            }
            out
        }
    };
    let mut terms = Vec::with_capacity(selected.len());
    for (u, v, pw) in selected {
        let gu = tape.gather_rows(nodes[u].contrastive, &pw.rows_u)?;
        let gv = tape.gather_rows(nodes[v].contrastive, &pw.rows_v)?;
        let stacked = tape.concat_rows(&[gu, gv])?;
        let unit = tape.normalize_rows(stacked)?;
        let scores = tape.matmul_nt(unit, unit)?;
        let spec = cross_view_spec(pw.rows_u.len(), &pw.log_weights, cfg.tau);
        terms.push((tape.contrastive(scores, Arc::new(spec))?, (u, v, pw)));
    }
    Ok(terms)
}

fn objective(model: &GlcModel, batch: &Batch, cfg: &TrainConfig, frozen: Option<&Selection>) -> Result<BatchObjective> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let nodes = model.forward_on_tape(&mut tape, &vars, batch)?;
    let rec = reconstruction_loss_on_tape(&mut tape, &nodes, batch)?;
    let mut terms = vec![(rec, 1.0)];
    let mut selection = Selection::default();

    let mut ggc = 0.0;
    if cfg.alpha > 0.0 {
        if let Some((g, spec)) = global_term(&mut tape, &nodes, cfg, frozen)? {
            ggc = tape.value(g).item()?;
            terms.push((g, cfg.alpha));
            selection.global = Some(spec);
        }
    }
    let mut lwc = 0.0;
    if cfg.beta > 0.0 {
        for (l, chosen) in local_terms(&mut tape, &nodes, batch, cfg, frozen)? {
            lwc += tape.value(l).item()?;
            terms.push((l, cfg.beta));
            selection.local.push(chosen);
        }
    }
    let loss = tape.lin_comb(&terms)?;
    let rec = tape.value(rec).item()?;
    let losses = BatchLosses {
        rec,
        ggc,
        lwc,
        total: tape.value(loss).item()?,
        local_pairs: selection.local.len(),
    };
    Ok(BatchObjective {
        params: vars.all(),
        tape,
        loss,
        losses,
        selection,
    })
}

/// Record `L_rec + α·L_ggc + β·L_lwc` for `batch`. Terms with zero weight
/// are not evaluated and report 0.
pub fn batch_objective(model: &GlcModel, batch: &Batch, cfg: &TrainConfig) -> Result<BatchObjective> {
    objective(model, batch, cfg, None)
}

/// Same objective with pair sets and local weights taken from `selection`
/// instead of being mined from the current features.
pub fn batch_objective_frozen(
    model: &GlcModel,
    batch: &Batch,
    cfg: &TrainConfig,
    selection: &Selection,
) -> Result<BatchObjective> {
    objective(model, batch, cfg, Some(selection))
}

fn diagnose_non_finite(model: &GlcModel, batch: &Batch, epoch: usize, index: usize, losses: &BatchLosses) -> GlcError {
    let view = crate::model::forward_views(model, batch).ok().and_then(|feats| {
        feats
            .iter()
            .position(|f| !f.contrastive.is_finite() || !f.reconstruction.is_finite())
    });
    GlcError::Numeric(format!(
        "non-finite loss at epoch {epoch}, batch {index}{}: rec {}, ggc {}, lwc {}",
        view.map(|v| format!(", view {v}")).unwrap_or_default(),
        losses.rec,
        losses.ggc,
        losses.lwc
    ))
}

/// Owns the model, optimizer and shuffling stream across both phases so a
/// run is a single deterministic trajectory.
pub struct Trainer {
    pub model: GlcModel,
    pub config: TrainConfig,
    pub history: TrainHistory,
    optimizer: AdamState,
    shuffle: GlcRng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: GlcModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let optimizer = AdamState::new(config.learning_rate, &model.param_shapes());
        let shuffle = stream(config.seed, Stream::Shuffle);
        Ok(Self {
            model,
            config,
            history: TrainHistory::default(),
            optimizer,
            shuffle,
            epoch: 0,
        })
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// One epoch with the given loss weights; returns mean batch losses.
    pub fn run_epoch(&mut self, dataset: &MultiViewDataset, alpha: f64, beta: f64) -> Result<BatchLosses> {
        if dataset.dims() != self.model.dims() {
            return Err(GlcError::Shape(format!(
                "dataset dims {:?} do not match model dims {:?}",
                dataset.dims(),
                self.model.dims()
            )));
        }
        let cfg = TrainConfig {
            alpha,
            beta,
            ..self.config.clone()
        };
        self.epoch += 1;
        let batches = epoch_batches(dataset.n_samples(), cfg.batch_size, &mut self.shuffle)?;
        let mut sum = BatchLosses {
            rec: 0.0,
            ggc: 0.0,
            lwc: 0.0,
            total: 0.0,
            local_pairs: 0,
        };
        for (b, indices) in batches.iter().enumerate() {
            let batch = dataset.batch(indices);
            let obj = batch_objective(&self.model, &batch, &cfg)?;
            let l = obj.losses;
            if !(l.rec.is_finite() && l.ggc.is_finite() && l.lwc.is_finite() && l.total.is_finite()) {
                return Err(diagnose_non_finite(&self.model, &batch, self.epoch, b, &l));
            }
            let grads = obj.tape.backward(obj.loss)?;
            let grads: Vec<DenseMatrix> = obj.params.iter().map(|&p| grads.wrt(p)).collect();
            self.optimizer.step(&mut self.model.params_mut(), &grads)?;
            sum.rec += l.rec;
            sum.ggc += l.ggc;
            sum.lwc += l.lwc;
            sum.total += l.total;
            sum.local_pairs += l.local_pairs;
        }
        if beta > 0.0 && sum.local_pairs == 0 && self.model.n_views() > 1 {
            log::warn!(
                "epoch {}: no view pair shared two samples in any batch; local term inert",
                self.epoch
            );
        }
        let k = batches.len().max(1) as f64;
        Ok(BatchLosses {
            rec: sum.rec / k,
            ggc: sum.ggc / k,
            lwc: sum.lwc / k,
            total: sum.total / k,
            local_pairs: sum.local_pairs,
        })
    }

    /// Reconstruction-only epochs.
    pub fn pretrain(&mut self, dataset: &MultiViewDataset) -> Result<()> {
        for _ in 0..self.config.pretrain_epochs {
            let l = self.run_epoch(dataset, 0.0, 0.0)?;
            log::debug!("pretrain epoch {}: rec {:.4}", self.epoch, l.rec);
            self.history.records.push(EpochRecord {
                epoch: self.epoch,
                phase: Phase::Pretrain,
                rec: l.rec,
                ggc: 0.0,
                lwc: 0.0,
                total: l.total,
                metrics: None,
            });
        }
        Ok(())
    }

    /// Joint epochs with the configured `α`, `β`.
    pub fn train(&mut self, dataset: &MultiViewDataset) -> Result<()> {
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let epochs = self.config.epochs;
        for e in 1..=epochs {
            let l = self.run_epoch(dataset, alpha, beta)?;
            let every = self.config.eval_every;
            let evaluate = dataset.labels.is_some() && (e == epochs || (every > 0 && (e == 1 || e % every == 0)));
            let metrics = if evaluate {
                Some(self.quick_metrics(dataset)?)
            } else {
                None
            };
            log::debug!(
                "train epoch {}: rec {:.4} ggc {:.4} lwc {:.4} total {:.4}",
                self.epoch,
                l.rec,
                l.ggc,
                l.lwc,
                l.total
            );
            self.history.records.push(EpochRecord {
                epoch: self.epoch,
                phase: Phase::Train,
                rec: l.rec,
                ggc: l.ggc,
                lwc: l.lwc,
                total: l.total,
                metrics,
            });
        }
        Ok(())
    }

    fn quick_metrics(&self, dataset: &MultiViewDataset) -> Result<Metrics> {
        let feats = fused_features(&self.model, dataset, self.config.feature_space)?;
        let labels = dataset.labels.as_ref().expect("checked by caller");
        cluster_features(
            &feats,
            labels,
            dataset.n_clusters,
            self.config.kmeans_restarts,
            self.config.seed,
        )
    }

    pub fn into_parts(self) -> (GlcModel, TrainHistory) {
        (self.model, self.history)
    }
}

/// Reconstruction-only optimization of `model`.
pub fn pretrain(model: GlcModel, dataset: &MultiViewDataset, config: &TrainConfig) -> Result<(GlcModel, TrainHistory)> {
    let mut t = Trainer::new(model, config.clone())?;
    t.pretrain(dataset)?;
    Ok(t.into_parts())
}

/// Joint optimization of the full objective (no pretraining).
pub fn train(model: GlcModel, dataset: &MultiViewDataset, config: &TrainConfig) -> Result<(GlcModel, TrainHistory)> {
    let mut t = Trainer::new(model, config.clone())?;
    t.train(dataset)?;
    Ok(t.into_parts())
}
