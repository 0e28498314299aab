//! View-specific autoencoders with contrastive heads.
//!
//! For view `v`: `Z = encoder(X)`, `X̂ = decoder(Z)`, `H = head(Z)`. Only the
//! available rows of a view ever pass through its networks.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Batch, MultiViewDataset};
use crate::error::{shape_err, GlcError, Result};
use crate::nn::{DenseMatrix, MlpParams, MlpVars, Tape, Var};
use crate::rng::{stream, Stream};

/// Network sizes. The decoder mirrors the encoder and the head is
/// `d_z -> d_z -> d_h` with one ReLU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub head_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `X -> 500 -> 500 -> 2000 -> 512`, head dim 128.
    Paper,
    /// `X -> 64 -> 64 -> 32`, head dim 16.
    Desk,
}

impl Profile {
    pub fn model_config(self) -> ModelConfig {
        match self {
            Profile::Paper => ModelConfig {
                hidden: vec![500, 500, 2000],
                latent_dim: 512,
                head_dim: 128,
            },
            Profile::Desk => ModelConfig {
                hidden: vec![64, 64],
                latent_dim: 32,
                head_dim: 16,
            },
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = GlcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(GlcError::Config(format!("unknown profile '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewAutoencoder {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub head: MlpParams,
}

impl ViewAutoencoder {
    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn head_dim(&self) -> usize {
        self.head.output_dim()
    }

    pub fn validate(&self) -> Result<()> {
        for mlp in [&self.encoder, &self.decoder, &self.head] {
            mlp.validate()?;
        }
        if self.decoder.input_dim() != self.latent_dim()
            || self.head.input_dim() != self.latent_dim()
            || self.decoder.output_dim() != self.input_dim()
        {
            return Err(shape_err!(
                "autoencoder dims do not chain: encoder {:?}, decoder {:?}, head {:?}",
                self.encoder.widths(),
                self.decoder.widths(),
                self.head.widths()
            ));
        }
        Ok(())
    }

    /// `(Z, H, X̂)` for the given rows.
    pub fn forward(&self, x: &DenseMatrix) -> Result<ViewFeatures> {
        let latent = self.encoder.forward(x)?;
        let contrastive = self.head.forward(&latent)?;
        let reconstruction = self.decoder.forward(&latent)?;
        Ok(ViewFeatures {
            latent,
            contrastive,
            reconstruction,
        })
    }
}

/// Outputs of one view's networks on its available batch rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeatures {
    pub latent: DenseMatrix,
    pub contrastive: DenseMatrix,
    pub reconstruction: DenseMatrix,
}

/// Tape handles for one view's outputs.
#[derive(Debug, Clone, Copy)]
pub struct ViewNodes {
    pub latent: Var,
    pub contrastive: Var,
    pub reconstruction: Var,
}

/// One autoencoder per view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlcModel {
    pub views: Vec<ViewAutoencoder>,
}

/// Tape handles for every parameter of a [`GlcModel`].
#[derive(Debug, Clone)]
pub struct ModelVars {
    views: Vec<[MlpVars; 3]>,
}

impl ModelVars {
    /// All parameter handles, in [`GlcModel::params_mut`] order.
    pub fn all(&self) -> Vec<Var> {
        self.views
            .iter()
            .flat_map(|v| v.iter().flat_map(MlpVars::iter))
            .collect()
    }
}

/// Build one autoencoder per view.
pub fn init_model(dims: &[usize], config: &ModelConfig, seed: u64) -> Result<GlcModel> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(GlcError::Config(format!("invalid view dims {dims:?}")));
    }
    if config.latent_dim == 0 || config.head_dim == 0 || config.hidden.contains(&0) {
        return Err(GlcError::Config(format!("invalid model config {config:?}")));
    }
    let mut rng = stream(seed, Stream::ModelInit);
    let views = dims
        .iter()
        .map(|&d| {
            let mut enc = vec![d];
            enc.extend(&config.hidden);
            enc.push(config.latent_dim);
            let dec: Vec<usize> = enc.iter().rev().copied().collect();
            let head = [config.latent_dim, config.latent_dim, config.head_dim];
            Ok(ViewAutoencoder {
                encoder: MlpParams::new_random(&enc, &mut rng)?,
                decoder: MlpParams::new_random(&dec, &mut rng)?,
                head: MlpParams::new_random(&head, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GlcModel { views })
}

impl GlcModel {
    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(ViewAutoencoder::input_dim).collect()
    }

    pub fn head_dim(&self) -> usize {
        self.views.first().map_or(0, ViewAutoencoder::head_dim)
    }

    pub fn latent_dim(&self) -> usize {
        self.views.first().map_or(0, ViewAutoencoder::latent_dim)
    }

    pub fn validate(&self) -> Result<()> {
        self.views.iter().try_for_each(ViewAutoencoder::validate)
    }

    pub fn params(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.views
            .iter()
            .flat_map(|v| v.encoder.params().chain(v.decoder.params()).chain(v.head.params()))
    }

    /// Every parameter matrix: per view, encoder then decoder then head.
    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.views
            .iter_mut()
            .flat_map(|v| {
                v.encoder
                    .params_mut()
                    .chain(v.decoder.params_mut())
                    .chain(v.head.params_mut())
            })
            .collect()
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.params().map(DenseMatrix::shape).collect()
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            views: self
                .views
                .iter()
                .map(|v| {
                    [
                        v.encoder.register(tape),
                        v.decoder.register(tape),
                        v.head.register(tape),
                    ]
                })
                .collect(),
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.views.len() != self.n_views() {
            return Err(shape_err!(
                "batch has {} views, model has {}",
                batch.views.len(),
                self.n_views()
            ));
        }
        for (v, (vb, ae)) in batch.views.iter().zip(&self.views).enumerate() {
            if vb.data.cols() != ae.input_dim() && vb.data.rows() > 0 {
                return Err(shape_err!(
                    "view {v}: batch has {} features, model expects {}",
                    vb.data.cols(),
                    ae.input_dim()
                ));
            }
        }
        Ok(())
    }

    /// Recorded forward pass over every view of `batch`.
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &ModelVars, batch: &Batch) -> Result<Vec<ViewNodes>> {
        self.check_batch(batch)?;
        self.views
            .iter()
            .zip(&vars.views)
            .zip(&batch.views)
            .map(|((ae, [enc, dec, head]), vb)| {
                let x = tape.constant(reshape_empty(&vb.data, ae.input_dim()));
                let latent = ae.encoder.forward_on_tape(tape, enc, x)?;
                let contrastive = ae.head.forward_on_tape(tape, head, latent)?;
                let reconstruction = ae.decoder.forward_on_tape(tape, dec, latent)?;
                Ok(ViewNodes {
                    latent,
                    contrastive,
                    reconstruction,
                })
            })
            .collect()
    }
}

fn reshape_empty(x: &DenseMatrix, cols: usize) -> DenseMatrix {
    if x.rows() == 0 {
        DenseMatrix::zeros(0, cols)
    } else {
        x.clone()
    }
}

/// Per-view features of the available rows of `batch`.
pub fn forward_views(model: &GlcModel, batch: &Batch) -> Result<Vec<ViewFeatures>> {
    model.check_batch(batch)?;
    model
        .views
        .iter()
        .zip(&batch.views)
        .map(|(ae, vb)| ae.forward(&reshape_empty(&vb.data, ae.input_dim())))
        .collect()
}

/// `Σ_v Σ_i ‖x_i^v − x̂_i^v‖²` over available rows.
pub fn reconstruction_loss(features: &[ViewFeatures], batch: &Batch) -> Result<f64> {
    if features.len() != batch.views.len() {
        return Err(shape_err!(
            "{} feature sets for {} views",
            features.len(),
            batch.views.len()
        ));
    }
    let mut total = 0.0;
    for (f, vb) in features.iter().zip(&batch.views) {
        if vb.data.rows() == 0 {
            continue;
        }
        vb.data.check_same_shape(&f.reconstruction, "reconstruction")?;
        total += vb
            .data
            .as_slice()
            .iter()
            .zip(f.reconstruction.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok(total)
}

/// Recorded form of [`reconstruction_loss`].
pub fn reconstruction_loss_on_tape(tape: &mut Tape, nodes: &[ViewNodes], batch: &Batch) -> Result<Var> {
    let mut terms = Vec::with_capacity(nodes.len());
    for (n, vb) in nodes.iter().zip(&batch.views) {
        let target = reshape_empty(&vb.data, tape.value(n.reconstruction).cols());
        terms.push((tape.squared_error(n.reconstruction, &target)?, 1.0));
    }
    if terms.is_empty() {
        return Ok(tape.constant(DenseMatrix::scalar(0.0)));
    }
    tape.lin_comb(&terms)
}

/// Which per-view representation to extract for the whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSpace {
    /// Contrastive features `H`.
    Contrastive,
    /// Latent features `Z`.
    Latent,
}

/// `N x d` features per view. Rows of unavailable samples are left at zero
/// and must be ignored via the mask.
pub fn encode_dataset(model: &GlcModel, dataset: &MultiViewDataset, space: FeatureSpace) -> Result<Vec<DenseMatrix>> {
    const CHUNK: usize = 1024;
    let n = dataset.n_samples();
    model
        .views
        .iter()
        .enumerate()
        .map(|(v, ae)| {
            let dim = match space {
                FeatureSpace::Contrastive => ae.head_dim(),
                FeatureSpace::Latent => ae.latent_dim(),
            };
            let mut out = DenseMatrix::zeros(n, dim);
            let rows = dataset.mask.available_in(v);
            for chunk in rows.chunks(CHUNK) {
                let x = dataset.views[v].select_rows(chunk);
                let z = ae.encoder.forward(&x)?;
                let f = match space {
                    FeatureSpace::Contrastive => ae.head.forward(&z)?,
                    FeatureSpace::Latent => z,
                };
                for (k, &i) in chunk.iter().enumerate() {
                    out.row_mut(i).copy_from_slice(f.row(k));
                }
            }
            Ok(out)
        })
        .collect()
}

const CHECKPOINT_FORMAT: &str = "glc-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: GlcModel,
}

/// Write the model as versioned JSON. Floats round-trip exactly.
pub fn save_checkpoint(model: &GlcModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string(&ck).expect("model serializes");
    fs::write(path, json).map_err(|e| GlcError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GlcModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GlcError::io(path, e))?;
    let ck: Checkpoint =
        serde_json::from_str(&text).map_err(|e| GlcError::Format(format!("{}: {e}", path.display())))?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(GlcError::Format(format!(
            "unsupported checkpoint {} v{}",
            ck.format, ck.version
        )));
    }
    ck.model.validate()?;
    Ok(ck.model)
}
