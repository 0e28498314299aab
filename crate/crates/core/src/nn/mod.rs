//! Dense-matrix numerical core: matrices, a reverse-mode tape, MLPs, Adam
//! and a finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use gradcheck::grad_check;
pub use matrix::DenseMatrix;
pub use mlp::{mlp_forward, Activation, Layer, MlpParams, MlpVars};
pub use tape::{AnchorTerms, ContrastiveSpec, Gradients, Tape, Var};
