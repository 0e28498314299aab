use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::nn::matrix::DenseMatrix;
use crate::nn::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer computing `act(x·Wᵀ + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`
    pub weight: DenseMatrix,
    /// `1 x out`
    pub bias: DenseMatrix,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Multi-layer perceptron parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Tape handles for one MLP's parameters, in `(weight, bias)` layer order.
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

impl MlpParams {
    /// Layers of the given widths with ReLU between hidden layers and an
    /// identity output. Weights and biases are drawn from
    /// `U(-1/√fan_in, 1/√fan_in)`.
    pub fn new_random<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(shape_err!("invalid MLP widths {widths:?}"));
        }
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-bound..bound)).collect() };
                let weight = DenseMatrix::from_vec(fan_out, fan_in, draw(fan_in * fan_out)).expect("sized buffer");
                let bias = DenseMatrix::from_vec(1, fan_out, draw(fan_out)).expect("sized buffer");
                Layer {
                    weight,
                    bias,
                    activation: if k + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    /// Widths from input to output, e.g. `[10, 500, 500, 2000, 512]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Layer::output_dim));
        w
    }

    /// Checks that layer shapes chain and biases match.
    pub fn validate(&self) -> Result<()> {
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.bias.shape() != (1, layer.output_dim()) {
                return Err(shape_err!("layer {k} bias has shape {:?}", layer.bias.shape()));
            }
            if let Some(next) = self.layers.get(k + 1) {
                if next.input_dim() != layer.output_dim() {
                    return Err(shape_err!(
                        "layer {k} outputs {} but layer {} expects {}",
                        layer.output_dim(),
                        k + 1,
                        next.input_dim()
                    ));
                }
            }
        }
        Ok(())
    }

    /// Forward pass without recording.
    pub fn forward(&self, input: &DenseMatrix) -> Result<DenseMatrix> {
        if input.cols() != self.input_dim() {
            return Err(shape_err!(
                "MLP expects {} input columns, got {}",
                self.input_dim(),
                input.cols()
            ));
        }
        let mut x = input.clone();
        for layer in &self.layers {
            let mut y = x.matmul_nt(&layer.weight)?;
            for r in 0..y.rows() {
                for (v, b) in y.row_mut(r).iter_mut().zip(layer.bias.as_slice()) {
                    *v += b;
                    if layer.activation == Activation::Relu && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            x = y;
        }
        Ok(x)
    }

    /// Register every weight and bias on `tape` as a differentiable leaf.
    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
                .collect(),
        }
    }

    /// Forward pass recorded on `tape` using previously registered parameters.
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &MlpVars, input: Var) -> Result<Var> {
        if tape.value(input).cols() != self.input_dim() {
            return Err(shape_err!(
                "MLP expects {} input columns, got {}",
                self.input_dim(),
                tape.value(input).cols()
            ));
        }
        let mut x = input;
        for (layer, &(w, b)) in self.layers.iter().zip(&vars.layers) {
            let lin = tape.matmul_nt(x, w)?;
            x = tape.add_bias(lin, b)?;
            if layer.activation == Activation::Relu {
                x = tape.relu(x)?;
            }
        }
        Ok(x)
    }

    /// Mutable references to all parameter matrices, `(weight, bias)` per
    /// layer; matches the order of [`MlpParams::register`].
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut DenseMatrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn params(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }
}

impl MlpVars {
    pub fn iter(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

/// Free-function form of [`MlpParams::forward`] / [`MlpParams::forward_on_tape`].
pub fn mlp_forward(params: &MlpParams, input: &DenseMatrix, tape: Option<&mut Tape>) -> Result<DenseMatrix> {
    match tape {
        None => params.forward(input),
        Some(tape) => {
            let vars = params.register(tape);
            let x = tape.constant(input.clone());
            let out = params.forward_on_tape(tape, &vars, x)?;
            Ok(tape.value(out).clone())
        }
    }
}
