//! Framewise two-layer tanh network shared by the world generator, the
//! vocoder and the extractor.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ndmath::{MathError, Tape, Tensor, Var};

/// `y_t = W2 · tanh(W1 · x_t + b1) + b2`, applied to every column `x_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// The network's parameters as nodes of one tape.
#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpVars {
    pub fn all(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

impl FrameMlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[hidden, input]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[output, hidden]),
            b2: Tensor::zeros(&[output]),
        }
    }

    /// Scaled-uniform (Glorot) weights, zero biases.
    pub fn glorot(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        let mut uniform = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            Tensor::new(vec![rows, cols], data).expect("shape matches data")
        };
        let w1 = uniform(hidden, input);
        let w2 = uniform(output, hidden);
        Self {
            w1,
            b1: Tensor::zeros(&[hidden]),
            w2,
            b2: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn params(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Records the parameters on `tape`, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        MlpVars {
            w1: put(&self.w1),
            b1: put(&self.b1),
            w2: put(&self.w2),
            b2: put(&self.b2),
        }
    }

    /// Taped forward pass over an `input × frames` matrix.
    pub fn forward_on(tape: &mut Tape, vars: &MlpVars, input: Var) -> Result<Var, MathError> {
        let frames = tape.value(input).cols();
        let pre = tape.matmul(vars.w1, input)?;
        let b1 = tape.broadcast_cols(vars.b1, frames)?;
        let pre = tape.add(pre, b1)?;
        let hidden = tape.tanh(pre);
        let out = tape.matmul(vars.w2, hidden)?;
        let b2 = tape.broadcast_cols(vars.b2, frames)?;
        tape.add(out, b2)
    }

    /// Untaped forward pass.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, MathError> {
        let frames = input.cols();
        let mut pre = self.w1.matmul(input)?;
        add_bias(&mut pre, &self.b1, frames);
        let hidden = pre.map(f64::tanh);
        let mut out = self.w2.matmul(&hidden)?;
        add_bias(&mut out, &self.b2, frames);
        Ok(out)
    }

    /// Absorbs a parameter digest into `hasher`.
    pub fn hash_into(&self, hasher: &mut Sha256) {
        for p in self.params() {
            for d in p.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in p.data() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
    }
}

fn add_bias(m: &mut Tensor, bias: &Tensor, frames: usize) {
    for (row, &b) in m.data_mut().chunks_mut(frames).zip(bias.data()) {
        for v in row {
            *v += b;
        }
    }
}
