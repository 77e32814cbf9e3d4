//! Inference-time drift compensation.
//!
//! Adjusts the vocoder's x-vector input matrix so that the x-vector extracted
//! from the synthesised signal matches the intended target:
//!
//! ```text
//! X* = argmin_X  d( f(V(f, G, X)), x_target )
//! ```
//!
//! Vocoder and extractor are bound as tape constants, so gradients only ever
//! reach `X`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndmath::{adam_step, cosine_distance, AdamConfig, AdamState, MathError, Tape, Tensor, Var};
use crate::models::{Extractor, ModelBundle, ModelError, Vocoder};

#[derive(Debug, Error)]
pub enum CompensationError {
    #[error("invalid compensation config: {0}")]
    Config(String),
    #[error("non-finite drift at step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizeMode {
    /// Every frame's x-vector column is a free variable.
    FullMatrix,
    /// One vector shared by all frames.
    SharedVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompensationConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub stop_threshold: f64,
    pub mode: OptimizeMode,
}

impl Default for CompensationConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            max_steps: 150,
            stop_threshold: 0.05,
            mode: OptimizeMode::FullMatrix,
        }
    }
}

impl CompensationConfig {
    pub fn validate(&self) -> Result<(), CompensationError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CompensationError::Config("learning_rate must be > 0".into()));
        }
        if self.max_steps == 0 {
            return Err(CompensationError::Config("max_steps must be >= 1".into()));
        }
        if !(self.stop_threshold >= 0.0) {
            return Err(CompensationError::Config("stop_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompensationTrace {
    /// Drift before every update, plus the final drift.
    pub drifts: Vec<f64>,
    pub steps_taken: usize,
    pub converged: bool,
    /// Optimised `m × N` input matrix.
    pub x_star: Tensor,
    /// Unit-norm x-vector extracted from the compensated synthesis.
    pub x_a_star: Tensor,
}

impl CompensationTrace {
    pub fn initial_drift(&self) -> f64 {
        self.drifts[0]
    }

    pub fn final_drift(&self) -> f64 {
        *self.drifts.last().expect("trace holds at least the initial drift")
    }
}

/// Vocoder drift `d(x_target, x_measured)`.
pub fn drift_of(x_target: &Tensor, x_measured: &Tensor) -> Result<f64, MathError> {
    cosine_distance(x_target, x_measured)
}

/// Drift compensation against one frozen model bundle.
pub struct Compensator<'a> {
    models: &'a ModelBundle,
}

impl<'a> Compensator<'a> {
    /// Fails if `models` were trained on a different world.
    pub fn new(models: &'a ModelBundle, world_fingerprint: &str) -> Result<Self, CompensationError> {
        models.check_world(world_fingerprint)?;
        Ok(Self { models })
    }

    /// Runs Adam on the input matrix until the drift falls below the
    /// threshold or `max_steps` updates were applied. A fresh optimiser
    /// state is used for every call.
    pub fn compensate(
        &self,
        f0: &Tensor,
        features: &Tensor,
        x_init: &Tensor,
        target: &Tensor,
        cfg: &CompensationConfig,
    ) -> Result<CompensationTrace, CompensationError> {
        cfg.validate()?;
        let frames = f0.len();
        if x_init.shape().len() != 2 || x_init.cols() != frames {
            return Err(MathError::ShapeMismatch {
                op: "compensate",
                left: vec![x_init.rows(), frames],
                right: x_init.shape().to_vec(),
            }
            .into());
        }

        let mut param = match cfg.mode {
            OptimizeMode::FullMatrix => x_init.clone(),
            OptimizeMode::SharedVector => x_init.mean_over_frames()?,
        };
        let mut state = AdamState::new(param.shape(), AdamConfig::with_learning_rate(cfg.learning_rate));
        let mut drifts = Vec::with_capacity(cfg.max_steps + 1);

        loop {
            let step = drifts.len();
            let pass = self.forward(f0, features, &param, target, cfg.mode)?;
            let drift = pass.tape.value(pass.loss).data()[0];
            if !drift.is_finite() {
                return Err(CompensationError::NonFinite { step });
            }
            drifts.push(drift);
            let converged = drift < cfg.stop_threshold;
            if converged || step == cfg.max_steps {
                let x_star = pass.tape.value(pass.matrix).clone();
                let x_a_star = pass.tape.value(pass.embedding).clone();
                return Ok(CompensationTrace {
                    steps_taken: step,
                    drifts,
                    converged,
                    x_star,
                    x_a_star,
                });
            }
            let mut grads = pass.tape.backward(pass.loss)?;
            let grad = grads.take(pass.param).expect("input matrix is a leaf");
            adam_step(&mut param, &grad, &mut state)?;
        }
    }

    fn forward(
        &self,
        f0: &Tensor,
        features: &Tensor,
        param: &Tensor,
        target: &Tensor,
        mode: OptimizeMode,
    ) -> Result<Pass, CompensationError> {
        let mut tape = Tape::new();
        let voc = self.models.vocoder.net.bind(&mut tape, false);
        let ext = self.models.extractor.net.bind(&mut tape, false);
        let f = tape.constant(f0.clone());
        let g = tape.constant(features.clone());
        let param_var = tape.leaf(param.clone());
        let matrix = match mode {
            OptimizeMode::FullMatrix => param_var,
            OptimizeMode::SharedVector => tape.broadcast_cols(param_var, f0.len())?,
        };
        let signal = Vocoder::synthesize_on(&mut tape, &voc, f, g, matrix)?;
        let embedding = Extractor::extract_on(&mut tape, &ext, signal)?;
        let t = tape.constant(target.clone());
        let loss = tape.cosine_distance(embedding, t)?;
        Ok(Pass {
            tape,
            param: param_var,
            matrix,
            embedding,
            loss,
        })
    }
}

struct Pass {
    tape: Tape,
    param: Var,
    matrix: Var,
    embedding: Var,
    loss: Var,
}
