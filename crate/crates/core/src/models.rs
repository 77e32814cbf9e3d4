//! The toy vocoder `V(f, G, X)` and x-vector extractor `f(S)`, with their
//! training loops.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ndmath::{Adam, AdamConfig, MathError, Tape, Tensor, Var};
use crate::nn::{FrameMlp, MlpVars};
use crate::rng::{self, tags};
use crate::world::{hex, Utterance, WorldConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{model} training diverged at step {step} (loss {loss})")]
    Divergence {
        model: &'static str,
        step: usize,
        loss: f64,
    },
    #[error("{0} training split is empty")]
    EmptyTrainingSet(&'static str),
    #[error("signal has no frames")]
    NoFrames,
    #[error("model bundle was trained on world {expected}, but the pipeline runs against {found}")]
    Provenance { expected: String, found: String },
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Utterances per optimisation step, drawn from a seeded shuffled order.
    pub batch_utterances: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            steps: 10000,
            learning_rate: 1e-3,
            batch_utterances: 8,
            hidden: 64,
            seed: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_utterances: usize,
    pub init: String,
    /// Full-training-set loss before the first update.
    pub initial_loss: f64,
    /// Full-training-set loss after the last update.
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocoder {
    pub net: FrameMlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extractor {
    pub net: FrameMlp,
}

fn check_frames(f0: &Tensor, features: &Tensor, x: &Tensor) -> Result<usize, MathError> {
    let n = f0.len();
    if features.cols() != n || x.cols() != n || x.shape().len() != 2 {
        return Err(MathError::ShapeMismatch {
            op: "synthesize",
            left: features.shape().to_vec(),
            right: x.shape().to_vec(),
        });
    }
    Ok(n)
}

impl Vocoder {
    pub fn new(world: &WorldConfig, hidden: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[tags::VOCODER]);
        Self {
            net: FrameMlp::glorot(world.vocoder_input_dim(), hidden, world.signal_dim, &mut r),
        }
    }

    /// `S̃ = V(f, G, X)`, framewise over the `(1 + c + m) × N` input.
    pub fn synthesize(&self, f0: &Tensor, features: &Tensor, x: &Tensor) -> Result<Tensor, MathError> {
        let n = check_frames(f0, features, x)?;
        let f_row = f0.reshape(&[1, n])?;
        let input = Tensor::concat_rows(&[&f_row, features, x])?;
        self.net.forward(&input)
    }

    /// Taped `synthesize`; `f0` is a length-`N` vector node.
    pub fn synthesize_on(
        tape: &mut Tape,
        vars: &MlpVars,
        f0: Var,
        features: Var,
        x: Var,
    ) -> Result<Var, MathError> {
        let n = tape.value(f0).len();
        let f_row = tape.reshape(f0, &[1, n])?;
        let input = tape.concat_rows(&[f_row, features, x])?;
        FrameMlp::forward_on(tape, vars, input)
    }
}

impl Extractor {
    pub fn new(world: &WorldConfig, hidden: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[tags::EXTRACTOR]);
        Self {
            net: FrameMlp::glorot(world.signal_dim, hidden, world.embed_dim, &mut r),
        }
    }

    /// Unit-norm x-vector of a `d_sig × N` signal.
    pub fn extract(&self, signal: &Tensor) -> Result<Tensor, ModelError> {
        if signal.shape().len() != 2 || signal.cols() == 0 {
            return Err(ModelError::NoFrames);
        }
        let frames = self.net.forward(signal)?;
        Ok(frames.mean_over_frames()?.normalized()?)
    }

    pub fn extract_on(tape: &mut Tape, vars: &MlpVars, signal: Var) -> Result<Var, ModelError> {
        if tape.value(signal).cols() == 0 {
            return Err(ModelError::NoFrames);
        }
        let frames = FrameMlp::forward_on(tape, vars, signal)?;
        let pooled = tape.mean_over_frames(frames)?;
        Ok(tape.normalize(pooled)?)
    }
}

/// Trained vocoder and extractor, tied to the world they were trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub world_fingerprint: String,
    pub vocoder: Vocoder,
    pub extractor: Extractor,
    pub vocoder_training: TrainingReport,
    pub extractor_training: TrainingReport,
}

impl ModelBundle {
    /// SHA-256 of every parameter, hex.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        self.vocoder.net.hash_into(&mut h);
        self.extractor.net.hash_into(&mut h);
        hex(&h.finalize())
    }

    pub fn check_world(&self, fingerprint: &str) -> Result<(), ModelError> {
        if self.world_fingerprint != fingerprint {
            return Err(ModelError::Provenance {
                expected: self.world_fingerprint.clone(),
                found: fingerprint.to_string(),
            });
        }
        Ok(())
    }

    /// `f(V(f, G, X))` without a tape.
    pub fn resynthesize(&self, f0: &Tensor, features: &Tensor, x: &Tensor) -> Result<Tensor, ModelError> {
        let s = self.vocoder.synthesize(f0, features, x)?;
        self.extractor.extract(&s)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Deterministic batch schedule: reshuffle at every epoch boundary.
struct BatchOrder {
    order: Vec<usize>,
    cursor: usize,
    rng: rng::StreamRng,
}

impl BatchOrder {
    fn new(len: usize, seed: u64, tag: u64) -> Self {
        let mut rng = rng::stream(seed, &[tags::SHUFFLE, tag]);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            cursor: 0,
            rng,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.clamp(1, self.order.len());
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}

fn vocoder_loss(net: &FrameMlp, batch: &[&Utterance], trainable: bool) -> Result<(Tape, MlpVars, Var), MathError> {
    let mut tape = Tape::new();
    let vars = net.bind(&mut tape, trainable);
    let mut total: Option<Var> = None;
    for u in batch {
        let f0 = tape.constant(u.f0.clone());
        let g = tape.constant(u.features.clone());
        let x = tape.constant(crate::world::duplicate(&u.x_o, u.frames())?);
        let s_hat = Vocoder::synthesize_on(&mut tape, &vars, f0, g, x)?;
        let target = tape.constant(u.signal.clone());
        let mse = tape.mean_squared_error(s_hat, target)?;
        total = Some(match total {
            Some(t) => tape.add(t, mse)?,
            None => mse,
        });
    }
    let total = total.ok_or(MathError::EmptyInput("vocoder batch"))?;
    let loss = tape.scale(total, 1.0 / batch.len() as f64);
    Ok((tape, vars, loss))
}

fn extractor_loss(net: &FrameMlp, batch: &[&Utterance], trainable: bool) -> Result<(Tape, MlpVars, Var), ModelError> {
    let mut tape = Tape::new();
    let vars = net.bind(&mut tape, trainable);
    let mut total: Option<Var> = None;
    for u in batch {
        let s = tape.constant(u.signal.clone());
        let e = Extractor::extract_on(&mut tape, &vars, s)?;
        let target = tape.constant(u.x_o.clone());
        let mse = tape.mean_squared_error(e, target)?;
        total = Some(match total {
            Some(t) => tape.add(t, mse)?,
            None => mse,
        });
    }
    let total = total.ok_or(MathError::EmptyInput("extractor batch"))?;
    let loss = tape.scale(total, 1.0 / batch.len() as f64);
    Ok((tape, vars, loss))
}

/// Generic Adam loop over a `FrameMlp` with a batch loss builder.
fn fit<F>(
    net: &mut FrameMlp,
    data: &[&Utterance],
    cfg: &TrainingConfig,
    model: &'static str,
    tag: u64,
    loss_fn: F,
) -> Result<TrainingReport, ModelError>
where
    F: Fn(&FrameMlp, &[&Utterance], bool) -> Result<(Tape, MlpVars, Var), ModelError>,
{
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet(model));
    }
    let full_loss = |net: &FrameMlp| -> Result<f64, ModelError> {
        let (tape, _, loss) = loss_fn(net, data, false)?;
        Ok(tape.value(loss).data()[0])
    };
    let initial_loss = full_loss(net)?;

    let shapes: Vec<Vec<usize>> = net.params().iter().map(|p| p.shape().to_vec()).collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut adam = Adam::new(&shape_refs, AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut order = BatchOrder::new(data.len(), cfg.seed, tag);

    for step in 0..cfg.steps {
        let batch: Vec<&Utterance> = order
            .next_batch(cfg.batch_utterances)
            .into_iter()
            .map(|i| data[i])
            .collect();
        let (tape, vars, loss) = loss_fn(net, &batch, true)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(ModelError::Divergence {
                model,
                step,
                loss: value,
            });
        }
        let mut grads = tape.backward(loss)?;
        let g: Vec<Tensor> = vars
            .all()
            .iter()
            .map(|&v| grads.take(v).expect("parameter leaf"))
            .collect();
        let g_refs: Vec<&Tensor> = g.iter().collect();
        adam.step(&mut net.params_mut(), &g_refs)?;
    }

    let final_loss = full_loss(net)?;
    if !final_loss.is_finite() || !net.is_finite() {
        return Err(ModelError::Divergence {
            model,
            step: cfg.steps,
            loss: final_loss,
        });
    }
    Ok(TrainingReport {
        steps: cfg.steps,
        seed: cfg.seed,
        learning_rate: cfg.learning_rate,
        batch_utterances: cfg.batch_utterances,
        init: "glorot-uniform".into(),
        initial_loss,
        final_loss,
    })
}

/// Self-supervised reconstruction training: minimise `‖S − V(f, G, X_o)‖²`.
pub fn train_vocoder(
    world: &WorldConfig,
    train: &[&Utterance],
    cfg: &TrainingConfig,
) -> Result<(Vocoder, TrainingReport), ModelError> {
    let mut vocoder = Vocoder::new(world, cfg.hidden, cfg.seed);
    let report = fit(
        &mut vocoder.net,
        train,
        cfg,
        "vocoder",
        tags::VOCODER,
        |net, batch, trainable| Ok(vocoder_loss(net, batch, trainable)?),
    )?;
    Ok((vocoder, report))
}

/// Regression of `extract(S)` onto the utterance x-vector `x_o`.
pub fn train_extractor(
    world: &WorldConfig,
    train: &[&Utterance],
    cfg: &TrainingConfig,
) -> Result<(Extractor, TrainingReport), ModelError> {
    let mut extractor = Extractor::new(world, cfg.hidden, cfg.seed);
    let report = fit(
        &mut extractor.net,
        train,
        cfg,
        "extractor",
        tags::EXTRACTOR,
        extractor_loss,
    )?;
    Ok((extractor, report))
}

/// Mean framewise reconstruction MSE of the vocoder over `data`.
pub fn reconstruction_mse(vocoder: &Vocoder, data: &[&Utterance]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for u in data {
        let x = crate::world::duplicate(&u.x_o, u.frames())?;
        let s_hat = vocoder.synthesize(&u.f0, &u.features, &x)?;
        let diff = s_hat.sub(&u.signal)?;
        total += diff.dot(&diff)? / diff.len() as f64;
    }
    Ok(total / data.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, Partition};

    fn tiny_world() -> WorldConfig {
        WorldConfig {
            n_speakers: 5,
            train_speakers: 1,
            pool_speakers: 2,
            utterances_per_speaker: 4,
            enroll_utterances: 1,
            frames: 10,
            content_dim: 3,
            embed_dim: 4,
            signal_dim: 3,
            generator_hidden: 8,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_initialisation() {
        let wc = tiny_world();
        let world = generate_world(&wc).unwrap();
        let train: Vec<&Utterance> = world.partition(Partition::Train).collect();
        let cfg = TrainingConfig {
            steps: 0,
            hidden: 6,
            ..TrainingConfig::default()
        };
        let (v, report) = train_vocoder(&wc, &train, &cfg).unwrap();
        assert_eq!(v, Vocoder::new(&wc, 6, cfg.seed));
        assert_eq!(report.initial_loss, report.final_loss);
        let (e, _) = train_extractor(&wc, &train, &cfg).unwrap();
        assert_eq!(e, Extractor::new(&wc, 6, cfg.seed));
    }

    #[test]
    fn extract_is_unit_norm_and_permutation_invariant() {
        let wc = tiny_world();
        let e = Extractor::new(&wc, 5, 3);
        let s = Tensor::new(vec![3, 4], (0..12).map(|i| (i as f64).cos()).collect()).unwrap();
        let x = e.extract(&s).unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-12);
        let perm = [2, 0, 3, 1];
        let permuted: Vec<Vec<f64>> = (0..3)
            .map(|r| perm.iter().map(|&c| s.get(r, c)).collect())
            .collect();
        let y = e.extract(&Tensor::from_rows(&permuted).unwrap()).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn extract_without_frames_fails() {
        let e = Extractor::new(&tiny_world(), 5, 3);
        assert!(matches!(e.extract(&Tensor::zeros(&[3, 0])), Err(ModelError::NoFrames)));
    }

    #[test]
    fn synthesize_rejects_frame_mismatch() {
        let wc = tiny_world();
        let v = Vocoder::new(&wc, 5, 1);
        let err = v
            .synthesize(&Tensor::ones(&[10]), &Tensor::zeros(&[3, 10]), &Tensor::zeros(&[4, 9]))
            .unwrap_err();
        assert!(matches!(err, MathError::ShapeMismatch { .. }));
    }

    #[test]
    fn synthesize_is_deterministic_and_zero_net_gives_zero() {
        let wc = tiny_world();
        let v = Vocoder::new(&wc, 5, 1);
        let f = Tensor::ones(&[10]);
        let g = Tensor::filled(&[3, 10], 0.3);
        let x = Tensor::filled(&[4, 10], -0.2);
        assert_eq!(v.synthesize(&f, &g, &x).unwrap(), v.synthesize(&f, &g, &x).unwrap());
        let zero = Vocoder {
            net: FrameMlp::zeros(8, 5, 3),
        };
        assert_eq!(zero.synthesize(&f, &g, &x).unwrap(), Tensor::zeros(&[3, 10]));
    }

    #[test]
    fn provenance_mismatch_is_reported() {
        let wc = tiny_world();
        let report = TrainingReport {
            steps: 0,
            seed: 0,
            learning_rate: 0.0,
            batch_utterances: 1,
            init: "glorot-uniform".into(),
            initial_loss: 0.0,
            final_loss: 0.0,
        };
        let bundle = ModelBundle {
            world_fingerprint: "abc".into(),
            vocoder: Vocoder::new(&wc, 3, 1),
            extractor: Extractor::new(&wc, 3, 1),
            vocoder_training: report.clone(),
            extractor_training: report,
        };
        assert!(bundle.check_world("abc").is_ok());
        assert!(matches!(bundle.check_world("abd"), Err(ModelError::Provenance { .. })));
    }
}
