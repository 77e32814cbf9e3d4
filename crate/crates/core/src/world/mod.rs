//! Seeded synthetic speech world.
//!
//! Each speaker has a unit-norm identity `z_s`. Each utterance carries an F0
//! curve, content features `G`, an x-vector `x_o` and a signal `S` produced by
//! a frozen framewise generator network from `(f, G, X_o)`. The `leakage`
//! knob adds a speaker-dependent offset `ε · W_leak z_s` to every frame of
//! `G`, so content features carry speaker information when `ε > 0`.

mod store;

pub use store::{load_world, save_world, WORLD_FILES};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ndmath::{MathError, Tensor};
use crate::nn::FrameMlp;
use crate::rng::{self, tags};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error("pool partition is empty")]
    EmptyPool,
    #[error("world data does not match its fingerprint (expected {expected}, found {found})")]
    Fingerprint { expected: String, found: String },
    #[error("malformed world file {file}: {reason}")]
    Format { file: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_speakers: usize,
    pub train_speakers: usize,
    pub pool_speakers: usize,
    pub utterances_per_speaker: usize,
    /// Leading utterances of each evaluation speaker used for enrolment.
    pub enroll_utterances: usize,
    pub frames: usize,
    pub content_dim: usize,
    pub embed_dim: usize,
    pub signal_dim: usize,
    pub leakage: f64,
    pub within_speaker_noise: f64,
    /// AR(1) coefficient of the per-frame content process.
    pub content_correlation: f64,
    /// Scale of the speaker-dependent log-F0 offset.
    pub pitch_speaker_scale: f64,
    /// Standard deviation of the entries of the leakage projection `W_leak`.
    pub leak_scale: f64,
    /// Input gain of the x-vector block in the true generator `Φ`.
    pub identity_gain: f64,
    pub generator_hidden: usize,
    pub master_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_speakers: 280,
            train_speakers: 200,
            pool_speakers: 60,
            utterances_per_speaker: 10,
            enroll_utterances: 3,
            frames: 50,
            content_dim: 16,
            embed_dim: 32,
            signal_dim: 24,
            leakage: 0.5,
            within_speaker_noise: 0.05,
            content_correlation: 0.98,
            pitch_speaker_scale: 0.3,
            leak_scale: 2.5,
            identity_gain: 2.0,
            generator_hidden: 64,
            master_seed: 7,
        }
    }
}

impl WorldConfig {
    pub fn eval_speakers(&self) -> usize {
        self.n_speakers
            .saturating_sub(self.train_speakers + self.pool_speakers)
    }

    pub fn vocoder_input_dim(&self) -> usize {
        1 + self.content_dim + self.embed_dim
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let err = |m: &str| Err(WorldError::Config(m.to_string()));
        if [
            self.frames,
            self.content_dim,
            self.embed_dim,
            self.signal_dim,
            self.generator_hidden,
            self.utterances_per_speaker,
        ]
        .contains(&0)
        {
            return err("all dimensions and counts must be >= 1");
        }
        if self.train_speakers == 0 || self.pool_speakers == 0 {
            return err("train and pool partitions need at least one speaker each");
        }
        if self.train_speakers + self.pool_speakers > self.n_speakers {
            return err("train + pool speakers exceed n_speakers");
        }
        if self.eval_speakers() < 2 {
            return err("at least two evaluation speakers are needed for impostor trials");
        }
        if self.enroll_utterances == 0 || self.enroll_utterances >= self.utterances_per_speaker {
            return err("enroll_utterances must be in [1, utterances_per_speaker)");
        }
        if !(self.leakage >= 0.0 && self.leakage.is_finite()) {
            return err("leakage must be finite and >= 0");
        }
        if !(self.within_speaker_noise >= 0.0 && self.within_speaker_noise.is_finite()) {
            return err("within_speaker_noise must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.content_correlation) {
            return err("content_correlation must be in [0, 1)");
        }
        if !self.pitch_speaker_scale.is_finite() {
            return err("pitch_speaker_scale must be finite");
        }
        if !(self.identity_gain > 0.0 && self.identity_gain.is_finite()) {
            return err("identity_gain must be finite and > 0");
        }
        if !(self.leak_scale >= 0.0 && self.leak_scale.is_finite()) {
            return err("leak_scale must be finite and >= 0");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Pool,
    Enroll,
    Trial,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Pool => "pool",
            Self::Enroll => "enroll",
            Self::Trial => "trial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Self::Train),
            "pool" => Some(Self::Pool),
            "enroll" => Some(Self::Enroll),
            "trial" => Some(Self::Trial),
            _ => None,
        }
    }

    pub fn is_eval(self) -> bool {
        matches!(self, Self::Enroll | Self::Trial)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerGroup {
    Train,
    Pool,
    Eval,
}

impl SpeakerGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Pool => "pool",
            Self::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Self::Train),
            "pool" => Some(Self::Pool),
            "eval" => Some(Self::Eval),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Speaker {
    pub id: usize,
    pub group: SpeakerGroup,
    /// Unit-norm identity latent `z_s`.
    pub identity: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub speaker_id: usize,
    pub utterance_id: usize,
    pub partition: Partition,
    /// Positive F0 curve, length `N`.
    pub f0: Tensor,
    /// Content features `G`, `c × N`.
    pub features: Tensor,
    /// Signal frames `S`, `d_sig × N`.
    pub signal: Tensor,
    /// Unit-norm utterance x-vector.
    pub x_o: Tensor,
}

impl Utterance {
    pub fn key(&self) -> (usize, usize) {
        (self.speaker_id, self.utterance_id)
    }

    pub fn frames(&self) -> usize {
        self.f0.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: WorldConfig,
    pub speakers: Vec<Speaker>,
    pub utterances: Vec<Utterance>,
    pub fingerprint: String,
}

impl Dataset {
    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.partition == p)
    }

    pub fn eval_utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(|u| u.partition.is_eval())
    }

    pub fn speaker(&self, id: usize) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.id == id)
    }

    pub fn utterance(&self, speaker_id: usize, utterance_id: usize) -> Option<&Utterance> {
        self.utterances
            .iter()
            .find(|u| u.speaker_id == speaker_id && u.utterance_id == utterance_id)
    }
}

/// The hidden, frozen mechanics of a world: the "true" speech generator `Φ`,
/// the leakage projection and the pitch projection.
#[derive(Clone, Debug)]
pub struct WorldGenerator {
    pub config: WorldConfig,
    pub speech: FrameMlp,
    /// `c × m` projection carrying speaker identity into content features.
    pub leak_projection: Tensor,
    /// Projection of `z_s` onto the speaker's base log-pitch.
    pub pitch_projection: Tensor,
}

impl WorldGenerator {
    pub fn new(config: &WorldConfig) -> Result<Self, WorldError> {
        config.validate()?;
        let mut r = rng::stream(config.master_seed, &[tags::GENERATOR]);
        let (c, m, d, h) = (
            config.content_dim,
            config.embed_dim,
            config.signal_dim,
            config.generator_hidden,
        );
        let input = config.vocoder_input_dim();

        // Column gains balance the three input blocks: the F0 row, the c content
        // rows (unit variance each) and the unit-norm x-vector block.
        let content_gain = 1.0 / (c as f64).sqrt();
        let mut w1 = Vec::with_capacity(h * input);
        for _ in 0..h {
            for col in 0..input {
                let gain = if col == 0 {
                    1.0
                } else if col <= c {
                    content_gain
                } else {
                    config.identity_gain
                };
                w1.push(gain * normal(&mut r));
            }
        }
        let b1: Vec<f64> = (0..h).map(|_| 0.1 * normal(&mut r)).collect();
        let hidden_gain = 1.0 / (h as f64).sqrt();
        let w2: Vec<f64> = (0..d * h).map(|_| hidden_gain * normal(&mut r)).collect();
        let b2: Vec<f64> = (0..d).map(|_| 0.1 * normal(&mut r)).collect();
        let speech = FrameMlp {
            w1: Tensor::matrix(h, input, w1)?,
            b1: Tensor::vector(b1),
            w2: Tensor::matrix(d, h, w2)?,
            b2: Tensor::vector(b2),
        };

        let leak: Vec<f64> = (0..c * m).map(|_| config.leak_scale * normal(&mut r)).collect();
        let pitch: Vec<f64> = (0..m).map(|_| normal(&mut r)).collect();
        let pitch_projection = Tensor::vector(pitch).normalized()?;
        Ok(Self {
            config: config.clone(),
            speech,
            leak_projection: Tensor::matrix(c, m, leak)?,
            pitch_projection,
        })
    }

    pub fn speaker_identity(&self, speaker_id: usize) -> Tensor {
        let mut r = rng::stream(
            self.config.master_seed,
            &[tags::SPEAKER, speaker_id as u64],
        );
        unit_sphere(&mut r, self.config.embed_dim)
    }

    pub fn group_of(&self, speaker_id: usize) -> SpeakerGroup {
        let c = &self.config;
        if speaker_id < c.train_speakers {
            SpeakerGroup::Train
        } else if speaker_id < c.train_speakers + c.pool_speakers {
            SpeakerGroup::Pool
        } else {
            SpeakerGroup::Eval
        }
    }

    pub fn partition_of(&self, speaker_id: usize, utterance_id: usize) -> Partition {
        match self.group_of(speaker_id) {
            SpeakerGroup::Train => Partition::Train,
            SpeakerGroup::Pool => Partition::Pool,
            SpeakerGroup::Eval if utterance_id < self.config.enroll_utterances => Partition::Enroll,
            SpeakerGroup::Eval => Partition::Trial,
        }
    }

    /// Content features for a speaker: AR(1) Gaussian content plus the
    /// leakage offset, which is constant across frames.
    pub fn features(&self, identity: &Tensor, content: &Tensor) -> Result<Tensor, WorldError> {
        let leak = self
            .leak_projection
            .matmul(&identity.reshape(&[self.config.embed_dim, 1])?)?
            .scale(self.config.leakage);
        let frames = content.cols();
        let mut g = content.clone();
        for (row, &offset) in g.data_mut().chunks_mut(frames).zip(leak.data()) {
            for v in row {
                *v += offset;
            }
        }
        Ok(g)
    }

    /// Applies the true generator to `(f, G, X)` with `X` the frame-duplicated x-vector.
    pub fn speak(&self, f0: &Tensor, features: &Tensor, x: &Tensor) -> Result<Tensor, WorldError> {
        let frames = f0.len();
        let f_row = f0.reshape(&[1, frames])?;
        let x_mat = duplicate(x, frames)?;
        let input = Tensor::concat_rows(&[&f_row, features, &x_mat])?;
        Ok(self.speech.forward(&input)?)
    }

    pub fn utterance(&self, speaker: &Speaker, utterance_id: usize) -> Result<Utterance, WorldError> {
        let cfg = &self.config;
        let (n, c, m) = (cfg.frames, cfg.content_dim, cfg.embed_dim);
        let mut r = rng::stream(
            cfg.master_seed,
            &[tags::UTTERANCE, speaker.id as u64, utterance_id as u64],
        );

        let noisy: Vec<f64> = speaker
            .identity
            .data()
            .iter()
            .map(|&z| z + cfg.within_speaker_noise * normal(&mut r))
            .collect();
        let x_o = Tensor::vector(noisy).normalized()?;

        let base = cfg.pitch_speaker_scale * self.pitch_projection.dot(&speaker.identity)?;
        let mut walk = 0.0;
        let f0: Vec<f64> = (0..n)
            .map(|_| {
                walk = 0.9 * walk + 0.05 * normal(&mut r);
                (base + walk).exp()
            })
            .collect();
        let f0 = Tensor::vector(f0);

        let rho = cfg.content_correlation;
        let innovation = (1.0 - rho * rho).sqrt();
        let mut content = vec![0.0; c * n];
        for row in 0..c {
            let mut prev = normal(&mut r);
            for t in 0..n {
                if t > 0 {
                    prev = rho * prev + innovation * normal(&mut r);
                }
                content[row * n + t] = prev;
            }
        }
        let content = Tensor::matrix(c, n, content)?;
        let features = self.features(&speaker.identity, &content)?;
        let signal = self.speak(&f0, &features, &x_o)?;
        debug_assert_eq!(x_o.len(), m);

        Ok(Utterance {
            speaker_id: speaker.id,
            utterance_id,
            partition: self.partition_of(speaker.id, utterance_id),
            f0,
            features,
            signal,
            x_o,
        })
    }
}

/// Generates the full dataset. Pure in `config`.
pub fn generate_world(config: &WorldConfig) -> Result<Dataset, WorldError> {
    let generator = WorldGenerator::new(config)?;
    let speakers: Vec<Speaker> = (0..config.n_speakers)
        .map(|id| Speaker {
            id,
            group: generator.group_of(id),
            identity: generator.speaker_identity(id),
        })
        .collect();
    let mut utterances = Vec::with_capacity(config.n_speakers * config.utterances_per_speaker);
    for speaker in &speakers {
        for u in 0..config.utterances_per_speaker {
            utterances.push(generator.utterance(speaker, u)?);
        }
    }
    let fingerprint = fingerprint(config, &speakers, &utterances);
    Ok(Dataset {
        config: config.clone(),
        speakers,
        utterances,
        fingerprint,
    })
}

/// SHA-256 over the config and every stored value, as hex.
pub fn fingerprint(config: &WorldConfig, speakers: &[Speaker], utterances: &[Utterance]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    let mut put = |t: &Tensor| {
        for v in t.data() {
            h.update(v.to_bits().to_le_bytes());
        }
    };
    for s in speakers {
        put(&s.identity);
    }
    for u in utterances {
        put(&u.f0);
        put(&u.features);
        put(&u.signal);
        put(&u.x_o);
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// External x-vector pool: one renormalised mean x-vector per pool speaker.
pub fn build_pool(dataset: &Dataset) -> Result<Vec<Tensor>, WorldError> {
    let groups: Vec<Vec<Tensor>> = dataset
        .speakers
        .iter()
        .filter(|s| s.group == SpeakerGroup::Pool)
        .map(|s| {
            dataset
                .utterances
                .iter()
                .filter(|u| u.speaker_id == s.id)
                .map(|u| u.x_o.clone())
                .collect()
        })
        .collect();
    pool_from_groups(&groups)
}

/// Mean-then-renormalise over each group of x-vectors.
pub fn pool_from_groups(groups: &[Vec<Tensor>]) -> Result<Vec<Tensor>, WorldError> {
    if groups.is_empty() || groups.iter().any(Vec::is_empty) {
        return Err(WorldError::EmptyPool);
    }
    groups
        .iter()
        .map(|g| {
            let mut sum = Tensor::zeros(g[0].shape());
            for v in g {
                sum = sum.add(v)?;
            }
            Ok(sum.scale(1.0 / g.len() as f64).normalized()?)
        })
        .collect()
}

/// `m × N` matrix whose columns all equal `x`.
pub fn duplicate(x: &Tensor, frames: usize) -> Result<Tensor, MathError> {
    if frames == 0 {
        return Err(MathError::Domain("frame count must be >= 1".into()));
    }
    let mut data = Vec::with_capacity(x.len() * frames);
    for &v in x.data() {
        data.extend(std::iter::repeat_n(v, frames));
    }
    Tensor::matrix(x.len(), frames, data)
}

fn normal(r: &mut impl Rng) -> f64 {
    StandardNormal.sample(r)
}

fn unit_sphere(r: &mut impl Rng, dim: usize) -> Tensor {
    loop {
        let v = Tensor::vector((0..dim).map(|_| normal(r)).collect());
        if let Ok(u) = v.normalized() {
            return u;
        }
    }
}
