//! Target distance, drift aggregation, verification EER and embedding
//! projections.

mod eer;
mod projection;

pub use eer::compute_eer;
pub use projection::{project_pca, Projection};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndmath::{cosine_distance, cosine_similarity, MathError, Tensor};
use crate::rng::{self, tags};
use crate::world::{Dataset, Partition};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score list is empty")]
    EmptyScores,
    #[error("score list contains NaN")]
    NanScore,
    #[error("trial list needs at least one genuine and one impostor trial")]
    MissingLabel,
    #[error("no {condition} embedding for {reference}")]
    MissingEmbedding { condition: String, reference: String },
    #[error("projection needs at least 3 embeddings, got {0}")]
    TooFewPoints(usize),
    #[error("embeddings have different dimensions")]
    DimensionMismatch,
    #[error("statistic needs at least two paired samples")]
    TooFewSamples,
    #[error(transparent)]
    Math(#[from] MathError),
}

pub type UttKey = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Original,
    Pseudo,
    Anonymised,
    Compensated,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Original,
        Condition::Pseudo,
        Condition::Anonymised,
        Condition::Compensated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Original => "original",
            Self::Pseudo => "pseudo",
            Self::Anonymised => "anonymised",
            Self::Compensated => "compensated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// One embedding per evaluation utterance, for one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub condition: Condition,
    pub vectors: BTreeMap<UttKey, Tensor>,
}

impl EmbeddingSet {
    pub fn new(condition: Condition) -> Self {
        Self {
            condition,
            vectors: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: UttKey) -> Result<&Tensor, EvalError> {
        self.vectors.get(&key).ok_or_else(|| EvalError::MissingEmbedding {
            condition: self.condition.as_str().into(),
            reference: format!("speaker {} utterance {}", key.0, key.1),
        })
    }

    /// Groups vectors by speaker, in key order.
    pub fn by_speaker(&self) -> BTreeMap<usize, Vec<&Tensor>> {
        let mut out: BTreeMap<usize, Vec<&Tensor>> = BTreeMap::new();
        for (&(s, _), v) in &self.vectors {
            out.entry(s).or_default().push(v);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Impostor,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub enroll_speaker: usize,
    pub utterance: UttKey,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn new(trials: Vec<Trial>) -> Result<Self, EvalError> {
        let has = |l: Label| trials.iter().any(|t| t.label == l);
        if !has(Label::Genuine) || !has(Label::Impostor) {
            return Err(EvalError::MissingLabel);
        }
        Ok(Self { trials })
    }

    /// Every evaluation speaker against every trial utterance; own
    /// utterances are genuine, all others impostor. If the full list exceeds
    /// `max_trials`, each label is subsampled in proportion with a seeded
    /// shuffle. Output is in canonical (speaker, utterance) order.
    pub fn build(dataset: &Dataset, max_trials: usize, seed: u64) -> Result<Self, EvalError> {
        let speakers: Vec<usize> = dataset
            .eval_utterances()
            .map(|u| u.speaker_id)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for &s in &speakers {
            for u in dataset.partition(Partition::Trial) {
                let label = if u.speaker_id == s {
                    Label::Genuine
                } else {
                    Label::Impostor
                };
                let t = Trial {
                    enroll_speaker: s,
                    utterance: u.key(),
                    label,
                };
                match label {
                    Label::Genuine => genuine.push(t),
                    Label::Impostor => impostor.push(t),
                }
            }
        }
        let total = genuine.len() + impostor.len();
        if total > max_trials {
            let keep_g = ((max_trials as f64 * genuine.len() as f64 / total as f64).round() as usize)
                .clamp(1, genuine.len());
            let keep_i = max_trials.saturating_sub(keep_g).clamp(1, impostor.len());
            let mut r = rng::stream(seed, &[tags::TRIALS]);
            genuine.shuffle(&mut r);
            impostor.shuffle(&mut r);
            genuine.truncate(keep_g);
            impostor.truncate(keep_i);
        }
        let mut trials: Vec<Trial> = genuine.into_iter().chain(impostor).collect();
        trials.sort_by_key(|t| (t.enroll_speaker, t.utterance));
        Self::new(trials)
    }

    pub fn count(&self, label: Label) -> usize {
        self.trials.iter().filter(|t| t.label == label).count()
    }
}

/// Per-speaker enrolment model: renormalised mean of the enrolment embeddings.
pub fn enrollment_models(set: &EmbeddingSet, enroll: &[UttKey]) -> Result<BTreeMap<usize, Tensor>, EvalError> {
    let mut sums: BTreeMap<usize, Tensor> = BTreeMap::new();
    for &key in enroll {
        let v = set.get(key)?;
        match sums.get_mut(&key.0) {
            Some(sum) => *sum = sum.add(v)?,
            None => {
                sums.insert(key.0, v.clone());
            }
        }
    }
    sums.into_iter()
        .map(|(s, sum)| Ok((s, sum.normalized()?)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTrials {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub eer: f64,
}

/// Cosine-similarity scoring of every trial, then EER.
pub fn score_trials(
    trials: &TrialList,
    models: &BTreeMap<usize, Tensor>,
    trial_set: &EmbeddingSet,
) -> Result<ScoredTrials, EvalError> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for t in &trials.trials {
        let model = models.get(&t.enroll_speaker).ok_or_else(|| EvalError::MissingEmbedding {
            condition: "enrolment".into(),
            reference: format!("speaker {}", t.enroll_speaker),
        })?;
        let score = cosine_similarity(model, trial_set.get(t.utterance)?)?;
        match t.label {
            Label::Genuine => genuine.push(score),
            Label::Impostor => impostor.push(score),
        }
    }
    let eer = compute_eer(&genuine, &impostor)?;
    Ok(ScoredTrials {
        genuine,
        impostor,
        eer,
    })
}

/// `d(x_o, x_i)`; cosine distance ignores the norm of `x_i`.
pub fn target_distance(x_o: &Tensor, x_i: &Tensor) -> Result<f64, EvalError> {
    Ok(cosine_distance(x_o, x_i)?)
}

/// Per-utterance drift measurements for one λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    pub speaker_id: usize,
    pub utterance_id: usize,
    pub target_distance: f64,
    /// Norm of the unnormalised interpolated vector fed to the vocoder.
    pub input_norm: f64,
    pub drift: f64,
    pub compensated_drift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftRow {
    pub partition: String,
    pub lambda: f64,
    pub mean_target: f64,
    pub mean_drift: f64,
    pub mean_compensated_drift: Option<f64>,
    pub samples: Vec<DriftSample>,
}

impl DriftRow {
    pub fn from_samples(partition: &str, lambda: f64, samples: Vec<DriftSample>) -> Result<Self, EvalError> {
        let targets: Vec<f64> = samples.iter().map(|s| s.target_distance).collect();
        let drifts: Vec<f64> = samples.iter().map(|s| s.drift).collect();
        let compensated: Option<Vec<f64>> = samples.iter().map(|s| s.compensated_drift).collect();
        Ok(Self {
            partition: partition.into(),
            lambda,
            mean_target: mean(&targets)?,
            mean_drift: mean(&drifts)?,
            mean_compensated_drift: compensated.map(|c| mean(&c)).transpose()?,
            samples,
        })
    }
}

pub fn mean(xs: &[f64]) -> Result<f64, EvalError> {
    if xs.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let (mx, my) = (mean(xs)?, mean(ys)?);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Least-squares slope of `ys` on `xs`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let (mx, my) = (mean(xs)?, mean(ys)?);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(EvalError::TooFewSamples);
    }
    Ok(sxy / sxx)
}

/// Mean cosine distance of each embedding to its speaker's renormalised
/// centroid.
pub fn within_speaker_dispersion(set: &EmbeddingSet) -> Result<f64, EvalError> {
    let mut distances = Vec::new();
    for vectors in set.by_speaker().values() {
        let mut sum = Tensor::zeros(vectors[0].shape());
        for v in vectors {
            sum = sum.add(v)?;
        }
        let centroid = sum.normalized()?;
        for v in vectors {
            distances.push(cosine_distance(&centroid, v)?);
        }
    }
    mean(&distances)
}

/// Mean over speakers of the total variance of their 2-D coordinates.
pub fn within_speaker_coordinate_variance(speakers: &[usize], coords: &[[f64; 2]]) -> Result<f64, EvalError> {
    let mut groups: BTreeMap<usize, Vec<[f64; 2]>> = BTreeMap::new();
    for (&s, &c) in speakers.iter().zip(coords) {
        groups.entry(s).or_default().push(c);
    }
    let variances: Vec<f64> = groups
        .values()
        .map(|pts| {
            let n = pts.len() as f64;
            let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
            let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
            pts.iter()
                .map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2))
                .sum::<f64>()
                / n
        })
        .collect();
    mean(&variances)
}
