//! Experiment configuration: one JSON document with full defaulting, plus
//! dotted `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use driftlab::anon::AnonConfig;
use driftlab::compensate::CompensationConfig;
use driftlab::models::TrainingConfig;
use driftlab::world::WorldConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Environment variable that overrides the configured output root.
pub const OUT_ENV: &str = "DRIFTLAB_OUT";

/// Which embeddings form the enrolment side of a verification trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnrollmentMode {
    /// Enrolment utterances go through the same condition as the trials.
    Matched,
    /// Enrolment always uses embeddings extracted from the original signals.
    Original,
}

impl EnrollmentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Matched => "matched",
            Self::Original => "original",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Upper bound on the number of scored trials.
    pub max_trials: usize,
    pub trial_seed: u64,
    /// Enrolment modes reported in `eer_report.csv`; the first is the primary one.
    pub enrollment: Vec<EnrollmentMode>,
    /// Interpolation weight whose runs provide the anonymised and compensated
    /// conditions of the EER and projection reports.
    pub eer_lambda: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_trials: 2000,
            trial_seed: 5,
            enrollment: vec![EnrollmentMode::Matched, EnrollmentMode::Original],
            eer_lambda: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub training: TrainingConfig,
    pub anon: AnonConfig,
    pub compensation: CompensationConfig,
    pub lambda_sweep: Vec<f64>,
    pub evaluation: EvalConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            training: TrainingConfig::default(),
            anon: AnonConfig::default(),
            compensation: CompensationConfig::default(),
            lambda_sweep: vec![0.0, 1.0 / 3.0, 0.5, 1.0],
            evaluation: EvalConfig::default(),
            output_dir: PathBuf::from("driftlab-out"),
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file; missing fields take their defaults.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `key=value` overrides, where `key` is a dotted path such as
    /// `world.leakage` and `value` is JSON (bare words are taken as strings).
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, CliError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let slot = key
                .split('.')
                .try_fold(&mut doc, |node, part| node.get_mut(part))
                .ok_or_else(|| CliError::Config(format!("unknown config key {key:?}")))?;
            *slot = value;
        }
        serde_json::from_value(doc).map_err(|e| CliError::Config(format!("after overrides: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.world.validate()?;
        let pool = self.world.pool_speakers;
        self.anon.validate(pool)?;
        self.compensation.validate()?;
        if self.training.steps > 0 && !(self.training.learning_rate > 0.0) {
            return Err(CliError::Config("training.learning_rate must be > 0".into()));
        }
        if self.training.batch_utterances == 0 || self.training.hidden == 0 {
            return Err(CliError::Config(
                "training.batch_utterances and training.hidden must be >= 1".into(),
            ));
        }
        if self.lambda_sweep.is_empty() {
            return Err(CliError::Config("lambda_sweep is empty".into()));
        }
        for (i, &l) in self.lambda_sweep.iter().enumerate() {
            if !(0.0..=1.0).contains(&l) {
                return Err(CliError::Config(format!("lambda {l} is outside [0, 1]")));
            }
            if self.lambda_sweep[..i].iter().any(|&o| run_tag(o) == run_tag(l)) {
                return Err(CliError::Config(format!("lambda {l} appears twice in lambda_sweep")));
            }
        }
        let eval = &self.evaluation;
        if !self.lambda_sweep.iter().any(|&l| run_tag(l) == run_tag(eval.eer_lambda)) {
            return Err(CliError::Config(format!(
                "evaluation.eer_lambda {} is not in lambda_sweep",
                eval.eer_lambda
            )));
        }
        if eval.max_trials < 2 {
            return Err(CliError::Config("evaluation.max_trials must be >= 2".into()));
        }
        if eval.enrollment.is_empty() {
            return Err(CliError::Config("evaluation.enrollment is empty".into()));
        }
        Ok(())
    }
}

/// Directory-safe label of an interpolation weight, e.g. `lam-0.3333`.
pub fn run_tag(lambda: f64) -> String {
    format!("lam-{lambda:.4}")
}

/// Directory name of one run, e.g. `lam-1.0000-comp`.
pub fn run_dir_name(lambda: f64, compensate: bool) -> String {
    format!("{}-{}", run_tag(lambda), if compensate { "comp" } else { "nocomp" })
}
