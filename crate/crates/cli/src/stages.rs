//! Pipeline stages. Each stage checks that its upstream stages are current,
//! skips itself when its recorded outputs are intact and were produced from
//! the same inputs, and otherwise recomputes and records its outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use driftlab::anon::{anonymise, duplicate_frames, interpolate};
use driftlab::compensate::{drift_of, Compensator};
use driftlab::eval::{
    enrollment_models, fitted_slope, mean, pearson, project_pca, score_trials,
    within_speaker_coordinate_variance, within_speaker_dispersion, Condition, EmbeddingSet,
    Label, TrialList, UttKey,
};
use driftlab::format::fmt_f64;
use driftlab::models::{reconstruction_mse, train_extractor, train_vocoder, ModelBundle};
use driftlab::ndmath::Tensor;
use driftlab::world::{
    build_pool, generate_world, load_world, save_world, Dataset, Partition, Utterance, WORLD_FILES,
};
use log::info;
use rayon::prelude::*;

use crate::artifacts::{read_embeddings, read_samples, write_embeddings, write_samples, SampleRow};
use crate::config::{run_dir_name, run_tag, EnrollmentMode, ExperimentConfig};
use crate::error::CliError;
use crate::manifest::{digest_parts, Manifest, Staleness, StageRecord};

pub const WORLD_STAGE: &str = "world";
pub const TRAIN_STAGE: &str = "train";
pub const EVALUATE_STAGE: &str = "evaluate";

/// Utterances per logged batch in `run`.
const LOG_BATCH: usize = 50;

/// Whether a stage recomputed its outputs or reused them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

/// An output root, its manifest, the configuration and a worker pool.
pub struct Context {
    pub root: PathBuf,
    pub config: ExperimentConfig,
    manifest: Manifest,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn open(config: ExperimentConfig, root: &Path, jobs: usize) -> Result<Self, CliError> {
        config.validate()?;
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        fs::create_dir_all(root)?;
        let manifest = Manifest::load(root)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))?;
        Ok(Self {
            root: root.to_path_buf(),
            config,
            manifest,
            pool,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn require(&self, stage: &str, key: &str, rerun: &str) -> Result<&StageRecord, CliError> {
        self.manifest
            .check(&self.root, stage, key)
            .map_err(|s| stale_error(stage, s, rerun))
    }

    /// Returns the record if `stage` can be reused, logging the skip.
    fn reuse(&mut self, stage: &str, key: &str) -> Result<Option<StageRecord>, CliError> {
        let Ok(record) = self.manifest.check(&self.root, stage, key) else {
            return Ok(None);
        };
        let record = record.clone();
        info!("stage={stage} status=skipped reason=outputs-current");
        self.manifest.log(stage, "skipped", 0.0);
        self.manifest.save(&self.root)?;
        Ok(Some(record))
    }

    fn finish(
        &mut self,
        stage: &str,
        key: String,
        outputs: &[String],
        world_fingerprint: Option<String>,
        model_hash: Option<String>,
        started: Instant,
    ) -> Result<StageRecord, CliError> {
        let mut hashes = BTreeMap::new();
        for rel in outputs {
            hashes.insert(rel.clone(), crate::manifest::sha256_file(&self.root.join(rel))?);
        }
        let secs = started.elapsed().as_secs_f64();
        let record = StageRecord {
            key,
            wall_clock_secs: secs,
            world_fingerprint,
            model_hash,
            outputs: hashes,
        };
        self.manifest.stages.insert(stage.to_string(), record.clone());
        self.manifest.config = Some(self.config.clone());
        self.manifest.log(stage, "ran", secs);
        self.manifest.save(&self.root)?;
        info!("stage={stage} status=done secs={secs:.3}");
        Ok(record)
    }

    fn world_key(&self) -> String {
        digest_parts(&["world", &json(&self.config.world)])
    }

    fn world_fingerprint(&self) -> Result<String, CliError> {
        let record = self.require(WORLD_STAGE, &self.world_key(), "world")?;
        record
            .world_fingerprint
            .clone()
            .ok_or_else(|| CliError::artifact("manifest.json", "world stage without fingerprint"))
    }

    fn train_key(&self, world_fingerprint: &str) -> String {
        digest_parts(&["train", world_fingerprint, &json(&self.config.training)])
    }

    fn run_key(&self, inputs: &Inputs, lambda: f64, compensate: bool) -> String {
        let comp = if compensate {
            json(&self.config.compensation)
        } else {
            "none".to_string()
        };
        digest_parts(&[
            "run",
            &inputs.dataset.fingerprint,
            &inputs.model_hash,
            &json(&self.config.anon),
            &fmt_f64(lambda),
            &comp,
        ])
    }

    /// Loads the world and model bundle, verifying both against the manifest.
    fn inputs(&self) -> Result<Inputs, CliError> {
        let fingerprint = self.world_fingerprint()?;
        let train = self.require(TRAIN_STAGE, &self.train_key(&fingerprint), "train")?;
        let model_hash = train
            .model_hash
            .clone()
            .ok_or_else(|| CliError::artifact("manifest.json", "train stage without model hash"))?;
        let dataset = load_world(&self.root.join("world"))?;
        if dataset.fingerprint != fingerprint {
            return Err(CliError::Provenance(
                "world on disk differs from the recorded world; rerun `driftlab world`".into(),
            ));
        }
        let models = ModelBundle::load(&self.root.join("models/bundle.json"))?;
        models.check_world(&fingerprint)?;
        if models.param_hash() != model_hash {
            return Err(CliError::Provenance(
                "model parameters differ from the recorded bundle; rerun `driftlab train`".into(),
            ));
        }
        Ok(Inputs {
            dataset,
            models,
            model_hash,
        })
    }
}

struct Inputs {
    dataset: Dataset,
    models: ModelBundle,
    model_hash: String,
}

fn stale_error(stage: &str, staleness: Staleness, rerun: &str) -> CliError {
    match staleness {
        Staleness::Missing => CliError::StageOrder(format!(
            "stage `{stage}` has not completed; run `driftlab {rerun}` first"
        )),
        Staleness::DifferentInputs => CliError::Provenance(format!(
            "stage `{stage}` was produced from different inputs than the current configuration; \
             rerun `driftlab {rerun}`"
        )),
        Staleness::ChangedOutputs(file) => CliError::Provenance(format!(
            "{file} changed after stage `{stage}` wrote it; rerun `driftlab {rerun}`"
        )),
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("config types serialise")
}

fn run_stage_name(lambda: f64, compensate: bool) -> String {
    format!("run/{}", run_dir_name(lambda, compensate))
}

/// Generates the world, writes it under `world/` and records its fingerprint.
pub fn cmd_world(ctx: &mut Context) -> Result<Outcome, CliError> {
    let key = ctx.world_key();
    if ctx.reuse(WORLD_STAGE, &key)?.is_some() {
        return Ok(Outcome::Skipped);
    }
    let started = Instant::now();
    let dataset = generate_world(&ctx.config.world)?;
    let dir = ctx.root.join("world");
    save_world(&dataset, &dir)?;
    let pool = build_pool(&dataset)?;
    let mut w = csv::Writer::from_path(dir.join("pool.csv"))?;
    let mut header = vec!["pool_index".to_string()];
    header.extend((0..ctx.config.world.embed_dim).map(|i| format!("p_{i}")));
    w.write_record(&header)?;
    for (i, v) in pool.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(v.data().iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    info!(
        "stage=world speakers={} utterances={} pool={} fingerprint={}",
        dataset.speakers.len(),
        dataset.utterances.len(),
        pool.len(),
        dataset.fingerprint
    );
    let outputs: Vec<String> = WORLD_FILES
        .iter()
        .chain(&["pool.csv"])
        .map(|f| format!("world/{f}"))
        .collect();
    ctx.finish(WORLD_STAGE, key, &outputs, Some(dataset.fingerprint), None, started)?;
    Ok(Outcome::Ran)
}

/// Trains the vocoder and extractor on the train partition.
pub fn cmd_train(ctx: &mut Context) -> Result<Outcome, CliError> {
    let fingerprint = ctx.world_fingerprint()?;
    let key = ctx.train_key(&fingerprint);
    if ctx.reuse(TRAIN_STAGE, &key)?.is_some() {
        return Ok(Outcome::Skipped);
    }
    let started = Instant::now();
    let dataset = load_world(&ctx.root.join("world"))?;
    if dataset.fingerprint != fingerprint {
        return Err(CliError::Provenance(
            "world on disk differs from the recorded world; rerun `driftlab world`".into(),
        ));
    }
    let train: Vec<&Utterance> = dataset.partition(Partition::Train).collect();
    let cfg = &ctx.config.training;
    let (vocoder, vocoder_training) = train_vocoder(&dataset.config, &train, cfg)?;
    info!(
        "stage=train model=vocoder initial_loss={:.6e} final_loss={:.6e}",
        vocoder_training.initial_loss, vocoder_training.final_loss
    );
    let eval: Vec<&Utterance> = dataset.eval_utterances().collect();
    info!(
        "stage=train model=vocoder eval_mse={:.6e}",
        reconstruction_mse(&vocoder, &eval)?
    );
    let (extractor, extractor_training) = train_extractor(&dataset.config, &train, cfg)?;
    info!(
        "stage=train model=extractor initial_loss={:.6e} final_loss={:.6e}",
        extractor_training.initial_loss, extractor_training.final_loss
    );
    let bundle = ModelBundle {
        world_fingerprint: fingerprint.clone(),
        vocoder,
        extractor,
        vocoder_training,
        extractor_training,
    };
    let rel = "models/bundle.json".to_string();
    fs::create_dir_all(ctx.root.join("models"))?;
    bundle.save(&ctx.root.join(&rel))?;
    let hash = bundle.param_hash();
    ctx.finish(TRAIN_STAGE, key, &[rel], Some(fingerprint), Some(hash), started)?;
    Ok(Outcome::Ran)
}

struct UttOutcome {
    key: UttKey,
    sample: SampleRow,
    selected: Vec<usize>,
    x_p: Tensor,
    x_a: Tensor,
    compensated: Option<(Vec<f64>, Tensor)>,
}

/// Anonymises, interpolates and resynthesises every evaluation utterance at
/// `lambda`, optionally compensating the drift.
pub fn cmd_run(ctx: &mut Context, lambda: f64, compensate: bool) -> Result<Outcome, CliError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CliError::Config(format!("lambda {lambda} is outside [0, 1]")));
    }
    let inputs = ctx.inputs()?;
    let key = ctx.run_key(&inputs, lambda, compensate);
    let stage = run_stage_name(lambda, compensate);
    if ctx.reuse(&stage, &key)?.is_some() {
        return Ok(Outcome::Skipped);
    }
    let started = Instant::now();
    let dataset = &inputs.dataset;
    let pool = build_pool(dataset)?;
    let mut anon_cfg = ctx.config.anon.clone();
    anon_cfg.lambda = lambda;
    let comp_cfg = ctx.config.compensation.clone();
    let compensator = Compensator::new(&inputs.models, &dataset.fingerprint)?;
    let models = &inputs.models;

    let process = |u: &Utterance| -> Result<UttOutcome, CliError> {
        let pseudo = anonymise(&u.x_o, &pool, &anon_cfg)?;
        let x_i = interpolate(&u.x_o, &pseudo.x_p, lambda)?;
        let target = x_i.normalized().map_err(|_| {
            CliError::Numerical(format!("interpolated x-vector of {:?} is zero", u.key()))
        })?;
        let x = duplicate_frames(&x_i, u.frames())?;
        let x_a = models.resynthesize(&u.f0, &u.features, &x)?;
        let drift = drift_of(&target, &x_a)?;
        let compensated = if compensate {
            let trace = compensator.compensate(&u.f0, &u.features, &x, &target, &comp_cfg)?;
            Some(trace)
        } else {
            None
        };
        let sample = SampleRow {
            speaker_id: u.speaker_id,
            utterance_id: u.utterance_id,
            partition: u.partition,
            lambda,
            target_distance: driftlab::eval::target_distance(&u.x_o, &x_i)?,
            input_norm: x_i.norm(),
            drift,
            compensated_drift: compensated.as_ref().map(|t| t.final_drift()),
            steps_taken: compensated.as_ref().map(|t| t.steps_taken),
            converged: compensated.as_ref().map(|t| t.converged),
        };
        Ok(UttOutcome {
            key: u.key(),
            sample,
            selected: pseudo.selected,
            x_p: pseudo.x_p,
            x_a,
            compensated: compensated.map(|t| (t.drifts, t.x_a_star)),
        })
    };

    let evals: Vec<&Utterance> = dataset.eval_utterances().collect();
    let batches = evals.len().div_ceil(LOG_BATCH);
    let mut outcomes = Vec::with_capacity(evals.len());
    for (b, chunk) in evals.chunks(LOG_BATCH).enumerate() {
        let done: Vec<UttOutcome> = ctx
            .pool
            .install(|| chunk.par_iter().map(|u| process(u)).collect::<Result<_, _>>())?;
        let drifts: Vec<f64> = done.iter().map(|o| o.sample.drift).collect();
        let mut line = format!(
            "stage={stage} batch={}/{batches} utterances={} mean_target={:.6} mean_drift={:.6}",
            b + 1,
            done.len(),
            mean(&done.iter().map(|o| o.sample.target_distance).collect::<Vec<_>>())?,
            mean(&drifts)?,
        );
        if compensate {
            let comp: Vec<f64> = done.iter().filter_map(|o| o.sample.compensated_drift).collect();
            let converged = done.iter().filter(|o| o.sample.converged == Some(true)).count();
            line += &format!(
                " mean_compensated_drift={:.6} converged={converged}",
                mean(&comp)?
            );
        }
        info!("{line}");
        outcomes.extend(done);
    }

    let partitions: BTreeMap<UttKey, Partition> =
        evals.iter().map(|u| (u.key(), u.partition)).collect();
    let name = run_dir_name(lambda, compensate);
    let dir = ctx.root.join("runs").join(&name);
    fs::create_dir_all(&dir)?;
    let mut outputs = Vec::new();
    let mut out = |file: &str| {
        outputs.push(format!("runs/{name}/{file}"));
        dir.join(file)
    };

    let samples: Vec<SampleRow> = outcomes.iter().map(|o| o.sample.clone()).collect();
    write_samples(&out("samples.csv"), &samples)?;
    let mut w = csv::Writer::from_path(out("pseudo.csv"))?;
    let mut header: Vec<String> = ["speaker_id", "utterance_id", "lambda", "selected"]
        .map(String::from)
        .to_vec();
    header.extend((0..ctx.config.world.embed_dim).map(|i| format!("x_p_{i}")));
    w.write_record(&header)?;
    for o in &outcomes {
        let selected: Vec<String> = o.selected.iter().map(usize::to_string).collect();
        let mut rec = vec![
            o.key.0.to_string(),
            o.key.1.to_string(),
            fmt_f64(lambda),
            selected.join(";"),
        ];
        rec.extend(o.x_p.data().iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut pseudo = EmbeddingSet::new(Condition::Pseudo);
    let mut anonymised = EmbeddingSet::new(Condition::Anonymised);
    for o in &outcomes {
        pseudo.vectors.insert(o.key, o.x_p.clone());
        anonymised.vectors.insert(o.key, o.x_a.clone());
    }
    write_embeddings(&out("embeddings_pseudo.csv"), &pseudo, &partitions)?;
    write_embeddings(&out("embeddings_anonymised.csv"), &anonymised, &partitions)?;
    if compensate {
        let mut comp = EmbeddingSet::new(Condition::Compensated);
        let mut w = csv::Writer::from_path(out("compensation_trace.csv"))?;
        w.write_record(["speaker_id", "utterance_id", "step", "drift"])?;
        for o in &outcomes {
            let (drifts, x_star) = o.compensated.as_ref().expect("compensated run");
            comp.vectors.insert(o.key, x_star.clone());
            for (step, d) in drifts.iter().enumerate() {
                w.write_record([
                    o.key.0.to_string(),
                    o.key.1.to_string(),
                    step.to_string(),
                    fmt_f64(*d),
                ])?;
            }
        }
        w.flush()?;
        write_embeddings(&out("embeddings_compensated.csv"), &comp, &partitions)?;
    }

    let fingerprint = dataset.fingerprint.clone();
    let model_hash = inputs.model_hash.clone();
    ctx.finish(&stage, key, &outputs, Some(fingerprint), Some(model_hash), started)?;
    Ok(Outcome::Ran)
}

/// Aggregates all runs of the sweep into the report files under `reports/`.
pub fn cmd_evaluate(ctx: &mut Context) -> Result<Outcome, CliError> {
    let inputs = ctx.inputs()?;
    let sweep = ctx.config.lambda_sweep.clone();
    let mut run_keys = Vec::new();
    let mut compensated = BTreeSet::new();
    for &lambda in &sweep {
        let stage = run_stage_name(lambda, false);
        let key = ctx.run_key(&inputs, lambda, false);
        ctx.require(&stage, &key, &format!("run --lambda {lambda}"))?;
        run_keys.push(key);

        let stage = run_stage_name(lambda, true);
        let key = ctx.run_key(&inputs, lambda, true);
        match ctx.manifest.check(&ctx.root, &stage, &key) {
            Ok(_) => {
                run_keys.push(key);
                compensated.insert(run_tag(lambda));
            }
            Err(Staleness::Missing) => run_keys.push(format!("{stage}:absent")),
            Err(s) => {
                return Err(stale_error(&stage, s, &format!("run --lambda {lambda} --compensate")))
            }
        }
    }
    let key = {
        let mut parts = vec!["evaluate".to_string(), json(&ctx.config.evaluation), json(&sweep)];
        parts.extend(run_keys);
        let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
        digest_parts(&refs)
    };
    if ctx.reuse(EVALUATE_STAGE, &key)?.is_some() {
        return Ok(Outcome::Skipped);
    }
    let started = Instant::now();
    let dataset = &inputs.dataset;
    let reports = ctx.root.join("reports");
    fs::create_dir_all(&reports)?;
    let mut outputs: Vec<String> = Vec::new();
    let mut out = |file: &str| {
        outputs.push(format!("reports/{file}"));
        reports.join(file)
    };
    let run_path = |lambda: f64, compensate: bool, file: &str| {
        ctx.root
            .join("runs")
            .join(run_dir_name(lambda, compensate))
            .join(file)
    };

    // Per-utterance drift samples, compensated values merged in.
    let mut all_samples: Vec<SampleRow> = Vec::new();
    let mut per_lambda: Vec<(f64, Vec<SampleRow>)> = Vec::new();
    for &lambda in &sweep {
        let mut rows = read_samples(&run_path(lambda, false, "samples.csv"))?;
        if compensated.contains(&run_tag(lambda)) {
            let comp: BTreeMap<UttKey, SampleRow> = read_samples(&run_path(lambda, true, "samples.csv"))?
                .into_iter()
                .map(|r| ((r.speaker_id, r.utterance_id), r))
                .collect();
            for row in &mut rows {
                let c = comp.get(&(row.speaker_id, row.utterance_id)).ok_or_else(|| {
                    CliError::artifact(
                        "samples.csv",
                        format!("compensated run lacks {:?}", (row.speaker_id, row.utterance_id)),
                    )
                })?;
                row.compensated_drift = c.compensated_drift;
                row.steps_taken = c.steps_taken;
                row.converged = c.converged;
            }
        }
        all_samples.extend(rows.iter().cloned());
        per_lambda.push((lambda, rows));
    }
    write_samples(&out("drift_samples.csv"), &all_samples)?;

    let mut w = csv::Writer::from_path(out("drift_report.csv"))?;
    w.write_record([
        "partition",
        "lambda",
        "utterances",
        "mean_target",
        "mean_drift",
        "mean_compensated_drift",
        "converged_fraction",
    ])?;
    for (lambda, rows) in &per_lambda {
        for (label, filter) in [
            ("eval", None),
            ("enroll", Some(Partition::Enroll)),
            ("trial", Some(Partition::Trial)),
        ] {
            let sel: Vec<&SampleRow> = rows
                .iter()
                .filter(|r| filter.is_none_or(|p| r.partition == p))
                .collect();
            if sel.is_empty() {
                continue;
            }
            let targets: Vec<f64> = sel.iter().map(|r| r.target_distance).collect();
            let drifts: Vec<f64> = sel.iter().map(|r| r.drift).collect();
            let comp: Vec<f64> = sel.iter().filter_map(|r| r.compensated_drift).collect();
            let (comp_mean, converged) = if comp.len() == sel.len() {
                let n = sel.iter().filter(|r| r.converged == Some(true)).count();
                (fmt_f64(mean(&comp)?), fmt_f64(n as f64 / sel.len() as f64))
            } else {
                (String::new(), String::new())
            };
            w.write_record([
                label.to_string(),
                fmt_f64(*lambda),
                sel.len().to_string(),
                fmt_f64(mean(&targets)?),
                fmt_f64(mean(&drifts)?),
                comp_mean,
                converged,
            ])?;
        }
    }
    w.flush()?;

    // Embedding sets of the four conditions.
    let evals: Vec<&Utterance> = dataset.eval_utterances().collect();
    let partitions: BTreeMap<UttKey, Partition> =
        evals.iter().map(|u| (u.key(), u.partition)).collect();
    let models = &inputs.models;
    let extracted: Vec<Tensor> = ctx.pool.install(|| {
        evals
            .par_iter()
            .map(|u| models.extractor.extract(&u.signal))
            .collect::<Result<_, _>>()
    })?;
    let mut sets = vec![EmbeddingSet::new(Condition::Original)];
    for (u, v) in evals.iter().zip(extracted) {
        sets[0].vectors.insert(u.key(), v);
    }
    let eer_lambda = ctx.config.evaluation.eer_lambda;
    sets.push(read_embeddings(
        &run_path(eer_lambda, false, "embeddings_pseudo.csv"),
        Condition::Pseudo,
    )?);
    sets.push(read_embeddings(
        &run_path(eer_lambda, false, "embeddings_anonymised.csv"),
        Condition::Anonymised,
    )?);
    if compensated.contains(&run_tag(eer_lambda)) {
        sets.push(read_embeddings(
            &run_path(eer_lambda, true, "embeddings_compensated.csv"),
            Condition::Compensated,
        )?);
    }
    for set in &sets {
        let file = format!("embeddings_{}.csv", set.condition.as_str());
        write_embeddings(&out(&file), set, &partitions)?;
    }

    // Verification.
    let trials = TrialList::build(
        dataset,
        ctx.config.evaluation.max_trials,
        ctx.config.evaluation.trial_seed,
    )?;
    let enroll: Vec<UttKey> = dataset.partition(Partition::Enroll).map(|u| u.key()).collect();
    let mut w = csv::Writer::from_path(out("eer_report.csv"))?;
    w.write_record(["partition", "condition", "enrollment", "genuine_trials", "impostor_trials", "eer"])?;
    for &mode in &ctx.config.evaluation.enrollment {
        for set in &sets {
            let enroll_set = match mode {
                EnrollmentMode::Matched => set,
                EnrollmentMode::Original => &sets[0],
            };
            let enrolled = enrollment_models(enroll_set, &enroll)?;
            let scored = score_trials(&trials, &enrolled, set)?;
            info!(
                "stage=evaluate condition={} enrollment={} eer={:.6}",
                set.condition.as_str(),
                mode.as_str(),
                scored.eer
            );
            w.write_record([
                "eval".to_string(),
                set.condition.as_str().to_string(),
                mode.as_str().to_string(),
                trials.count(Label::Genuine).to_string(),
                trials.count(Label::Impostor).to_string(),
                fmt_f64(scored.eer),
            ])?;
        }
    }
    w.flush()?;

    // Pooled 2-D projection and dispersion.
    let mut labels: Vec<(Condition, UttKey)> = Vec::new();
    let mut points: Vec<&Tensor> = Vec::new();
    for set in &sets {
        for (&k, v) in &set.vectors {
            labels.push((set.condition, k));
            points.push(v);
        }
    }
    let projection = project_pca(&points)?;
    let mut w = csv::Writer::from_path(out("projection.csv"))?;
    w.write_record(["condition", "speaker_id", "utterance_id", "partition", "pc1", "pc2"])?;
    for ((condition, key), c) in labels.iter().zip(&projection.coords) {
        w.write_record([
            condition.as_str().to_string(),
            key.0.to_string(),
            key.1.to_string(),
            partitions.get(key).map_or("unknown", |p| p.as_str()).to_string(),
            fmt_f64(c[0]),
            fmt_f64(c[1]),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out("dispersion_report.csv"))?;
    w.write_record(["condition", "within_speaker_distance", "within_speaker_coordinate_variance"])?;
    for set in &sets {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].0 == set.condition).collect();
        let speakers: Vec<usize> = idx.iter().map(|&i| labels[i].1 .0).collect();
        let coords: Vec<[f64; 2]> = idx.iter().map(|&i| projection.coords[i]).collect();
        w.write_record([
            set.condition.as_str().to_string(),
            fmt_f64(within_speaker_dispersion(set)?),
            fmt_f64(within_speaker_coordinate_variance(&speakers, &coords)?),
        ])?;
    }
    w.flush()?;

    // Trend statistics over the sweep.
    let mut w = csv::Writer::from_path(out("trend_report.csv"))?;
    w.write_record(["metric", "value"])?;
    w.write_record(["leakage".to_string(), fmt_f64(dataset.config.leakage)])?;
    let lambdas: Vec<f64> = per_lambda.iter().map(|(l, _)| *l).collect();
    let means = per_lambda
        .iter()
        .map(|(_, rows)| mean(&rows.iter().map(|r| r.drift).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    if lambdas.len() >= 2 {
        w.write_record(["drift_lambda_slope".to_string(), fmt_f64(fitted_slope(&lambdas, &means)?)])?;
    }
    let positive: Vec<&SampleRow> = all_samples.iter().filter(|r| r.lambda > 0.0).collect();
    if positive.len() >= 2 {
        let t: Vec<f64> = positive.iter().map(|r| r.target_distance).collect();
        let d: Vec<f64> = positive.iter().map(|r| r.drift).collect();
        if let Ok(r) = pearson(&t, &d) {
            w.write_record(["target_drift_pearson".to_string(), fmt_f64(r)])?;
        }
    }
    w.flush()?;

    ctx.finish(
        EVALUATE_STAGE,
        key,
        &outputs,
        Some(dataset.fingerprint.clone()),
        Some(inputs.model_hash.clone()),
        started,
    )?;
    Ok(Outcome::Ran)
}

/// World, training, every λ with and without compensation, then evaluation.
pub fn cmd_reproduce(ctx: &mut Context) -> Result<(), CliError> {
    cmd_world(ctx)?;
    cmd_train(ctx)?;
    for lambda in ctx.config.lambda_sweep.clone() {
        cmd_run(ctx, lambda, false)?;
        cmd_run(ctx, lambda, true)?;
    }
    cmd_evaluate(ctx)?;
    Ok(())
}
