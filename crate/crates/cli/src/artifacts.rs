//! CSV artifacts shared between stages.

use std::collections::BTreeMap;
use std::path::Path;

use driftlab::eval::{Condition, EmbeddingSet, UttKey};
use driftlab::format::fmt_f64;
use driftlab::ndmath::Tensor;
use driftlab::world::Partition;

use crate::error::CliError;

/// Writes `speaker_id,utterance_id,partition,e_0..e_{m-1}`, one row per vector.
pub fn write_embeddings(
    path: &Path,
    set: &EmbeddingSet,
    partitions: &BTreeMap<UttKey, Partition>,
) -> Result<(), CliError> {
    let dim = set.vectors.values().next().map_or(0, Tensor::len);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["speaker_id".to_string(), "utterance_id".into(), "partition".into()];
    header.extend((0..dim).map(|i| format!("e_{i}")));
    w.write_record(&header)?;
    for (&(s, u), v) in &set.vectors {
        let partition = partitions
            .get(&(s, u))
            .map_or("unknown", |p| p.as_str());
        let mut rec = vec![s.to_string(), u.to_string(), partition.to_string()];
        rec.extend(v.data().iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path, condition: Condition) -> Result<EmbeddingSet, CliError> {
    let name = path.display().to_string();
    let mut set = EmbeddingSet::new(condition);
    let mut r = csv::Reader::from_path(path)?;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() < 4 {
            return Err(CliError::artifact(&name, "short record"));
        }
        let key = (parse(&rec[0], &name)?, parse(&rec[1], &name)?);
        let values = rec
            .iter()
            .skip(3)
            .map(|v| parse::<f64>(v, &name))
            .collect::<Result<Vec<_>, _>>()?;
        set.vectors.insert(key, Tensor::vector(values));
    }
    Ok(set)
}

/// One per-utterance row of a run's `samples.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub speaker_id: usize,
    pub utterance_id: usize,
    pub partition: Partition,
    pub lambda: f64,
    pub target_distance: f64,
    pub input_norm: f64,
    pub drift: f64,
    pub compensated_drift: Option<f64>,
    pub steps_taken: Option<usize>,
    pub converged: Option<bool>,
}

pub const SAMPLE_HEADER: [&str; 10] = [
    "speaker_id",
    "utterance_id",
    "partition",
    "lambda",
    "target_distance",
    "input_norm",
    "drift",
    "compensated_drift",
    "steps_taken",
    "converged",
];

pub fn write_samples(path: &Path, rows: &[SampleRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SAMPLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.speaker_id.to_string(),
            r.utterance_id.to_string(),
            r.partition.as_str().to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.target_distance),
            fmt_f64(r.input_norm),
            fmt_f64(r.drift),
            r.compensated_drift.map(fmt_f64).unwrap_or_default(),
            r.steps_taken.map(|s| s.to_string()).unwrap_or_default(),
            r.converged.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRow>, CliError> {
    let name = path.display().to_string();
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != SAMPLE_HEADER.len() {
            return Err(CliError::artifact(&name, "wrong number of columns"));
        }
        let optional = |i: usize| -> Option<&str> { Some(&rec[i]).filter(|s| !s.is_empty()) };
        rows.push(SampleRow {
            speaker_id: parse(&rec[0], &name)?,
            utterance_id: parse(&rec[1], &name)?,
            partition: Partition::parse(&rec[2])
                .ok_or_else(|| CliError::artifact(&name, format!("unknown partition {}", &rec[2])))?,
            lambda: parse(&rec[3], &name)?,
            target_distance: parse(&rec[4], &name)?,
            input_norm: parse(&rec[5], &name)?,
            drift: parse(&rec[6], &name)?,
            compensated_drift: optional(7).map(|s| parse(s, &name)).transpose()?,
            steps_taken: optional(8).map(|s| parse(s, &name)).transpose()?,
            converged: optional(9).map(|s| parse(s, &name)).transpose()?,
        });
    }
    Ok(rows)
}

fn parse<T: std::str::FromStr>(s: &str, file: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| CliError::artifact(file, format!("{s:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let mut set = EmbeddingSet::new(Condition::Pseudo);
        set.vectors.insert((3, 1), Tensor::vector(vec![0.1, -1.0 / 3.0, 2e-17]));
        set.vectors.insert((2, 0), Tensor::vector(vec![0.6, 0.8, 0.0]));
        let mut parts = BTreeMap::new();
        parts.insert((3, 1), Partition::Trial);
        parts.insert((2, 0), Partition::Enroll);
        write_embeddings(&path, &set, &parts).unwrap();
        assert_eq!(read_embeddings(&path, Condition::Pseudo).unwrap(), set);
    }

    #[test]
    fn samples_round_trip_with_empty_optionals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![
            SampleRow {
                speaker_id: 1,
                utterance_id: 2,
                partition: Partition::Trial,
                lambda: 1.0 / 3.0,
                target_distance: 0.125,
                input_norm: 0.9,
                drift: 0.4,
                compensated_drift: None,
                steps_taken: None,
                converged: None,
            },
            SampleRow {
                compensated_drift: Some(0.049),
                steps_taken: Some(17),
                converged: Some(true),
                ..SampleRow {
                    speaker_id: 1,
                    utterance_id: 3,
                    partition: Partition::Enroll,
                    lambda: 1.0,
                    target_distance: 1.2,
                    input_norm: 1.0,
                    drift: 0.7,
                    compensated_drift: None,
                    steps_taken: None,
                    converged: None,
                }
            },
        ];
        write_samples(&path, &rows).unwrap();
        assert_eq!(read_samples(&path).unwrap(), rows);
    }
}
