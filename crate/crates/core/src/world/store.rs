//! On-disk layout of a world directory.
//!
//! * `world.json`      config, fingerprint and counts
//! * `speakers.csv`    `speaker_id,group,z_0..z_{m-1}`
//! * `utterances.csv`  `speaker_id,utterance_id,partition`
//! * `tensors.csv`     `speaker_id,utterance_id,role,row,v_0..` with one line
//!   per tensor row; roles are `f0`, `features`, `signal` and `x_o`
//!
//! Floats are written with 17 significant digits, so loading reproduces the
//! generated bits and the fingerprint re-verifies.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fingerprint, Dataset, Partition, Speaker, SpeakerGroup, Utterance, WorldConfig, WorldError};
use crate::format::fmt_f64;
use crate::ndmath::Tensor;

pub const WORLD_FILES: [&str; 4] = ["world.json", "speakers.csv", "utterances.csv", "tensors.csv"];

#[derive(Serialize, Deserialize)]
struct WorldMeta {
    config: WorldConfig,
    fingerprint: String,
    speakers: usize,
    utterances: usize,
}

pub fn save_world(dataset: &Dataset, dir: &Path) -> Result<(), WorldError> {
    fs::create_dir_all(dir)?;
    let meta = WorldMeta {
        config: dataset.config.clone(),
        fingerprint: dataset.fingerprint.clone(),
        speakers: dataset.speakers.len(),
        utterances: dataset.utterances.len(),
    };
    fs::write(dir.join("world.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let m = dataset.config.embed_dim;
    let mut w = csv::Writer::from_path(dir.join("speakers.csv"))?;
    let mut header = vec!["speaker_id".to_string(), "group".to_string()];
    header.extend((0..m).map(|i| format!("z_{i}")));
    w.write_record(&header)?;
    for s in &dataset.speakers {
        let mut rec = vec![s.id.to_string(), s.group.as_str().to_string()];
        rec.extend(s.identity.data().iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("utterances.csv"))?;
    w.write_record(["speaker_id", "utterance_id", "partition"])?;
    for u in &dataset.utterances {
        w.write_record([
            u.speaker_id.to_string(),
            u.utterance_id.to_string(),
            u.partition.as_str().to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(dir.join("tensors.csv"))?;
    w.write_record(["speaker_id", "utterance_id", "role", "row", "values..."])?;
    for u in &dataset.utterances {
        let mut put = |role: &str, t: &Tensor| -> Result<(), WorldError> {
            for r in 0..t.rows() {
                let row = if t.shape().len() == 2 { t.row(r) } else { t.data() };
                let mut rec = vec![
                    u.speaker_id.to_string(),
                    u.utterance_id.to_string(),
                    role.to_string(),
                    r.to_string(),
                ];
                rec.extend(row.iter().map(|&v| fmt_f64(v)));
                w.write_record(&rec)?;
                if t.shape().len() != 2 {
                    break;
                }
            }
            Ok(())
        };
        put("f0", &u.f0)?;
        put("features", &u.features)?;
        put("signal", &u.signal)?;
        put("x_o", &u.x_o)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_world(dir: &Path) -> Result<Dataset, WorldError> {
    let meta: WorldMeta = serde_json::from_str(&fs::read_to_string(dir.join("world.json"))?)?;
    let config = meta.config;
    config.validate()?;
    let bad = |file: &str, reason: String| WorldError::Format {
        file: file.to_string(),
        reason,
    };

    let mut speakers = Vec::new();
    let mut r = csv::Reader::from_path(dir.join("speakers.csv"))?;
    for rec in r.records() {
        let rec = rec?;
        let id = parse_usize(&rec[0]).map_err(|e| bad("speakers.csv", e))?;
        let group = SpeakerGroup::parse(&rec[1])
            .ok_or_else(|| bad("speakers.csv", format!("unknown group {}", &rec[1])))?;
        let values = rec
            .iter()
            .skip(2)
            .map(parse_f64)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad("speakers.csv", e))?;
        speakers.push(Speaker {
            id,
            group,
            identity: Tensor::vector(values),
        });
    }

    let mut order = Vec::new();
    let mut r = csv::Reader::from_path(dir.join("utterances.csv"))?;
    for rec in r.records() {
        let rec = rec?;
        let key = (
            parse_usize(&rec[0]).map_err(|e| bad("utterances.csv", e))?,
            parse_usize(&rec[1]).map_err(|e| bad("utterances.csv", e))?,
        );
        let partition = Partition::parse(&rec[2])
            .ok_or_else(|| bad("utterances.csv", format!("unknown partition {}", &rec[2])))?;
        order.push((key, partition));
    }

    let mut rows: BTreeMap<((usize, usize), String), Vec<Vec<f64>>> = BTreeMap::new();
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(dir.join("tensors.csv"))?;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() < 4 {
            return Err(bad("tensors.csv", "short record".into()));
        }
        let key = (
            parse_usize(&rec[0]).map_err(|e| bad("tensors.csv", e))?,
            parse_usize(&rec[1]).map_err(|e| bad("tensors.csv", e))?,
        );
        let values = rec
            .iter()
            .skip(4)
            .map(parse_f64)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad("tensors.csv", e))?;
        rows.entry((key, rec[2].to_string())).or_default().push(values);
    }

    let mut take = |key: (usize, usize), role: &str| -> Result<Vec<Vec<f64>>, WorldError> {
        rows.remove(&(key, role.to_string()))
            .ok_or_else(|| bad("tensors.csv", format!("missing {role} for {key:?}")))
    };
    let mut utterances = Vec::with_capacity(order.len());
    for (key, partition) in order {
        let f0 = take(key, "f0")?.concat();
        let features = Tensor::from_rows(&take(key, "features")?)?;
        let signal = Tensor::from_rows(&take(key, "signal")?)?;
        let x_o = take(key, "x_o")?.concat();
        utterances.push(Utterance {
            speaker_id: key.0,
            utterance_id: key.1,
            partition,
            f0: Tensor::vector(f0),
            features,
            signal,
            x_o: Tensor::vector(x_o),
        });
    }

    let found = fingerprint(&config, &speakers, &utterances);
    if found != meta.fingerprint {
        return Err(WorldError::Fingerprint {
            expected: meta.fingerprint,
            found,
        });
    }
    Ok(Dataset {
        config,
        speakers,
        utterances,
        fingerprint: found,
    })
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.trim().parse().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|e| format!("{s:?}: {e}"))
}
