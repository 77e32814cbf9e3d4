use driftlab::models::{train_extractor, train_vocoder, ModelBundle, TrainingConfig};
use driftlab::world::{Dataset, Partition, Utterance, WorldConfig};

/// Desk-scale dimensions with a single training speaker.
pub fn one_train_speaker() -> WorldConfig {
    WorldConfig {
        n_speakers: 5,
        train_speakers: 1,
        pool_speakers: 2,
        utterances_per_speaker: 6,
        enroll_utterances: 2,
        ..WorldConfig::default()
    }
}

pub fn train_split(world: &Dataset) -> Vec<&Utterance> {
    world.partition(Partition::Train).collect()
}

/// Briefly trained models; enough to exercise the pipeline, not to be good.
pub fn small_bundle(world: &Dataset, steps: usize) -> ModelBundle {
    let train = train_split(world);
    let cfg = TrainingConfig {
        steps,
        ..TrainingConfig::default()
    };
    let (vocoder, vocoder_training) = train_vocoder(&world.config, &train, &cfg).unwrap();
    let (extractor, extractor_training) = train_extractor(&world.config, &train, &cfg).unwrap();
    ModelBundle {
        world_fingerprint: world.fingerprint.clone(),
        vocoder,
        extractor,
        vocoder_training,
        extractor_training,
    }
}
