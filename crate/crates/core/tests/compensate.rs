mod common;

use common::fixtures::{one_train_speaker, small_bundle};
use driftlab::anon::{anonymise, duplicate_frames, AnonConfig};
use driftlab::compensate::{drift_of, CompensationConfig, CompensationError, Compensator, OptimizeMode};
use driftlab::models::ModelError;
use driftlab::world::{build_pool, generate_world};

#[test]
fn traces_honour_the_stopping_contract_and_repeat_exactly() {
    let world = generate_world(&one_train_speaker()).unwrap();
    let bundle = small_bundle(&world, 200);
    let pool = build_pool(&world).unwrap();
    let comp = Compensator::new(&bundle, &world.fingerprint).unwrap();
    let anon = AnonConfig { k: 2, k_star: 1, ..AnonConfig::default() };
    for mode in [OptimizeMode::FullMatrix, OptimizeMode::SharedVector] {
        for threshold in [0.05, 0.3] {
            let cfg = CompensationConfig { max_steps: 30, stop_threshold: threshold, mode, ..CompensationConfig::default() };
            for u in world.eval_utterances().take(4) {
                let x_p = anonymise(&u.x_o, &pool, &anon).unwrap().x_p;
                let x = duplicate_frames(&x_p, u.frames()).unwrap();
                let trace = comp.compensate(&u.f0, &u.features, &x, &x_p, &cfg).unwrap();
                assert_eq!(trace.drifts.len(), trace.steps_taken + 1);
                assert_eq!(trace.converged, trace.final_drift() < threshold);
                if !trace.converged {
                    assert_eq!(trace.steps_taken, cfg.max_steps);
                }
                assert!((trace.x_a_star.norm() - 1.0).abs() < 1e-9);
                assert_eq!(trace.final_drift(), drift_of(&x_p, &trace.x_a_star).unwrap());
                let again = comp.compensate(&u.f0, &u.features, &x, &x_p, &cfg).unwrap();
                assert_eq!(trace, again);
            }
        }
    }
}

#[test]
fn models_from_another_world_are_refused() {
    let world = generate_world(&one_train_speaker()).unwrap();
    let bundle = small_bundle(&world, 1);
    let other = generate_world(&driftlab::world::WorldConfig { master_seed: 99, ..one_train_speaker() }).unwrap();
    assert!(matches!(
        Compensator::new(&bundle, &other.fingerprint),
        Err(CompensationError::Model(ModelError::Provenance { .. }))
    ));
}
