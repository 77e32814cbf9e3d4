//! A differentiable toy speech pipeline for studying vocoder drift in
//! x-vector speaker anonymisation.
//!
//! * [`ndmath`]: tensors, reverse-mode autodiff and Adam
//! * [`world`]: seeded synthetic speakers, utterances and x-vector pool
//! * [`models`]: framewise vocoder and x-vector extractor
//! * [`anon`]: pool-based anonymisation and interpolation
//! * [`compensate`]: inference-time drift compensation
//! * [`eval`]: target distance, drift, EER and PCA projections

pub mod anon;
pub mod compensate;
pub mod eval;
pub mod format;
pub mod models;
pub mod ndmath;
pub mod nn;
pub mod rng;
pub mod world;
