//! Randomised finite-difference cases for every taped primitive and for the
//! composed synthesise, extract and cosine-distance graph.

use driftlab::models::{Extractor, Vocoder};
use driftlab::ndmath::{max_relative_error, MathError, Tape, Tensor, Var};
use driftlab::world::WorldConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-8;

pub type Case = fn(&mut ChaCha8Rng) -> f64;

pub fn gaussian(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=4)
}

/// Reduces a non-scalar node to a scalar through a fixed random projection.
fn project(tape: &mut Tape, y: Var, weights: &Tensor) -> Result<Var, MathError> {
    let w = tape.constant(weights.clone());
    tape.dot(y, w)
}

fn check<F>(inputs: &[Tensor], graph: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, MathError>,
{
    max_relative_error(inputs, STEP, FLOOR, graph).unwrap()
}

fn unary<F>(rng: &mut ChaCha8Rng, shape: &[usize], out_shape: &[usize], op: F) -> f64
where
    F: Fn(&mut Tape, Var) -> Result<Var, MathError>,
{
    let x = gaussian(rng, shape);
    let w = gaussian(rng, out_shape);
    check(&[x], |t, v| {
        let y = op(t, v[0])?;
        project(t, y, &w)
    })
}

fn binary<F>(rng: &mut ChaCha8Rng, a: &[usize], b: &[usize], out: &[usize], op: F) -> f64
where
    F: Fn(&mut Tape, Var, Var) -> Result<Var, MathError>,
{
    let x = gaussian(rng, a);
    let y = gaussian(rng, b);
    let w = gaussian(rng, out);
    check(&[x, y], |t, v| {
        let z = op(t, v[0], v[1])?;
        project(t, z, &w)
    })
}

fn matmul(rng: &mut ChaCha8Rng) -> f64 {
    let (r, k, c) = (dim(rng), dim(rng), dim(rng));
    binary(rng, &[r, k], &[k, c], &[r, c], |t, a, b| t.matmul(a, b))
}

fn add(rng: &mut ChaCha8Rng) -> f64 {
    let s = [dim(rng), dim(rng)];
    binary(rng, &s, &s, &s, |t, a, b| t.add(a, b))
}

fn sub(rng: &mut ChaCha8Rng) -> f64 {
    let s = [dim(rng), dim(rng)];
    binary(rng, &s, &s, &s, |t, a, b| t.sub(a, b))
}

fn scale(rng: &mut ChaCha8Rng) -> f64 {
    let s = [dim(rng), dim(rng)];
    let k: f64 = rng.random_range(-3.0..3.0);
    unary(rng, &s, &s, |t, a| Ok(t.scale(a, k)))
}

fn scalar_mul(rng: &mut ChaCha8Rng) -> f64 {
    let s = [dim(rng), dim(rng)];
    binary(rng, &s, &[], &s, |t, a, k| t.scalar_mul(a, k))
}

fn tanh(rng: &mut ChaCha8Rng) -> f64 {
    let s = [dim(rng), dim(rng)];
    unary(rng, &s, &s, |t, a| Ok(t.tanh(a)))
}

fn recip(rng: &mut ChaCha8Rng) -> f64 {
    let magnitude: f64 = rng.random_range(0.5..2.0);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    check(&[Tensor::scalar(sign * magnitude)], |t, v| t.recip(v[0]))
}

fn norm(rng: &mut ChaCha8Rng) -> f64 {
    let s = [dim(rng), dim(rng)];
    let x = gaussian(rng, &s);
    check(&[x], |t, v| Ok(t.norm(v[0])))
}

fn dot(rng: &mut ChaCha8Rng) -> f64 {
    let s = [dim(rng), dim(rng)];
    let (a, b) = (gaussian(rng, &s), gaussian(rng, &s));
    check(&[a, b], |t, v| t.dot(v[0], v[1]))
}

fn mean_over_frames(rng: &mut ChaCha8Rng) -> f64 {
    let (r, n) = (dim(rng), dim(rng));
    unary(rng, &[r, n], &[r], |t, a| t.mean_over_frames(a))
}

fn concat_rows(rng: &mut ChaCha8Rng) -> f64 {
    let (r1, r2, r3, n) = (dim(rng), dim(rng), dim(rng), dim(rng));
    let blocks = [
        gaussian(rng, &[r1, n]),
        gaussian(rng, &[r2, n]),
        gaussian(rng, &[r3, n]),
    ];
    let w = gaussian(rng, &[r1 + r2 + r3, n]);
    check(&blocks, |t, v| {
        let y = t.concat_rows(v)?;
        project(t, y, &w)
    })
}

fn reshape(rng: &mut ChaCha8Rng) -> f64 {
    let (r, c) = (dim(rng), dim(rng));
    unary(rng, &[r, c], &[c, r], move |t, a| t.reshape(a, &[c, r]))
}

fn broadcast_cols(rng: &mut ChaCha8Rng) -> f64 {
    let (m, n) = (dim(rng), dim(rng));
    unary(rng, &[m], &[m, n], move |t, a| t.broadcast_cols(a, n))
}

fn normalize(rng: &mut ChaCha8Rng) -> f64 {
    let m = dim(rng) + 1;
    unary(rng, &[m], &[m], |t, a| t.normalize(a))
}

fn cosine_distance(rng: &mut ChaCha8Rng) -> f64 {
    let m = dim(rng) + 1;
    let (a, b) = (gaussian(rng, &[m]), gaussian(rng, &[m]));
    check(&[a, b], |t, v| t.cosine_distance(v[0], v[1]))
}

fn mean_squared_error(rng: &mut ChaCha8Rng) -> f64 {
    let s = [dim(rng), dim(rng)];
    let (a, b) = (gaussian(rng, &s), gaussian(rng, &s));
    check(&[a, b], |t, v| t.mean_squared_error(v[0], v[1]))
}

pub const PRIMITIVES: [(&str, Case); 16] = [
    ("matmul", matmul),
    ("add", add),
    ("sub", sub),
    ("scale", scale),
    ("scalar_mul", scalar_mul),
    ("tanh", tanh),
    ("recip", recip),
    ("norm", norm),
    ("dot", dot),
    ("mean_over_frames", mean_over_frames),
    ("concat_rows", concat_rows),
    ("reshape", reshape),
    ("broadcast_cols", broadcast_cols),
    ("normalize", normalize),
    ("cosine_distance", cosine_distance),
    ("mean_squared_error", mean_squared_error),
];

/// `d(extract(synthesize(f, G, X)), x_p)` differentiated with respect to `X`
/// through freshly initialised networks.
pub fn composed(rng: &mut ChaCha8Rng) -> f64 {
    let world = WorldConfig {
        frames: rng.random_range(2..=5),
        content_dim: rng.random_range(1..=4),
        embed_dim: rng.random_range(2..=5),
        signal_dim: rng.random_range(2..=5),
        ..WorldConfig::default()
    };
    let n = world.frames;
    let vocoder = Vocoder::new(&world, rng.random_range(2..=8), rng.random());
    let extractor = Extractor::new(&world, rng.random_range(2..=8), rng.random());
    let f0 = gaussian(rng, &[n]).map(f64::exp);
    let g = gaussian(rng, &[world.content_dim, n]);
    let target = gaussian(rng, &[world.embed_dim]).normalized().unwrap();
    let x = gaussian(rng, &[world.embed_dim, n]);
    max_relative_error::<driftlab::models::ModelError, _>(&[x], STEP, FLOOR, |t, v| {
        let voc = vocoder.net.bind(t, false);
        let ext = extractor.net.bind(t, false);
        let f = t.constant(f0.clone());
        let g = t.constant(g.clone());
        let p = t.constant(target.clone());
        let s = Vocoder::synthesize_on(t, &voc, f, g, v[0])?;
        let a = Extractor::extract_on(t, &ext, s)?;
        Ok(t.cosine_distance(a, p)?)
    })
    .unwrap()
}
