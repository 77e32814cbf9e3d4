//! Pool-based anonymisation function and x-vector interpolation.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndmath::{cosine_distance, MathError, Tensor};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum AnonError {
    #[error("invalid anonymisation config: {0}")]
    Config(String),
    #[error("average of the selected pool vectors is the zero vector")]
    DegenerateAverage,
    #[error("lambda {0} is outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnonConfig {
    /// Number of furthest pool vectors kept as candidates.
    pub k: usize,
    /// Number of candidates averaged into the pseudo-speaker.
    pub k_star: usize,
    pub rng_seed: u64,
    pub lambda: f64,
}

impl Default for AnonConfig {
    fn default() -> Self {
        Self {
            k: 30,
            k_star: 15,
            rng_seed: 13,
            lambda: 1.0,
        }
    }
}

impl AnonConfig {
    pub fn validate(&self, pool_size: usize) -> Result<(), AnonError> {
        if self.k_star == 0 || self.k_star > self.k {
            return Err(AnonError::Config(format!(
                "need 1 <= k_star ({}) <= k ({})",
                self.k_star, self.k
            )));
        }
        if self.k > pool_size {
            return Err(AnonError::Config(format!(
                "k ({}) exceeds pool size ({pool_size})",
                self.k
            )));
        }
        check_lambda(self.lambda)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoSpeaker {
    /// Unit-norm pseudo-speaker x-vector.
    pub x_p: Tensor,
    /// Mean of the selected vectors before renormalisation.
    pub raw_mean: Tensor,
    /// Pool indices averaged into `x_p`, ascending.
    pub selected: Vec<usize>,
    pub source: Tensor,
}

/// Indices of the `k` pool vectors furthest from `x_o` in cosine distance,
/// ties broken by ascending pool index.
pub fn furthest(x_o: &Tensor, pool: &[Tensor], k: usize) -> Result<Vec<usize>, AnonError> {
    let mut scored = pool
        .iter()
        .enumerate()
        .map(|(i, v)| Ok((i, cosine_distance(x_o, v)?)))
        .collect::<Result<Vec<_>, MathError>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k).map(|(i, _)| i).collect())
}

/// `A(x_o)`: average `k_star` vectors drawn uniformly without replacement
/// from the `k` furthest pool entries, then renormalise.
pub fn anonymise(x_o: &Tensor, pool: &[Tensor], cfg: &AnonConfig) -> Result<PseudoSpeaker, AnonError> {
    cfg.validate(pool.len())?;
    // Positions are drawn over the candidates in pool-index order, so the draw
    // depends on the candidate set and not on its distance ranking.
    let mut candidates = furthest(x_o, pool, cfg.k)?;
    candidates.sort_unstable();
    let mut r = rng::stream(cfg.rng_seed, &[rng::tags::ANON]);
    let mut selected: Vec<usize> = index::sample(&mut r, candidates.len(), cfg.k_star)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    selected.sort_unstable();

    let mut sum = Tensor::zeros(x_o.shape());
    for &i in &selected {
        sum = sum.add(&pool[i])?;
    }
    let raw_mean = sum.scale(1.0 / cfg.k_star as f64);
    let x_p = raw_mean
        .normalized()
        .map_err(|_| AnonError::DegenerateAverage)?;
    Ok(PseudoSpeaker {
        x_p,
        raw_mean,
        selected,
        source: x_o.clone(),
    })
}

fn check_lambda(lambda: f64) -> Result<(), AnonError> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(AnonError::LambdaOutOfRange(lambda))
    }
}

/// `x_i = x_o + λ (x_p − x_o)`, left unnormalised.
///
/// Evaluated as `(1 − λ) x_o + λ x_p` so both endpoints are reproduced bit for bit.
pub fn interpolate(x_o: &Tensor, x_p: &Tensor, lambda: f64) -> Result<Tensor, AnonError> {
    check_lambda(lambda)?;
    x_o.check_same_shape("interpolate", x_p)?;
    Ok(x_o.zip_with(x_p, |o, p| (1.0 - lambda) * o + lambda * p))
}

/// `m × N` matrix with every column equal to `x`.
pub fn duplicate_frames(x: &Tensor, frames: usize) -> Result<Tensor, AnonError> {
    Ok(crate::world::duplicate(x, frames)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(a: f64, b: f64) -> Tensor {
        Tensor::vector(vec![a, b])
    }

    fn compass() -> Vec<Tensor> {
        vec![v(1.0, 0.0), v(0.0, 1.0), v(-1.0, 0.0), v(0.0, -1.0)]
    }

    #[test]
    fn furthest_breaks_ties_by_index() {
        assert_eq!(furthest(&v(1.0, 0.0), &compass(), 2).unwrap(), vec![2, 1]);
    }

    #[test]
    fn compass_pool_example() {
        let cfg = AnonConfig {
            k: 2,
            k_star: 2,
            ..AnonConfig::default()
        };
        let p = anonymise(&v(1.0, 0.0), &compass(), &cfg).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.x_p.data()[0] + h).abs() < 1e-15);
        assert!((p.x_p.data()[1] - h).abs() < 1e-15);
        assert_eq!(p.selected, vec![1, 2]);
        assert_eq!(p.raw_mean, v(-0.5, 0.5));
    }

    #[test]
    fn full_selection_is_seed_independent() {
        let pool = vec![v(1.0, 0.0), v(0.6, 0.8), v(0.0, 1.0)];
        let x_o = v(0.0, -1.0);
        let mut a = AnonConfig {
            k: 3,
            k_star: 3,
            rng_seed: 1,
            lambda: 1.0,
        };
        let pa = anonymise(&x_o, &pool, &a).unwrap();
        a.rng_seed = 99;
        let pb = anonymise(&x_o, &pool, &a).unwrap();
        assert_eq!(pa.x_p, pb.x_p);
        let mean = v(1.6 / 3.0, 1.8 / 3.0).normalized().unwrap();
        assert!(cosine_distance(&pa.x_p, &mean).unwrap() < 1e-15);
    }

    #[test]
    fn config_errors() {
        let pool = compass();
        let x = v(1.0, 0.0);
        let bad_k = AnonConfig {
            k: 5,
            k_star: 2,
            ..AnonConfig::default()
        };
        assert!(matches!(anonymise(&x, &pool, &bad_k), Err(AnonError::Config(_))));
        let bad_star = AnonConfig {
            k: 2,
            k_star: 3,
            ..AnonConfig::default()
        };
        assert!(matches!(anonymise(&x, &pool, &bad_star), Err(AnonError::Config(_))));
        let zero_star = AnonConfig {
            k: 2,
            k_star: 0,
            ..AnonConfig::default()
        };
        assert!(anonymise(&x, &pool, &zero_star).is_err());
    }

    #[test]
    fn degenerate_average_is_reported() {
        let pool = vec![v(0.0, 1.0), v(0.0, -1.0)];
        let cfg = AnonConfig {
            k: 2,
            k_star: 2,
            ..AnonConfig::default()
        };
        assert_eq!(
            anonymise(&v(1.0, 0.0), &pool, &cfg).unwrap_err(),
            AnonError::DegenerateAverage
        );
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let o = v(1.0, 0.0);
        let p = v(0.0, 1.0);
        assert_eq!(interpolate(&o, &p, 0.0).unwrap(), o);
        assert_eq!(interpolate(&o, &p, 1.0).unwrap(), p);
        assert_eq!(interpolate(&o, &p, 0.5).unwrap(), v(0.5, 0.5));
        assert_eq!(
            interpolate(&o, &p, 1.5).unwrap_err(),
            AnonError::LambdaOutOfRange(1.5)
        );
        assert!(interpolate(&o, &p, -0.01).is_err());
        assert!(interpolate(&o, &p, f64::NAN).is_err());
    }

    #[test]
    fn duplicate_frames_examples() {
        let x = duplicate_frames(&v(1.0, 2.0), 3).unwrap();
        assert_eq!(x, Tensor::from_rows(&[vec![1.0; 3], vec![2.0; 3]]).unwrap());
        let single = duplicate_frames(&v(1.0, 2.0), 1).unwrap();
        assert_eq!(single.shape(), &[2, 1]);
        assert!(duplicate_frames(&v(1.0, 2.0), 0).is_err());
    }
}
