use super::EvalError;

/// Equal error rate of a verifier from its genuine and impostor scores.
///
/// Scores are similarities (higher means "same speaker"). At a threshold
/// `t`, `FRR(t)` is the fraction of genuine scores below `t` and `FAR(t)`
/// the fraction of impostor scores at or above `t`. Both curves are
/// evaluated at every distinct score and at `+∞`. If they meet exactly at
/// one of those thresholds the EER is their common value; otherwise the two
/// operating points bracketing the crossing are joined linearly and the EER
/// is `(FAR + FRR) / 2` at the intersection.
pub fn compute_eer(genuine: &[f64], impostor: &[f64]) -> Result<f64, EvalError> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    if genuine.iter().chain(impostor).any(|s| s.is_nan()) {
        return Err(EvalError::NanScore);
    }
    let mut g = genuine.to_vec();
    let mut i = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    i.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let point = |t: f64| {
        let frr = g.partition_point(|&s| s < t) as f64 / ng;
        let far = (i.len() - i.partition_point(|&s| s < t)) as f64 / ni;
        (far, frr)
    };

    let (mut far0, mut frr0) = point(thresholds[0]);
    for &t in &thresholds {
        let (far1, frr1) = point(t);
        let d1 = far1 - frr1;
        if d1 == 0.0 {
            return Ok(0.5 * (far1 + frr1));
        }
        if d1 < 0.0 {
            let d0 = far0 - frr0;
            let alpha = d0 / (d0 - d1);
            let far = far0 + alpha * (far1 - far0);
            let frr = frr0 + alpha * (frr1 - frr0);
            return Ok(0.5 * (far + frr));
        }
        far0 = far1;
        frr0 = frr1;
    }
    unreachable!("FRR reaches 1 and FAR reaches 0 at +inf")
}
