//! Exhaustive EER reference: every candidate threshold is scored by direct
//! counting, with no sorting or binary search.

pub fn brute_force_eer(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = Vec::new();
    for &s in genuine.iter().chain(impostor) {
        if !thresholds.contains(&s) {
            thresholds.push(s);
        }
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.push(f64::INFINITY);

    let rates = |t: f64| {
        let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
        let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
        (far, frr)
    };
    let points: Vec<(f64, f64)> = thresholds.iter().map(|&t| rates(t)).collect();
    let k = points
        .iter()
        .position(|(far, frr)| far <= frr)
        .expect("FAR is 0 at +inf");
    let (far1, frr1) = points[k];
    if far1 == frr1 {
        return 0.5 * (far1 + frr1);
    }
    let (far0, frr0) = points[k - 1];
    let (d0, d1) = (far0 - frr0, far1 - frr1);
    let alpha = d0 / (d0 - d1);
    0.5 * ((far0 + alpha * (far1 - far0)) + (frr0 + alpha * (frr1 - frr0)))
}

/// Small score lists on a coarse grid so that ties are common.
pub fn random_scores(rng: &mut impl rand::Rng) -> (Vec<f64>, Vec<f64>) {
    let mut draw = || -> Vec<f64> {
        let n = rng.random_range(1..=12);
        (0..n).map(|_| rng.random_range(-8i32..=8) as f64 / 8.0).collect()
    };
    let genuine = draw();
    (genuine, draw())
}
