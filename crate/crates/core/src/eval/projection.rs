use nalgebra::{DMatrix, SymmetricEigen};

use super::EvalError;
use crate::ndmath::Tensor;

/// Variances below this are treated as zero.
const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// Coordinates on the top two principal axes, one per input point.
    pub coords: Vec<[f64; 2]>,
    /// Variance along each of the two axes.
    pub variances: [f64; 2],
    /// True when the pooled covariance has fewer than two non-zero axes.
    pub degenerate: bool,
}

/// 2-D PCA of equally sized vectors.
///
/// Eigenvectors are oriented so their first non-zero component is positive,
/// which makes the output deterministic.
pub fn project_pca(points: &[&Tensor]) -> Result<Projection, EvalError> {
    if points.len() < 3 {
        return Err(EvalError::TooFewPoints(points.len()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(EvalError::DimensionMismatch);
    }
    let n = points.len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p.data()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, dim, |r, c| points[r].data()[c] - mean[c]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut axes = Vec::with_capacity(2);
    let mut variances = [0.0; 2];
    for slot in 0..2 {
        let Some(&k) = order.get(slot) else {
            axes.push(vec![0.0; dim]);
            continue;
        };
        let value = eig.eigenvalues[k].max(0.0);
        let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        if value <= DEGENERATE_VARIANCE {
            axis.iter_mut().for_each(|a| *a = 0.0);
        } else {
            variances[slot] = value;
            if let Some(first) = axis.iter().find(|a| a.abs() > 1e-12) {
                if *first < 0.0 {
                    axis.iter_mut().for_each(|a| *a = -*a);
                }
            }
        }
        axes.push(axis);
    }

    let coords = (0..n)
        .map(|r| {
            let row = centered.row(r);
            let proj = |axis: &[f64]| row.iter().zip(axis).map(|(x, a)| x * a).sum::<f64>();
            [proj(&axes[0]), proj(&axes[1])]
        })
        .collect();
    Ok(Projection {
        coords,
        variances,
        degenerate: variances[1] <= DEGENERATE_VARIANCE,
    })
}
