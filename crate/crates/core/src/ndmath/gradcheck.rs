use super::{MathError, Tape, Tensor, Var};

/// Worst relative error between taped gradients and central differences.
///
/// `graph` builds a scalar output from one leaf per entry of `inputs`; it is
/// replayed on a fresh tape for every perturbed evaluation. The error of each
/// input is `‖g_tape − g_fd‖ / max(‖g_tape‖, ‖g_fd‖, floor)` and the largest
/// one is returned.
pub fn max_relative_error<E, F>(inputs: &[Tensor], step: f64, floor: f64, graph: F) -> Result<f64, E>
where
    E: From<MathError>,
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
{
    let evaluate = |values: &[Tensor]| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
        let out = graph(&mut tape, &vars)?;
        let value = tape.value(out);
        Ok(value.item().ok_or_else(|| MathError::NotScalar {
            op: "gradcheck",
            shape: value.shape().to_vec(),
        })?)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let out = graph(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst = 0.0_f64;
    let mut values = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let taped = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        let mut numeric = Vec::with_capacity(inputs[i].len());
        for j in 0..inputs[i].len() {
            let centre = inputs[i].data()[j];
            values[i].data_mut()[j] = centre + step;
            let up = evaluate(&values)?;
            values[i].data_mut()[j] = centre - step;
            let down = evaluate(&values)?;
            values[i].data_mut()[j] = centre;
            numeric.push((up - down) / (2.0 * step));
        }
        let numeric = Tensor::new(inputs[i].shape().to_vec(), numeric)?;
        let scale = taped.norm().max(numeric.norm()).max(floor);
        worst = worst.max(taped.sub(&numeric)?.norm() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches() {
        let x = Tensor::vector(vec![0.3, -1.2, 2.0]);
        let err = max_relative_error::<MathError, _>(&[x], 1e-5, 1e-8, |t, v| t.dot(v[0], v[0])).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // `scale` on a constant copy hides half the dependence from the tape.
        let x = Tensor::vector(vec![0.5, 1.5]);
        let err = max_relative_error::<MathError, _>(&[x], 1e-5, 1e-8, |t, v| {
            let frozen = t.constant(t.value(v[0]).clone());
            t.dot(v[0], frozen)
        })
        .unwrap();
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }
}
