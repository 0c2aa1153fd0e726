use super::{LearnerError, TrainingConfig};
use crate::scalar::Scalar;

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(len: usize) -> Self {
        Self { first_moment: vec![T::zero(); len], second_moment: vec![T::zero(); len], step_count: 0 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grad: &[T],
    state: &mut OptimizerState<T>,
    cfg: &TrainingConfig,
) -> Result<(), LearnerError> {
    if grad.len() != params.len()
        || state.first_moment.len() != params.len()
        || state.second_moment.len() != params.len()
    {
        return Err(LearnerError::DimensionMismatch(format!(
            "adam: {} params, {} grads, {}/{} moments",
            params.len(),
            grad.len(),
            state.first_moment.len(),
            state.second_moment.len()
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (T::lit(cfg.adam_beta1), T::lit(cfg.adam_beta2));
    let (lr, eps) = (T::lit(cfg.learning_rate), T::lit(cfg.adam_eps));
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let moments = state.first_moment.iter_mut().zip(state.second_moment.iter_mut());
    for ((w, &g), (m, v)) in params.iter_mut().zip(grad).zip(moments) {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainingConfig::default();
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [0.3, -4.0, 1e-3];
        let mut s = OptimizerState::new(3);
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        // m̂ = g and v̂ = g², so the step is lr * g / (|g| + eps)
        for ((after, before), gi) in p.iter().zip([1.0, -2.0, 0.5]).zip(g) {
            let expected = before - cfg.learning_rate * gi / (gi.abs() + cfg.adam_eps);
            assert_abs_diff_eq!(*after, expected, epsilon = 1e-15);
            assert_abs_diff_eq!(*after - before, -cfg.learning_rate * gi.signum(), epsilon = 1e-7);
        }
        assert_eq!(s.step_count, 1);
        assert!(s.second_moment.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let cfg = TrainingConfig::default();
        let mut p = vec![1.0, 2.0];
        let mut s = OptimizerState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &cfg).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn identical_calls_agree() {
        let cfg = TrainingConfig::default();
        let run = || {
            let mut p = vec![0.1f32, 0.2];
            let mut s = OptimizerState::new(2);
            for _ in 0..3 {
                adam_step(&mut p, &[0.5, -0.25], &mut s, &cfg).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn length_mismatch() {
        let cfg = TrainingConfig::default();
        let mut s = OptimizerState::new(2);
        assert!(adam_step(&mut [0.0, 0.0], &[1.0], &mut s, &cfg).is_err());
    }
}
