//! Adam with bias correction, plus global gradient norm clipping.

use crate::error::{Error, Result};
use crate::numerics::ParamBlock;

/// Optimizer state over one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state for `coords` parameters at learning rate `lr`.
    pub fn new(coords: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; coords],
            v: vec![0.0; coords],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Number of steps taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }
}

/// One Adam update over every coordinate of `params`, which must traverse
/// in the same flat order the state and `grads` were built with. Any
/// non-finite gradient aborts the step before touching parameters.
pub fn adam_step<P: ParamBlock>(state: &mut AdamState, params: &mut P, grads: &[f64]) -> Result<()> {
    if grads.len() != state.m.len() {
        return Err(Error::dim("adam_step", state.m.len(), grads.len()));
    }
    if crate::numerics::coord_count(params) != grads.len() {
        return Err(Error::dim(
            "adam_step parameters",
            grads.len(),
            crate::numerics::coord_count(params),
        ));
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite gradient at coordinate {bad}; step aborted"
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);

    let mut i = 0;
    params.visit_mut(&mut |slice| {
        for p in slice.iter_mut() {
            let g = grads[i];
            state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
            state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = state.m[i] / bc1;
            let v_hat = state.v[i] / bc2;
            *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
            i += 1;
        }
    });
    Ok(())
}

/// Scales `grads` down to `max_norm` if their global L2 norm exceeds it,
/// returning the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= s;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Vector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clip_three_four_scales_to_unit_norm() {
        let mut g = vec![3.0, 4.0];
        let pre = clip_grad_norm(&mut g, 1.0);
        assert_eq!(pre, 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15);
        assert!((g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_below_threshold_is_identity() {
        let mut g = vec![0.3, -0.4];
        let pre = clip_grad_norm(&mut g, 1.0);
        assert_eq!(pre, 0.5);
        assert_eq!(g, vec![0.3, -0.4]);
    }

    #[test]
    fn clip_never_increases_magnitudes_and_bounds_the_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let before: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut after = before.clone();
            clip_grad_norm(&mut after, 1.0);
            let norm = after.iter().map(|g| g * g).sum::<f64>().sqrt();
            assert!(norm <= 1.0 + 1e-12);
            for (a, b) in after.iter().zip(&before) {
                assert!(a.abs() <= b.abs() + 1e-15);
                assert!(a.signum() == b.signum() || *a == 0.0);
            }
        }
    }

    #[test]
    fn first_step_matches_the_closed_form() {
        // At t=1 the bias corrections cancel: the update is
        // lr * g / (|g| + eps) exactly.
        let mut p = Vector::new(vec![1.0, -2.0]);
        let grads = [0.5, -0.25];
        let mut st = AdamState::new(2, 0.1);
        adam_step(&mut st, &mut p, &grads).unwrap();
        assert_eq!(st.t(), 1);
        for i in 0..2 {
            let want = [1.0, -2.0][i] - 0.1 * grads[i] / (grads[i].abs() + 1e-8);
            assert!((p[i] - want).abs() < 1e-15, "{} vs {want}", p[i]);
        }
    }

    #[test]
    fn zero_gradient_leaves_fresh_parameters_unchanged() {
        let mut p = Vector::new(vec![0.7, -0.3, 1.1]);
        let mut st = AdamState::new(3, 0.01);
        adam_step(&mut st, &mut p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.7, -0.3, 1.1]);
        assert_eq!(st.t(), 1);
    }

    #[test]
    fn non_finite_gradients_abort_without_touching_parameters() {
        let mut p = Vector::new(vec![0.7, -0.3]);
        let mut st = AdamState::new(2, 0.01);
        let err = adam_step(&mut st, &mut p, &[0.1, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
        assert_eq!(p.as_slice(), &[0.7, -0.3]);
        assert_eq!(st.t(), 0);

        assert!(adam_step(&mut st, &mut p, &[0.1, f64::INFINITY]).is_err());
    }

    #[test]
    fn gradient_length_must_match_the_state() {
        let mut p = Vector::new(vec![0.7, -0.3]);
        let mut st = AdamState::new(2, 0.01);
        assert!(adam_step(&mut st, &mut p, &[0.1]).is_err());
        let mut st3 = AdamState::new(3, 0.01);
        assert!(adam_step(&mut st3, &mut p, &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn trajectories_are_deterministic() {
        let run = || {
            let mut p = Vector::new(vec![0.5, -0.5, 0.25]);
            let mut st = AdamState::new(3, 0.004);
            for k in 0..50 {
                let g: Vec<f64> = p.as_slice().iter().map(|x| x * 0.3 + k as f64 * 1e-3).collect();
                adam_step(&mut st, &mut p, &g).unwrap();
            }
            p.into_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn repeated_steps_move_toward_a_quadratic_minimum() {
        let mut p = Vector::new(vec![2.0]);
        let mut st = AdamState::new(1, 0.05);
        for _ in 0..400 {
            let g = [2.0 * p[0]];
            adam_step(&mut st, &mut p, &g).unwrap();
        }
        assert!(p[0].abs() < 0.05, "{}", p[0]);
    }
}
