use super::TrainingConfig;
use crate::error::{Error, Result};

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainingConfig) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Dimension("adam: parameter, gradient and state sizes differ".into()));
    }
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..n {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let cfg = TrainingConfig::default();
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState { m: vec![0.5, 0.5], v: vec![0.25, 0.25], step: 3 };
        adam_step(&mut p, &[0.0, 0.0], &mut s, &cfg).unwrap();
        assert_eq!(s.step, 4);
        assert_eq!(s.m, vec![0.45, 0.45]);
        assert_eq!(s.v, vec![0.25 * 0.999, 0.25 * 0.999]);
        // moments are nonzero so parameters do move; with fresh state they must not
        let mut p2 = vec![1.0, -2.0];
        let mut fresh = AdamState::new(2);
        adam_step(&mut p2, &[0.0, 0.0], &mut fresh, &cfg).unwrap();
        assert_eq!(p2, vec![1.0, -2.0]);
        assert!(p != vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let cfg = TrainingConfig::default();
        for g in [3.7, -0.02, 1e-3] {
            let mut p = vec![0.0];
            let mut s = AdamState::new(1);
            adam_step(&mut p, &[g], &mut s, &cfg).unwrap();
            // bias correction makes m̂ = g and v̂ = g² on the first step
            let expected = -cfg.learning_rate * g / (g.abs() + cfg.adam_eps);
            assert!((p[0] - expected).abs() < 1e-15, "{g}: {} vs {expected}", p[0]);
            let eps_hat_form = -cfg.learning_rate * g / (g.abs() + cfg.adam_eps * (1.0 - cfg.adam_beta2).sqrt());
            assert!((p[0] - eps_hat_form).abs() < 1e-7);
            assert!((p[0] + cfg.learning_rate * g.signum()).abs() < 1e-7);
        }
    }

    /// Independent formulation: explicit power products instead of `powi`.
    fn oracle(params: &mut [f64], grads_seq: &[Vec<f64>], cfg: &TrainingConfig) {
        let n = params.len();
        let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
        let (mut b1t, mut b2t) = (1.0, 1.0);
        for g in grads_seq {
            b1t *= cfg.adam_beta1;
            b2t *= cfg.adam_beta2;
            for i in 0..n {
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                let denom = (v[i] / (1.0 - b2t)).sqrt() + cfg.adam_eps;
                params[i] -= cfg.learning_rate * (m[i] / (1.0 - b1t)) / denom;
            }
        }
    }

    #[test]
    fn matches_oracle_over_ten_steps() {
        let cfg = TrainingConfig { learning_rate: 0.01, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grads: Vec<Vec<f64>> = (0..10).map(|_| (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let mut expected = init.clone();
        oracle(&mut expected, &grads, &cfg);
        let mut got = init;
        let mut s = AdamState::new(16);
        for g in &grads {
            adam_step(&mut got, g, &mut s, &cfg).unwrap();
        }
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(s.step, 10);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut s, &TrainingConfig::default()).is_err());
    }
}
