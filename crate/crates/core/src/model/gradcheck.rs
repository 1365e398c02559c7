//! Central finite-difference check of [`Model::backward`].

use super::{cross_entropy, Model};
use crate::error::Result;

/// Gradients below this magnitude are compared in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter index where the worst error occurred.
    pub worst: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares every analytic gradient component with
/// `(L(θ + h) − L(θ − h)) / 2h`. The relative error of a component is
/// `|a − n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
pub fn gradient_check(model: &Model, window: &[&[f64]], target: usize, step: f64) -> Result<GradCheck> {
    let (_, grad) = model.backward(window, target)?;
    let mut probe = model.clone();
    let mut out = GradCheck { max_rel_error: 0.0, worst: 0, analytic: 0.0, numeric: 0.0 };
    for i in 0..grad.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + step;
        let up = cross_entropy(&probe.forward(window)?, target);
        probe.params_mut()[i] = orig - step;
        let down = cross_entropy(&probe.forward(window)?, target);
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = grad[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        if rel > out.max_rel_error {
            out = GradCheck { max_rel_error: rel, worst: i, analytic: a, numeric };
        }
    }
    Ok(out)
}
