//! Dense kernels over input-major weight matrices.
//!
//! A weight matrix mapping `n_in` inputs to `n_out` outputs is stored as
//! `n_in` rows of `n_out` values, so sparse (one-hot heavy) inputs only touch
//! the rows of their nonzero entries.

/// `out += Wᵀx` where `w` is `x.len()` rows of `out.len()`.
#[inline]
pub fn accumulate_product(out: &mut [f64], w: &[f64], x: &[f64]) {
    let n_out = out.len();
    debug_assert_eq!(w.len(), x.len() * n_out);
    for (xi, row) in x.iter().zip(w.chunks_exact(n_out)) {
        if *xi == 0.0 {
            continue;
        }
        for (o, wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `out += W d`: back-propagates `d` (length `n_out`) to the inputs.
#[inline]
pub fn accumulate_transposed(out: &mut [f64], w: &[f64], d: &[f64]) {
    let n_out = d.len();
    debug_assert_eq!(w.len(), out.len() * n_out);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n_out)) {
        *o += row.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `g += x ⊗ d`.
#[inline]
pub fn accumulate_outer(g: &mut [f64], x: &[f64], d: &[f64]) {
    let n_out = d.len();
    debug_assert_eq!(g.len(), x.len() * n_out);
    for (xi, row) in x.iter().zip(g.chunks_exact_mut(n_out)) {
        if *xi == 0.0 {
            continue;
        }
        for (gij, dj) in row.iter_mut().zip(d) {
            *gij += xi * dj;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
