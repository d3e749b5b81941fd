//! `l_p` vector norms with subgradients and (where defined) Hessians.
//!
//! Every cost term in this crate is a scaled norm of an affine expression, so
//! these three functions are the whole differentiation story. At kinks
//! (argument exactly zero) the zero subgradient is used, mirroring the usual
//! `relu'(0) = 0` convention.

use alloc::vec;
use alloc::vec::Vec;

use crate::fp;
use crate::linalg::Matrix;

/// `‖v‖_p` for `p ≥ 1` (`p = ∞` supported).
pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return fp::sqrt(v.iter().map(|x| x * x).sum());
    }
    if p == 1.0 {
        return v.iter().map(|x| fp::abs(*x)).sum();
    }
    if p.is_infinite() {
        return v.iter().fold(0.0, |m, x| fp::max(m, fp::abs(*x)));
    }
    let s: f64 = v.iter().map(|x| fp::powf(fp::abs(*x), p)).sum();
    fp::powf(s, 1.0 / p)
}

/// A subgradient of `‖·‖_p` at `v`; the gradient wherever the norm is smooth.
pub fn lp_subgradient(v: &[f64], p: f64) -> Vec<f64> {
    let n = lp_norm(v, p);
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    if p == 2.0 {
        return v.iter().map(|x| x / n).collect();
    }
    if p == 1.0 {
        return v.iter().map(|x| fp::sign(*x)).collect();
    }
    if p.is_infinite() {
        // Put all the weight on the first maximal coordinate.
        let mut g = vec![0.0; v.len()];
        let mut best = 0usize;
        for (i, x) in v.iter().enumerate() {
            if fp::abs(*x) > fp::abs(v[best]) {
                best = i;
            }
        }
        g[best] = fp::sign(v[best]);
        return g;
    }
    v.iter()
        .map(|x| fp::sign(*x) * fp::powf(fp::abs(*x) / n, p - 1.0))
        .collect()
}

/// Hessian of `‖·‖_p` at `v`.
///
/// Exact for `p = 2` away from the origin: `(I − u u^T)/‖v‖` with
/// `u = v/‖v‖`. For `p = 1`, `p = ∞`, at the origin, and for other `p` the
/// norm is treated as locally linear and the zero matrix is returned, which
/// is the same flat-subgradient substitute used everywhere else.
pub fn lp_hessian(v: &[f64], p: f64) -> Matrix {
    let d = v.len();
    let n = lp_norm(v, p);
    if p != 2.0 || n < 1e-300 {
        return Matrix::zeros(d, d);
    }
    let mut h = Matrix::identity(d);
    let u: Vec<f64> = v.iter().map(|x| x / n).collect();
    h.add_outer(&u, &u, -1.0);
    h.scale(1.0 / n);
    h
}
