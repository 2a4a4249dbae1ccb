//! Preconditioned conjugate gradient on raw slices.

use alloc::vec;

use crate::fmath;
use crate::grid::dot;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Stop when `|r|_2 <= tol * |b|_2`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`, starting from
/// the contents of `x`.
///
/// `apply(v, out)` writes `A v`. `inv_diag`, when given, is a Jacobi
/// preconditioner and must be positive. For a singular `A` the right-hand
/// side has to lie in the range; CG then stays in the range as long as the
/// start does.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    inv_diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgOutcome> {
    let n = b.len();
    let b_norm = fmath::sqrt(dot(b, b));
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let target = opts.tol * b_norm;

    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let precondition = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = d[i] * r[i];
            }
        }
        None => z.copy_from_slice(r),
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut r_norm = fmath::sqrt(dot(&r, &r));

    for it in 0..opts.max_iter {
        if r_norm <= target {
            return Ok(CgOutcome {
                iterations: it,
                relative_residual: r_norm / b_norm,
            });
        }
        apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        r_norm = fmath::sqrt(dot(&r, &r));
    }
    if r_norm <= target {
        return Ok(CgOutcome {
            iterations: opts.max_iter,
            relative_residual: r_norm / b_norm,
        });
    }
    Err(Error::NoConvergence {
        what: "conjugate gradient",
        iterations: opts.max_iter,
        residual: r_norm / b_norm,
    })
}
