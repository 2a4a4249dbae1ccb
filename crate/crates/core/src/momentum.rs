//! Momentum constraint: the conformal vector Laplacian solve for `W`.
//!
//! The discrete operator is `P = -div(L .)`, which is positive semidefinite
//! with the constant fields as its kernel on the flat torus. The continuum
//! equation `div(L W) = X` therefore becomes `P W = -X`. The kernel is
//! handled by projecting the right-hand side onto mean-zero fields and
//! solving in that complement; the size of the discarded mean is reported.

use alloc::vec;

use crate::fmath;
use crate::grid::{conformal_killing, gradient, same_grid, ScalarField, TracelessSymField, VectorField};
use crate::krylov::{conjugate_gradient, CgOptions};
use crate::{critical_exponent, Error, Result, DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumOptions {
    /// Relative residual target of the CG solve.
    pub tol: f64,
    pub max_iter: usize,
    /// Fail with [`Error::KernelComponent`] when the discarded mean exceeds this.
    pub kernel_limit: f64,
}

impl Default for MomentumOptions {
    fn default() -> Self {
        MomentumOptions {
            tol: 1e-12,
            max_iter: 20_000,
            kernel_limit: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumResult {
    /// Solution with zero mean in every component.
    pub w: VectorField,
    pub lw: TracelessSymField,
    /// `|P W - projected rhs|_2` (volume weighted).
    pub residual: f64,
    /// Largest component of the mean removed from the right-hand side.
    pub kernel_discarded: f64,
    pub iterations: usize,
}

/// `(n-1)/n eta^{2*} grad tau - pi grad psi`; `eta` is clamped at zero.
pub fn momentum_source(
    eta: &ScalarField,
    tau: &ScalarField,
    pi: &ScalarField,
    psi: &ScalarField,
) -> Result<VectorField> {
    let g = *eta.grid();
    for f in [tau, pi, psi] {
        same_grid(&g, f.grid())?;
    }
    let n = DIM as f64;
    let ts = critical_exponent(DIM) as i32;
    let gt = gradient(tau);
    let gp = gradient(psi);
    let mut comps = [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
    for i in 0..g.len() {
        let e = fmath::powi(f64::max(eta.values()[i], 0.0), ts);
        let p = pi.values()[i];
        for (a, c) in comps.iter_mut().enumerate() {
            c[i] = (n - 1.0) / n * e * gt.component(a)[i] - p * gp.component(a)[i];
        }
    }
    Ok(VectorField::from_raw(g, comps))
}

/// Solves `P W = rhs` in the mean-zero complement of the kernel.
pub fn solve_conformal(rhs: &VectorField, opts: &MomentumOptions) -> Result<MomentumResult> {
    let g = *rhs.grid();
    let n = g.len();
    let mut x = rhs.clone();
    let means = x.remove_mean();
    let kernel_discarded = means.iter().fold(0.0, |m, &v| f64::max(m, fmath::abs(v)));
    if kernel_discarded > opts.kernel_limit {
        return Err(Error::KernelComponent {
            size: kernel_discarded,
            limit: opts.kernel_limit,
        });
    }

    let mut b = vec![0.0; 3 * n];
    for a in 0..3 {
        b[a * n..(a + 1) * n].copy_from_slice(x.component(a));
    }
    let mut tensor: [alloc::vec::Vec<f64>; 6] = core::array::from_fn(|_| vec![0.0; n]);
    let apply = |v: &[f64], out: &mut [f64]| {
        let (v0, rest) = v.split_at(n);
        let (v1, v2) = rest.split_at(n);
        g.conformal_killing_into([v0, v1, v2], &mut tensor);
        let (o0, rest) = out.split_at_mut(n);
        let (o1, o2) = rest.split_at_mut(n);
        g.neg_tensor_divergence_into(&tensor, [o0, o1, o2]);
    };
    let mut sol = vec![0.0; 3 * n];
    let outcome = conjugate_gradient(
        apply,
        None,
        &b,
        &mut sol,
        CgOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
    )?;

    let mut w = VectorField::from_raw(
        g,
        [
            sol[..n].to_vec(),
            sol[n..2 * n].to_vec(),
            sol[2 * n..].to_vec(),
        ],
    );
    w.remove_mean();
    let pw = crate::grid::conf_laplacian(&w);
    let mut r2 = 0.0;
    for a in 0..3 {
        for i in 0..n {
            let d = pw.component(a)[i] - x.component(a)[i];
            r2 += d * d;
        }
    }
    let residual = fmath::sqrt(r2 * g.volume_element());
    let lw = conformal_killing(&w);
    Ok(MomentumResult {
        w,
        lw,
        residual,
        kernel_discarded,
        iterations: outcome.iterations,
    })
}

/// Momentum constraint `div(L W) = (n-1)/n eta^{2*} grad tau - pi grad psi`,
/// solved as `P W = -(source)`.
pub fn solve_momentum(
    eta: &ScalarField,
    tau: &ScalarField,
    pi: &ScalarField,
    psi: &ScalarField,
    opts: &MomentumOptions,
) -> Result<MomentumResult> {
    let source = momentum_source(eta, tau, pi, psi)?;
    solve_conformal(&source.scaled(-1.0), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::conf_laplacian;
    use crate::Grid;

    #[test]
    fn zero_source_gives_zero_field() {
        let g = Grid::cubic(8, 1.0).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let zero = ScalarField::zeros(g);
        let r = solve_momentum(&one, &one, &zero, &one, &MomentumOptions::default()).unwrap();
        assert_eq!(r.w.max_abs_component(), 0.0);
        assert_eq!(r.lw.max_abs_entry(), 0.0);
    }

    #[test]
    fn recovers_manufactured_field() {
        let g = Grid::cubic(16, 2.0 * fmath::PI).unwrap();
        let w_star = VectorField::from_fn(g, |x| [fmath::sin(x[0]), 0.0, 0.0]);
        let rhs = conf_laplacian(&w_star);
        let r = solve_conformal(&rhs, &MomentumOptions::default()).unwrap();
        assert!(r.w.sup_distance(&w_star).unwrap() < 1e-9);
        assert!(r.kernel_discarded < 1e-12);
    }

    #[test]
    fn kernel_limit_is_enforced() {
        let g = Grid::cubic(6, 1.0).unwrap();
        let rhs = VectorField::constant(g, [1.0, 0.0, 0.0]);
        let opts = MomentumOptions {
            kernel_limit: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            solve_conformal(&rhs, &opts),
            Err(Error::KernelComponent { .. })
        ));
    }
}
