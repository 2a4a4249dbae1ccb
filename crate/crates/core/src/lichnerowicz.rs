//! Einstein-Lichnerowicz scalar equation
//!
//! ```text
//! Delta phi + h phi = f phi^{2*-1} + a phi^{-2*-1}
//! ```
//!
//! solved for its minimal positive solution by monotone sub/super-solution
//! iteration. With `F(x,u) = f u^{2*-1} + a u^{-2*-1} - h u` and a shift
//! `K` making `F + K u` nondecreasing on the bracket, the iterates
//! `v_{k+1} = (Delta + K)^{-1}(F(v_k) + K v_k)` start at a strict
//! subsolution and increase to the minimal solution.

use alloc::vec;
use alloc::vec::Vec;

use crate::criteria::{nonexistence_test, NonexistenceMode};
use crate::fmath;
use crate::grid::{same_grid, Grid, ScalarField};
use crate::krylov::{conjugate_gradient, CgOptions};
use crate::spectral;
use crate::{critical_exponent, Error, Result, DIM};

/// Margin applied to every shift candidate.
pub const K_MARGIN: f64 = 1.1;
/// Number of log-spaced points of the constant supersolution scan.
pub const SCAN_POINTS: usize = 480;

/// How the shift `K` is chosen during the monotone iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KStrategy {
    /// One constant valid on `[min sub, max sup]` for the whole run.
    Static,
    /// Recomputed every step, pointwise, on `[v_k(x), sup(x)]`.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LichnerowiczOptions {
    /// Stop when `|v_{k+1} - v_k|_inf < tol`.
    pub tol: f64,
    /// Relative residual of every inner linear solve.
    pub linear_tol: f64,
    /// Bound on `|Delta phi + h phi - f phi^{2*-1} - a phi^{-2*-1}|_inf`.
    pub residual_tol: f64,
    pub max_iter: usize,
    pub max_cg_iter: usize,
    /// Accept `stability_eig >= -stability_tol (1 + |h|_inf)`.
    pub stability_tol: f64,
    pub eigen_tol: f64,
    pub k_strategy: KStrategy,
    /// Check `Delta + h` is coercive before solving.
    pub check_coercivity: bool,
}

impl Default for LichnerowiczOptions {
    fn default() -> Self {
        LichnerowiczOptions {
            tol: 1e-12,
            linear_tol: 1e-12,
            residual_tol: 1e-9,
            max_iter: 20_000,
            max_cg_iter: 20_000,
            stability_tol: 1e-8,
            eigen_tol: 1e-10,
            k_strategy: KStrategy::Adaptive,
            check_coercivity: true,
        }
    }
}

/// Ordered pair of a strict subsolution and a supersolution, with a shift
/// valid on `[min sub, max sup]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub sub: ScalarField,
    pub sup: ScalarField,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneStep {
    pub increment_sup: f64,
    /// `min(v_{k+1} - v_k)`, audited against `-1e-12 |v_k|_inf`.
    pub min_increment: f64,
    /// `|v_k|_inf` before the step.
    pub iterate_sup: f64,
    pub iterate_min: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonotoneTrace {
    pub steps: Vec<MonotoneStep>,
    pub k_static: f64,
    /// Largest `v_k - sup` seen; positive values mean the bracket leaked.
    pub max_bracket_excess: f64,
    /// `delta_0` and scale `eps` of the subsolution `eps * u_delta`.
    pub subsolution_delta: f64,
    pub subsolution_scale: f64,
    /// Constant of the supersolution, or `None` when it came from Newton.
    pub supersolution_constant: Option<f64>,
    pub residual_rounds: usize,
}

impl MonotoneTrace {
    /// Worst value of `min(v_{k+1} - v_k) / |v_k|_inf` over the run.
    pub fn worst_relative_decrease(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.min_increment / f64::max(s.iterate_sup, f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LichnerowiczResult {
    pub phi: ScalarField,
    pub trace: MonotoneTrace,
    /// Principal eigenvalue of the linearised operator at `phi`.
    pub stability_eig: f64,
    pub residual_sup: f64,
}

/// Borrowed coefficient slices with the nonlinearity evaluated pointwise.
#[derive(Clone, Copy)]
struct Coeffs<'a> {
    h: &'a [f64],
    f: &'a [f64],
    a: &'a [f64],
    /// `2* - 1`
    p: i32,
    /// `2* + 1`
    q: i32,
}

impl<'a> Coeffs<'a> {
    fn new(h: &'a ScalarField, f: &'a ScalarField, a: &'a ScalarField) -> Result<Self> {
        same_grid(h.grid(), f.grid())?;
        same_grid(h.grid(), a.grid())?;
        let ts = critical_exponent(DIM) as i32;
        Ok(Coeffs {
            h: h.values(),
            f: f.values(),
            a: a.values(),
            p: ts - 1,
            q: ts + 1,
        })
    }

    /// `F(x,u) = f u^p + a u^{-q} - h u`.
    #[inline]
    fn nonlinearity(&self, i: usize, u: f64) -> f64 {
        self.f[i] * fmath::powi(u, self.p) + self.a[i] * fmath::powi(u, -self.q) - self.h[i] * u
    }

    /// `-dF/du = h - p f u^{p-1} + q a u^{-q-1}`.
    #[inline]
    fn neg_slope(&self, i: usize, u: f64) -> f64 {
        self.h[i] - self.p as f64 * self.f[i] * fmath::powi(u, self.p - 1)
            + self.q as f64 * self.a[i] * fmath::powi(u, -self.q - 1)
    }

    /// Smallest shift making `F + K u` nondecreasing and nonnegative on
    /// `[lo, hi]` at cell `i` (before the margin).
    fn shift_candidate(&self, i: usize, lo: f64, hi: f64) -> f64 {
        let (p, q) = (self.p as f64, self.q as f64);
        let (f, a) = (self.f[i], self.a[i]);
        let mut best = f64::max(self.neg_slope(i, lo), self.neg_slope(i, hi));
        best = f64::max(best, -self.nonlinearity(i, lo) / lo);
        best = f64::max(best, -self.nonlinearity(i, hi) / hi);
        let pq = self.p + self.q;
        // interior critical point of -dF/du
        if f < 0.0 && a > 0.0 {
            let u = fmath::powf(-q * (q + 1.0) * a / (p * (p - 1.0) * f), 1.0 / pq as f64);
            if u > lo && u < hi {
                best = f64::max(best, self.neg_slope(i, u));
            }
        }
        // interior critical point of -F/u
        if f > 0.0 && a > 0.0 {
            let u = fmath::powf((q + 1.0) * a / ((p - 1.0) * f), 1.0 / pq as f64);
            if u > lo && u < hi {
                best = f64::max(best, -self.nonlinearity(i, u) / u);
            }
        }
        f64::max(best, 0.0)
    }

    fn shift_floor(&self) -> f64 {
        let hmax = self.h.iter().fold(0.0, |m, &v| f64::max(m, fmath::abs(v)));
        f64::max(1e-3 * hmax, 1e-12)
    }
}

fn residual_into(grid: &Grid, c: &Coeffs<'_>, phi: &[f64], out: &mut [f64]) {
    grid.laplacian_into(phi, out);
    for i in 0..phi.len() {
        out[i] -= c.nonlinearity(i, phi[i]);
    }
}

/// `Delta phi + h phi - f phi^{2*-1} - a phi^{-2*-1}`.
pub fn residual(
    phi: &ScalarField,
    h: &ScalarField,
    f: &ScalarField,
    a: &ScalarField,
) -> Result<ScalarField> {
    same_grid(phi.grid(), h.grid())?;
    let c = Coeffs::new(h, f, a)?;
    let mut out = vec![0.0; phi.grid().len()];
    residual_into(phi.grid(), &c, phi.values(), &mut out);
    Ok(ScalarField::from_raw(*phi.grid(), out))
}

/// Solves `(Delta + k) x = rhs` with Jacobi-preconditioned CG, starting from `x`.
pub(crate) fn solve_shifted(
    grid: &Grid,
    k: &[f64],
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let diag = grid.laplacian_diagonal();
    let inv: Option<Vec<f64>> = if k.iter().all(|&kv| diag + kv > 0.0) {
        Some(k.iter().map(|&kv| 1.0 / (diag + kv)).collect())
    } else {
        None
    };
    let apply = |v: &[f64], out: &mut [f64]| {
        grid.laplacian_into(v, out);
        for i in 0..v.len() {
            out[i] += k[i] * v[i];
        }
    };
    let outcome = conjugate_gradient(apply, inv.as_deref(), rhs, x, CgOptions { tol, max_iter })?;
    Ok(outcome.iterations)
}

/// CG solve of `(Delta + h) u = rhs` to relative residual `tol`.
pub fn linear_solve(h: &ScalarField, rhs: &ScalarField, tol: f64) -> Result<ScalarField> {
    same_grid(h.grid(), rhs.grid())?;
    let g = *h.grid();
    let mut x = vec![0.0; g.len()];
    solve_shifted(&g, h.values(), rhs.values(), &mut x, tol, 20_000)?;
    Ok(ScalarField::from_raw(g, x))
}

fn validate_source(a: &ScalarField) -> Result<()> {
    if a.min() < 0.0 {
        return Err(Error::InvalidInput("a must be nonnegative".into()));
    }
    if a.max() <= 0.0 {
        return Err(Error::InvalidInput("a must not vanish identically".into()));
    }
    Ok(())
}

/// A strict subsolution `eps * u_delta` with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsolution {
    pub w: ScalarField,
    pub delta: f64,
    pub scale: f64,
}

fn is_strict_subsolution(grid: &Grid, c: &Coeffs<'_>, w: &[f64], scratch: &mut [f64]) -> bool {
    if w.iter().any(|&v| !(v > 0.0)) {
        return false;
    }
    residual_into(grid, c, w, scratch);
    scratch.iter().all(|&r| r < 0.0)
}

/// `w = eps * u_delta` where `(Delta + h) u_delta = a - delta f^- - delta`.
///
/// `delta` starts at `1e-2 |a|_inf` and halves until `u_delta > 0` (60 tries);
/// `eps` halves from 1 until `w` is a strict subsolution at every cell
/// (200 tries).
pub fn build_subsolution(
    h: &ScalarField,
    f: &ScalarField,
    a: &ScalarField,
    opts: &LichnerowiczOptions,
) -> Result<Subsolution> {
    validate_source(a)?;
    let c = Coeffs::new(h, f, a)?;
    let g = *h.grid();
    let n = g.len();
    let mut delta = 1e-2 * a.sup();
    let mut u = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut found = false;
    for _ in 0..60 {
        for i in 0..n {
            rhs[i] = c.a[i] - delta * f64::max(-c.f[i], 0.0) - delta;
        }
        u.iter_mut().for_each(|v| *v = 0.0);
        solve_shifted(&g, c.h, &rhs, &mut u, opts.linear_tol, opts.max_cg_iter)?;
        if u.iter().all(|&v| v > 0.0) {
            found = true;
            break;
        }
        delta *= 0.5;
    }
    if !found {
        return Err(Error::NoPositiveSubsolution);
    }
    let mut scratch = vec![0.0; n];
    let mut scale = 1.0;
    let mut w = vec![0.0; n];
    for _ in 0..200 {
        for i in 0..n {
            w[i] = scale * u[i];
        }
        if is_strict_subsolution(&g, &c, &w, &mut scratch) {
            return Ok(Subsolution {
                w: ScalarField::from_raw(g, w),
                delta,
                scale,
            });
        }
        scale *= 0.5;
    }
    Err(Error::SubsolutionScalingFailed)
}

/// `min_x (h c - f c^{2*-1} - a c^{-2*-1})` for a constant candidate `c`.
fn constant_margin(c: &Coeffs<'_>, value: f64) -> f64 {
    (0..c.h.len())
        .map(|i| c.nonlinearity(i, value))
        .fold(f64::INFINITY, |m, v| f64::min(m, -v))
}

/// Looks for a supersolution: first the smallest feasible constant on a
/// log grid over `[1e-6, 1e6]` refined by bisection, then damped Newton from
/// the most nearly feasible constant. `None` when both fail.
pub fn find_supersolution(
    h: &ScalarField,
    f: &ScalarField,
    a: &ScalarField,
    opts: &LichnerowiczOptions,
) -> Result<Option<ScalarField>> {
    if a.min() < 0.0 {
        return Err(Error::InvalidInput("a must be nonnegative".into()));
    }
    let c = Coeffs::new(h, f, a)?;
    let g = *h.grid();
    if let Some(value) = scan_constant_supersolution(&c) {
        return Ok(Some(ScalarField::constant(g, value)));
    }
    let best = (0..SCAN_POINTS)
        .map(scan_point)
        .map(|v| (v, constant_margin(&c, v)))
        .fold((1.0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    let start = ScalarField::constant(g, best.0);
    match newton_solve(h, f, a, &start, opts) {
        Ok(phi) if phi.min() > 0.0 => Ok(Some(phi)),
        _ => Ok(None),
    }
}

fn scan_point(k: usize) -> f64 {
    fmath::powf(10.0, -6.0 + 12.0 * k as f64 / (SCAN_POINTS - 1) as f64)
}

fn scan_constant_supersolution(c: &Coeffs<'_>) -> Option<f64> {
    let first = (0..SCAN_POINTS).find(|&k| constant_margin(c, scan_point(k)) >= 0.0)?;
    if first == 0 {
        return Some(scan_point(0));
    }
    let (mut lo, mut hi) = (scan_point(first - 1), scan_point(first));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if constant_margin(c, mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Matrix-free damped Newton for the Lichnerowicz equation with CG inner
/// solves; fails if the Jacobian is indefinite along the way.
pub fn newton_solve(
    h: &ScalarField,
    f: &ScalarField,
    a: &ScalarField,
    start: &ScalarField,
    opts: &LichnerowiczOptions,
) -> Result<ScalarField> {
    let c = Coeffs::new(h, f, a)?;
    let g = *h.grid();
    let n = g.len();
    let mut u = start.values().to_vec();
    let mut res = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_res = vec![0.0; n];
    let mut jdiag = vec![0.0; n];
    let mut step = vec![0.0; n];
    let max_iter = 100;
    let norm2 = |v: &[f64]| fmath::sqrt(v.iter().map(|x| x * x).sum());
    residual_into(&g, &c, &u, &mut res);
    for it in 0..max_iter {
        let scale = 1.0 + (0..n).fold(0.0, |m, i| f64::max(m, fmath::abs(c.h[i] * u[i])));
        let res_sup = res.iter().fold(0.0, |m, &r| f64::max(m, fmath::abs(r)));
        if res_sup <= f64::min(opts.residual_tol, 1e-11 * scale) {
            return Ok(ScalarField::from_raw(g, u));
        }
        for i in 0..n {
            jdiag[i] = c.neg_slope(i, u[i]);
            step[i] = 0.0;
        }
        let neg: Vec<f64> = res.iter().map(|r| -r).collect();
        if solve_shifted(&g, &jdiag, &neg, &mut step, 1e-13, opts.max_cg_iter).is_err() {
            return Err(Error::NewtonFailed {
                iterations: it,
                residual: res_sup,
            });
        }
        let current = norm2(&res);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            for i in 0..n {
                trial[i] = u[i] + t * step[i];
            }
            if trial.iter().all(|&v| v > 0.0) {
                residual_into(&g, &c, &trial, &mut trial_res);
                if norm2(&trial_res) < (1.0 - 1e-4 * t) * current {
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonFailed {
                iterations: it,
                residual: res_sup,
            });
        }
        core::mem::swap(&mut u, &mut trial);
        core::mem::swap(&mut res, &mut trial_res);
    }
    Err(Error::NewtonFailed {
        iterations: max_iter,
        residual: res.iter().fold(0.0, |m, &r| f64::max(m, fmath::abs(r))),
    })
}

/// Static shift on `[min sub, max sup]`:
/// `K = 1.1 max(0, max_x max_u (-dF/du, -F/u))`, floored to stay positive.
pub fn choose_static_k(
    sub: &ScalarField,
    sup: &ScalarField,
    h: &ScalarField,
    f: &ScalarField,
    a: &ScalarField,
) -> Result<f64> {
    let c = Coeffs::new(h, f, a)?;
    let (lo, hi) = (sub.min(), sup.max());
    let k = (0..c.h.len())
        .map(|i| c.shift_candidate(i, lo, hi))
        .fold(0.0, f64::max);
    Ok(f64::max(K_MARGIN * k, c.shift_floor()))
}

/// Monotone iteration from `bracket.sub`. The increment
/// `d = v_{k+1} - v_k` is solved for directly,
/// `(Delta + K) d = F(v_k) - Delta v_k`, which is the same update written
/// so the sign audit is not swamped by roundoff in `v`. A failed residual
/// audit resumes the loop with both tolerances tightened.
pub fn monotone_iterate(
    bracket: &Bracket,
    h: &ScalarField,
    f: &ScalarField,
    a: &ScalarField,
    opts: &LichnerowiczOptions,
) -> Result<LichnerowiczResult> {
    let c = Coeffs::new(h, f, a)?;
    let g = *h.grid();
    same_grid(&g, bracket.sub.grid())?;
    same_grid(&g, bracket.sup.grid())?;
    let n = g.len();
    let sub = bracket.sub.values();
    let sup = bracket.sup.values();
    if sub.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput("subsolution must be positive".into()));
    }
    if (0..n).any(|i| sub[i] > sup[i]) {
        return Err(Error::InvalidInput("bracket is not ordered (sub > sup)".into()));
    }
    if !(bracket.k > 0.0) {
        return Err(Error::InvalidInput("shift K must be positive".into()));
    }

    let floor = c.shift_floor();
    let mut v = sub.to_vec();
    let mut rhs = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut k = vec![bracket.k; n];
    let mut trace = MonotoneTrace {
        k_static: bracket.k,
        max_bracket_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut linear_tol = opts.linear_tol;
    let mut step_tol = opts.tol;
    let mut converged = false;

    for round in 0..4 {
        trace.residual_rounds = round + 1;
        converged = false;
        while trace.steps.len() < opts.max_iter {
            residual_into(&g, &c, &v, &mut rhs);
            rhs.iter_mut().for_each(|r| *r = -*r);
            if opts.k_strategy == KStrategy::Adaptive {
                for i in 0..n {
                    let hi = f64::max(sup[i], v[i]);
                    k[i] = f64::max(K_MARGIN * c.shift_candidate(i, v[i], hi), floor);
                }
            }
            d.iter_mut().for_each(|x| *x = 0.0);
            let cg_iterations = solve_shifted(&g, &k, &rhs, &mut d, linear_tol, opts.max_cg_iter)?;

            let v_sup = v.iter().fold(0.0, |m, &x| f64::max(m, fmath::abs(x)));
            let v_min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let min_inc = d.iter().copied().fold(f64::INFINITY, f64::min);
            let inc_sup = d.iter().fold(0.0, |m, &x| f64::max(m, fmath::abs(x)));
            let step_no = trace.steps.len();
            trace.steps.push(MonotoneStep {
                increment_sup: inc_sup,
                min_increment: min_inc,
                iterate_sup: v_sup,
                iterate_min: v_min,
                cg_iterations,
            });
            if min_inc < -1e-12 * v_sup {
                return Err(Error::MonotonicityViolated {
                    step: step_no,
                    min_increment: min_inc,
                });
            }
            for i in 0..n {
                v[i] += d[i];
                trace.max_bracket_excess = f64::max(trace.max_bracket_excess, v[i] - sup[i]);
            }
            if inc_sup < step_tol || inc_sup <= 4.0 * f64::EPSILON * v_sup {
                converged = true;
                break;
            }
        }
        if !converged {
            break;
        }
        residual_into(&g, &c, &v, &mut rhs);
        let res = rhs.iter().fold(0.0, |m, &r| f64::max(m, fmath::abs(r)));
        if res <= opts.residual_tol {
            let phi = ScalarField::from_raw(g, v);
            let stability_eig = spectral::linearization_min_eig(&phi, h, f, a, opts.eigen_tol)?;
            return Ok(LichnerowiczResult {
                phi,
                trace,
                stability_eig,
                residual_sup: res,
            });
        }
        linear_tol = f64::max(linear_tol * 1e-2, 1e-15);
        step_tol *= 1e-2;
    }
    let mut last = vec![0.0; n];
    residual_into(&g, &c, &v, &mut last);
    Err(Error::NoConvergence {
        what: if converged {
            "Lichnerowicz residual audit"
        } else {
            "monotone iteration"
        },
        iterations: trace.steps.len(),
        residual: last.iter().fold(0.0, |m, &r| f64::max(m, fmath::abs(r))),
    })
}

/// Minimal positive solution: coercivity check, subsolution, supersolution,
/// shift, monotone iteration and stability audit.
pub fn minimal_solution(
    h: &ScalarField,
    f: &ScalarField,
    a: &ScalarField,
    opts: &LichnerowiczOptions,
) -> Result<LichnerowiczResult> {
    validate_source(a)?;
    let c = Coeffs::new(h, f, a)?;
    let g = *h.grid();
    if opts.check_coercivity {
        let mu = spectral::principal_eigen(h, opts.eigen_tol)?.value;
        if mu <= 0.0 {
            return Err(Error::NonCoercive { value: mu });
        }
    }
    let sub = build_subsolution(h, f, a, opts)?;
    let sup = match find_supersolution(h, f, a, opts)? {
        Some(s) => s,
        None => {
            let verdict = nonexistence_test(h, f, a, NonexistenceMode::A)?;
            return Err(Error::NoSupersolution(alloc::boxed::Box::new(verdict)));
        }
    };
    let sup_constant = {
        let (lo, hi) = (sup.min(), sup.max());
        (lo == hi).then_some(lo)
    };

    // shrink the subsolution under the supersolution if needed
    let mut w = sub.w.clone();
    let mut scale = sub.scale;
    let mut scratch = vec![0.0; g.len()];
    let mut shrinks = 0;
    while (0..g.len()).any(|i| w.values()[i] > sup.values()[i])
        || !is_strict_subsolution(&g, &c, w.values(), &mut scratch)
    {
        shrinks += 1;
        if shrinks > 200 {
            return Err(Error::SubsolutionScalingFailed);
        }
        scale *= 0.5;
        w = w.map(|v| 0.5 * v);
    }

    let k = choose_static_k(&w, &sup, h, f, a)?;
    let bracket = Bracket { sub: w, sup, k };
    let mut result = monotone_iterate(&bracket, h, f, a, opts)?;
    result.trace.subsolution_delta = sub.delta;
    result.trace.subsolution_scale = scale;
    result.trace.supersolution_constant = sup_constant;

    let bound = -opts.stability_tol * (1.0 + h.sup());
    if result.stability_eig < bound {
        return Err(Error::InvariantViolated(alloc::format!(
            "minimal solution is unstable (eigenvalue {:e})",
            result.stability_eig
        )));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::cubic(6, 1.0).unwrap()
    }

    fn consts(h: f64, f: f64, a: f64) -> (ScalarField, ScalarField, ScalarField) {
        let g = grid();
        (
            ScalarField::constant(g, h),
            ScalarField::constant(g, f),
            ScalarField::constant(g, a),
        )
    }

    #[test]
    fn linear_solve_constants() {
        let g = grid();
        let u = linear_solve(&ScalarField::constant(g, 1.0), &ScalarField::constant(g, 1.0), 1e-14).unwrap();
        assert!(u.values().iter().all(|&v| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn linear_solve_rejects_indefinite() {
        let g = grid();
        let h = ScalarField::constant(g, -5.0);
        let rhs = ScalarField::from_fn(g, |x| 1.0 + x[0]);
        assert!(linear_solve(&h, &rhs, 1e-12).is_err());
    }

    #[test]
    fn subsolution_for_constant_data() {
        let (h, f, a) = consts(1.0, 0.0, 1.0);
        let s = build_subsolution(&h, &f, &a, &Default::default()).unwrap();
        let w0 = s.w.values()[0];
        assert!(s.w.values().iter().all(|&v| (v - w0).abs() < 1e-13));
        assert!(w0 > 0.0 && w0 < 1.0);
        let r = residual(&s.w, &h, &f, &a).unwrap();
        assert!(r.max() < 0.0);
    }

    #[test]
    fn subsolution_rejects_zero_source() {
        let (h, f, a) = consts(1.0, 0.0, 0.0);
        assert!(matches!(
            build_subsolution(&h, &f, &a, &Default::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn constant_supersolutions() {
        let opts = LichnerowiczOptions::default();
        let (h, f, a) = consts(2.0, 1.0, 1.0);
        let s = find_supersolution(&h, &f, &a, &opts).unwrap().unwrap();
        assert!((s.values()[0] - 1.0).abs() < 1e-12);
        let (h, f, a) = consts(1.0, 0.0, 1.0);
        let s = find_supersolution(&h, &f, &a, &opts).unwrap().unwrap();
        assert!((s.values()[0] - 1.0).abs() < 1e-12);
        let (h, f, a) = consts(1.0, 1.0, 1.0);
        assert!(find_supersolution(&h, &f, &a, &opts).unwrap().is_none());
    }

    #[test]
    fn static_k_bracket_iteration() {
        let (h, f, a) = consts(1.0, 0.0, 1.0);
        let g = grid();
        let sub = ScalarField::constant(g, 0.5);
        let sup = ScalarField::constant(g, 2.0);
        let k = choose_static_k(&sub, &sup, &h, &f, &a).unwrap();
        // -dF/du = 1 + 7 u^-8 is largest at u = 0.5
        assert!((k - 1.1 * (1.0 + 7.0 * 256.0)).abs() < 1e-9);
        let opts = LichnerowiczOptions {
            k_strategy: KStrategy::Static,
            ..Default::default()
        };
        let r = monotone_iterate(&Bracket { sub, sup, k }, &h, &f, &a, &opts).unwrap();
        assert!(r.phi.values().iter().all(|&v| (v - 1.0).abs() < 1e-10));
        assert!(r.trace.worst_relative_decrease() >= -1e-12);
    }

    #[test]
    fn balanced_constant_data() {
        let (h, f, a) = consts(2.0, 1.0, 1.0);
        let r = minimal_solution(&h, &f, &a, &Default::default()).unwrap();
        assert!(r.phi.values().iter().all(|&v| (v - 1.0).abs() < 1e-10));
        assert!(r.stability_eig > 0.0);
    }

    #[test]
    fn nonexistent_constant_data_reports_no_supersolution() {
        let (h, f, a) = consts(1.0, 1.0, 1.0);
        match minimal_solution(&h, &f, &a, &Default::default()) {
            Err(Error::NoSupersolution(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
