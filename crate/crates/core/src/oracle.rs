//! Reference solutions used to check the solvers: manufactured fields,
//! the constant-coefficient scalar root, and a dense Newton solve.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::grid::{conf_laplacian, laplacian, same_grid, Grid, ScalarField, VectorField};
use crate::lichnerowicz::{build_subsolution, LichnerowiczOptions};
use crate::{critical_exponent, Error, Result, DIM};

/// Largest grid the dense solver accepts.
pub const DENSE_LIMIT: usize = 1000;

/// An exact field with the coefficients that make it a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedCase {
    pub phi_star: ScalarField,
    pub h: ScalarField,
    pub f: ScalarField,
    pub a: ScalarField,
    pub description: String,
}

/// `a* = (lap phi* + h phi* - f phi*^{2*-1}) phi*^{2*+1}` for a supplied
/// Laplacian of `phi*`.
pub fn manufacture_scalar_with(
    phi_star: &ScalarField,
    lap: &ScalarField,
    h: &ScalarField,
    f: &ScalarField,
) -> Result<ScalarField> {
    for c in [lap, h, f] {
        same_grid(phi_star.grid(), c.grid())?;
    }
    if phi_star.min() <= 0.0 {
        return Err(Error::InvalidInput("phi* must be positive".into()));
    }
    let ts = critical_exponent(DIM) as i32;
    let a: Vec<f64> = (0..phi_star.grid().len())
        .map(|i| {
            let p = phi_star.values()[i];
            (lap.values()[i] + h.values()[i] * p - f.values()[i] * fmath::powi(p, ts - 1))
                * fmath::powi(p, ts + 1)
        })
        .collect();
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NonpositiveManufactured { min });
    }
    ScalarField::new(*phi_star.grid(), a)
}

/// Manufactured source using the discrete Laplacian, so `phi*` solves the
/// discrete equation exactly.
pub fn manufacture_scalar(phi_star: &ScalarField, h: &ScalarField, f: &ScalarField) -> Result<ScalarField> {
    manufacture_scalar_with(phi_star, &laplacian(phi_star), h, f)
}

/// Whether a manufactured source uses the discrete or the exact Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Laplacian {
    Discrete,
    Continuum,
}

/// `phi* = 1 + amplitude sin(2 pi x_0 / L_0)` with constant `h`, `f`.
pub fn sine_case(grid: Grid, amplitude: f64, h0: f64, f0: f64, lap: Laplacian) -> Result<ManufacturedCase> {
    let k = 2.0 * fmath::PI / grid.lengths()[0];
    let phi_star = ScalarField::from_fn(grid, |x| 1.0 + amplitude * fmath::sin(k * x[0]));
    let h = ScalarField::constant(grid, h0);
    let f = ScalarField::constant(grid, f0);
    let a = match lap {
        Laplacian::Discrete => manufacture_scalar(&phi_star, &h, &f)?,
        Laplacian::Continuum => {
            let exact = ScalarField::from_fn(grid, |x| amplitude * k * k * fmath::sin(k * x[0]));
            manufacture_scalar_with(&phi_star, &exact, &h, &f)?
        }
    };
    Ok(ManufacturedCase {
        phi_star,
        h,
        f,
        a,
        description: format!("phi* = 1 + {amplitude} sin(2 pi x/L), h = {h0}, f = {f0}, {lap:?} Laplacian"),
    })
}

/// `P W*` with its mean removed.
pub fn manufacture_vector(w_star: &VectorField) -> VectorField {
    let mut x = conf_laplacian(w_star);
    x.remove_mean();
    x
}

/// Smallest `c > 0` with `h0 c = f0 c^{2*-1} + a0 c^{-2*-1}`.
///
/// The defect `f0 c^{2*-1} + a0 c^{-2*-1} - h0 c` is positive as `c -> 0`;
/// its first sign change on a log grid up to `1e6` is bisected to full
/// precision.
pub fn scalar_minimal_root(h0: f64, f0: f64, a0: f64) -> Result<f64> {
    if !(h0 > 0.0 && a0 > 0.0 && f0 >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "scalar root needs h0 > 0, a0 > 0, f0 >= 0 (got {h0}, {f0}, {a0})"
        )));
    }
    let ts = critical_exponent(DIM) as i32;
    let defect = |c: f64| f0 * fmath::powi(c, ts - 1) + a0 * fmath::powi(c, -ts - 1) - h0 * c;
    let mut lo = 1e-6;
    while defect(lo) <= 0.0 {
        lo *= 0.1;
        if lo < 1e-300 {
            return Err(Error::NoPositiveRoot);
        }
    }
    const POINTS: usize = 2400;
    let ratio = fmath::powf(1e6 / lo, 1.0 / POINTS as f64);
    let mut hi = lo;
    let mut found = false;
    for _ in 0..POINTS {
        let next = hi * ratio;
        if defect(next) <= 0.0 {
            lo = hi;
            hi = next;
            found = true;
            break;
        }
        hi = next;
    }
    if !found {
        return Err(Error::NoPositiveRoot);
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if defect(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if fmath::abs(defect(lo)) <= fmath::abs(defect(hi)) { lo } else { hi })
}

/// Row-major dense matrix with in-place partial-pivot LU.
struct Dense {
    n: usize,
    data: Vec<f64>,
}

impl Dense {
    fn zeros(n: usize) -> Self {
        Dense {
            n,
            data: vec![0.0; n * n],
        }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }

    /// Solves `M x = b`, consuming the matrix.
    fn solve(mut self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let mut x = b.to_vec();
        for col in 0..n {
            let (mut piv, mut best) = (col, 0.0);
            for r in col..n {
                let v = fmath::abs(self.data[r * n + col]);
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if !(best > 0.0) {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    self.data.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = self.data[col * n + col];
            for r in col + 1..n {
                let factor = self.data[r * n + col] / d;
                if factor == 0.0 {
                    continue;
                }
                for j in col + 1..n {
                    self.data[r * n + j] -= factor * self.data[col * n + j];
                }
                x[r] -= factor * x[col];
            }
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for j in r + 1..n {
                s -= self.data[r * n + j] * x[j];
            }
            x[r] = s / self.data[r * n + r];
        }
        Some(x)
    }
}

/// Explicit 7-point periodic Laplacian (positive convention).
fn dense_laplacian(g: &Grid) -> Dense {
    let n = g.len();
    let dims = g.dims();
    let h = g.spacing();
    let mut m = Dense::zeros(n);
    for idx in 0..n {
        let c = g.multi_index(idx);
        for axis in 0..3 {
            let w = 1.0 / (h[axis] * h[axis]);
            *m.at(idx, idx) += 2.0 * w;
            for step in [1, dims[axis] - 1] {
                let mut nb = c;
                nb[axis] = (c[axis] + step) % dims[axis];
                *m.at(idx, g.index(nb[0], nb[1], nb[2])) -= w;
            }
        }
    }
    m
}

/// Damped Newton with dense LU solves on the assembled operator, started
/// from the constant root of the averaged coefficients (or, failing that,
/// from the subsolution). Returns once `|residual|_inf <= tol`.
pub fn dense_reference_solve(h: &ScalarField, f: &ScalarField, a: &ScalarField, tol: f64) -> Result<ScalarField> {
    same_grid(h.grid(), f.grid())?;
    same_grid(h.grid(), a.grid())?;
    let g = *h.grid();
    let n = g.len();
    if n > DENSE_LIMIT {
        return Err(Error::InvalidInput(format!("dense solve limited to {DENSE_LIMIT} cells, got {n}")));
    }
    let ts = critical_exponent(DIM) as i32;
    let lap = dense_laplacian(&g);
    let (hv, fv, av) = (h.values(), f.values(), a.values());
    let residual = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let row = &lap.data[i * n..(i + 1) * n];
                let lu: f64 = row.iter().zip(u).map(|(m, x)| m * x).sum();
                lu + hv[i] * u[i] - fv[i] * fmath::powi(u[i], ts - 1) - av[i] * fmath::powi(u[i], -ts - 1)
            })
            .collect()
    };
    let start = match scalar_minimal_root(h.mean(), f.mean().max(0.0), a.mean()) {
        Ok(c) => vec![c; n],
        Err(_) => build_subsolution(h, f, a, &LichnerowiczOptions::default())?.w.into_values(),
    };
    let sup = |v: &[f64]| v.iter().fold(0.0, |m, &x| f64::max(m, fmath::abs(x)));
    let norm2 = |v: &[f64]| fmath::sqrt(v.iter().map(|x| x * x).sum());

    let mut u = start;
    let mut r = residual(&u);
    const MAX_NEWTON: usize = 60;
    for it in 0..MAX_NEWTON {
        if sup(&r) <= tol {
            return ScalarField::new(g, u);
        }
        let mut jac = Dense {
            n,
            data: lap.data.clone(),
        };
        for i in 0..n {
            *jac.at(i, i) += hv[i] - (ts - 1) as f64 * fv[i] * fmath::powi(u[i], ts - 2)
                + (ts + 1) as f64 * av[i] * fmath::powi(u[i], -ts - 2);
        }
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        let step = jac.solve(&neg).ok_or(Error::NewtonFailed {
            iterations: it,
            residual: sup(&r),
        })?;
        let current = norm2(&r);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(x, d)| x + t * d).collect();
            if trial.iter().all(|&v| v > 0.0) {
                let tr = residual(&trial);
                if norm2(&tr) < (1.0 - 1e-4 * t) * current {
                    u = trial;
                    r = tr;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(Error::NewtonFailed {
                    iterations: it,
                    residual: sup(&r),
                });
            }
        }
    }
    if sup(&r) <= tol {
        return ScalarField::new(g, u);
    }
    Err(Error::NewtonFailed {
        iterations: MAX_NEWTON,
        residual: sup(&r),
    })
}
