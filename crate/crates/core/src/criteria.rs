//! Necessary conditions, non-existence tests, the integral identity and the
//! energy functional.

use alloc::format;
use alloc::string::String;

use crate::fmath;
use crate::grid::{grad_sq, same_grid, ScalarField};
use crate::{conformal_coupling, critical_exponent, Result, DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// A prerequisite quantity is undefined, so the inequality says nothing.
    Inconclusive,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        }
    }
}

/// Outcome of an inequality check with both sides attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: Status,
    pub lhs: f64,
    pub rhs: f64,
    pub detail: String,
}

impl Verdict {
    pub fn new(status: Status, lhs: f64, rhs: f64, detail: impl Into<String>) -> Self {
        Verdict {
            status,
            lhs,
            rhs,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// `int |grad psi|^2 < int R`; pass iff the strict inequality holds.
pub fn necessary_condition(psi: &ScalarField, r: &ScalarField) -> Result<Verdict> {
    same_grid(psi.grid(), r.grid())?;
    let lhs = grad_sq(psi).integral();
    let rhs = r.integral();
    let status = if lhs < rhs { Status::Pass } else { Status::Fail };
    Ok(Verdict::new(
        status,
        lhs,
        rhs,
        "int |grad psi|^2 < int R (positive Yamabe type is necessary when B >= 0)",
    ))
}

/// Relative defect of the integrated Lichnerowicz equation,
/// `|int(B phi^{2*-1} + A phi^{-2*-1} - R_psi phi)| / (1 + |int R_psi phi|)`.
pub fn integral_identity_defect(
    phi: &ScalarField,
    r_psi: &ScalarField,
    b: &ScalarField,
    a: &ScalarField,
) -> Result<f64> {
    for f in [r_psi, b, a] {
        same_grid(phi.grid(), f.grid())?;
    }
    let ts = critical_exponent(DIM) as i32;
    let dv = phi.grid().volume_element();
    let (mut defect, mut linear) = (0.0, 0.0);
    for i in 0..phi.grid().len() {
        let p = phi.values()[i];
        let lin = r_psi.values()[i] * p;
        defect += b.values()[i] * fmath::powi(p, ts - 1) + a.values()[i] * fmath::powi(p, -ts - 1) - lin;
        linear += lin;
    }
    Ok(fmath::abs(defect * dv) / (1.0 + fmath::abs(linear * dv)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonexistenceMode {
    /// Bound in terms of `pi` and the background curvature `|R|`.
    Pi,
    /// Bound in terms of the full coefficient `A` and `R_psi^+`.
    A,
}

/// Sufficient condition for the Lichnerowicz equation to have no positive
/// solution. `Pass` means non-existence is certified.
///
/// Mode [`NonexistenceMode::Pi`] takes `(R, B, pi)`:
/// `int |pi|^{(n+2)/(2n)} > ((n-1)^{n-1} c_n^{n-1} / n^n)^{(n+2)/(4n)}
///  int |R|^{(n+2)/4} / (min B)^{(n-1)(n+2)/(4n)}`.
///
/// Mode [`NonexistenceMode::A`] takes `(R_psi, B, A)`:
/// `int A^{(n+2)/(4n)} > ((n-1)^{n-1} / n^n)^{(n+2)/(4n)}
///  (min B)^{-(n-1)(n+2)/(4n)} int (R_psi^+)^{(n+2)/4}`.
///
/// Inconclusive when `min B <= 0`.
pub fn nonexistence_test(
    curvature: &ScalarField,
    b: &ScalarField,
    source: &ScalarField,
    mode: NonexistenceMode,
) -> Result<Verdict> {
    same_grid(curvature.grid(), b.grid())?;
    same_grid(curvature.grid(), source.grid())?;
    let n = DIM as f64;
    let min_b = b.min();
    let dv = b.grid().volume_element();
    let source_exp = match mode {
        NonexistenceMode::Pi => (n + 2.0) / (2.0 * n),
        NonexistenceMode::A => (n + 2.0) / (4.0 * n),
    };
    let lhs = source
        .values()
        .iter()
        .map(|&s| fmath::powf(fmath::abs(s), source_exp))
        .sum::<f64>()
        * dv;
    if min_b <= 0.0 {
        return Ok(Verdict::new(
            Status::Inconclusive,
            lhs,
            f64::NAN,
            format!("min B = {min_b:e} <= 0: criterion does not apply"),
        ));
    }
    let curv_exp = (n + 2.0) / 4.0;
    let b_exp = (n - 1.0) * (n + 2.0) / (4.0 * n);
    let base = match mode {
        NonexistenceMode::Pi => {
            fmath::powf(n - 1.0, n - 1.0) * fmath::powf(conformal_coupling(DIM), n - 1.0)
                / fmath::powf(n, n)
        }
        NonexistenceMode::A => fmath::powf(n - 1.0, n - 1.0) / fmath::powf(n, n),
    };
    let curv_int = curvature
        .values()
        .iter()
        .map(|&r| {
            let r = match mode {
                NonexistenceMode::Pi => fmath::abs(r),
                NonexistenceMode::A => f64::max(r, 0.0),
            };
            fmath::powf(r, curv_exp)
        })
        .sum::<f64>()
        * dv;
    let rhs = fmath::powf(base, (n + 2.0) / (4.0 * n)) * curv_int / fmath::powf(min_b, b_exp);
    let status = if lhs > rhs { Status::Pass } else { Status::Fail };
    let detail = match mode {
        NonexistenceMode::Pi => "int |pi|^(5/6) vs curvature bound: pass certifies non-existence",
        NonexistenceMode::A => "int A^(5/12) vs R_psi^+ bound: pass certifies non-existence",
    };
    Ok(Verdict::new(status, lhs, rhs, detail))
}

/// Closed-form `min_{X>0} (X + c X^{1-n}) = n / (n-1)^{(n-1)/n} c^{1/n}`.
pub fn x_minimum(n: usize, c: f64) -> f64 {
    let n = n as f64;
    n / fmath::powf(n - 1.0, (n - 1.0) / n) * fmath::powf(c, 1.0 / n)
}

/// `I_0(eta) = 1/2 int(|grad eta|^2 + R_psi eta^2) - 1/2* int B eta^{2*}
/// + 1/2* int A eta^{-2*}`.
pub fn energy(eta: &ScalarField, r_psi: &ScalarField, b: &ScalarField, a: &ScalarField) -> Result<f64> {
    for f in [r_psi, b, a] {
        same_grid(eta.grid(), f.grid())?;
    }
    let ts = critical_exponent(DIM);
    let tsi = ts as i32;
    let g2 = grad_sq(eta);
    let mut s = 0.0;
    for i in 0..eta.grid().len() {
        let e = eta.values()[i];
        s += 0.5 * (g2.values()[i] + r_psi.values()[i] * e * e)
            - b.values()[i] * fmath::powi(e, tsi) / ts
            + a.values()[i] * fmath::powi(e, -tsi) / ts;
    }
    Ok(s * eta.grid().volume_element())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Grid;

    fn g() -> Grid {
        Grid::cubic(8, 1.0).unwrap()
    }

    #[test]
    fn necessary_condition_examples() {
        let grid = g();
        let psi = ScalarField::constant(grid, 0.3);
        let r = ScalarField::constant(grid, 1.0);
        assert!(necessary_condition(&psi, &r).unwrap().passed());
        let psi = ScalarField::from_fn(grid, |x| fmath::sin(2.0 * fmath::PI * x[0]));
        let r0 = ScalarField::zeros(grid);
        assert_eq!(necessary_condition(&psi, &r0).unwrap().status, Status::Fail);
    }

    #[test]
    fn identity_defect_vanishes_for_constant_solution() {
        let grid = g();
        let one = ScalarField::constant(grid, 1.0);
        let d = integral_identity_defect(
            &one,
            &ScalarField::constant(grid, 2.0),
            &one,
            &one,
        )
        .unwrap();
        assert!(d <= 1e-14);
    }

    #[test]
    fn energy_of_unit_field() {
        let grid = g();
        let one = ScalarField::constant(grid, 1.0);
        let e = energy(&one, &ScalarField::constant(grid, 2.0), &one, &one).unwrap();
        assert!((e - 1.0).abs() < 1e-14);
        // B = A: only the R_psi term survives at eta = 1
        let b = ScalarField::constant(grid, 0.7);
        let e = energy(&one, &ScalarField::constant(grid, 3.0), &b, &b).unwrap();
        assert!((e - 1.5).abs() < 1e-14);
    }

    #[test]
    fn vanishing_curvature_certifies_nonexistence() {
        let grid = g();
        let v = nonexistence_test(
            &ScalarField::constant(grid, -1.0),
            &ScalarField::constant(grid, 1.0),
            &ScalarField::constant(grid, 0.01),
            NonexistenceMode::A,
        )
        .unwrap();
        assert_eq!(v.rhs, 0.0);
        assert!(v.passed());
    }

    #[test]
    fn nonpositive_b_is_inconclusive() {
        let grid = g();
        let v = nonexistence_test(
            &ScalarField::constant(grid, 1.0),
            &ScalarField::constant(grid, 0.0),
            &ScalarField::constant(grid, 1.0),
            NonexistenceMode::Pi,
        )
        .unwrap();
        assert_eq!(v.status, Status::Inconclusive);
    }

    #[test]
    fn x_minimum_n3() {
        let expect = 3.0 / fmath::powf(2.0, 2.0 / 3.0);
        assert!((x_minimum(3, 1.0) - expect).abs() < 1e-15);
        assert!((expect - 1.889881574).abs() < 1e-9);
    }
}
