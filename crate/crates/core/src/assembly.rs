//! Coefficient fields of the Lichnerowicz equation, the scalar constants of
//! the existence argument, and the smallness gates.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::criteria::{Status, Verdict};
use crate::fmath;
use crate::grid::{grad_sq, gradient, same_grid, ScalarField, TracelessSymField};
use crate::{conformal_coupling, critical_exponent, Error, Result, DIM};

/// Safety factor applied to the smallness threshold so the strict
/// inequalities survive floating point.
pub const EPSILON_MARGIN: f64 = 0.99;

/// Scalar-field potential `V`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    /// Cosmological constant, `V = Lambda`.
    Constant(f64),
    /// Klein-Gordon mass term, `V(psi) = m psi^2 / 2`.
    Quadratic(f64),
    /// `V(psi) = sum_k c_k psi^k`, lowest order first.
    Polynomial(Vec<f64>),
}

impl PotentialSpec {
    pub fn eval(&self, psi: f64) -> f64 {
        match self {
            PotentialSpec::Constant(l) => *l,
            PotentialSpec::Quadratic(m) => 0.5 * m * psi * psi,
            PotentialSpec::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * psi + ck),
        }
    }

    /// `V(psi(x))` at every cell; errors if it is negative anywhere.
    pub fn sample(&self, psi: &ScalarField) -> Result<ScalarField> {
        let v = psi.map(|p| self.eval(p));
        let min = v.min();
        if min < 0.0 {
            return Err(Error::NegativePotential { value: min });
        }
        if !v.is_finite() {
            return Err(Error::InvalidInput("potential is not finite on psi".into()));
        }
        Ok(v)
    }
}

/// Free data of the conformal method plus the prescribed background
/// scalar curvature `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintData {
    pub psi: ScalarField,
    pub tau: ScalarField,
    pub pi: ScalarField,
    pub u: TracelessSymField,
    pub potential: PotentialSpec,
    pub r: ScalarField,
}

impl ConstraintData {
    pub fn new(
        psi: ScalarField,
        tau: ScalarField,
        pi: ScalarField,
        u: TracelessSymField,
        potential: PotentialSpec,
        r: ScalarField,
    ) -> Result<Self> {
        let g = psi.grid();
        same_grid(g, tau.grid())?;
        same_grid(g, pi.grid())?;
        same_grid(g, u.grid())?;
        same_grid(g, r.grid())?;
        Ok(ConstraintData {
            psi,
            tau,
            pi,
            u,
            potential,
            r,
        })
    }

    pub fn grid(&self) -> &crate::Grid {
        self.psi.grid()
    }

    /// `sup |grad tau|`.
    pub fn grad_tau_sup(&self) -> f64 {
        gradient(&self.tau).sup()
    }

    /// True when `sup |grad tau| <= 1e-14 (1 + sup |tau|)`.
    pub fn is_cmc(&self) -> bool {
        self.grad_tau_sup() <= 1e-14 * (1.0 + self.tau.sup())
    }
}

/// `R_psi = c_n (R - |grad psi|^2)` and `B = c_n (2 V(psi) - (n-1)/n tau^2)`.
pub fn assemble_static(data: &ConstraintData) -> Result<(ScalarField, ScalarField)> {
    let cn = conformal_coupling(DIM);
    let n = DIM as f64;
    let g2 = grad_sq(&data.psi);
    let r_psi = data.r.zip_map(&g2, |r, g| cn * (r - g))?;
    let v = data.potential.sample(&data.psi)?;
    let b = v.zip_map(&data.tau, |v, t| cn * (2.0 * v - (n - 1.0) / n * t * t))?;
    Ok((r_psi, b))
}

/// `A = c_n (|U + LW|^2 + pi^2)` with the full Frobenius square.
pub fn assemble_a(
    pi: &ScalarField,
    u: &TracelessSymField,
    lw: &TracelessSymField,
) -> Result<ScalarField> {
    let cn = conformal_coupling(DIM);
    let sum = u.add(lw)?;
    same_grid(pi.grid(), u.grid())?;
    let values = (0..pi.grid().len())
        .map(|i| cn * (sum.frobenius_sq_at(i) + pi.values()[i] * pi.values()[i]))
        .collect();
    ScalarField::new(*pi.grid(), values)
}

/// Every scalar quantity the existence argument uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsBundle {
    pub c_n: f64,
    pub two_star: f64,
    /// Principal eigenvalue of `Delta + R_psi`.
    pub mu_g_psi: f64,
    /// Sobolev constant estimate for `H1_{R_psi}`.
    pub s_h: f64,
    pub c_big: f64,
    /// Elliptic constant of the vector solve, `|LW|_inf <= C1 |X|_inf`.
    pub c1: f64,
    pub n_m: Option<f64>,
    pub epsilon: Option<f64>,
    /// Uniform lower bound on the outer iterates, filled by the driver.
    pub delta0: Option<f64>,
    pub v_g: f64,
    pub integral_r_psi: f64,
    pub max_potential: f64,
    pub grad_psi_sup: f64,
}

/// `C(n) = (n-2)^{-1} (2(n-1))^{-2*/2}`.
pub fn dimensional_constant(n: usize) -> f64 {
    let nf = n as f64;
    fmath::powf(2.0 * (nf - 1.0), -critical_exponent(n) / 2.0) / (nf - 2.0)
}

/// `C(n) V_g^{-1} (2 c_n S_h max V)^{1-n} (int R_psi)^{-2*/2}`.
pub fn c_big_formula(v_g: f64, s_h: f64, max_v: f64, integral_r_psi: f64) -> f64 {
    let n = DIM as f64;
    let cn = conformal_coupling(DIM);
    dimensional_constant(DIM) / v_g
        * fmath::powf(2.0 * cn * s_h * max_v, 1.0 - n)
        * fmath::powf(integral_r_psi, -critical_exponent(DIM) / 2.0)
}

/// Smallness threshold, `0.99 * min(eps_a, eps_b)` with
/// `eps_a = sqrt(C / ((3 + 4 C1^2 (N_m^{2*2*} + |grad psi|_inf^2)) c_n))` and
/// `eps_b = N_m^{2*} / ((n-1)/n N_m^{2*} + |grad psi|_inf)`.
pub fn epsilon_formula(c_big: f64, c1: f64, n_m: f64, grad_psi_sup: f64) -> f64 {
    let n = DIM as f64;
    let cn = conformal_coupling(DIM);
    let ts = critical_exponent(DIM);
    let nm_ts = fmath::powf(n_m, ts);
    let eps_a = fmath::sqrt(
        c_big / ((3.0 + 4.0 * c1 * c1 * (nm_ts * nm_ts + grad_psi_sup * grad_psi_sup)) * cn),
    );
    let eps_b = nm_ts / ((n - 1.0) / n * nm_ts + grad_psi_sup);
    EPSILON_MARGIN * f64::min(eps_a, eps_b)
}

pub fn compute_constants(
    data: &ConstraintData,
    mu: f64,
    s_h: f64,
    c1: f64,
    n_m: Option<f64>,
) -> Result<ConstantsBundle> {
    if !(s_h > 0.0 && s_h.is_finite()) {
        return Err(Error::InvalidInput(format!("S_h must be positive, got {s_h}")));
    }
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(Error::InvalidInput(format!("C1 must be positive, got {c1}")));
    }
    let (r_psi, _) = assemble_static(data)?;
    let integral_r_psi = r_psi.integral();
    if integral_r_psi <= 0.0 {
        return Err(Error::NonCoercive {
            value: integral_r_psi,
        });
    }
    let max_potential = data.potential.sample(&data.psi)?.max();
    if max_potential <= 0.0 {
        return Err(Error::PotentialVanishes);
    }
    let v_g = data.grid().volume();
    let grad_psi_sup = gradient(&data.psi).sup();
    let c_big = c_big_formula(v_g, s_h, max_potential, integral_r_psi);
    let epsilon = n_m.map(|nm| epsilon_formula(c_big, c1, nm, grad_psi_sup));
    Ok(ConstantsBundle {
        c_n: conformal_coupling(DIM),
        two_star: critical_exponent(DIM),
        mu_g_psi: mu,
        s_h,
        c_big,
        c1,
        n_m,
        epsilon,
        delta0: None,
        v_g,
        integral_r_psi,
        max_potential,
        grad_psi_sup,
    })
}

/// Sub-verdicts of the existence hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct GateVerdict {
    /// `B >= 0` everywhere and `B > 0` somewhere.
    pub sign: Verdict,
    /// `|grad tau|_inf + |pi|_inf + |U|_inf <= epsilon`.
    pub smallness: Verdict,
    /// `|pi|_inf + |U|_inf > 0`.
    pub nondegenerate: Verdict,
    /// `mu_{g,psi} > 0`.
    pub coercivity: Verdict,
}

impl GateVerdict {
    pub fn checks(&self) -> [(&'static str, &Verdict); 4] {
        [
            ("sign", &self.sign),
            ("smallness", &self.smallness),
            ("nondegenerate", &self.nondegenerate),
            ("coercivity", &self.coercivity),
        ]
    }

    pub fn status(&self) -> Status {
        if self.checks().iter().all(|(_, v)| v.passed()) {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn passed(&self) -> bool {
        self.status() == Status::Pass
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (name, v) in self.checks() {
            if !s.is_empty() {
                s.push_str(", ");
            }
            s.push_str(&format!("{name}={}", v.status.as_str()));
        }
        s
    }
}

pub fn check_gates(data: &ConstraintData, constants: &ConstantsBundle) -> Result<GateVerdict> {
    let (_, b) = assemble_static(data)?;
    let max_abs_b = b.sup();
    let min_b = b.min();
    let max_b = b.max();
    let sign_ok = min_b >= -1e-12 * max_abs_b && max_b > 0.0;
    let sign = Verdict::new(
        if sign_ok { Status::Pass } else { Status::Fail },
        min_b,
        0.0,
        format!("min B >= 0 and max B = {max_b:e} > 0"),
    );

    let size = data.grad_tau_sup() + data.pi.sup() + data.u.sup();
    let smallness = match constants.epsilon {
        Some(eps) => Verdict::new(
            if size <= eps { Status::Pass } else { Status::Fail },
            size,
            eps,
            "|grad tau|_inf + |pi|_inf + |U|_inf <= epsilon",
        ),
        None => Verdict::new(
            Status::Inconclusive,
            size,
            f64::NAN,
            "epsilon unavailable (N_m could not be computed)",
        ),
    };

    let free = data.pi.sup() + data.u.sup();
    let nondegenerate = Verdict::new(
        if free > 0.0 { Status::Pass } else { Status::Fail },
        free,
        0.0,
        "|pi|_inf + |U|_inf > 0",
    );

    let mu = constants.mu_g_psi;
    let coercivity = Verdict::new(
        if mu > 0.0 { Status::Pass } else { Status::Fail },
        mu,
        0.0,
        "principal eigenvalue of Delta + R_psi > 0",
    );
    Ok(GateVerdict {
        sign,
        smallness,
        nondegenerate,
        coercivity,
    })
}
