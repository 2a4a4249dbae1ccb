//! Coupled fixed-point solver for the constraint system.
//!
//! Each outer step solves the momentum constraint with the current scalar
//! iterate, assembles `A` from the result and takes the minimal solution of
//! the Lichnerowicz equation with that `A`. The gates and the ball radius
//! `N_m` come from the constants pipeline run before the loop.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{
    assemble_a, assemble_static, check_gates, compute_constants, ConstantsBundle, ConstraintData,
    GateVerdict,
};
use crate::criteria::integral_identity_defect;
use crate::fmath;
use crate::grid::{conformal_killing, ScalarField, SymTensorField, TracelessSymField, VectorField};
use crate::lichnerowicz::{minimal_solution, residual, LichnerowiczOptions, LichnerowiczResult};
use crate::momentum::{solve_momentum, MomentumOptions, MomentumResult};
use crate::spectral::{estimate_c1, estimate_s_h, principal_eigen};
use crate::{critical_exponent, Error, Result, DIM};

/// Slack allowed on the ball invariant `|eta_k|_inf <= N_m`.
pub const BALL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    /// Gates must pass; theory invariants are asserted.
    Strict,
    /// Gates are recorded only.
    Permissive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverOptions {
    /// Stop when `|eta_{k+1} - eta_k|_inf < outer_tol`.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Relaxation `theta` in `(0, 1]`; `1` is the plain map.
    pub relax: f64,
    pub mode: GateMode,
    /// Bound on the final Lichnerowicz and momentum residuals.
    pub residual_tol: f64,
    pub sobolev_seeds: usize,
    pub c1_probes: usize,
    pub seed: u64,
    pub lichnerowicz: LichnerowiczOptions,
    pub momentum: MomentumOptions,
}

impl Default for DriverOptions {
    fn default() -> Self {
        DriverOptions {
            outer_tol: 1e-10,
            max_outer: 50,
            relax: 1.0,
            mode: GateMode::Strict,
            residual_tol: 1e-8,
            sobolev_seeds: 6,
            c1_probes: 6,
            seed: 0,
            lichnerowicz: LichnerowiczOptions::default(),
            momentum: MomentumOptions::default(),
        }
    }
}

/// Where the first outer iterate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartField {
    /// `phi_m`, the solution defining `N_m`.
    BallSolution,
    /// The constant 1, used when the constants pipeline failed.
    UnitConstant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub eta_sup: f64,
    pub eta_min: f64,
    pub increment: f64,
    pub lichnerowicz_residual: f64,
    pub momentum_residual: f64,
    pub identity_defect: f64,
    pub stability_eig: f64,
    /// Worst `min(v_{k+1} - v_k) / |v_k|_inf` inside the scalar solve.
    pub worst_monotone_step: f64,
    pub kernel_discarded: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub outer_iterations: usize,
    pub records: Vec<IterationRecord>,
    pub gates: Option<GateVerdict>,
    pub constants: Option<ConstantsBundle>,
    /// Why the constants pipeline stopped, in permissive runs.
    pub setup_error: Option<String>,
    pub start: StartField,
    pub relax: f64,
    pub cmc_shortcut: bool,
    /// `min_k min eta_k`, including the start field.
    pub delta0: f64,
    pub final_lichnerowicz_residual: f64,
    pub final_momentum_residual: f64,
    pub final_identity_defect: f64,
    /// `|T(phi) - phi|_inf` for one more outer step at the result.
    pub fixed_point_defect: f64,
}

/// Physical initial data reconstructed from a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalData {
    /// `phi^{4/(n-2)}`, multiplying the flat metric.
    pub metric_factor: ScalarField,
    /// `K = (tau/n) phi^{4/(n-2)} g + phi^{-2} (U + LW)`.
    pub k: SymTensorField,
    pub psi: ScalarField,
    /// `phi^{-2n/(n-2)} pi`.
    pub pi: ScalarField,
    /// `max |phi^{-4/(n-2)} tr K - tau|`.
    pub trace_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledResult {
    pub phi: ScalarField,
    pub w: VectorField,
    pub lw: TracelessSymField,
    pub trace: SolveTrace,
    pub physical: PhysicalData,
}

/// Minimal solution of `Delta phi + R_psi phi = B phi^{2*-1} + C phi^{-2*-1}`
/// and its sup norm `N_m`.
pub fn compute_nm(
    r_psi: &ScalarField,
    b: &ScalarField,
    c_big: f64,
    opts: &LichnerowiczOptions,
) -> Result<(f64, ScalarField)> {
    if !(c_big > 0.0 && c_big.is_finite()) {
        return Err(Error::InvalidInput(format!("C must be positive, got {c_big}")));
    }
    let a = ScalarField::constant(*r_psi.grid(), c_big);
    let sol = minimal_solution(r_psi, b, &a, opts)?;
    Ok((sol.phi.sup(), sol.phi))
}

struct Setup {
    r_psi: ScalarField,
    b: ScalarField,
    constants: Option<ConstantsBundle>,
    gates: Option<GateVerdict>,
    setup_error: Option<String>,
    start: Option<ScalarField>,
    coercive: bool,
}

/// `mu -> S_h -> C1 -> C -> N_m -> epsilon`, then the gates.
fn constants_pipeline(
    data: &ConstraintData,
    r_psi: &ScalarField,
    b: &ScalarField,
    opts: &DriverOptions,
) -> Result<(ConstantsBundle, ScalarField)> {
    let mu = principal_eigen(r_psi, opts.lichnerowicz.eigen_tol)?.value;
    if mu <= 0.0 {
        return Err(Error::NonCoercive { value: mu });
    }
    let s_h = estimate_s_h(r_psi, opts.sobolev_seeds, opts.seed)?;
    let c1 = estimate_c1(data.grid(), opts.c1_probes, opts.seed.wrapping_add(1))?;
    let partial = compute_constants(data, mu, s_h, c1, None)?;
    let lopts = LichnerowiczOptions {
        check_coercivity: false,
        ..opts.lichnerowicz
    };
    let (n_m, phi_m) = compute_nm(r_psi, b, partial.c_big, &lopts)?;
    Ok((compute_constants(data, mu, s_h, c1, Some(n_m))?, phi_m))
}

/// Constants bundle and gate verdicts for `data` without solving.
pub fn analyze(data: &ConstraintData, opts: &DriverOptions) -> Result<(ConstantsBundle, GateVerdict)> {
    let (r_psi, b) = assemble_static(data)?;
    let (constants, _) = constants_pipeline(data, &r_psi, &b, opts)?;
    let gates = check_gates(data, &constants)?;
    Ok((constants, gates))
}

fn setup(data: &ConstraintData, opts: &DriverOptions) -> Result<Setup> {
    if !(opts.relax > 0.0 && opts.relax <= 1.0) {
        return Err(Error::InvalidInput(format!("relaxation must lie in (0, 1], got {}", opts.relax)));
    }
    if opts.max_outer == 0 {
        return Err(Error::InvalidInput("max_outer must be at least 1".into()));
    }
    let (r_psi, b) = assemble_static(data)?;
    match constants_pipeline(data, &r_psi, &b, opts) {
        Ok((constants, phi_m)) => {
            let gates = check_gates(data, &constants)?;
            if opts.mode == GateMode::Strict && !gates.passed() {
                return Err(Error::GatesFailed(Box::new(gates)));
            }
            Ok(Setup {
                r_psi,
                b,
                constants: Some(constants),
                gates: Some(gates),
                setup_error: None,
                start: Some(phi_m),
                coercive: true,
            })
        }
        Err(e) if opts.mode == GateMode::Permissive && !matches!(e, Error::InvalidInput(_) | Error::GridMismatch) => {
            Ok(Setup {
                r_psi,
                b,
                constants: None,
                gates: None,
                setup_error: Some(e.to_string()),
                start: None,
                coercive: false,
            })
        }
        Err(e) => Err(e),
    }
}

/// One application of the outer map.
struct OuterStep {
    momentum: MomentumResult,
    a: ScalarField,
    scalar: LichnerowiczResult,
}

fn outer_step(
    data: &ConstraintData,
    r_psi: &ScalarField,
    b: &ScalarField,
    eta: &ScalarField,
    opts: &DriverOptions,
    lopts: &LichnerowiczOptions,
) -> Result<OuterStep> {
    let momentum = solve_momentum(eta, &data.tau, &data.pi, &data.psi, &opts.momentum)?;
    let a = assemble_a(&data.pi, &data.u, &momentum.lw)?;
    let scalar = minimal_solution(r_psi, b, &a, lopts)?;
    Ok(OuterStep { momentum, a, scalar })
}

fn run(data: &ConstraintData, opts: &DriverOptions, single_step: bool) -> Result<CoupledResult> {
    let Setup {
        r_psi,
        b,
        mut constants,
        gates,
        setup_error,
        start,
        coercive,
    } = setup(data, opts)?;
    let strict = opts.mode == GateMode::Strict;
    let ball = constants.as_ref().and_then(|c| c.n_m);
    let lopts = LichnerowiczOptions {
        check_coercivity: !coercive,
        ..opts.lichnerowicz
    };
    let (mut eta, start_kind) = match start {
        Some(phi_m) => (phi_m, StartField::BallSolution),
        None => (ScalarField::constant(*data.grid(), 1.0), StartField::UnitConstant),
    };
    let check_ball = |eta: &ScalarField| -> Result<()> {
        if let (true, Some(n_m)) = (strict, ball) {
            if eta.sup() > n_m + BALL_SLACK {
                return Err(Error::InvariantViolated(format!(
                    "iterate left the N_m ball: |eta|_inf = {:e} > {n_m:e}",
                    eta.sup()
                )));
            }
        }
        Ok(())
    };
    check_ball(&eta)?;

    let mut records = Vec::new();
    let mut delta0 = eta.min();
    let mut converged = false;
    let mut last_increment = f64::INFINITY;
    for k in 1..=opts.max_outer {
        let step = outer_step(data, &r_psi, &b, &eta, opts, &lopts).map_err(|e| Error::Inner {
            iteration: k,
            source: Box::new(e),
        })?;
        let next = if opts.relax == 1.0 {
            step.scalar.phi.clone()
        } else {
            eta.zip_map(&step.scalar.phi, |old, new| (1.0 - opts.relax) * old + opts.relax * new)?
        };
        let increment = next.sup_distance(&eta)?;
        records.push(IterationRecord {
            eta_sup: next.sup(),
            eta_min: next.min(),
            increment,
            lichnerowicz_residual: step.scalar.residual_sup,
            momentum_residual: step.momentum.residual,
            identity_defect: integral_identity_defect(&step.scalar.phi, &r_psi, &b, &step.a)?,
            stability_eig: step.scalar.stability_eig,
            worst_monotone_step: step.scalar.trace.worst_relative_decrease(),
            kernel_discarded: step.momentum.kernel_discarded,
        });
        check_ball(&next)?;
        delta0 = f64::min(delta0, next.min());
        if strict && next.min() < delta0 - 1e-12 {
            return Err(Error::InvariantViolated("iterate fell below delta0".into()));
        }
        eta = next;
        last_increment = increment;
        if single_step || increment < opts.outer_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::OuterNotConverged {
            iterations: records.len(),
            increment: last_increment,
        });
    }
    let outer_iterations = records.len();

    // audit at the returned field: W(phi), the residuals, one more outer step
    let phi = eta;
    let audit = outer_step(data, &r_psi, &b, &phi, opts, &lopts).map_err(|e| Error::Inner {
        iteration: outer_iterations + 1,
        source: Box::new(e),
    })?;
    let el_res = residual(&phi, &r_psi, &b, &audit.a)?.sup();
    let identity = integral_identity_defect(&phi, &r_psi, &b, &audit.a)?;
    let fixed_point_defect = audit.scalar.phi.sup_distance(&phi)?;
    if el_res > opts.residual_tol || audit.momentum.residual > opts.residual_tol {
        return Err(Error::NoConvergence {
            what: "joint residual audit",
            iterations: outer_iterations,
            residual: f64::max(el_res, audit.momentum.residual),
        });
    }
    if let Some(c) = constants.as_mut() {
        c.delta0 = Some(delta0);
    }
    let physical = export_initial_data(&phi, &audit.momentum.w, data)?;
    Ok(CoupledResult {
        w: audit.momentum.w,
        lw: audit.momentum.lw,
        trace: SolveTrace {
            outer_iterations,
            records,
            gates,
            constants,
            setup_error,
            start: start_kind,
            relax: opts.relax,
            cmc_shortcut: single_step,
            delta0,
            final_lichnerowicz_residual: el_res,
            final_momentum_residual: audit.momentum.residual,
            final_identity_defect: identity,
            fixed_point_defect,
        },
        phi,
        physical,
    })
}

/// Picard iteration of the outer map from `phi_m`. CMC data stops after one
/// step since the momentum source no longer depends on the iterate.
pub fn fixed_point_solve(data: &ConstraintData, opts: &DriverOptions) -> Result<CoupledResult> {
    run(data, opts, data.is_cmc())
}

/// Semi-decoupled solve for constant `tau`: one momentum solve, one scalar
/// solve.
pub fn cmc_solve(data: &ConstraintData, opts: &DriverOptions) -> Result<CoupledResult> {
    if !data.is_cmc() {
        return Err(Error::NotCmc {
            grad_tau: data.grad_tau_sup(),
        });
    }
    run(data, opts, true)
}

/// Physical data `(phi^{4/(n-2)} g, K, psi, phi^{-2n/(n-2)} pi)`.
pub fn export_initial_data(phi: &ScalarField, w: &VectorField, data: &ConstraintData) -> Result<PhysicalData> {
    crate::grid::same_grid(phi.grid(), w.grid())?;
    crate::grid::same_grid(phi.grid(), data.grid())?;
    if phi.min() <= 0.0 {
        return Err(Error::InvalidInput("phi must be positive".into()));
    }
    let ts = critical_exponent(DIM) as i32;
    let n = DIM as f64;
    let g = *phi.grid();
    let len = g.len();
    let lw = conformal_killing(w);
    let sum = data.u.add(&lw)?;
    let metric: Vec<f64> = phi.values().iter().map(|&p| fmath::powi(p, ts - 2)).collect();
    let mut k: [Vec<f64>; 6] = core::array::from_fn(|_| vec![0.0; len]);
    for (slot, comp) in k.iter_mut().enumerate() {
        let free = &sum.components()[slot];
        for i in 0..len {
            let p = phi.values()[i];
            comp[i] = free[i] / (p * p);
            if slot < 3 {
                comp[i] += data.tau.values()[i] / n * metric[i];
            }
        }
    }
    let pi: Vec<f64> = (0..len)
        .map(|i| data.pi.values()[i] * fmath::powi(phi.values()[i], -ts))
        .collect();
    let k = SymTensorField::new(g, k)?;
    let trace_defect = (0..len)
        .map(|i| fmath::abs(k.trace_at(i) / metric[i] - data.tau.values()[i]))
        .fold(0.0, f64::max);
    Ok(PhysicalData {
        metric_factor: ScalarField::new(g, metric)?,
        k,
        psi: data.psi.clone(),
        pi: ScalarField::new(g, pi)?,
        trace_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::PotentialSpec;
    use crate::Grid;

    fn vacuum(grid: Grid, tau: f64, u_amp: f64) -> ConstraintData {
        let k = 2.0 * fmath::PI / grid.lengths()[2];
        let mut comps: [Vec<f64>; 6] = core::array::from_fn(|_| vec![0.0; grid.len()]);
        for i in 0..grid.len() {
            comps[3][i] = u_amp * fmath::sin(k * grid.coords(i)[2]);
        }
        ConstraintData::new(
            ScalarField::constant(grid, 0.0),
            ScalarField::constant(grid, tau),
            ScalarField::zeros(grid),
            TracelessSymField::new(grid, comps).unwrap(),
            PotentialSpec::Constant(1.0),
            ScalarField::constant(grid, 8.0),
        )
        .unwrap()
    }

    #[test]
    fn nm_examples() {
        let g = Grid::cubic(6, 1.0).unwrap();
        let opts = LichnerowiczOptions::default();
        let (nm, _) = compute_nm(&ScalarField::constant(g, 2.0), &ScalarField::constant(g, 1.0), 1.0, &opts).unwrap();
        assert!((nm - 1.0).abs() < 1e-10);
        let (nm, _) = compute_nm(&ScalarField::constant(g, 1.0), &ScalarField::zeros(g), 1.0, &opts).unwrap();
        assert!((nm - 1.0).abs() < 1e-10);
        let (half, _) = compute_nm(&ScalarField::constant(g, 2.0), &ScalarField::constant(g, 1.0), 0.5, &opts).unwrap();
        assert!(half < 1.0);
    }

    #[test]
    fn export_identity_factor() {
        let g = Grid::cubic(6, 1.0).unwrap();
        let data = vacuum(g, 0.7, 0.0);
        let one = ScalarField::constant(g, 1.0);
        let out = export_initial_data(&one, &VectorField::zeros(g), &data).unwrap();
        for a in 0..3 {
            assert!(out.k.component(a, a).iter().all(|&v| (v - 0.7 / 3.0).abs() < 1e-16));
        }
        assert!(out.trace_defect <= 1e-15);
    }

    #[test]
    fn export_transforms_momentum() {
        let g = Grid::cubic(6, 1.0).unwrap();
        let mut data = vacuum(g, 0.7, 1e-3);
        data.pi = ScalarField::constant(g, 1.0);
        let two = ScalarField::constant(g, 2.0);
        let out = export_initial_data(&two, &VectorField::zeros(g), &data).unwrap();
        assert!(out.pi.values().iter().all(|&v| v == 0.015625));
        assert!(out.trace_defect <= 1e-10 * 1.7);
    }

    #[test]
    fn cmc_requires_constant_tau() {
        let g = Grid::cubic(6, 1.0).unwrap();
        let mut data = vacuum(g, 1.0, 1e-3);
        data.tau = ScalarField::from_fn(g, |x| 1.0 + 1e-3 * fmath::sin(2.0 * fmath::PI * x[0]));
        assert!(matches!(cmc_solve(&data, &DriverOptions::default()), Err(Error::NotCmc { .. })));
    }

    #[test]
    fn cmc_vacuum_runs_one_step() {
        let g = Grid::cubic(8, 1.0).unwrap();
        let data = vacuum(g, 1.0, 1e-3);
        let opts = DriverOptions {
            sobolev_seeds: 2,
            c1_probes: 2,
            ..Default::default()
        };
        let res = fixed_point_solve(&data, &opts).unwrap();
        assert_eq!(res.trace.outer_iterations, 1);
        assert_eq!(res.w.max_abs_component(), 0.0);
        let cmc = cmc_solve(&data, &opts).unwrap();
        assert_eq!(cmc.phi, res.phi);
    }
}
