//! Subcommands. Each one fills a [`Manifest`], writes its artifacts to the
//! output directory and maps the result onto the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conformal_core::assembly::{assemble_a, assemble_static, ConstraintData};
use conformal_core::criteria::{
    integral_identity_defect, necessary_condition, nonexistence_test, NonexistenceMode, Status,
};
use conformal_core::driver::{analyze, cmc_solve, fixed_point_solve, CoupledResult, DriverOptions};
use conformal_core::grid::{conf_laplacian, conformal_killing, measure, Measure};
use conformal_core::lichnerowicz::{minimal_solution, residual};
use conformal_core::momentum::{momentum_source, solve_momentum};
use conformal_core::oracle::{sine_case, Laplacian};
use conformal_core::{Error, ScalarField, VectorField};
use serde_json::{json, Value};

use crate::config::Config;
use crate::field_io::{self, Field};
use crate::manifest::{self, num, Manifest};
use crate::{classify, CliError, Exit};

#[derive(Debug, Parser)]
#[command(name = "conformal", version, about = "Conformal Einstein-scalar constraint solver on a periodic 3-torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// key=value configuration file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving the manifest and field files.
    #[arg(long, short, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Also write every field as CSV.
    #[arg(long, global = true)]
    pub csv: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Principal eigenvalue, Sobolev and elliptic estimates, N_m and epsilon.
    Constants,
    /// Existence gates and non-existence criteria; optionally audit a solution.
    Check {
        /// Directory holding `phi.efld` and `w.efld` from a previous solve.
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Coupled fixed-point solve.
    Solve,
    /// Decoupled solve for constant mean curvature.
    SolveCmc,
    /// Single scalar solve with `A` built from `U` and `pi` alone.
    Lichnerowicz {
        /// Directory with `h.efld`, `f.efld`, `a.efld` (as written by `manufacture`).
        #[arg(long)]
        coefficients: Option<PathBuf>,
    },
    /// Single momentum solve.
    Momentum {
        /// Conformal factor; defaults to 1.
        #[arg(long)]
        phi: Option<PathBuf>,
    },
    /// Write a manufactured scalar problem with known solution.
    Manufacture(ManufactureArgs),
    /// Grid refinement study on the continuum-manufactured case.
    Convergence {
        #[command(flatten)]
        case: CaseArgs,
        /// Points per axis, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32])]
        sizes: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LaplacianArg {
    Discrete,
    Continuum,
}

#[derive(Debug, Clone, Args)]
pub struct CaseArgs {
    /// Amplitude of `phi* = 1 + amp sin(2 pi x0 / L0)`.
    #[arg(long, default_value_t = 0.1)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub f0: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ManufactureArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    #[arg(long, value_enum, default_value_t = LaplacianArg::Discrete)]
    pub laplacian: LaplacianArg,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Check { .. } => "check",
            Command::Solve => "solve",
            Command::SolveCmc => "solve-cmc",
            Command::Lichnerowicz { .. } => "lichnerowicz",
            Command::Momentum { .. } => "momentum",
            Command::Manufacture(_) => "manufacture",
            Command::Convergence { .. } => "convergence",
        }
    }
}

/// Field files written during a run.
struct Artifacts {
    dir: PathBuf,
    csv: bool,
    written: Vec<String>,
}

impl Artifacts {
    fn write(&mut self, name: &str, field: Field) -> Result<(), CliError> {
        let path = self.dir.join(format!("{name}.efld"));
        field_io::write(&path, &field)?;
        self.written.push(format!("{name}.efld"));
        if self.csv {
            field_io::write_csv(&self.dir.join(format!("{name}.csv")), &field)?;
            self.written.push(format!("{name}.csv"));
        }
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.into());
        Ok(())
    }
}

pub struct Outcome {
    pub exit: Exit,
    pub manifest: Manifest,
    pub error: Option<String>,
}

/// Runs one command end to end; the manifest is written even on failure.
pub fn run(cli: &Cli) -> Outcome {
    let start = Instant::now();
    let config = match &cli.config {
        Some(path) => Config::load(path),
        None => Err(CliError::input("--config is required")),
    };
    let mut m = Manifest::new(cli.command.name(), config.as_ref().ok());
    let mut art = Artifacts {
        dir: cli.out.clone(),
        csv: cli.csv,
        written: Vec::new(),
    };
    let result = fs::create_dir_all(&art.dir)
        .map_err(|e| CliError::io(&art.dir, e))
        .and(config)
        .and_then(|cfg| dispatch(&cli.command, &cfg, &mut m, &mut art));
    let (exit, error) = match result {
        Ok(exit) => (exit, None),
        Err(e) => {
            if let Some(src) = &e.source {
                describe_error(src, &mut m);
            }
            m.set("error", json!(e.message));
            (e.exit, Some(e.message))
        }
    };
    m.set("artifacts", json!(art.written));
    m.set("exit_code", json!(exit.code()));
    m.set("status", json!(exit.label()));
    m.set("wall_time_s", num(start.elapsed().as_secs_f64()));
    if art.dir.is_dir() {
        let path = art.dir.join("manifest.json");
        if let Err(e) = fs::write(&path, m.to_json()) {
            return Outcome {
                exit: Exit::InvalidInput,
                error: Some(format!("{}: {e}", path.display())),
                manifest: m,
            };
        }
    }
    Outcome { exit, manifest: m, error }
}

/// Puts the diagnostics carried by a solver error into the manifest.
fn describe_error(err: &Error, m: &mut Manifest) {
    match err {
        Error::Inner { iteration, source } => {
            m.set("failed_outer_iteration", json!(iteration));
            describe_error(source, m);
        }
        Error::GatesFailed(g) => m.set("gates", manifest::gates(g)),
        Error::NoSupersolution(v) => m.set("nonexistence", manifest::verdict(v)),
        _ => {}
    }
}

fn dispatch(cmd: &Command, cfg: &Config, m: &mut Manifest, art: &mut Artifacts) -> Result<Exit, CliError> {
    let opts = cfg.driver_options();
    match cmd {
        Command::Constants => {
            let (c, g) = analyze(&cfg.data()?, &opts)?;
            m.set("constants", manifest::constants(&c));
            m.set("gates", manifest::gates(&g));
            Ok(Exit::Success)
        }
        Command::Check { against } => check(cfg, &opts, against.as_deref(), m),
        Command::Solve => solve(cfg, &opts, false, m, art),
        Command::SolveCmc => solve(cfg, &opts, true, m, art),
        Command::Lichnerowicz { coefficients } => scalar_solve(cfg, &opts, coefficients.as_deref(), m, art),
        Command::Momentum { phi } => {
            let data = cfg.data()?;
            let eta = match phi {
                Some(p) => field_io::read_on(p, &cfg.grid)?.into_scalar()?,
                None => ScalarField::constant(cfg.grid, 1.0),
            };
            let r = solve_momentum(&eta, &data.tau, &data.pi, &data.psi, &opts.momentum)?;
            m.set("momentum", manifest::momentum(&r));
            art.write("w", Field::Vector(r.w))?;
            art.write("lw", Field::Traceless(r.lw))?;
            Ok(Exit::Success)
        }
        Command::Manufacture(args) => {
            let lap = match args.laplacian {
                LaplacianArg::Discrete => Laplacian::Discrete,
                LaplacianArg::Continuum => Laplacian::Continuum,
            };
            let c = &args.case;
            let case = sine_case(cfg.grid, c.amplitude, c.h0, c.f0, lap)?;
            m.set(
                "manufactured",
                json!({
                    "description": case.description,
                    "a_min": num(case.a.min()),
                    "a_max": num(case.a.max()),
                }),
            );
            art.write("phi_star", Field::Scalar(case.phi_star))?;
            art.write("h", Field::Scalar(case.h))?;
            art.write("f", Field::Scalar(case.f))?;
            art.write("a", Field::Scalar(case.a))?;
            Ok(Exit::Success)
        }
        Command::Convergence { case, sizes } => convergence(cfg, &opts, case, sizes, m, art),
    }
}

fn check(cfg: &Config, opts: &DriverOptions, against: Option<&Path>, m: &mut Manifest) -> Result<Exit, CliError> {
    let data = cfg.data()?;
    let (_, b) = assemble_static(&data)?;
    let necessary = necessary_condition(&data.psi, &data.r)?;
    let nonexistence = nonexistence_test(&data.r, &b, &data.pi, NonexistenceMode::Pi)?;
    let mut ok = necessary.passed() && nonexistence.status != Status::Pass;
    m.set(
        "criteria",
        json!({
            "necessary_condition": manifest::verdict(&necessary),
            "nonexistence_pi": manifest::verdict(&nonexistence),
        }),
    );
    match analyze(&data, opts) {
        Ok((c, g)) => {
            ok &= g.passed();
            m.set("constants", manifest::constants(&c));
            m.set("gates", manifest::gates(&g));
        }
        Err(e) if classify(&e) == Exit::VerdictFail => {
            ok = false;
            m.set("constants_error", json!(e.to_string()));
        }
        Err(e) => return Err(e.into()),
    }
    if let Some(dir) = against {
        let audit = audit_solution(dir, &data, cfg, opts.residual_tol)?;
        ok &= audit.get("passed") == Some(&Value::Bool(true));
        m.set("audit", audit);
    }
    Ok(if ok { Exit::Success } else { Exit::VerdictFail })
}

/// Recomputes both constraint residuals and the integral identity from files.
fn audit_solution(dir: &Path, data: &ConstraintData, cfg: &Config, tol: f64) -> Result<Value, CliError> {
    let phi = field_io::read_on(&dir.join("phi.efld"), &cfg.grid)?.into_scalar()?;
    let w = field_io::read_on(&dir.join("w.efld"), &cfg.grid)?.into_vector()?;
    if phi.min() <= 0.0 {
        return Err(CliError::input("phi.efld is not positive"));
    }
    let (r_psi, b) = assemble_static(data)?;
    let lw = conformal_killing(&w);
    let a = assemble_a(&data.pi, &data.u, &lw)?;
    let el = residual(&phi, &r_psi, &b, &a)?.sup();
    let identity = integral_identity_defect(&phi, &r_psi, &b, &a)?;
    let mut rhs = momentum_source(&phi, &data.tau, &data.pi, &data.psi)?.scaled(-1.0);
    rhs.remove_mean();
    let pw = conf_laplacian(&w);
    let diff: [Vec<f64>; 3] =
        std::array::from_fn(|c| pw.component(c).iter().zip(rhs.component(c)).map(|(p, r)| p - r).collect());
    let mom = measure(&VectorField::new(cfg.grid, diff)?, Measure::L2)?;
    let passed = el <= tol && mom <= tol && identity <= 10.0 * tol;
    Ok(json!({
        "lichnerowicz_residual": num(el),
        "momentum_residual": num(mom),
        "identity_defect": num(identity),
        "tolerance": num(tol),
        "passed": passed,
    }))
}

fn solve(cfg: &Config, opts: &DriverOptions, cmc: bool, m: &mut Manifest, art: &mut Artifacts) -> Result<Exit, CliError> {
    let data = cfg.data()?;
    let res: CoupledResult = if cmc { cmc_solve(&data, opts)? } else { fixed_point_solve(&data, opts)? };
    let t = &res.trace;
    if let Some(c) = &t.constants {
        m.set("constants", manifest::constants(c));
    }
    if let Some(g) = &t.gates {
        m.set("gates", manifest::gates(g));
    }
    m.set("trace", manifest::trace(t));
    m.set(
        "residuals",
        json!({
            "lichnerowicz": num(t.final_lichnerowicz_residual),
            "momentum": num(t.final_momentum_residual),
            "identity_defect": num(t.final_identity_defect),
            "trace_defect": num(res.physical.trace_defect),
        }),
    );
    let p = res.physical;
    art.write("phi", Field::Scalar(res.phi))?;
    art.write("w", Field::Vector(res.w))?;
    art.write("lw", Field::Traceless(res.lw))?;
    art.write("metric_factor", Field::Scalar(p.metric_factor))?;
    art.write("k", Field::Symmetric(p.k))?;
    art.write("pi_physical", Field::Scalar(p.pi))?;
    Ok(Exit::Success)
}

fn scalar_solve(
    cfg: &Config,
    opts: &DriverOptions,
    coefficients: Option<&Path>,
    m: &mut Manifest,
    art: &mut Artifacts,
) -> Result<Exit, CliError> {
    let (h, f, a, reference) = match coefficients {
        Some(dir) => {
            let load = |name: &str| -> Result<ScalarField, CliError> {
                field_io::read_on(&dir.join(format!("{name}.efld")), &cfg.grid)?.into_scalar()
            };
            let star = dir.join("phi_star.efld");
            let reference = if star.exists() { Some(load("phi_star")?) } else { None };
            (load("h")?, load("f")?, load("a")?, reference)
        }
        None => {
            let data = cfg.data()?;
            let (r_psi, b) = assemble_static(&data)?;
            let a = assemble_a(&data.pi, &data.u, &conformal_core::TracelessSymField::zeros(cfg.grid))?;
            (r_psi, b, a, None)
        }
    };
    let r = minimal_solution(&h, &f, &a, &opts.lichnerowicz)?;
    m.set("lichnerowicz", manifest::lichnerowicz(&r));
    m.set("identity_defect", num(integral_identity_defect(&r.phi, &h, &f, &a)?));
    if let Some(star) = reference {
        m.set("error_vs_reference", num(r.phi.sup_distance(&star)?));
    }
    art.write("phi", Field::Scalar(r.phi))?;
    Ok(Exit::Success)
}

/// Least-squares slope of `log(error)` against `log(spacing)`.
pub fn fitted_order(rows: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn convergence(
    cfg: &Config,
    opts: &DriverOptions,
    case: &CaseArgs,
    sizes: &[usize],
    m: &mut Manifest,
    art: &mut Artifacts,
) -> Result<Exit, CliError> {
    if sizes.len() < 2 {
        return Err(CliError::input("convergence needs at least two grid sizes"));
    }
    let mut rows = Vec::new();
    let mut csv = String::from("n,spacing,error\n");
    for &n in sizes {
        let grid = cfg.with_dims([n; 3])?.grid;
        let c = sine_case(grid, case.amplitude, case.h0, case.f0, Laplacian::Continuum)?;
        let r = minimal_solution(&c.h, &c.f, &c.a, &opts.lichnerowicz)?;
        let err = r.phi.sup_distance(&c.phi_star)?;
        let h = grid.spacing()[0];
        csv.push_str(&format!("{n},{h:.16e},{err:.16e}\n"));
        rows.push((h, err));
    }
    let slope = fitted_order(&rows);
    art.write_text("convergence.csv", &csv)?;
    m.set(
        "convergence",
        json!({
            "rows": rows.iter().zip(sizes).map(|(&(h, e), n)| json!({"n": n, "spacing": num(h), "error": num(e)})).collect::<Vec<_>>(),
            "fitted_order": num(slope),
        }),
    );
    Ok(Exit::Success)
}
