//! Flat `key = value` run configuration.
//!
//! ```text
//! grid.n_points = 16            # one value or three
//! grid.lengths = 2pi 1 1        # a trailing `pi` multiplies by pi
//! data.tau.expr-preset = sin1 1.0 1e-3 0
//! data.U.const = 1e-3 01        # tensor presets name a slot
//! data.R.const = 8
//! data.pi.file = pi.efld        # relative to the config file
//! potential.lambda = 1
//! solver.mode = strict
//! ```
//!
//! Unknown or repeated keys are errors. Unset data fields are zero and the
//! potential defaults to `lambda = 0`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use conformal_core::assembly::{ConstraintData, PotentialSpec};
use conformal_core::driver::{DriverOptions, GateMode};
use conformal_core::grid::sym_slot;
use conformal_core::{Grid, ScalarField, TracelessSymField};

use crate::field_io;
use crate::CliError;

const SCALAR_DATA: [&str; 4] = ["psi", "tau", "pi", "R"];
const SOLVER_KEYS: [&str; 7] = ["linear_tol", "outer_tol", "max_outer", "stability_tol", "seed", "mode", "relax"];

/// Named closed-form data presets.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Const(f64),
    /// `offset + amp sin(2 pi x_axis / L_axis)`.
    Sin1 { offset: f64, amp: f64, axis: usize },
    /// `offset + amp prod_a sin(2 pi x_a / L_a)`.
    ProductSines { offset: f64, amp: f64 },
}

impl Preset {
    pub fn sample(&self, grid: Grid) -> ScalarField {
        let l = grid.lengths();
        match *self {
            Preset::Const(c) => ScalarField::constant(grid, c),
            Preset::Sin1 { offset, amp, axis } => {
                ScalarField::from_fn(grid, |x| offset + amp * (2.0 * PI * x[axis] / l[axis]).sin())
            }
            Preset::ProductSines { offset, amp } => ScalarField::from_fn(grid, |x| {
                offset + amp * (0..3).map(|a| (2.0 * PI * x[a] / l[a]).sin()).product::<f64>()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Zero,
    Preset(Preset),
    File(PathBuf),
}

/// Presets fill one slot and the trace is then removed; files carry all six.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSource {
    pub source: Source,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub linear_tol: Option<f64>,
    pub outer_tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub stability_tol: Option<f64>,
    pub seed: u64,
    pub mode: GateMode,
    pub relax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Raw entries as read, for the manifest echo.
    pub entries: BTreeMap<String, String>,
    pub grid: Grid,
    pub scalars: BTreeMap<&'static str, Source>,
    pub u: TensorSource,
    pub potential: PotentialSpec,
    pub solver: SolverConfig,
    pub base_dir: PathBuf,
}

fn number(key: &str, token: &str) -> Result<f64, CliError> {
    let v: f64 = token
        .parse()
        .map_err(|_| CliError::input(format!("{key}: `{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::input(format!("{key}: value must be finite")));
    }
    Ok(v)
}

fn length(key: &str, token: &str) -> Result<f64, CliError> {
    match token.strip_suffix("pi") {
        Some("") => Ok(PI),
        Some(factor) => Ok(number(key, factor)? * PI),
        None => number(key, token),
    }
}

fn integer<T: std::str::FromStr>(key: &str, token: &str) -> Result<T, CliError> {
    token
        .parse()
        .map_err(|_| CliError::input(format!("{key}: `{token}` is not a nonnegative integer")))
}

fn triple<T: Copy>(key: &str, value: &str, parse: impl Fn(&str, &str) -> Result<T, CliError>) -> Result<[T; 3], CliError> {
    let items = value.split_whitespace().map(|t| parse(key, t)).collect::<Result<Vec<_>, _>>()?;
    match items.as_slice() {
        [v] => Ok([*v; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(CliError::input(format!("{key}: expected one or three values"))),
    }
}

fn parse_preset(key: &str, tokens: &[&str]) -> Result<Preset, CliError> {
    let nums = |n: usize| -> Result<Vec<f64>, CliError> {
        if tokens.len() != n + 1 {
            return Err(CliError::input(format!("{key}: preset `{}` takes {n} arguments", tokens[0])));
        }
        tokens[1..].iter().map(|t| number(key, t)).collect()
    };
    match tokens.first().copied() {
        Some("const") => Ok(Preset::Const(nums(1)?[0])),
        Some("sin1") => {
            let v = nums(3)?;
            let axis = v[2] as usize;
            if v[2] != axis as f64 || axis > 2 {
                return Err(CliError::input(format!("{key}: axis must be 0, 1 or 2")));
            }
            Ok(Preset::Sin1 { offset: v[0], amp: v[1], axis })
        }
        Some("product-sines") => {
            let v = nums(2)?;
            Ok(Preset::ProductSines { offset: v[0], amp: v[1] })
        }
        Some(other) => Err(CliError::input(format!(
            "{key}: unknown preset `{other}` (expected const, sin1 or product-sines)"
        ))),
        None => Err(CliError::input(format!("{key}: empty preset"))),
    }
}

fn parse_slot(key: &str, token: &str) -> Result<usize, CliError> {
    let digits: Vec<usize> = token.chars().filter_map(|c| c.to_digit(10).map(|d| d as usize)).collect();
    match digits.as_slice() {
        [a, b] if token.len() == 2 && *a < 3 && *b < 3 => Ok(sym_slot(*a, *b)),
        _ => Err(CliError::input(format!("{key}: `{token}` is not a tensor slot such as 01"))),
    }
}

fn parse_source(key: &str, kind: &str, value: &str, base: &Path) -> Result<Source, CliError> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    match kind {
        "const" => match tokens.as_slice() {
            [c] => Ok(Source::Preset(Preset::Const(number(key, c)?))),
            _ => Err(CliError::input(format!("{key}: expected a single number"))),
        },
        "expr-preset" => Ok(Source::Preset(parse_preset(key, &tokens)?)),
        "file" => {
            if value.is_empty() {
                return Err(CliError::input(format!("{key}: empty path")));
            }
            Ok(Source::File(base.join(value)))
        }
        _ => Err(CliError::input(format!("unknown key `{key}`"))),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Config, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::input(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }

        let mut n_points = None;
        let mut lengths = None;
        let mut scalars: BTreeMap<&'static str, Source> = SCALAR_DATA.iter().map(|&k| (k, Source::Zero)).collect();
        let mut u = TensorSource { source: Source::Zero, slot: 0 };
        let mut potential = None;
        let mut solver = SolverConfig {
            linear_tol: None,
            outer_tol: None,
            max_outer: None,
            stability_tol: None,
            seed: 0,
            mode: GateMode::Strict,
            relax: None,
        };
        let mut seen_data = Vec::new();

        for (key, value) in &entries {
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["grid", "n_points"] => n_points = Some(triple(key, value, integer::<usize>)?),
                ["grid", "lengths"] => lengths = Some(triple(key, value, length)?),
                ["data", name, kind] => {
                    if seen_data.contains(name) {
                        return Err(CliError::input(format!("data.{name} is given more than once")));
                    }
                    seen_data.push(*name);
                    if *name == "U" && *kind == "file" {
                        u = TensorSource { source: parse_source(key, kind, value, base_dir)?, slot: 0 };
                    } else if *name == "U" {
                        let (body, slot) = value
                            .rsplit_once(char::is_whitespace)
                            .ok_or_else(|| CliError::input(format!("{key}: tensor sources end with a slot")))?;
                        let slot = parse_slot(key, slot.trim())?;
                        u = TensorSource { source: parse_source(key, kind, body.trim(), base_dir)?, slot };
                    } else if let Some(slot) = SCALAR_DATA.iter().find(|&&k| k == *name) {
                        scalars.insert(slot, parse_source(key, kind, value, base_dir)?);
                    } else {
                        return Err(CliError::input(format!("unknown key `{key}`")));
                    }
                }
                ["potential", kind] => {
                    if potential.is_some() {
                        return Err(CliError::input("only one potential.* key may be given"));
                    }
                    potential = Some(match *kind {
                        "lambda" => PotentialSpec::Constant(number(key, value)?),
                        "mass" => PotentialSpec::Quadratic(number(key, value)?),
                        "poly" => PotentialSpec::Polynomial(
                            value.split_whitespace().map(|t| number(key, t)).collect::<Result<_, _>>()?,
                        ),
                        _ => return Err(CliError::input(format!("unknown key `{key}`"))),
                    });
                }
                ["solver", name] if SOLVER_KEYS.contains(name) => match *name {
                    "linear_tol" => solver.linear_tol = Some(positive(key, value)?),
                    "outer_tol" => solver.outer_tol = Some(positive(key, value)?),
                    "stability_tol" => solver.stability_tol = Some(positive(key, value)?),
                    "max_outer" => solver.max_outer = Some(integer(key, value)?),
                    "seed" => solver.seed = integer(key, value)?,
                    "relax" => solver.relax = Some(number(key, value)?),
                    _ => {
                        solver.mode = match value.as_str() {
                            "strict" => GateMode::Strict,
                            "permissive" => GateMode::Permissive,
                            other => {
                                return Err(CliError::input(format!(
                                    "{key}: `{other}` is neither strict nor permissive"
                                )))
                            }
                        }
                    }
                },
                _ => return Err(CliError::input(format!("unknown key `{key}`"))),
            }
        }

        let dims = n_points.ok_or_else(|| CliError::input("grid.n_points is required"))?;
        let lengths = lengths.ok_or_else(|| CliError::input("grid.lengths is required"))?;
        let grid = Grid::new(dims, lengths)?;
        Ok(Config {
            entries,
            grid,
            scalars,
            u,
            potential: potential.unwrap_or(PotentialSpec::Constant(0.0)),
            solver,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Same configuration on another grid; file-backed data cannot be moved.
    pub fn with_dims(&self, dims: [usize; 3]) -> Result<Config, CliError> {
        let mut c = self.clone();
        c.grid = Grid::new(dims, self.grid.lengths())?;
        Ok(c)
    }

    fn scalar(&self, name: &str) -> Result<ScalarField, CliError> {
        match &self.scalars[name] {
            Source::Zero => Ok(ScalarField::zeros(self.grid)),
            Source::Preset(p) => Ok(p.sample(self.grid)),
            Source::File(path) => field_io::read_on(path, &self.grid)?.into_scalar(),
        }
    }

    fn tensor(&self) -> Result<TracelessSymField, CliError> {
        let profile = match &self.u.source {
            Source::Zero => return Ok(TracelessSymField::zeros(self.grid)),
            Source::Preset(p) => p.sample(self.grid),
            Source::File(path) => return field_io::read_on(path, &self.grid)?.into_traceless(),
        };
        let mut comps: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; self.grid.len()]);
        comps[self.u.slot] = profile.into_values();
        Ok(TracelessSymField::projected(self.grid, comps)?)
    }

    pub fn data(&self) -> Result<ConstraintData, CliError> {
        Ok(ConstraintData::new(
            self.scalar("psi")?,
            self.scalar("tau")?,
            self.scalar("pi")?,
            self.tensor()?,
            self.potential.clone(),
            self.scalar("R")?,
        )?)
    }

    pub fn driver_options(&self) -> DriverOptions {
        let mut o = DriverOptions {
            mode: self.solver.mode,
            seed: self.solver.seed,
            ..DriverOptions::default()
        };
        if let Some(t) = self.solver.linear_tol {
            o.lichnerowicz.linear_tol = t;
            o.momentum.tol = t;
        }
        if let Some(t) = self.solver.outer_tol {
            o.outer_tol = t;
        }
        if let Some(m) = self.solver.max_outer {
            o.max_outer = m;
        }
        if let Some(t) = self.solver.stability_tol {
            o.lichnerowicz.stability_tol = t;
        }
        if let Some(r) = self.solver.relax {
            o.relax = r;
        }
        o
    }
}

fn positive(key: &str, value: &str) -> Result<f64, CliError> {
    let v = number(key, value)?;
    if v <= 0.0 {
        return Err(CliError::input(format!("{key}: must be positive")));
    }
    Ok(v)
}
