//! End-to-end runs of the `conformal` binary and field file round trips.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use conformal_cli::field_io::{self, Field};
use conformal_cli::manifest::parse_num;
use conformal_core::grid::conformal_killing;
use conformal_core::{Grid, ScalarField, SymTensorField, VectorField};
use serde_json::Value;
use tempfile::TempDir;

const VACUUM_CMC: &str = "\
grid.n_points = 8
grid.lengths = 1
data.tau.const = 1
data.R.const = 8
data.U.expr-preset = sin1 0 1e-3 2 01
potential.lambda = 1
";

const NEAR_CMC: &str = "\
grid.n_points = 8
grid.lengths = 1
data.tau.expr-preset = sin1 1 1e-3 0
data.R.const = 8
data.U.expr-preset = sin1 0 1e-3 2 01
potential.lambda = 1
solver.seed = 3
";

struct Run {
    code: i32,
    manifest: Value,
    out: PathBuf,
}

fn run(dir: &TempDir, name: &str, config: &str, args: &[&str]) -> Run {
    let cfg = dir.path().join(format!("{name}.cfg"));
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join(name);
    let status = Command::new(env!("CARGO_BIN_EXE_conformal"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let text = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert_eq!(text, String::from_utf8(status.stdout).unwrap());
    Run {
        code: status.status.code().unwrap(),
        manifest: serde_json::from_str(&text).unwrap(),
        out,
    }
}

fn number(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for key in path {
        cur = &cur[*key];
    }
    parse_num(cur).unwrap_or_else(|| panic!("no number at {path:?}"))
}

#[test]
fn check_reports_sign_failure_for_large_mean_curvature() {
    let dir = TempDir::new().unwrap();
    let cfg = "grid.n_points = 8\ngrid.lengths = 1\ndata.tau.const = 2\ndata.R.const = 8\n\
               data.U.const = 1e-3 01\npotential.lambda = 1\n";
    let r = run(&dir, "tau2", cfg, &["check"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.manifest["gates"]["sign"]["status"], "fail");
    // B = (2 Lambda - 2/3 tau^2) / 8
    assert!((number(&r.manifest, &["gates", "sign", "lhs"]) + 1.0 / 12.0).abs() < 1e-15);
    assert_eq!(r.manifest["status"], "verdict-fail");
}

#[test]
fn cmc_solve_takes_one_outer_step_and_audits_clean() {
    let dir = TempDir::new().unwrap();
    let r = run(&dir, "cmc", VACUUM_CMC, &["solve-cmc"]);
    assert_eq!(r.code, 0, "{:#}", r.manifest);
    assert_eq!(r.manifest["trace"]["outer_iterations"], 1);
    assert!(number(&r.manifest, &["residuals", "trace_defect"]) < 1e-10);
    let k = field_io::read(&r.out.join("k.efld")).unwrap();
    assert_eq!(k.rank(), 3);

    let against = r.out.to_str().unwrap().to_string();
    let audit = run(&dir, "audit", VACUUM_CMC, &["check", "--against", &against]);
    assert_eq!(audit.code, 0, "{:#}", audit.manifest);
    assert_eq!(audit.manifest["audit"]["passed"], true);
}

#[test]
fn audit_rejects_a_perturbed_solution() {
    let dir = TempDir::new().unwrap();
    let r = run(&dir, "cmc", VACUUM_CMC, &["solve-cmc"]);
    let phi = field_io::read(&r.out.join("phi.efld")).unwrap().into_scalar().unwrap();
    field_io::write(&r.out.join("phi.efld"), &Field::Scalar(phi.map(|v| 1.001 * v))).unwrap();
    let against = r.out.to_str().unwrap().to_string();
    let audit = run(&dir, "audit", VACUUM_CMC, &["check", "--against", &against]);
    assert_eq!(audit.code, 2);
    assert_eq!(audit.manifest["audit"]["passed"], false);
}

#[test]
fn coupled_solve_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = run(&dir, "a", NEAR_CMC, &["solve"]);
    let b = run(&dir, "b", NEAR_CMC, &["solve"]);
    assert_eq!(a.code, 0, "{:#}", a.manifest);
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    assert_eq!(strip(a.manifest.clone()), strip(b.manifest));
    for name in ["phi", "w", "k"] {
        let file = format!("{name}.efld");
        assert_eq!(fs::read(a.out.join(&file)).unwrap(), fs::read(b.out.join(&file)).unwrap());
    }
    assert!(a.manifest["gates"]["passed"].as_bool().unwrap());
    let n_m = number(&a.manifest, &["constants", "n_m"]);
    for rec in a.manifest["trace"]["records"].as_array().unwrap() {
        assert!(number(rec, &["eta_sup"]) <= n_m);
    }
}

#[test]
fn convergence_study_is_second_order() {
    let dir = TempDir::new().unwrap();
    let r = run(&dir, "conv", "grid.n_points = 8\ngrid.lengths = 2pi\n", &["convergence"]);
    assert_eq!(r.code, 0);
    let csv = fs::read_to_string(r.out.join("convergence.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "n,spacing,error");
    assert_eq!(lines.len(), 4);
    let order = number(&r.manifest, &["convergence", "fitted_order"]);
    assert!((order - 2.0).abs() < 0.2, "order {order}");
}

#[test]
fn manufactured_problem_round_trips_through_files() {
    let dir = TempDir::new().unwrap();
    let cfg = "grid.n_points = 12\ngrid.lengths = 2pi\n";
    let m = run(&dir, "mf", cfg, &["manufacture", "--amplitude", "0.2"]);
    assert_eq!(m.code, 0);
    let coeffs = m.out.to_str().unwrap().to_string();
    let s = run(&dir, "sol", cfg, &["lichnerowicz", "--coefficients", &coeffs]);
    assert_eq!(s.code, 0, "{:#}", s.manifest);
    assert!(number(&s.manifest, &["error_vs_reference"]) < 1e-9);
    assert!(number(&s.manifest, &["lichnerowicz", "stability_eig"]) >= 0.0);
}

#[test]
fn momentum_command_writes_trace_free_lw() {
    let dir = TempDir::new().unwrap();
    let r = run(&dir, "mom", NEAR_CMC, &["momentum"]);
    assert_eq!(r.code, 0);
    let w = field_io::read(&r.out.join("w.efld")).unwrap().into_vector().unwrap();
    let lw = field_io::read(&r.out.join("lw.efld")).unwrap().into_traceless().unwrap();
    assert_eq!(conformal_killing(&w), lw);
    assert!(number(&r.manifest, &["momentum", "residual"]) < 1e-10);
}

#[test]
fn invalid_inputs_exit_with_code_four() {
    let dir = TempDir::new().unwrap();
    let typo = run(&dir, "typo", "grid.n_points = 8\ngrid.lengths = 1\nsolver.outer_toll = 1\n", &["solve"]);
    assert_eq!(typo.code, 4);
    assert!(typo.manifest["error"].as_str().unwrap().contains("outer_toll"));
    let not_cmc = run(&dir, "ncmc", NEAR_CMC, &["solve-cmc"]);
    assert_eq!(not_cmc.code, 4);
    let missing = run(&dir, "miss", "grid.n_points = 8\ngrid.lengths = 1\ndata.pi.file = nowhere.efld\n", &["constants"]);
    assert_eq!(missing.code, 4);
}

#[test]
fn strict_gate_failure_is_a_verdict_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = "grid.n_points = 6\ngrid.lengths = 1\ndata.tau.const = 1\ndata.R.const = 8\n\
               data.pi.const = 100\npotential.lambda = 1\n";
    let strict = run(&dir, "strict", cfg, &["solve"]);
    assert_eq!(strict.code, 2);
    assert_eq!(strict.manifest["gates"]["smallness"]["status"], "fail");
    let permissive = run(&dir, "perm", &format!("{cfg}solver.mode = permissive\n"), &["solve"]);
    assert_eq!(permissive.code, 2);
    assert_eq!(permissive.manifest["nonexistence"]["status"], "pass");
}

#[test]
fn data_files_feed_the_configuration() {
    let dir = TempDir::new().unwrap();
    let g = Grid::cubic(8, 1.0).unwrap();
    let tau = ScalarField::constant(g, 1.0);
    field_io::write(&dir.path().join("tau.efld"), &Field::Scalar(tau)).unwrap();
    let cfg = VACUUM_CMC.replace("data.tau.const = 1", "data.tau.file = tau.efld");
    let from_file = run(&dir, "file", &cfg, &["constants"]);
    let from_const = run(&dir, "const", VACUUM_CMC, &["constants"]);
    assert_eq!(from_file.code, 0);
    assert_eq!(from_file.manifest["constants"], from_const.manifest["constants"]);

    let wrong = Grid::cubic(6, 1.0).unwrap();
    field_io::write(&dir.path().join("tau.efld"), &Field::Scalar(ScalarField::zeros(wrong))).unwrap();
    assert_eq!(run(&dir, "wrong", &cfg, &["constants"]).code, 4);
}

fn round_trip(path: &Path, field: Field) {
    field_io::write(path, &field).unwrap();
    let back = field_io::read(path).unwrap();
    assert_eq!(field_io::encode(&back).unwrap(), fs::read(path).unwrap());
    for (x, y) in field.blocks().iter().zip(back.blocks()) {
        assert!(x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn field_files_round_trip_bitwise() {
    let dir = TempDir::new().unwrap();
    let g = Grid::new([4, 5, 6], [1.0, std::f64::consts::PI, 0.3]).unwrap();
    let s = ScalarField::from_fn(g, |x| (x[0] * 7.1).sin() / 3.0 + x[1].exp());
    let w = VectorField::from_fn(g, |x| [x[0] / 3.0, -x[1] * 1e-300, x[2].cos()]);
    let lw = conformal_killing(&w);
    let sym = SymTensorField::new(g, std::array::from_fn(|c| vec![0.1 * c as f64 + 1.0 / 7.0; g.len()])).unwrap();
    round_trip(&dir.path().join("s.efld"), Field::Scalar(s));
    round_trip(&dir.path().join("w.efld"), Field::Vector(w));
    round_trip(&dir.path().join("lw.efld"), Field::Traceless(lw));
    round_trip(&dir.path().join("k.efld"), Field::Symmetric(sym));
    let rank2 = fs::read(dir.path().join("lw.efld")).unwrap();
    assert_eq!(rank2.len(), 52 + 6 * 8 * g.len());
}

#[test]
fn damaged_field_files_are_rejected() {
    let dir = TempDir::new().unwrap();
    let g = Grid::cubic(4, 1.0).unwrap();
    let bytes = field_io::encode(&Field::Scalar(ScalarField::constant(g, 2.0))).unwrap();
    assert!(field_io::decode(&bytes[..bytes.len() - 8]).is_err());
    assert!(field_io::decode(&bytes[..20]).is_err());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(field_io::decode(&bad_magic).is_err());
    let mut nan = bytes.clone();
    let at = nan.len() - 8;
    nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(field_io::decode(&nan).is_err());
    let path = dir.path().join("x.efld");
    assert!(field_io::write(&path, &Field::Scalar(ScalarField::constant(g, f64::NAN))).is_err() || !path.exists());
}
