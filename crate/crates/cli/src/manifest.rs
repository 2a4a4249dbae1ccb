//! JSON run manifests. Every float is written with 17 significant digits so
//! verdicts and traces can be re-audited bit for bit.

use std::str::FromStr;

use conformal_core::assembly::{ConstantsBundle, GateVerdict};
use conformal_core::criteria::Verdict;
use conformal_core::driver::{SolveTrace, StartField};
use conformal_core::lichnerowicz::{LichnerowiczResult, MonotoneTrace};
use conformal_core::momentum::MomentumResult;
use serde_json::{json, Map, Number, Value};

use crate::config::Config;

pub const FORMAT_VERSION: u32 = 1;

/// Full-precision number; non-finite values become the strings `NaN`, `inf`, `-inf`.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        return Value::String("NaN".into());
    }
    if x.is_infinite() {
        return Value::String(if x > 0.0 { "inf" } else { "-inf" }.into());
    }
    Value::Number(Number::from_str(&format!("{x:.16e}")).expect("formatted float is valid JSON"))
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

/// Reads a number written by [`num`].
pub fn parse_num(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_str().parse().ok(),
        Value::String(s) => match s.as_str() {
            "NaN" => Some(f64::NAN),
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            _ => None,
        },
        _ => None,
    }
}

pub fn verdict(v: &Verdict) -> Value {
    json!({
        "status": v.status.as_str(),
        "lhs": num(v.lhs),
        "rhs": num(v.rhs),
        "detail": v.detail,
    })
}

pub fn gates(g: &GateVerdict) -> Value {
    let mut m = Map::new();
    for (name, v) in g.checks() {
        m.insert(name.into(), verdict(v));
    }
    m.insert("passed".into(), Value::Bool(g.passed()));
    Value::Object(m)
}

pub fn constants(c: &ConstantsBundle) -> Value {
    json!({
        "c_n": num(c.c_n),
        "two_star": num(c.two_star),
        "mu_g_psi": num(c.mu_g_psi),
        "s_h": num(c.s_h),
        "c_big": num(c.c_big),
        "c1": num(c.c1),
        "n_m": opt_num(c.n_m),
        "epsilon": opt_num(c.epsilon),
        "delta0": opt_num(c.delta0),
        "v_g": num(c.v_g),
        "integral_r_psi": num(c.integral_r_psi),
        "max_potential": num(c.max_potential),
        "grad_psi_sup": num(c.grad_psi_sup),
    })
}

pub fn monotone(t: &MonotoneTrace) -> Value {
    json!({
        "steps": t.steps.len(),
        "k_static": num(t.k_static),
        "worst_relative_decrease": num(t.worst_relative_decrease()),
        "max_bracket_excess": num(t.max_bracket_excess),
        "subsolution_delta": num(t.subsolution_delta),
        "subsolution_scale": num(t.subsolution_scale),
        "supersolution_constant": opt_num(t.supersolution_constant),
        "residual_rounds": t.residual_rounds,
    })
}

pub fn lichnerowicz(r: &LichnerowiczResult) -> Value {
    json!({
        "residual_sup": num(r.residual_sup),
        "stability_eig": num(r.stability_eig),
        "phi_min": num(r.phi.min()),
        "phi_max": num(r.phi.max()),
        "monotone": monotone(&r.trace),
    })
}

pub fn momentum(r: &MomentumResult) -> Value {
    json!({
        "residual": num(r.residual),
        "kernel_discarded": num(r.kernel_discarded),
        "iterations": r.iterations,
        "lw_sup": num(r.lw.sup()),
    })
}

pub fn trace(t: &SolveTrace) -> Value {
    let records: Vec<Value> = t
        .records
        .iter()
        .map(|r| {
            json!({
                "eta_sup": num(r.eta_sup),
                "eta_min": num(r.eta_min),
                "increment": num(r.increment),
                "lichnerowicz_residual": num(r.lichnerowicz_residual),
                "momentum_residual": num(r.momentum_residual),
                "identity_defect": num(r.identity_defect),
                "stability_eig": num(r.stability_eig),
                "worst_monotone_step": num(r.worst_monotone_step),
                "kernel_discarded": num(r.kernel_discarded),
            })
        })
        .collect();
    json!({
        "outer_iterations": t.outer_iterations,
        "start": match t.start {
            StartField::BallSolution => "ball-solution",
            StartField::UnitConstant => "unit-constant",
        },
        "relax": num(t.relax),
        "cmc_shortcut": t.cmc_shortcut,
        "delta0": num(t.delta0),
        "setup_error": t.setup_error,
        "fixed_point_defect": num(t.fixed_point_defect),
        "records": records,
    })
}

/// Manifest under construction; sections are kept in insertion order.
pub struct Manifest {
    body: Map<String, Value>,
}

impl Manifest {
    pub fn new(command: &str, config: Option<&Config>) -> Self {
        let mut body = Map::new();
        body.insert("format_version".into(), json!(FORMAT_VERSION));
        body.insert("command".into(), json!(command));
        let echo = config.map_or(Value::Null, |c| {
            Value::Object(c.entries.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
        });
        body.insert("config".into(), echo);
        Manifest { body }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.body.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.body.get(key)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.body).expect("manifest serializes");
        s.push('\n');
        s
    }
}
