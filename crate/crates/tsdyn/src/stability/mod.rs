//! Explicit stability criteria for `x^Δ(t) + A(t) x(α(t)) = 0`.
//!
//! Every supremum over `[t0, ∞)` is taken over the grid of a finite working
//! horizon. Finiteness and divergence claims compare the full horizon with
//! its first three quarters (measured by dense length plus the number of
//! scattered points), so each report is horizon-certified only.

mod classify;
mod conditions;
mod lemmas;
mod transforms;

use std::fmt;

use thiserror::Error;

use crate::dde::DdeError;
use crate::expr::ExprError;
use crate::tscale::ScaleError;
use crate::tsexp::ExpError;

pub use classify::{classify, ClassifyOptions, Validation};
pub use conditions::Analysis;
pub use lemmas::{
    compute_m0, find_lambda0_a1, find_lambda0_a2, lemma31_realization, lemma41_realization, phi_a1, phi_a2,
    select_nu0, Realization,
};
pub use transforms::{
    eigen_sharpness, pantograph_envelope, pantograph_transform, two_term_reduction, Sharpness, TwoTerm,
    TwoTermReduction, TwoTermVariant,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Dde(#[from] DdeError),
    #[error(transparent)]
    Exp(#[from] ExpError),
    #[error("strict condition value {0} is not below 1")]
    NotStrict(f64),
    #[error("no sign change of the lemma function on its interval (nu0 = {0})")]
    NoBracket(f64),
    #[error("theta must lie in (0, 1), got {0}")]
    BadTheta(f64),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl From<ScaleError> for StabilityError {
    fn from(e: ScaleError) -> Self {
        StabilityError::Dde(e.into())
    }
}

impl From<ExprError> for StabilityError {
    fn from(e: ExprError) -> Self {
        StabilityError::Dde(e.into())
    }
}

/// The two structural delay conditions: `α(t) ≤ t` and `α(σ(t)) ≤ t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayCond {
    A1,
    A2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub name: &'static str,
    pub satisfied: bool,
    pub value: f64,
    pub attained_at: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Inconclusive,
    UniformlyStable,
    GloballyAsymptoticallyStable,
    UniformlyExponentiallyStable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Inconclusive => "Inconclusive",
            Verdict::UniformlyStable => "UniformlyStable",
            Verdict::GloballyAsymptoticallyStable => "GloballyAsymptoticallyStable",
            Verdict::UniformlyExponentiallyStable => "UniformlyExponentiallyStable",
        })
    }
}

/// The theorem whose hypotheses produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    T3_1,
    T3_2,
    C3_1,
    T4_1,
    T4_2,
    C4_1,
}

impl Route {
    pub fn of(cond: DelayCond, verdict: Verdict) -> Option<Route> {
        use Verdict::*;
        Some(match (cond, verdict) {
            (_, Inconclusive) => return None,
            (DelayCond::A1, UniformlyStable) => Route::T3_1,
            (DelayCond::A1, GloballyAsymptoticallyStable) => Route::T3_2,
            (DelayCond::A1, UniformlyExponentiallyStable) => Route::C3_1,
            (DelayCond::A2, UniformlyStable) => Route::T4_1,
            (DelayCond::A2, GloballyAsymptoticallyStable) => Route::T4_2,
            (DelayCond::A2, UniformlyExponentiallyStable) => Route::C4_1,
        })
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::T3_1 => "T3.1",
            Route::T3_2 => "T3.2",
            Route::C3_1 => "C3.1",
            Route::T4_1 => "T4.1",
            Route::T4_2 => "T4.2",
            Route::C4_1 => "C4.1",
        })
    }
}

#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub verdict: Verdict,
    pub route: Option<Route>,
    pub reports: Vec<ConditionReport>,
    pub nu0: Option<f64>,
    pub lambda0: Option<f64>,
    pub m0: Option<f64>,
    pub lambda1: Option<f64>,
    pub m1: Option<f64>,
    pub horizon: f64,
    pub h_max: f64,
    pub margin: f64,
    pub numeric_validation: Option<Validation>,
}

impl StabilityCertificate {
    pub fn report(&self, name: &str) -> Option<&ConditionReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    /// Flat `key = value` document with a fixed key order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("verdict", self.verdict.to_string());
        put("route", self.route.map_or("none".into(), |r| r.to_string()));
        put("horizon", fmt_f64(self.horizon));
        put("h_max", fmt_f64(self.h_max));
        put("margin", fmt_f64(self.margin));
        put("nu0", fmt_opt(self.nu0));
        put("lambda0", fmt_opt(self.lambda0));
        put("M0", fmt_opt(self.m0));
        put("lambda1", fmt_opt(self.lambda1));
        put("M1", fmt_opt(self.m1));
        for r in &self.reports {
            let p = format!("report.{}", r.name);
            put(&format!("{p}.satisfied"), r.satisfied.to_string());
            put(&format!("{p}.value"), fmt_f64(r.value));
            put(&format!("{p}.attained_at"), fmt_f64(r.attained_at));
            put(&format!("{p}.horizon"), fmt_f64(r.horizon));
        }
        if let Some(v) = &self.numeric_validation {
            put("numeric_validation.horizon", fmt_f64(v.horizon));
            put("numeric_validation.columns", v.columns.to_string());
            put("numeric_validation.max_abs_x", fmt_f64(v.max_abs_x));
            put("numeric_validation.unit_bound", v.unit_bound.map_or("unchecked".into(), |b| b.to_string()));
            put("numeric_validation.envelope_bound", v.envelope_bound.map_or("unchecked".into(), |b| b.to_string()));
            put("numeric_validation.envelope_ratio", fmt_f64(v.envelope_ratio));
            put("numeric_validation.tail_max", fmt_f64(v.tail_max));
            put("numeric_validation.projected", v.projected.to_string());
        }
        out
    }
}

/// Shortest decimal form that reads back to the same double.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".into(), fmt_f64)
}
