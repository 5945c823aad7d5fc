//! Code-registered example equations.

use tsdyn::dde::{Coef, DelayEquation, History, Phi};
use tsdyn::expr::Expr;
use tsdyn::stability::pantograph_transform;
use tsdyn::tscale::Generator;

use crate::error::CliError;
use crate::problem::Problem;

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    /// Parameters and their defaults.
    pub params: &'static [(&'static str, f64)],
    pub horizon: f64,
    pub h_max: f64,
    build: fn(&Params, f64) -> Result<Built, CliError>,
}

struct Built {
    eq: DelayEquation,
    history: History,
    time_map: Option<fn(f64) -> f64>,
}

impl Built {
    fn new(eq: DelayEquation, history: History) -> Built {
        Built { eq, history, time_map: None }
    }
}

pub struct Params(Vec<(&'static str, f64)>);

impl Params {
    pub fn get(&self, key: &str) -> f64 {
        self.0.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).expect("declared parameter")
    }
}

pub static PRESETS: &[Preset] = &[
    Preset {
        name: "example_2_1",
        summary: "P(1,1), A = 1, alpha = t on dense parts and -1 at scattered points; x(0) = 0, x(-1) = -1",
        params: &[],
        horizon: 60.0,
        h_max: 1e-3,
        build: example_2_1,
    },
    Preset {
        name: "example_5_1",
        summary: "P(1,1) from 1, A = a 4^[t] on dense parts and a at 2k+1, alpha = t - ({t}(1-{t}))^[t]",
        params: &[("a", 0.5)],
        horizon: 40.0,
        h_max: 1e-3,
        build: example_5_1,
    },
    Preset {
        name: "example_5_2",
        summary: "union of [sinh n, cosh n], A = a (a/mu at cosh n), quadratic delay inside each segment",
        params: &[("a", 0.5)],
        horizon: 4051.542025492594,
        h_max: 1e-3,
        build: example_5_2,
    },
    Preset {
        name: "example_5_3",
        summary: "Z minus 3Z, alpha = rho(rho(t)), A = a at 3k+1 and b at 3k+2",
        params: &[("a", 0.375), ("b", 0.25)],
        horizon: 100.0,
        h_max: 1.0,
        build: example_5_3,
    },
    Preset {
        name: "r_const",
        summary: "x'(t) + a x(t - tau) = 0 on the reals",
        params: &[("a", 0.9), ("tau", 1.0)],
        horizon: 40.0,
        h_max: 0.01,
        build: r_const,
    },
    Preset {
        name: "pantograph",
        summary: "x'(t) + (a/t) x(theta t) = 0 on [1, horizon], solved in u = ln t",
        params: &[("a", 0.6 / std::f64::consts::LN_2), ("theta", 0.5)],
        horizon: 1000.0,
        h_max: 0.01,
        build: pantograph,
    },
    Preset {
        name: "eigen_sharpness",
        summary: "x(n+1) = x(n) - a x(n-1) on the integers, unit initial data",
        params: &[("a", 1.0)],
        horizon: 10000.0,
        h_max: 1.0,
        build: eigen_sharpness,
    },
];

pub fn find(name: &str) -> Result<&'static Preset, CliError> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| CliError::UnknownExample(name.to_string()))
}

impl Preset {
    /// Builds the problem with `overrides` applied to the default parameters.
    pub fn build(&self, overrides: &[(String, f64)], horizon: Option<f64>) -> Result<Problem, CliError> {
        let mut values = self.params.to_vec();
        for (k, v) in overrides {
            let slot = values
                .iter_mut()
                .find(|(name, _)| name == k)
                .ok_or_else(|| CliError::Config(format!("{} has no parameter `{k}`", self.name)))?;
            if !v.is_finite() {
                return Err(CliError::Config(format!("parameter `{k}` must be finite")));
            }
            slot.1 = *v;
        }
        let horizon = horizon.unwrap_or(self.horizon);
        if !horizon.is_finite() {
            return Err(CliError::Config(format!("horizon {horizon} is not finite")));
        }
        let built = (self.build)(&Params(values), horizon)?;
        if horizon <= built.eq.t0 {
            return Err(CliError::Config(format!("horizon {horizon} must exceed t0 = {}", built.eq.t0)));
        }
        let mut p = Problem::new(self.name, built.eq, built.history, self.h_max);
        p.time_map = built.time_map;
        Ok(p)
    }
}

fn ctx<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::config("preset", e))
}

fn parse(src: &str) -> Result<Coef, CliError> {
    ctx(Coef::parse(src))
}

fn example_2_1(_: &Params, horizon: f64) -> Result<Built, CliError> {
    let ts = ctx(Generator::P11 { from: -1.0, upto: horizon }.build())?;
    let alpha = parse("if scattered(t) then -1 else t")?;
    let eq = ctx(DelayEquation::new(ts, Coef::Const(1.0), alpha, 0.0))?;
    Ok(Built::new(eq, History { x0: 0.0, phi: Phi::Const(-1.0) }))
}

fn example_5_1(p: &Params, horizon: f64) -> Result<Built, CliError> {
    let a = p.get("a");
    let ts = ctx(Generator::P11 { from: 1.0, upto: horizon }.build())?;
    let coef = parse(&format!("if scattered(t) then {a:?} else {a:?}*4^floor(t)"))?;
    let alpha = parse("t - (frac(t)*(1-frac(t)))^floor(t)")?;
    let eq = ctx(DelayEquation::new(ts, coef, alpha, 1.0))?;
    Ok(Built::new(eq, History::constant(1.0)))
}

/// Segment index `n` of `t ∈ [sinh n, cosh n]`.
fn sinh_cosh_segment(t: f64) -> f64 {
    (t.asinh() + 1e-9).floor()
}

pub fn example_5_2_alpha(t: f64) -> f64 {
    let n = sinh_cosh_segment(t);
    let (lo, hi) = (n.sinh(), n.cosh());
    t - (hi - t) * (t - lo) / (hi - lo)
}

fn example_5_2(p: &Params, horizon: f64) -> Result<Built, CliError> {
    let a = p.get("a");
    let from = 1f64.sinh();
    let ts = ctx(Generator::SinhCosh { from, upto: horizon }.build())?;
    let ts2 = ts.clone();
    let coef = Coef::func(move |t| match ts2.is_right_scattered(t) {
        Ok(true) => ts2.mu(t).map_or(f64::NAN, |mu| a / mu),
        _ => a,
    });
    let eq = ctx(DelayEquation::new(ts, coef, Coef::func(example_5_2_alpha), from))?;
    Ok(Built::new(eq, History::constant(1.0)))
}

fn example_5_3(p: &Params, horizon: f64) -> Result<Built, CliError> {
    let (a, b) = (p.get("a"), p.get("b"));
    let ts = ctx(Generator::ZMod3 { from: -4.0, upto: horizon }.build())?;
    let coef = Coef::func(move |t| if (t.round() as i64).rem_euclid(3) == 1 { a } else { b });
    let eq = ctx(DelayEquation::new(ts, coef, parse("rho(rho(t))")?, 1.0))?;
    Ok(Built::new(eq, History::constant(1.0)))
}

fn r_const(p: &Params, horizon: f64) -> Result<Built, CliError> {
    let (a, tau) = (p.get("a"), p.get("tau"));
    if !(tau > 0.0) {
        return Err(CliError::Config(format!("tau must be positive, got {tau}")));
    }
    let ts = ctx(Generator::Reals { from: -tau, upto: horizon }.build())?;
    let eq = ctx(DelayEquation::new(ts, Coef::Const(a), parse(&format!("t - {tau:?}"))?, 0.0))?;
    Ok(Built::new(eq, History::constant(1.0)))
}

fn pantograph(p: &Params, horizon: f64) -> Result<Built, CliError> {
    let a = ctx(Expr::parse(&format!("{:?} / t", p.get("a"))))?;
    let eq = pantograph_transform(&a, p.get("theta"), horizon)?;
    Ok(Built { eq, history: History::constant(1.0), time_map: Some(f64::exp) })
}

fn eigen_sharpness(p: &Params, horizon: f64) -> Result<Built, CliError> {
    let ts = ctx(Generator::Integers { from: -1.0, upto: horizon }.build())?;
    let eq = ctx(DelayEquation::new(ts, Coef::Const(p.get("a")), parse("rho(t)")?, 0.0))?;
    Ok(Built::new(eq, History::constant(1.0)))
}
