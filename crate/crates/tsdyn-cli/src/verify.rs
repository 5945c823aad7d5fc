//! Per-example checks behind `verify-example`.

use std::f64::consts::E;

use tsdyn::dde::{default_s_samples, fundamental_solution, solve_ivp};
use tsdyn::stability::{eigen_sharpness, Analysis, pantograph_envelope, StabilityCertificate, Verdict};

use crate::commands::classify_problem;
use crate::error::CliError;
use crate::presets::{self, Preset};
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
        Check { name: name.into(), passed, detail: detail.into() }
    }

    fn verdict(name: impl Into<String>, cert: &StabilityCertificate, want: Verdict) -> Check {
        let route = cert.route.map_or("none".to_string(), |r| r.to_string());
        Check::new(name, cert.verdict == want, format!("{} via {route}, expected {want}", cert.verdict))
    }

    /// `PASS name: detail` or `FAIL name: detail`.
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn verify_example(name: &str) -> Result<Vec<Check>, CliError> {
    let preset = presets::find(name)?;
    match name {
        "example_2_1" => example_2_1(preset),
        "example_5_1" => example_5_1(preset),
        "example_5_2" => example_5_2(preset),
        "example_5_3" => example_5_3(preset),
        "r_const" => r_const(preset),
        "pantograph" => pantograph(preset),
        "eigen_sharpness" => eigen(preset),
        _ => Err(CliError::UnknownExample(name.to_string())),
    }
}

fn build(preset: &Preset, params: &[(&str, f64)], horizon: Option<f64>) -> Result<Problem, CliError> {
    let owned: Vec<(String, f64)> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    preset.build(&owned, horizon)
}

fn classify_default(p: &Problem) -> Result<StabilityCertificate, CliError> {
    classify_problem(p, p.h_max, 0.0)
}

fn condition(cert: &StabilityCertificate, name: &str) -> Result<(bool, f64, f64), CliError> {
    cert.report(name)
        .map(|r| (r.satisfied, r.value, r.attained_at))
        .ok_or_else(|| CliError::Numeric(format!("certificate lacks report {name}")))
}

/// `x(2k) = (e/(e-1))(1 - e^{-k})` with `x(0) = 0`, `x(-1) = -1`; the
/// unweighted indicator condition fails although `𝒳` decays.
fn example_2_1(preset: &Preset) -> Result<Vec<Check>, CliError> {
    let p = build(preset, &[], None)?;
    let tab = p.eq.table(p.h_max)?;
    let sol = solve_ivp(&p.eq, &tab, p.eq.t0, &p.history, None, p.h_max)?;
    let mut out = Vec::new();
    for k in [10, 20, 30] {
        let kf = k as f64;
        let want = E / (E - 1.0) * (1.0 - (-kf).exp());
        let err = (sol.x.eval(2.0 * kf)? - want).abs();
        out.push(Check::new(format!("closed_form_k{k}"), err <= 1e-9, format!("|x({}) - closed form| = {err:.3e}", 2 * k)));
    }
    let cert = classify_default(&p)?;
    out.push(Check::verdict("verdict", &cert, Verdict::Inconclusive));
    let (chi, v, _) = condition(&cert, "chi_K")?;
    out.push(Check::new("chi_K_fails", !chi, format!("sup of the indicator integral = {v:.6}")));
    let val = cert.numeric_validation.as_ref().ok_or_else(|| CliError::Numeric("no field validation".into()))?;
    out.push(Check::new(
        "field_decays",
        val.tail_max <= 1e-3,
        format!("max |X(T, s)| over s <= T/2 = {:.3e} at T = {}", val.tail_max, val.horizon),
    ));
    Ok(out)
}

fn example_5_1(preset: &Preset) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for (a, want) in [(0.5, Verdict::UniformlyExponentiallyStable), (1.0, Verdict::UniformlyStable)] {
        let p = build(preset, &[("a", a)], None)?;
        let cert = classify_default(&p)?;
        let (_, v, at) = condition(&cert, "L31_strict")?;
        out.push(Check::new(
            format!("strict_sup_a{a}"),
            (v - a).abs() <= 1e-6,
            format!("sup = {v:.12} at t = {at:.6}, expected {a}"),
        ));
        out.push(Check::verdict(format!("verdict_a{a}"), &cert, want));
    }
    // the dense windows reach the same value at t = 2n + 1/2
    let p = build(preset, &[("a", 0.5)], Some(12.0))?;
    let an = Analysis::new(&p.eq, p.h_max, 0.0)?;
    for n in 1..=5 {
        let t = 2.0 * n as f64 + 0.5;
        let w = an.a_integral(p.eq.alpha.eval(t, &p.eq.ts)?, t)?;
        out.push(Check::new(format!("dense_window_t{t}"), (w - 0.5).abs() <= 1e-6, format!("integral of A over [alpha(t), t] = {w:.12}")));
    }
    Ok(out)
}

/// Largest value of a unimodal `f` on `[lo, hi]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    while hi - lo > 1e-12 * hi.abs().max(1.0) {
        let (x1, x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if f(x1) < f(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    f(0.5 * (lo + hi))
}

fn example_5_2(preset: &Preset) -> Result<Vec<Check>, CliError> {
    let p = build(preset, &[], None)?;
    let mut out = Vec::new();
    for n in 1..=5 {
        let nf = n as f64;
        let gap = |t: f64| t - p.eq.alpha.eval(t, &p.eq.ts).unwrap_or(f64::NAN);
        let got = golden_max(gap, nf.sinh(), nf.cosh());
        let want = 0.25 * (-nf).exp();
        out.push(Check::new(
            format!("delay_max_n{n}"),
            (got - want).abs() <= 1e-8,
            format!("max(t - alpha) = {got:.12}, 1/(4e^{n}) = {want:.12}"),
        ));
    }
    let cert = classify_default(&p)?;
    out.push(Check::verdict("verdict", &cert, Verdict::GloballyAsymptoticallyStable));
    Ok(out)
}

fn example_5_3(preset: &Preset) -> Result<Vec<Check>, CliError> {
    let (a, b) = (0.375, 0.25);
    let p = build(preset, &[("a", a), ("b", b)], None)?;
    let cert = classify_default(&p)?;
    let (_, v, _) = condition(&cert, "L41_strict")?;
    let mut out = vec![
        Check::new("window_integral", v == a + 2.0 * b, format!("sup window integral = {v:?}, a + 2b = {:?}", a + 2.0 * b)),
        Check::verdict("verdict", &cert, Verdict::UniformlyExponentiallyStable),
    ];

    // |𝒳(t, 1)| ≤ M0 Π_{1 ≤ p < t} (1 - λ0 μ(p) A(p))
    let (m0, l0) = match (cert.m0, cert.lambda0) {
        (Some(m), Some(l)) => (m, l),
        _ => return Ok(out),
    };
    let tab = p.eq.table(p.h_max)?;
    let field = fundamental_solution(&p.eq, &tab, &[1.0], p.h_max)?;
    let col = &field.columns[0];
    let pts = &col.grid().points;
    let mut env = m0;
    let mut worst: f64 = 0.0;
    for (j, (&t, &x)) in pts.iter().zip(col.values()).enumerate() {
        worst = worst.max(x.abs() / env);
        if j + 1 < pts.len() {
            env *= 1.0 - l0 * (pts[j + 1] - t) * p.eq.a.eval(t, &p.eq.ts)?;
        }
    }
    out.push(Check::new(
        "envelope",
        worst <= 1.0 + 1e-9 && *pts.last().unwrap() >= 100.0,
        format!("max |X(t,1)| / (M0 e(t,1)) = {worst:.12} up to t = {}", pts.last().unwrap()),
    ));
    let field_max = cert.numeric_validation.as_ref().map_or(f64::NAN, |v| v.max_abs_x);
    out.push(Check::new("unit_bound", field_max <= 1.0, format!("sup |X| = {field_max:.12}")));
    Ok(out)
}

fn r_const(preset: &Preset) -> Result<Vec<Check>, CliError> {
    let p = build(preset, &[], None)?;
    let cert = classify_default(&p)?;
    let (weak, v, _) = condition(&cert, "L42_weak")?;
    let val = cert.numeric_validation.as_ref().ok_or_else(|| CliError::Numeric("no field validation".into()))?;
    Ok(vec![
        Check::new("weak_condition", weak, format!("a tau = {v:.12}")),
        Check::new("unit_bound", val.max_abs_x <= 1.0 + 1e-6, format!("sup |X| = {:.12} over {} columns", val.max_abs_x, val.columns)),
        Check::verdict("verdict", &cert, Verdict::UniformlyExponentiallyStable),
    ])
}

/// `|𝒳(t, s)| ≤ M (t/s)^{-λ}` for `t/s ≤ 100`, checked in `u = ln t`.
fn pantograph(preset: &Preset) -> Result<Vec<Check>, CliError> {
    let p = build(preset, &[], None)?;
    let a = preset.params.iter().find(|(k, _)| *k == "a").map_or(f64::NAN, |(_, v)| *v);
    let cert = classify_default(&p)?;
    let mut out = vec![Check::verdict("verdict", &cert, Verdict::UniformlyExponentiallyStable)];
    let (m0, l0) = match (cert.m0, cert.lambda0) {
        (Some(m), Some(l)) => (m, l),
        _ => return Ok(out),
    };
    let (m, lambda) = pantograph_envelope(m0, l0, a);
    let tab = p.eq.table(p.h_max)?;
    let samples = default_s_samples(&tab, 64);
    let field = fundamental_solution(&p.eq, &tab, &samples, p.h_max)?;
    let span = 100f64.ln() + 1e-12;
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for (k, col) in field.columns.iter().enumerate() {
        let v = field.s_samples[k];
        for (&u, &x) in col.grid().points.iter().zip(col.values()) {
            if u - v > span {
                break;
            }
            count += 1;
            worst = worst.max(x.abs() / (m * (-lambda * (u - v)).exp()));
        }
    }
    out.push(Check::new(
        "power_envelope",
        worst <= 1.0,
        format!("max |X| / (M (t/s)^-lambda) = {worst:.9} over {count} samples, M = {m:.6}, lambda = {lambda:.6}"),
    ));
    Ok(out)
}

/// Bounded for `a ≤ 1`, unbounded for `a > 1`.
fn eigen(preset: &Preset) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for a in [0.99, 1.0, 1.05] {
        let p = build(preset, &[("a", a)], None)?;
        let tab = p.eq.table(p.h_max)?;
        let sol = solve_ivp(&p.eq, &tab, p.eq.t0, &p.history, None, p.h_max)?;
        let sup = sol.x.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let steps = sol.x.values().len() - 1;
        let (passed, bound) = if a <= 1.0 { (sup <= 10.0, "<= 10") } else { (sup > 1e3, "> 1e3") };
        out.push(Check::new(format!("simulate_a{a}"), passed, format!("sup |x| = {sup:.6e} over {steps} steps, expected {bound}")));
        let sh = eigen_sharpness(a);
        out.push(Check::new(
            format!("eigen_modulus_a{a}"),
            sh.stable == (a <= 1.0),
            format!("spectral radius {:.9}", sh.modulus),
        ));
        let short = build(preset, &[("a", a)], Some(200.0))?;
        let cert = classify_default(&short)?;
        let stable = cert.verdict >= Verdict::UniformlyStable;
        out.push(Check::new(
            format!("classify_a{a}"),
            stable == (a <= 1.0),
            format!("{} via {}", cert.verdict, cert.route.map_or("none".into(), |r| r.to_string())),
        ));
    }
    Ok(out)
}
