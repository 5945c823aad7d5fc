use rayon::prelude::*;

use super::conditions::{Analysis, GAUSS3};
use super::{DelayCond, StabilityError};
use crate::tscale::{gauss_panel, GridLoc, PointKind};
use crate::tsexp::ExpError;

const RESIDUAL: f64 = 1e-12;
const SCAN_STEPS: usize = 1000;

/// `(1-λ)/(1+λν0) - ν0 e^{2λν0}`.
pub fn phi_a1(lambda: f64, nu0: f64) -> f64 {
    (1.0 - lambda) / (1.0 + lambda * nu0) - nu0 * (2.0 * lambda * nu0).exp()
}

/// `(1-λ) - ν0 exp(3λν0/(1-ν0))`.
pub fn phi_a2(lambda: f64, nu0: f64) -> f64 {
    (1.0 - lambda) - nu0 * (3.0 * lambda * nu0 / (1.0 - nu0)).exp()
}

/// First root of `f` in `(0, hi)` from the left: a sign-change scan on a
/// uniform mesh, then bisection.
fn first_root(f: impl Fn(f64) -> f64, hi: f64, nu0: f64) -> Result<f64, StabilityError> {
    let mut lo = 0.0;
    let mut f_lo = f(lo);
    let mut bracket = None;
    for k in 1..=SCAN_STEPS {
        let x = hi * k as f64 / SCAN_STEPS as f64;
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if f_lo.signum() != fx.signum() {
            bracket = Some((lo, x));
            break;
        }
        lo = x;
        f_lo = fx;
    }
    let (mut a, mut b) = bracket.ok_or(StabilityError::NoBracket(nu0))?;
    let sa = f(a).signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm.abs() <= RESIDUAL * 1e-3 || b - a <= f64::EPSILON * b {
            return Ok(m);
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn check_nu0(nu0: f64) -> Result<(), StabilityError> {
    if nu0 > 0.0 && nu0 < 1.0 {
        Ok(())
    } else {
        Err(StabilityError::NoBracket(nu0))
    }
}

/// `λ0 ∈ (0, 1)` with `phi_a1(λ0, ν0) = 0`.
pub fn find_lambda0_a1(nu0: f64) -> Result<f64, StabilityError> {
    check_nu0(nu0)?;
    first_root(|l| phi_a1(l, nu0), 1.0, nu0)
}

/// `λ0 ∈ (0, 1-ν0)` with `phi_a2(λ0, ν0) = 0`.
pub fn find_lambda0_a2(nu0: f64) -> Result<f64, StabilityError> {
    check_nu0(nu0)?;
    first_root(|l| phi_a2(l, nu0), 1.0 - nu0, nu0)
}

/// Midpoint of `(strict_value, 1)`.
pub fn select_nu0(strict_value: f64) -> Result<f64, StabilityError> {
    if !(strict_value < 1.0) {
        return Err(StabilityError::NotStrict(strict_value));
    }
    Ok(strict_value + 0.5 * (1.0 - strict_value))
}

/// `e^{λ0 K0}` under A1, `exp(λ0 K0 / (1 - λ0 ν0))` under A2.
pub fn compute_m0(k0: f64, lambda0: f64, cond: DelayCond, nu0: f64) -> f64 {
    match cond {
        DelayCond::A1 => (lambda0 * k0).exp(),
        DelayCond::A2 => (lambda0 * k0 / (1.0 - lambda0 * nu0)).exp(),
    }
}

/// Outcome of checking one of the technical-lemma inequalities on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    /// Grid points with `α_*(t) ≥ t0`, where the inequality is checked.
    pub checked: usize,
    /// Largest ratio of left to right side.
    pub max_ratio: f64,
    pub worst_t: f64,
    pub holds: bool,
}

/// Checks `∫_{α_*(t)}^{σ(t)} e_{λ0A}(t, α_*(η)) A(η) Δη < (1-λ0)/(1+λ0A(t)μ(t))`.
pub fn lemma31_realization(an: &Analysis<'_>, lambda0: f64) -> Result<Realization, StabilityError> {
    realization(an, lambda0, DelayCond::A1)
}

/// Checks `∫_{α_*(t)}^{t} e_{λ0(⊖(-A))}(σ(t), α_*(η)) A(η) Δη < 1-λ0`.
pub fn lemma41_realization(an: &Analysis<'_>, lambda0: f64) -> Result<Realization, StabilityError> {
    realization(an, lambda0, DelayCond::A2)
}

fn realization(an: &Analysis<'_>, lambda0: f64, cond: DelayCond) -> Result<Realization, StabilityError> {
    let eq = an.eq;
    let g = &an.table.grid;
    let n = g.len();
    let tol = g.tol;
    let sm = &an.table.suffix_min;

    // cum[i] = ln e_f(q_i, q_0) on the wide grid, f = λ0A or λ0(⊖(-A));
    // α_*(η) may fall below t0
    let w = &an.wide;
    let cells = an.a_wide.cells();
    let mut cum = vec![0.0; w.len()];
    for c in 0..w.len() - 1 {
        let step = match w.kinds[c] {
            PointKind::Scattered => {
                let ma = cells[c];
                match cond {
                    DelayCond::A1 => (lambda0 * ma).ln_1p(),
                    DelayCond::A2 => {
                        if ma >= 1.0 {
                            return Err(ExpError::NotRegressive { t: Some(w.points[c]), value: 1.0 - ma }.into());
                        }
                        (lambda0 * ma / (1.0 - ma)).ln_1p()
                    }
                }
            }
            PointKind::Dense => lambda0 * cells[c],
        };
        cum[c + 1] = cum[c] + step;
    }
    let a = |x: f64| an.a_at(x);
    let log_at = |u: f64| -> Result<f64, StabilityError> {
        match w.locate(u) {
            GridLoc::At(i) => Ok(cum[i]),
            GridLoc::Inside(c) => Ok(cum[c] + lambda0 * gauss_panel(&a, w.points[c], u)),
            GridLoc::Gap(c) => Ok(cum[c + 1]),
            GridLoc::Outside => Err(StabilityError::Numeric(format!("delayed argument {u} is off the analysis grid"))),
        }
    };

    let rows: Vec<Option<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, f64)>, StabilityError> {
            let t = g.points[i];
            let lo = sm[i];
            if lo < eq.t0 - tol {
                return Ok(None);
            }
            let scattered_t = i + 1 < n && g.kinds[i] == PointKind::Scattered;
            let (top, last_cell, rhs) = match cond {
                DelayCond::A1 => {
                    let mua = if scattered_t { an.nodes[i][0].wa } else { 0.0 };
                    (log_at(t)?, if scattered_t { i + 1 } else { i }, (1.0 - lambda0) / (1.0 + lambda0 * mua))
                }
                DelayCond::A2 => (log_at(an.sigma_at(i))?, i, 1.0 - lambda0),
            };
            let c0 = g.lower_index(lo).min(n - 1);
            let c0 = if g.points[c0] > lo + tol { c0 - 1 } else { c0 };
            let mut lhs = 0.0;
            for c in c0..last_cell {
                match g.kinds[c] {
                    PointKind::Scattered => {
                        lhs += an.nodes[c][0].wa * (top - log_at(sm[c])?).exp();
                    }
                    PointKind::Dense => {
                        let (p0, p1) = (g.points[c].max(lo), g.points[c + 1]);
                        if p1 <= p0 {
                            continue;
                        }
                        let (m, r) = (0.5 * (p0 + p1), 0.5 * (p1 - p0));
                        for (z, w) in GAUSS3 {
                            let x = m + r * z;
                            let star = eq.alpha_on_scale(x)?.min(sm[c + 1]);
                            lhs += 2.0 * r * w * a(x) * (top - log_at(star)?).exp();
                        }
                    }
                }
            }
            Ok(Some((lhs / rhs, t)))
        })
        .collect::<Result<_, _>>()?;

    let mut out = Realization { checked: 0, max_ratio: 0.0, worst_t: g.first(), holds: true };
    for (ratio, t) in rows.into_iter().flatten() {
        out.checked += 1;
        if ratio > out.max_ratio || ratio.is_nan() {
            out.max_ratio = ratio;
            out.worst_t = t;
        }
    }
    out.holds = out.max_ratio < 1.0;
    Ok(out)
}
