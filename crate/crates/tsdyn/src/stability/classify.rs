use rayon::prelude::*;

use super::conditions::{Analysis, GAUSS3};
use super::lemmas::{compute_m0, find_lambda0_a1, find_lambda0_a2, select_nu0};
use super::{ConditionReport, DelayCond, Route, StabilityCertificate, StabilityError, Verdict};
use crate::dde::{default_s_samples, fundamental_solution, DelayEquation};
use crate::tscale::{GridLoc, PointKind};
use crate::tsexp::LogExpTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub h_max: f64,
    /// Safety margin of the strict conditions: they pass below `1 - margin`.
    pub margin: f64,
    /// Largest number of fundamental-solution columns in the validation.
    pub max_columns: usize,
    /// Compute the fundamental solution and compare it with the bounds.
    pub validate: bool,
    /// The validation stops before the first dense cell with
    /// `A·h > step_limit`.
    pub step_limit: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { h_max: 0.01, margin: 0.0, max_columns: 64, validate: true, step_limit: 0.25 }
    }
}

/// `|𝒳|` bounds checked on a computed fundamental solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub horizon: f64,
    pub columns: usize,
    pub max_abs_x: f64,
    /// `|𝒳| ≤ 1`; `None` unless the weak condition held.
    pub unit_bound: Option<bool>,
    /// `|𝒳| ≤ M0 · envelope`; `None` unless the strict condition held.
    pub envelope_bound: Option<bool>,
    /// Largest `|𝒳| / (M0 · envelope)`, or NaN when unchecked.
    pub envelope_ratio: f64,
    /// `max |𝒳(T, s)|` over columns in the first half of the validation
    /// horizon `T`.
    pub tail_max: f64,
    pub projected: usize,
}

/// Values `λ` at which the domination hypothesis is tested, besides `λ0`.
const DOMINATION_LAMBDAS: usize = 19;

struct RouteResult {
    cond: DelayCond,
    verdict: Verdict,
    strict: ConditionReport,
    weak: ConditionReport,
    nu0: Option<f64>,
    lambda0: Option<f64>,
    domination: Option<(ConditionReport, f64)>,
}

/// Evaluates the stability conditions on the grid up to the scale's end and
/// returns the strongest verdict whose hypotheses all hold there. The A2
/// route is tried first and kept on ties.
pub fn classify(eq: &DelayEquation, opts: &ClassifyOptions) -> Result<StabilityCertificate, StabilityError> {
    let an = Analysis::new(eq, opts.h_max, opts.margin)?;
    let a1 = an.check_a1()?;
    let a2 = an.check_a2()?;
    let (k0, h0) = an.compute_k0_h0()?;
    let div = an.check_divergence();

    let mut routes = Vec::new();
    for (cond, delay) in [(DelayCond::A2, &a2), (DelayCond::A1, &a1)] {
        let strict = an.strict_condition(cond)?;
        let weak = an.weak_condition(cond)?;
        let mut r = RouteResult { cond, verdict: Verdict::Inconclusive, strict, weak, nu0: None, lambda0: None, domination: None };
        if r.strict.satisfied {
            let nu0 = select_nu0(r.strict.value)?;
            r.nu0 = Some(nu0);
            r.lambda0 = Some(match cond {
                DelayCond::A1 => find_lambda0_a1(nu0)?,
                DelayCond::A2 => find_lambda0_a2(nu0)?,
            });
        }
        if delay.satisfied && k0.satisfied {
            if r.weak.satisfied {
                r.verdict = Verdict::UniformlyStable;
            }
            if r.strict.satisfied && div.satisfied {
                r.verdict = Verdict::GloballyAsymptoticallyStable;
                if h0.satisfied {
                    let dom = domination(&an, cond, r.lambda0.unwrap_or(0.5));
                    if dom.0.satisfied {
                        r.verdict = Verdict::UniformlyExponentiallyStable;
                    }
                    r.domination = Some(dom);
                }
            }
        }
        routes.push(r);
    }

    let mut best = 0;
    for (i, r) in routes.iter().enumerate() {
        if r.verdict > routes[best].verdict {
            best = i;
        }
    }
    // without a verdict, report the constants of a route whose strict
    // condition holds, if any
    if routes[best].verdict == Verdict::Inconclusive {
        if let Some(i) = routes.iter().position(|r| r.lambda0.is_some()) {
            best = i;
        }
    }
    let chosen = &routes[best];
    let verdict = chosen.verdict;
    let route = Route::of(chosen.cond, verdict);
    let m0 = match (chosen.lambda0, chosen.nu0) {
        (Some(l0), Some(nu0)) if k0.satisfied => Some(compute_m0(k0.value, l0, chosen.cond, nu0)),
        _ => None,
    };
    let lambda1 = match (&chosen.domination, verdict) {
        (Some((_, l1)), Verdict::UniformlyExponentiallyStable) => Some(*l1),
        _ => None,
    };

    let (chi_k, chi_h) = an.check_chi_conditions(chosen.lambda0.unwrap_or(0.5))?;
    let [r_a2, r_a1] = [&routes[0], &routes[1]];
    let mut reports = vec![
        a1.clone(),
        a2.clone(),
        k0.clone(),
        h0,
        r_a1.strict.clone(),
        r_a1.weak.clone(),
        r_a2.strict.clone(),
        r_a2.weak.clone(),
        div,
        chi_k,
        chi_h,
    ];
    if let Some((d, _)) = &chosen.domination {
        reports.push(d.clone());
    }

    let numeric_validation = if opts.validate {
        let envelope = match (m0, chosen.lambda0) {
            (Some(m0), Some(l0)) => Some((m0, l0)),
            _ => None,
        };
        validate(&an, chosen.cond, chosen.weak.satisfied, envelope, opts)?
    } else {
        None
    };

    Ok(StabilityCertificate {
        verdict,
        route,
        reports,
        nu0: chosen.nu0,
        lambda0: chosen.lambda0,
        m0,
        lambda1,
        m1: lambda1.map(|_| 1.0),
        horizon: an.horizon(),
        h_max: opts.h_max,
        margin: opts.margin,
        numeric_validation,
    })
}

/// Tests `e_{⊖(λA)} ≤ e_{⊖λ1}` (A1) or `e_{-λA} ≤ e_{⊖λ1}` (A2) for
/// `λ = 0.05, 0.10, …, 0.95` and `λ0`; the value is the fitted `λ1` at `λ0`.
fn domination(an: &Analysis<'_>, cond: DelayCond, lambda0: f64) -> (ConditionReport, f64) {
    let lambdas: Vec<f64> = (1..=DOMINATION_LAMBDAS).map(|k| 0.05 * k as f64).chain([lambda0]).collect();
    let fits: Vec<(bool, f64)> = lambdas.par_iter().map(|&l| an.dominated(cond, l)).collect();
    let ok = fits.iter().all(|f| f.0);
    let lambda1 = fits.last().map_or(0.0, |f| f.1);
    let report = ConditionReport { name: "domination", satisfied: ok, value: lambda1, attained_at: lambda0, horizon: an.horizon() };
    (report, lambda1)
}

fn validate(
    an: &Analysis<'_>,
    cond: DelayCond,
    weak: bool,
    envelope: Option<(f64, f64)>,
    opts: &ClassifyOptions,
) -> Result<Option<Validation>, StabilityError> {
    let eq = an.eq;
    let g = &an.table.grid;
    let n = g.len();
    let mut end = n - 1;
    for c in 0..n - 1 {
        if g.kinds[c] != PointKind::Dense {
            continue;
        }
        let h = g.points[c + 1] - g.points[c];
        let amax = an.nodes[c].iter().zip(GAUSS3).fold(0.0f64, |m, (nd, (_, w))| m.max((nd.wa / (h * w)).abs()));
        if amax * h > opts.step_limit {
            end = c;
            break;
        }
    }
    if end == 0 {
        return Ok(None);
    }
    let t_end = g.points[end];
    let ts = eq.ts.restrict(an.wide.first(), t_end)?;
    let veq = DelayEquation::new(ts, eq.a.clone(), eq.alpha.clone(), eq.t0)?;
    let table = veq.table(opts.h_max)?;
    let samples = default_s_samples(&table, opts.max_columns);
    let field = fundamental_solution(&veq, &table, &samples, opts.h_max)?;
    let vg = table.grid.clone();

    // ln of the envelope factor e(p_j, p_0)
    let env_table = match envelope {
        Some((_, l0)) => {
            let a = |x: f64| veq.a.eval(x, &veq.ts).unwrap_or(f64::NAN);
            Some(match cond {
                DelayCond::A1 => LogExpTable::new(vg.clone(), |x| l0 * a(x))?,
                DelayCond::A2 => LogExpTable::new(vg.clone(), |x| -l0 * a(x))?,
            })
        }
        None => None,
    };

    let mut max_abs: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    let mut tail: f64 = 0.0;
    let mid = veq.t0 + 0.5 * (t_end - veq.t0);
    for (k, &s) in field.s_samples.iter().enumerate() {
        let GridLoc::At(is) = vg.locate(s) else {
            return Err(StabilityError::Numeric(format!("column start {s} is not a grid point")));
        };
        for j in is..vg.len() {
            let x = field.value(k, vg.points[j])?.abs();
            max_abs = max_abs.max(x);
            if let (Some(tab), Some((m0, _))) = (&env_table, envelope) {
                let d = tab.cumulative(j) - tab.cumulative(is);
                let log_env = match cond {
                    DelayCond::A1 => -d,
                    DelayCond::A2 => d,
                };
                let r = x / (m0 * log_env.exp());
                if r > ratio || r.is_nan() {
                    ratio = r;
                }
            }
        }
        if s <= mid {
            tail = tail.max(field.value(k, t_end)?.abs());
        }
    }
    Ok(Some(Validation {
        horizon: t_end,
        columns: field.s_samples.len(),
        max_abs_x: max_abs,
        unit_bound: weak.then_some(max_abs <= 1.0 + 1e-6),
        envelope_bound: envelope.map(|_| ratio <= 1.0 + 1e-6),
        envelope_ratio: if envelope.is_some() { ratio } else { f64::NAN },
        tail_max: tail,
        projected: field.projected,
    }))
}
