use tsdyn::dde::{default_s_samples, fundamental_solution, solve_ivp, DelayTable};
use tsdyn::stability::{classify, ClassifyOptions, StabilityCertificate};
use tsdyn::tscale::PointKind;

use crate::error::CliError;
use crate::problem::{Problem, SSamples};

/// Largest `A·h` on a dense cell the explicit solver is run with; RK4 is
/// unstable on `x' = -A x` beyond about 2.79.
pub const STEP_LIMIT: f64 = 2.5;

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_step(p: &Problem, table: &DelayTable) -> Result<(), CliError> {
    let g = &table.grid;
    for c in 0..g.len() - 1 {
        if g.kinds[c] != PointKind::Dense {
            continue;
        }
        let h = g.points[c + 1] - g.points[c];
        let mid = 0.5 * (g.points[c] + g.points[c + 1]);
        let a = p.eq.a.eval(mid, &p.eq.ts)?;
        if (a * h).abs() > STEP_LIMIT {
            return Err(CliError::Numeric(format!(
                "A*h = {:.3e} at t = {} exceeds the explicit stability limit {STEP_LIMIT}; lower the step or the horizon",
                a * h,
                p.display_time(mid)
            )));
        }
    }
    Ok(())
}

fn finite(v: f64, what: &str, t: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Numeric(format!("non-finite {what} at t = {t}")))
    }
}

/// Solution CSV `t,x` from `t0`, one row per grid point.
pub fn simulate(p: &Problem, h_max: f64) -> Result<String, CliError> {
    let table = p.eq.table(h_max)?;
    check_step(p, &table)?;
    let sol = solve_ivp(&p.eq, &table, p.eq.t0, &p.history, p.forcing.as_ref(), h_max)?;
    let mut out = String::from("t,x\n");
    for (&t, &x) in sol.x.grid().points.iter().zip(sol.x.values()) {
        finite(x, "solution", t)?;
        out.push_str(&format!("{},{}\n", num(p.display_time(t)), num(x)));
    }
    Ok(out)
}

pub struct FieldCsv {
    /// `s,t,X`, one row per column and grid point from `s` on.
    pub long: String,
    /// `s,max_abs_X,decay_fit_lambda`.
    pub summary: String,
}

/// Rate `λ` of the least-squares line `ln sup_{u ≥ t} |𝒳(u, s)| ≈ c - λ (t - s)`
/// in the equation's own time variable; NaN with fewer than two nonzero
/// values.
pub fn decay_fit(ts: &[f64], xs: &[f64]) -> f64 {
    let mut env = vec![0.0; xs.len()];
    let mut run: f64 = 0.0;
    for i in (0..xs.len()).rev() {
        run = run.max(xs[i].abs());
        env[i] = run;
    }
    let s = ts.first().copied().unwrap_or(0.0);
    let pts: Vec<(f64, f64)> = ts.iter().zip(&env).filter(|(_, e)| **e > 0.0).map(|(t, e)| (t - s, e.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return f64::NAN;
    }
    // + 0.0 turns -0 into 0
    -sxy / sxx + 0.0
}

pub fn fundamental(p: &Problem, h_max: f64, samples: &SSamples) -> Result<FieldCsv, CliError> {
    let eq = &p.eq;
    let table = eq.table(h_max)?;
    check_step(p, &table)?;
    let s = match samples {
        SSamples::Count(n) => default_s_samples(&table, *n),
        SSamples::List(list) => {
            for &s in list {
                if !eq.ts.contains(s) || s < eq.t0 - eq.ts.tol() || s >= eq.ts.t_max() {
                    return Err(CliError::Config(format!("s = {s} is not a scale point in [t0, horizon)")));
                }
            }
            list.clone()
        }
    };
    let field = fundamental_solution(eq, &table, &s, h_max)?;
    let mut long = String::from("s,t,X\n");
    let mut summary = String::from("s,max_abs_X,decay_fit_lambda\n");
    for (k, col) in field.columns.iter().enumerate() {
        let s = p.display_time(field.s_samples[k]);
        let pts = &col.grid().points;
        for (&t, &x) in pts.iter().zip(col.values()) {
            finite(x, "fundamental solution", t)?;
            long.push_str(&format!("{},{},{}\n", num(s), num(p.display_time(t)), num(x)));
        }
        summary.push_str(&format!("{},{},{}\n", num(s), num(field.max_abs(k)), num(decay_fit(pts, col.values()))));
    }
    Ok(FieldCsv { long, summary })
}

pub fn classify_problem(p: &Problem, h_max: f64, margin: f64) -> Result<StabilityCertificate, CliError> {
    let opts = ClassifyOptions { h_max, margin, ..Default::default() };
    Ok(classify(&p.eq, &opts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn decay_fit_recovers_rate() {
        let ts: Vec<f64> = (0..50).map(|i| 1.0 + 0.1 * i as f64).collect();
        let xs: Vec<f64> = ts.iter().map(|t| 3.0 * (-0.7 * (t - 1.0)).exp()).collect();
        assert!((decay_fit(&ts, &xs) - 0.7).abs() < 1e-12);
        assert!(decay_fit(&ts[..1], &xs[..1]).is_nan());
    }

    #[test]
    fn explicit_stability_guard() {
        let p = presets::find("example_5_1").unwrap().build(&[], None).unwrap();
        assert!(matches!(simulate(&p, 1e-3), Err(CliError::Numeric(_))));
        let p = presets::find("example_5_1").unwrap().build(&[], Some(5.0)).unwrap();
        assert!(simulate(&p, 1e-3).is_ok());
    }

    #[test]
    fn field_rows_start_at_one() {
        let p = presets::find("example_5_3").unwrap().build(&[], Some(30.0)).unwrap();
        let csv = fundamental(&p, 1.0, &SSamples::List(vec![1.0, 4.0])).unwrap();
        let ones = csv.long.lines().skip(1).filter(|l| {
            let v: Vec<&str> = l.split(',').collect();
            v[0] == v[1]
        });
        for row in ones {
            assert!(row.ends_with(&num(1.0)), "{row}");
        }
        assert_eq!(csv.summary.lines().count(), 3);
        assert!(matches!(fundamental(&p, 1.0, &SSamples::List(vec![3.0])), Err(CliError::Config(_))));
    }
}
