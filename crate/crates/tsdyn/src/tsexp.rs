//! Regressive algebra and the exponential function `e_f(t, s)`.
//!
//! Exponentials are carried as `ln|e_f|` plus a sign: the product of
//! `1 + μf` over right-scattered points and `exp ∫ f` over dense parts.

use std::sync::Arc;

use thiserror::Error;

use crate::tscale::{gauss_composite, gauss_panel, Grid, GridFunction, GridLoc, PointKind, ScaleError, TimeScale};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpError {
    #[error("not regressive: 1 + mu*f = {value} at t = {t:?}")]
    NotRegressive { t: Option<f64>, value: f64 },
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

pub fn circle_plus(f: f64, g: f64, mu: f64) -> f64 {
    f + g + mu * f * g
}

/// `⊖f = -f / (1 + μf)`.
pub fn circle_minus(f: f64, mu: f64) -> Result<f64, ExpError> {
    let d = 1.0 + mu * f;
    if d == 0.0 {
        return Err(ExpError::NotRegressive { t: None, value: d });
    }
    Ok(-f / d)
}

/// Signed log-magnitude form of a real number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpValue {
    pub log_abs: f64,
    pub sign: f64,
}

impl ExpValue {
    pub const ONE: ExpValue = ExpValue { log_abs: 0.0, sign: 1.0 };

    pub fn value(self) -> f64 {
        self.sign * self.log_abs.exp()
    }

    pub fn recip(self) -> ExpValue {
        ExpValue { log_abs: -self.log_abs, sign: self.sign }
    }

    pub fn mul(self, o: ExpValue) -> ExpValue {
        ExpValue { log_abs: self.log_abs + o.log_abs, sign: self.sign * o.sign }
    }

    /// Multiplies in a factor `1 + μf`.
    fn push_factor(&mut self, v: f64, t: f64) -> Result<(), ExpError> {
        if v == 0.0 {
            return Err(ExpError::NotRegressive { t: Some(t), value: v });
        }
        self.log_abs += v.abs().ln();
        if v < 0.0 {
            self.sign = -self.sign;
        }
        Ok(())
    }
}

fn snap(ts: &TimeScale, t: f64) -> Result<f64, ScaleError> {
    Ok(ts.find(t).ok_or(ScaleError::NotInScale(t))?.t)
}

/// `e_f(t, s)` for a sampled `f`, in log form. Dense parts use the same
/// interpolant quadrature as [`crate::tscale::delta_integral`].
pub fn log_exp_fn(ts: &TimeScale, f: &GridFunction, s: f64, t: f64) -> Result<ExpValue, ExpError> {
    let s = snap(ts, s)?;
    let t = snap(ts, t)?;
    if s > t {
        return Ok(log_exp_fn(ts, f, t, s)?.recip());
    }
    let g = f.grid();
    let tol = g.tol;
    let mut i = match g.locate(s) {
        GridLoc::At(i) | GridLoc::Inside(i) => i,
        _ => return Err(ScaleError::NotInScale(s).into()),
    };
    if !matches!(g.locate(t), GridLoc::At(_) | GridLoc::Inside(_)) {
        return Err(ScaleError::NotInScale(t).into());
    }
    let mut acc = ExpValue::ONE;
    while i + 1 < g.len() && g.points[i] < t - tol {
        match g.kinds[i] {
            PointKind::Scattered => {
                if g.points[i] >= s - tol {
                    acc.push_factor(1.0 + g.mu_at(i) * f.values()[i], g.points[i])?;
                }
            }
            PointKind::Dense => {
                let lo = s.max(g.points[i]);
                let hi = t.min(g.points[i + 1]);
                if hi > lo {
                    acc.log_abs += f.cell_integral(i, lo, hi);
                }
            }
        }
        i += 1;
    }
    Ok(acc)
}

pub fn exp_fn(ts: &TimeScale, f: &GridFunction, s: f64, t: f64) -> Result<f64, ExpError> {
    Ok(log_exp_fn(ts, f, s, t)?.value())
}

/// `e_f(t, s)` for a pointwise `f`: exact products at scattered points and
/// composite Gauss–Legendre with panels of at most `h_max` on dense parts.
pub fn log_exp_closure<F: Fn(f64) -> f64>(
    ts: &TimeScale,
    f: F,
    s: f64,
    t: f64,
    h_max: f64,
) -> Result<ExpValue, ExpError> {
    let s = snap(ts, s)?;
    let t = snap(ts, t)?;
    if s > t {
        return Ok(log_exp_closure(ts, f, t, s, h_max)?.recip());
    }
    let mut acc = ExpValue::ONE;
    for (p, mu) in ts.scattered_points(s, t) {
        acc.push_factor(1.0 + mu * f(p), p)?;
    }
    for (lo, hi) in ts.dense_pieces(s, t) {
        acc.log_abs += gauss_composite(&f, lo, hi, h_max);
    }
    Ok(acc)
}

/// `e_c(t, s)` for a constant `c`.
pub fn log_exp_const(ts: &TimeScale, c: f64, s: f64, t: f64) -> Result<ExpValue, ExpError> {
    let s = snap(ts, s)?;
    let t = snap(ts, t)?;
    if s > t {
        return Ok(log_exp_const(ts, c, t, s)?.recip());
    }
    let mut acc = ExpValue::ONE;
    for (p, mu) in ts.scattered_points(s, t) {
        acc.push_factor(1.0 + mu * c, p)?;
    }
    let dense: f64 = ts.dense_pieces(s, t).iter().map(|(a, b)| b - a).sum();
    acc.log_abs += c * dense;
    Ok(acc)
}

/// `e_{⊖λ}(t, s) = 1 / e_λ(t, s)` for `λ > 0`.
pub fn exp_ominus(ts: &TimeScale, lambda: f64, s: f64, t: f64) -> Result<f64, ExpError> {
    Ok(log_exp_const(ts, lambda, s, t)?.recip().value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegSign {
    Any,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressivityReport {
    pub is_regressive: bool,
    pub is_positively_regressive: bool,
    /// `(t, 1 + μ(t)f(t))` at the first violation: a zero if regressivity
    /// fails, otherwise the first non-positive value.
    pub witness: Option<(f64, f64)>,
}

impl RegressivityReport {
    pub fn satisfies(&self, sign: RegSign) -> bool {
        match sign {
            RegSign::Any => self.is_regressive,
            RegSign::Positive => self.is_positively_regressive,
        }
    }
}

/// Scans `1 + μf` at every grid point of `f`.
pub fn check_regressive(f: &GridFunction) -> RegressivityReport {
    let g = f.grid();
    regressivity_scan(g.points.iter().enumerate().map(|(i, &p)| (p, 1.0 + g.mu_at(i) * f.values()[i])))
}

/// As [`check_regressive`] for a pointwise `f` sampled on `grid`.
pub fn check_regressive_fn<F: Fn(f64) -> f64>(grid: &Grid, f: F) -> RegressivityReport {
    regressivity_scan(grid.points.iter().enumerate().map(|(i, &p)| (p, 1.0 + grid.mu_at(i) * f(p))))
}

fn regressivity_scan(vals: impl Iterator<Item = (f64, f64)>) -> RegressivityReport {
    let mut zero = None;
    let mut nonpos = None;
    for (t, v) in vals {
        if v == 0.0 && zero.is_none() {
            zero = Some((t, v));
        }
        if v <= 0.0 && nonpos.is_none() {
            nonpos = Some((t, v));
        }
        if zero.is_some() {
            break;
        }
    }
    RegressivityReport { is_regressive: zero.is_none(), is_positively_regressive: nonpos.is_none(), witness: zero.or(nonpos) }
}

/// Cumulative `ln|e_f(p_i, p_0)|` over a grid, for fast `e_f(t, s)` queries
/// between many pairs of points.
#[derive(Debug, Clone)]
pub struct LogExpTable {
    grid: Arc<Grid>,
    log_abs: Vec<f64>,
    /// Sign of `e_f(p_i, p_0)`.
    sign: Vec<f64>,
}

impl LogExpTable {
    pub fn new<F: Fn(f64) -> f64>(grid: Arc<Grid>, f: F) -> Result<Self, ExpError> {
        let n = grid.len();
        let mut log_abs = Vec::with_capacity(n);
        let mut sign = Vec::with_capacity(n);
        let mut acc = ExpValue::ONE;
        log_abs.push(0.0);
        sign.push(1.0);
        for i in 0..n.saturating_sub(1) {
            match grid.kinds[i] {
                PointKind::Scattered => acc.push_factor(1.0 + grid.mu_at(i) * f(grid.points[i]), grid.points[i])?,
                PointKind::Dense => acc.log_abs += gauss_panel(&f, grid.points[i], grid.points[i + 1]),
            }
            log_abs.push(acc.log_abs);
            sign.push(acc.sign);
        }
        Ok(LogExpTable { grid, log_abs, sign })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `e_f(p_j, p_i)` between grid points.
    pub fn between(&self, i: usize, j: usize) -> ExpValue {
        ExpValue { log_abs: self.log_abs[j] - self.log_abs[i], sign: self.sign[j] * self.sign[i] }
    }

    /// `ln|e_f(p_i, p_0)|`.
    pub fn cumulative(&self, i: usize) -> f64 {
        self.log_abs[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tscale::{build_grid, Generator, Interp, Segment};
    use proptest::prelude::*;

    fn grid_fn(ts: &TimeScale, h: f64, f: impl Fn(f64) -> f64) -> GridFunction {
        let g = Arc::new(build_grid(ts, h).unwrap());
        GridFunction::from_fn(g, f, Interp::CubicHermite)
    }

    #[test]
    fn circle_operations() {
        assert_eq!(circle_plus(0.5, 0.5, 0.0), 1.0);
        assert_eq!(circle_plus(1.0, 1.0, 1.0), 3.0);
        assert_eq!(circle_plus(-0.3, 0.0, 2.5), -0.3);
        assert_eq!(circle_minus(0.5, 0.0).unwrap(), -0.5);
        // ⊖(-A) = A / (1 - Aμ) with A = 0.5, μ = 1
        assert_eq!(circle_minus(-0.5, 1.0).unwrap(), 0.5 / (1.0 - 0.5));
        assert!(matches!(circle_minus(1.0, -1.0), Err(ExpError::NotRegressive { .. })));
        let f = 0.37;
        let once = circle_minus(f, 0.8).unwrap();
        assert!((circle_minus(once, 0.8).unwrap() - f).abs() < 1e-15);
    }

    #[test]
    fn table_closed_forms() {
        for &h in &[0.5, 1.0, 2.0] {
            let ts = Generator::HIntegers { h, from: 0.0, upto: 40.0 }.build().unwrap();
            let f = grid_fn(&ts, 0.1, |_| 0.3);
            let n = 7.0;
            let got = exp_fn(&ts, &f, 0.0, n * h).unwrap();
            let want = (1.0f64 + h * 0.3).powi(7);
            assert!((got / want - 1.0).abs() < 1e-12);
        }
        let ts = TimeScale::new(vec![Segment::Dense { a: 0.0, b: 5.0 }]).unwrap();
        let f = grid_fn(&ts, 0.01, |_| -0.7);
        assert!((exp_fn(&ts, &f, 0.0, 5.0).unwrap() / (-3.5f64).exp() - 1.0).abs() < 1e-12);
        let zero = grid_fn(&ts, 0.01, |_| 0.0);
        assert_eq!(exp_fn(&ts, &zero, 1.0, 4.0).unwrap(), 1.0);
        assert_eq!(exp_fn(&ts, &zero, 4.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn q_scale_product() {
        let ts = Generator::QScale { q: 2.0, from: 1.0, upto: 1024.0 }.build().unwrap();
        let f = grid_fn(&ts, 0.1, |t| 1.0 / t);
        // ∏ (1 + t * (1/t)) over 1, 2, 4, ..., 2^9
        let got = exp_fn(&ts, &f, 1.0, 1024.0).unwrap();
        assert!((got / 2f64.powi(10) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_ominus_examples() {
        let r = TimeScale::new(vec![Segment::Dense { a: 0.0, b: 10.0 }]).unwrap();
        assert!((exp_ominus(&r, 1.0, 2.0, 5.0).unwrap() - (-3f64).exp()).abs() < 1e-15);
        let z = Generator::Integers { from: 0.0, upto: 10.0 }.build().unwrap();
        assert!((exp_ominus(&z, 1.0, 2.0, 5.0).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(exp_ominus(&z, 1.0, 4.0, 4.0).unwrap(), 1.0);
    }

    #[test]
    fn sign_alternation_in_negative_class() {
        let z = Generator::Integers { from: 0.0, upto: 10.0 }.build().unwrap();
        let f = grid_fn(&z, 1.0, |_| -3.0);
        assert!((exp_fn(&z, &f, 0.0, 3.0).unwrap() + 8.0).abs() < 1e-13);
        assert!((exp_fn(&z, &f, 0.0, 2.0).unwrap() - 4.0).abs() < 1e-13);
        let one = grid_fn(&z, 1.0, |_| -1.0);
        assert!(matches!(exp_fn(&z, &one, 0.0, 2.0), Err(ExpError::NotRegressive { t: Some(_), .. })));
    }

    #[test]
    fn regressivity_reports() {
        let ts = Generator::ZMod3 { from: 1.0, upto: 60.0 }.build().unwrap();
        let (a, b) = (0.7, 0.1);
        let f = grid_fn(&ts, 1.0, |t| if (t as i64).rem_euclid(3) == 1 { -a } else { -b });
        let rep = check_regressive(&f);
        assert!(rep.is_regressive && rep.is_positively_regressive && rep.witness.is_none());
        // oracle: enumerate the scattered points directly
        for (p, mu) in ts.scattered_points(1.0, 60.0) {
            let coef = if (p as i64).rem_euclid(3) == 1 { a } else { b };
            assert!(1.0 - coef * mu > 0.0);
        }

        let z = Generator::Integers { from: 0.0, upto: 5.0 }.build().unwrap();
        let rep = check_regressive(&grid_fn(&z, 1.0, |_| -1.0));
        assert!(!rep.is_regressive && !rep.is_positively_regressive);
        assert_eq!(rep.witness, Some((0.0, 0.0)));
        let rep = check_regressive(&grid_fn(&z, 1.0, |_| -2.0));
        assert!(rep.is_regressive && !rep.satisfies(RegSign::Positive));
        assert_eq!(rep.witness, Some((0.0, -1.0)));

        let r = TimeScale::new(vec![Segment::Dense { a: 0.0, b: 3.0 }]).unwrap();
        let rep = check_regressive(&grid_fn(&r, 0.1, |t| -100.0 * t));
        assert!(rep.is_regressive && rep.is_positively_regressive);
    }

    #[test]
    fn table_agrees_with_closure() {
        let ts = Generator::P11 { from: 0.0, upto: 12.0 }.build().unwrap();
        let f = |t: f64| 0.2 + 0.1 * t.sin();
        let g = Arc::new(build_grid(&ts, 0.05).unwrap());
        let tab = LogExpTable::new(g.clone(), f).unwrap();
        let (i, j) = (3, g.len() - 1);
        let direct = log_exp_closure(&ts, f, g.points[i], g.points[j], 0.05).unwrap();
        assert!((tab.between(i, j).log_abs - direct.log_abs).abs() < 1e-12);
        assert_eq!(tab.between(i, j).sign, 1.0);
    }

    /// Random scale: alternating dense intervals and isolated points.
    fn arb_scale() -> impl Strategy<Value = TimeScale> {
        proptest::collection::vec((0u8..3, 0.2f64..1.5, 0.2f64..1.5), 2..7).prop_map(|parts| {
            let mut segs = Vec::new();
            let mut x = 0.0;
            for (k, len, gap) in parts {
                if k == 0 {
                    segs.push(Segment::Point(x));
                    x += gap;
                } else {
                    segs.push(Segment::Dense { a: x, b: x + len });
                    x += len + gap;
                }
            }
            segs.push(Segment::Point(x));
            TimeScale::new(segs).unwrap()
        })
    }

    fn pick(g: &Grid, u: f64) -> f64 {
        g.points[((g.len() - 1) as f64 * u) as usize]
    }

    proptest! {
        #[test]
        fn semigroup_product_reciprocal(ts in arb_scale(), c in -0.4f64..0.4, d in -0.4f64..0.4,
                                        u in proptest::collection::vec(0.0f64..1.0, 3)) {
            let f = grid_fn(&ts, 0.05, |t| c + 0.1 * (t * 1.3).cos());
            let g = grid_fn(&ts, 0.05, |t| d * (1.0 + 0.2 * t).recip());
            let grid = f.grid().clone();
            let mut p: Vec<f64> = u.iter().map(|&x| pick(&grid, x)).collect();
            p.sort_by(f64::total_cmp);
            let (r, s, t) = (p[0], p[1], p[2]);
            let ets = exp_fn(&ts, &f, s, t).unwrap();
            let esr = exp_fn(&ts, &f, r, s).unwrap();
            let etr = exp_fn(&ts, &f, r, t).unwrap();
            prop_assert!((ets * esr / etr - 1.0).abs() < 1e-10);

            // f ⊕ g and ⊖f jump at left-dense, right-scattered points; the
            // left limits use μ = 0
            let n = grid.len();
            let mus: Vec<f64> = (0..n).map(|i| grid.mu_at(i)).collect();
            let vals: Vec<f64> = (0..n).map(|i| circle_plus(f.values()[i], g.values()[i], mus[i])).collect();
            let left: Vec<f64> = (0..n).map(|i| f.values()[i] + g.values()[i]).collect();
            let fg = GridFunction::with_left_limits(grid.clone(), vals, &left, Interp::CubicHermite);
            let lhs = exp_fn(&ts, &f, r, t).unwrap() * exp_fn(&ts, &g, r, t).unwrap();
            prop_assert!((lhs / exp_fn(&ts, &fg, r, t).unwrap() - 1.0).abs() < 1e-10);

            let vals: Vec<f64> = (0..grid.len()).map(|i| circle_minus(f.values()[i], mus[i]).unwrap()).collect();
            let left: Vec<f64> = f.values().iter().map(|v| -v).collect();
            let inv = GridFunction::with_left_limits(grid.clone(), vals, &left, Interp::CubicHermite);
            let prod = exp_fn(&ts, &f, r, t).unwrap() * exp_fn(&ts, &inv, r, t).unwrap();
            prop_assert!((prod - 1.0).abs() < 1e-12);
        }

        #[test]
        fn positive_class_gives_positive_exponential(ts in arb_scale(), c in -0.6f64..2.0) {
            let f = grid_fn(&ts, 0.1, move |t| c - 0.05 * t);
            let rep = check_regressive(&f);
            if rep.is_positively_regressive {
                let g = f.grid();
                prop_assert!(exp_fn(&ts, &f, g.first(), g.last()).unwrap() > 0.0);
            }
        }

        #[test]
        fn derivative_on_dense_segment(c in -1.0f64..1.0, w in 0.5f64..2.0) {
            let ts = TimeScale::new(vec![Segment::Dense { a: 0.0, b: 4.0 }]).unwrap();
            let h = 0.01;
            let fun = move |t: f64| c * (w * t).sin() + 0.2;
            let f = grid_fn(&ts, h, fun);
            let g = f.grid().clone();
            for i in (1..g.len() - 1).step_by(37) {
                let (a, b) = (g.points[i - 1], g.points[i + 1]);
                let fd = (exp_fn(&ts, &f, 0.0, b).unwrap() - exp_fn(&ts, &f, 0.0, a).unwrap()) / (b - a);
                let e = exp_fn(&ts, &f, 0.0, g.points[i]).unwrap();
                let exact = fun(g.points[i]) * e;
                prop_assert!((fd - exact).abs() <= 10.0 * h * h * e);
            }
        }
    }

    #[test]
    fn divergent_integral_consequences() {
        // f = 0.4 on ℙ_{1,1}: 1 - μf = 0.6 > 0 and ∫f grows without bound
        let ts = Generator::P11 { from: 0.0, upto: 200.0 }.build().unwrap();
        let c = 0.4;
        let samples: Vec<f64> = (0..=100).map(|k| 2.0 * k as f64).collect();
        let val = |f: &dyn Fn(f64) -> f64, t: f64| log_exp_closure(&ts, f, 0.0, t, 0.05).unwrap().value();
        let ominus_neg = |t: f64| {
            let mu = ts.mu(t).unwrap();
            c / (1.0 - c * mu)
        };
        let ominus = |t: f64| {
            let mu = ts.mu(t).unwrap();
            -c / (1.0 + c * mu)
        };
        let series = |f: &dyn Fn(f64) -> f64| samples.iter().map(|&t| val(f, t)).collect::<Vec<_>>();
        let up1 = series(&|_| c);
        let up2 = series(&ominus_neg);
        let down1 = series(&ominus);
        let down2 = series(&|_| -c);
        for w in up1.windows(2).chain(up2.windows(2)) {
            assert!(w[1] > w[0]);
        }
        for w in down1.windows(2).chain(down2.windows(2)) {
            assert!(w[1] < w[0]);
        }
        assert!(*up1.last().unwrap() > 1e10 && *up2.last().unwrap() > 1e10);
        assert!(*down1.last().unwrap() < 1e-10 && *down2.last().unwrap() < 1e-10);
    }
}
