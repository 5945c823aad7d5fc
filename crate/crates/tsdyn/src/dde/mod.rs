//! Linear delay dynamic equations `x^Δ(t) + A(t) x(α(t)) = f(t)`.

mod field;
mod kinks;
mod solver;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::tscale::{build_grid_from, Grid, GridFunction, ScaleError, TimeScale};

pub use field::{default_s_samples, fundamental_solution, variation_of_parameters, vop_required_samples, FundamentalField};
pub use solver::{solve_ivp, Solution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DdeError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("delay ahead of time: alpha({t}) = {alpha}")]
    DelayAhead { t: f64, alpha: f64 },
    #[error("lookup at {alpha} (from t = {t}) precedes the history start {start}")]
    LookupBeforeHistory { t: f64, alpha: f64, start: f64 },
    #[error("negative coefficient A({t}) = {value}")]
    NegativeCoefficient { t: f64, value: f64 },
    #[error("fundamental solution column s = {0} is missing")]
    MissingFieldSample(f64),
    #[error("start {s} precedes t0 = {t0}")]
    StartBeforeT0 { s: f64, t0: f64 },
}

pub type CoefFn = dyn Fn(f64, bool) -> f64 + Send + Sync;
pub type PlainFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A coefficient or delay: a parsed expression or a native function,
/// either of `t` alone or of `(t, left_limit)`.
#[derive(Clone)]
pub enum Coef {
    Const(f64),
    Expr(Expr),
    Plain(Arc<PlainFn>),
    Func(Arc<CoefFn>),
}

impl fmt::Debug for Coef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coef::Const(c) => write!(f, "Const({c})"),
            Coef::Expr(e) => write!(f, "Expr({e})"),
            Coef::Plain(_) | Coef::Func(_) => write!(f, "Func(..)"),
        }
    }
}

impl Coef {
    pub fn parse(src: &str) -> Result<Coef, ExprError> {
        Ok(Coef::Expr(Expr::parse(src)?))
    }

    /// A function of `t`. Where a dense stretch ends in a right-scattered
    /// point its left limit is extrapolated from just below the point;
    /// elsewhere left limits equal values.
    pub fn func<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Coef {
        Coef::Plain(Arc::new(f))
    }

    /// A function given together with its left limits.
    pub fn func_lr<F: Fn(f64, bool) -> f64 + Send + Sync + 'static>(f: F) -> Coef {
        Coef::Func(Arc::new(f))
    }

    pub fn eval(&self, t: f64, ts: &TimeScale) -> Result<f64, ExprError> {
        match self {
            Coef::Const(c) => Ok(*c),
            Coef::Expr(e) => e.eval(t, ts),
            Coef::Plain(f) => finite(f(t), t),
            Coef::Func(f) => finite(f(t, false), t),
        }
    }

    /// Left limit at `t`.
    pub fn eval_left(&self, t: f64, ts: &TimeScale) -> Result<f64, ExprError> {
        match self {
            Coef::Const(c) => Ok(*c),
            Coef::Expr(e) => e.eval_left(t, ts),
            Coef::Plain(f) => {
                let ends_dense = ts.is_right_scattered(t).unwrap_or(false) && ts.rho(t).is_ok_and(|r| r == t) && t > ts.t_min();
                // linear extrapolation from just outside the scale tolerance
                let d = 4.0 * ts.tol();
                finite(if ends_dense { 2.0 * f(t - d) - f(t - 2.0 * d) } else { f(t) }, t)
            }
            Coef::Func(f) => finite(f(t, true), t),
        }
    }

    pub fn eval_mode(&self, t: f64, ts: &TimeScale, left: bool) -> Result<f64, ExprError> {
        if left {
            self.eval_left(t, ts)
        } else {
            self.eval(t, ts)
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coef::Const(c) if *c == 0.0)
    }
}

fn finite(v: f64, t: f64) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Eval { t, msg: "non-finite coefficient value".into() })
    }
}

#[derive(Debug, Clone)]
pub struct DelayEquation {
    pub ts: TimeScale,
    pub a: Coef,
    pub alpha: Coef,
    pub t0: f64,
}

impl DelayEquation {
    pub fn new(ts: TimeScale, a: Coef, alpha: Coef, t0: f64) -> Result<Self, DdeError> {
        let t0 = ts.find(t0).ok_or(ScaleError::NotInScale(t0))?.t;
        Ok(DelayEquation { ts, a, alpha, t0 })
    }

    /// `α(t)`, projected down onto the scale when it falls off.
    pub fn alpha_on_scale(&self, t: f64) -> Result<f64, DdeError> {
        self.alpha_on_scale_mode(t, false)
    }

    pub fn alpha_on_scale_mode(&self, t: f64, left: bool) -> Result<f64, DdeError> {
        let al = self.alpha.eval_mode(t, &self.ts, left)?;
        if self.ts.contains(al) {
            Ok(al)
        } else {
            Ok(self.ts.project_down(al).unwrap_or(al))
        }
    }

    /// Grid over `[t0, t_max]` with delay values (projected onto the scale)
    /// and their suffix minima.
    /// Fails if `A` is negative at a grid point.
    pub fn table(&self, h_max: f64) -> Result<DelayTable, DdeError> {
        let grid = Arc::new(build_grid_from(&self.ts, h_max, self.t0)?);
        let mut alpha = Vec::with_capacity(grid.len());
        for &p in &grid.points {
            let a = self.a.eval(p, &self.ts)?;
            if a < 0.0 {
                return Err(DdeError::NegativeCoefficient { t: p, value: a });
            }
            alpha.push(self.alpha_on_scale(p)?);
        }
        let mut suffix_min = alpha.clone();
        for i in (0..suffix_min.len().saturating_sub(1)).rev() {
            suffix_min[i] = suffix_min[i].min(suffix_min[i + 1]);
        }
        let jumps = alpha_jumps(self, &grid, &alpha)?;
        Ok(DelayTable { grid, alpha, suffix_min, jumps })
    }

    /// `α` at `t`, as a left limit when `t` is right-scattered.
    fn alpha_cell_end(&self, g: &Grid, i: usize, alpha: &[f64]) -> Result<f64, DdeError> {
        if g.kinds[i] == crate::tscale::PointKind::Scattered {
            self.alpha_on_scale_mode(g.points[i], true)
        } else {
            Ok(alpha[i])
        }
    }
}

/// Points inside dense cells where `α`, projected onto the scale, jumps
/// across a gap or enters or leaves a stretch flattened by the projection.
pub(crate) fn alpha_jumps(eq: &DelayEquation, g: &Grid, alpha: &[f64]) -> Result<Vec<f64>, DdeError> {
    let ts = &eq.ts;
    let tol = g.tol;
    let state = |a: f64, raw: f64| (ts.find(a).map(|l| l.seg), (raw - a).abs() > tol);
    let mut out = Vec::new();
    for i in 0..g.len().saturating_sub(1) {
        if !g.is_dense_cell(i) {
            continue;
        }
        let (p0, p1) = (g.points[i], g.points[i + 1]);
        let s0 = state(alpha[i], eq.alpha.eval(p0, ts)?);
        let left = g.kinds[i + 1] == crate::tscale::PointKind::Scattered;
        if s0 == state(eq.alpha_cell_end(g, i + 1, alpha)?, eq.alpha.eval_mode(p1, ts, left)?) {
            continue;
        }
        let (mut lo, mut hi) = (p0, p1);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if state(eq.alpha_on_scale(mid)?, eq.alpha.eval(mid, ts)?) == s0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(hi);
    }
    Ok(out)
}

/// Depth of the breaking-point cascade added to solver grids.
pub const BREAK_LEVELS: usize = 6;
/// Most breaking points kept per level.
const BREAK_CAP: usize = 64;

/// `α` sampled on the grid of `[t0, t_max]`, for `α_*` and `α_{-1}`.
#[derive(Debug, Clone)]
pub struct DelayTable {
    pub grid: Arc<Grid>,
    pub alpha: Vec<f64>,
    pub suffix_min: Vec<f64>,
    /// Where `α` jumps across a gap, or starts or stops being flattened by
    /// the projection onto the scale, inside a dense cell.
    pub jumps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaInv {
    pub value: f64,
    /// The set reached the end of the horizon; `value` is `t_max`.
    pub capped: bool,
}

impl DelayTable {
    /// `α_*(t) = inf{α(η) : η ≥ t}` over grid points (and `t` itself).
    pub fn alpha_star(&self, eq: &DelayEquation, t: f64) -> Result<f64, DdeError> {
        let g = &self.grid;
        if t > g.last() + g.tol {
            return Err(ScaleError::HorizonExceeded(t).into());
        }
        let i = g.lower_index(t);
        let tail = self.suffix_min[i.min(g.len() - 1)];
        if i < g.len() && (g.points[i] - t).abs() <= g.tol {
            return Ok(tail);
        }
        Ok(tail.min(eq.alpha_on_scale(t)?))
    }

    /// Breaking points of a solve from `s`: the jumps of `α` after `s`, the
    /// `τ > s` in dense cells where `α(τ)` reaches `s` or a jump, then those
    /// where it reaches one of these, and so on for [`BREAK_LEVELS`] levels. The solution loses smoothness there,
    /// one derivative fewer per level.
    pub fn breaking_points(&self, eq: &DelayEquation, s: f64) -> Result<Vec<f64>, DdeError> {
        let g = &self.grid;
        let n = g.len();
        let tol = g.tol;
        let mut front = vec![s];
        front.extend(self.jumps.iter().copied().filter(|&j| j > s + tol));
        let mut out = front[1..].to_vec();
        for _ in 0..BREAK_LEVELS {
            let mut next = Vec::new();
            for &xi in &front {
                for i in g.lower_index(xi).saturating_sub(1)..n - 1 {
                    let (p0, p1) = (g.points[i], g.points[i + 1]);
                    if !g.is_dense_cell(i) || p1 <= xi + tol {
                        continue;
                    }
                    let (lo, a_lo) = if p0 > xi + tol { (p0, self.alpha[i]) } else { (xi, eq.alpha_on_scale(xi)?) };
                    let a_hi = eq.alpha_cell_end(g, i + 1, &self.alpha)?;
                    let (d0, d1) = (a_lo - xi, a_hi - xi);
                    if d1.abs() <= tol {
                        next.push(p1);
                    } else if (d0 < -tol && d1 > 0.0) || (d0 > tol && d1 < 0.0) {
                        let (mut a, mut b) = (lo, p1);
                        for _ in 0..60 {
                            let mid = 0.5 * (a + b);
                            if (eq.alpha_on_scale(mid)? - xi < 0.0) == (d0 < 0.0) {
                                a = mid;
                            } else {
                                b = mid;
                            }
                        }
                        next.push(0.5 * (a + b));
                    }
                }
            }
            next.sort_by(f64::total_cmp);
            next.dedup_by(|a, b| (*a - *b).abs() <= tol);
            next.truncate(BREAK_CAP);
            if next.is_empty() {
                break;
            }
            out.extend_from_slice(&next);
            front = next;
        }
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= tol);
        Ok(out)
    }

    /// `α_{-1}(s) = sup{η ≥ t0 : α_*(η) ≤ s}`, refined by bisection inside
    /// the dense cell where `α_*` crosses `s`.
    pub fn alpha_inv(&self, eq: &DelayEquation, s: f64) -> Result<AlphaInv, DdeError> {
        let g = &self.grid;
        let n = g.len();
        let tol = g.tol;
        let cnt = self.suffix_min.partition_point(|&a| a <= s + tol);
        if cnt == 0 {
            return Ok(AlphaInv { value: g.first(), capped: false });
        }
        let j = cnt - 1;
        if j == n - 1 {
            return Ok(AlphaInv { value: g.last(), capped: true });
        }
        if !g.is_dense_cell(j) {
            return Ok(AlphaInv { value: g.points[j], capped: false });
        }
        let (mut lo, mut hi) = (g.points[j], g.points[j + 1]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if eq.alpha.eval(mid, &eq.ts)? <= s {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        Ok(AlphaInv { value: lo, capped: false })
    }
}

pub type PhiFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Pre-start segment `φ` on `[α_*(s), s)`.
#[derive(Clone)]
pub enum Phi {
    Zero,
    Const(f64),
    Func(Arc<PhiFn>),
    /// Sampled history; zero outside its grid.
    Grid(GridFunction),
}

impl fmt::Debug for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phi::Zero => write!(f, "Zero"),
            Phi::Const(c) => write!(f, "Const({c})"),
            Phi::Func(_) => write!(f, "Func(..)"),
            Phi::Grid(g) => write!(f, "Grid({} points)", g.values().len()),
        }
    }
}

impl Phi {
    pub fn func<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Phi {
        Phi::Func(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Phi::Zero => 0.0,
            Phi::Const(c) => *c,
            Phi::Func(f) => f(t),
            Phi::Grid(g) => g.eval(t).unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct History {
    pub x0: f64,
    pub phi: Phi,
}

impl History {
    /// Initial data of the fundamental solution: `x(s) = 1`, zero before.
    pub fn unit() -> History {
        History { x0: 1.0, phi: Phi::Zero }
    }

    pub fn constant(c: f64) -> History {
        History { x0: c, phi: Phi::Const(c) }
    }
}

#[cfg(test)]
mod tests;
