use std::cell::Cell;
use std::sync::Arc;

use super::{Coef, DdeError, DelayEquation, DelayTable, History};
use crate::tscale::{build_grid_from, hermite, Grid, GridFunction, GridLoc, PointKind, ScaleError, Slopes};

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: GridFunction,
    /// Delayed arguments that fell off the scale and were projected down.
    pub projected: usize,
}

/// Solves `x^Δ + A x(α) = f` on `[s, t_max]` with `x(s) = x0` and `x = φ`
/// on `[α_*(s), s)`.
///
/// Right-scattered points use `x(σ) = x + μ(-A x(α) + f)` exactly. Dense
/// cells take one classical RK4 step each; the final stage and the
/// end-of-cell slope are left limits. Delayed values come from the cubic
/// Hermite dense output of completed cells; values inside the current cell
/// are predicted by extrapolation and corrected with the cell's own
/// Hermite polynomial.
pub fn solve_ivp(
    eq: &DelayEquation,
    table: &DelayTable,
    s: f64,
    history: &History,
    forcing: Option<&Coef>,
    h_max: f64,
) -> Result<Solution, DdeError> {
    let ts = &eq.ts;
    let s = ts.find(s).ok_or(ScaleError::NotInScale(s))?.t;
    if s < eq.t0 - ts.tol() {
        return Err(DdeError::StartBeforeT0 { s, t0: eq.t0 });
    }
    let grid = Arc::new(solver_grid(eq, table, s, h_max)?);
    let a_star = table.alpha_star(eq, s)?;
    let n = grid.len();
    let mut st = Stepper {
        eq,
        grid: &grid,
        history,
        forcing,
        s,
        a_star,
        xs: Vec::with_capacity(n),
        right: vec![0.0; n],
        left: vec![0.0; n],
        projected: Cell::new(0),
        inside: Cell::new(false),
    };
    st.xs.push(history.x0);
    for i in 0..n - 1 {
        let x1 = match grid.kinds[i] {
            PointKind::Scattered => st.scattered_step(i)?,
            PointKind::Dense => st.dense_step(i)?,
        };
        st.xs.push(x1);
    }
    let projected = st.projected.get();
    let Stepper { xs, right, left, .. } = st;
    Ok(Solution { x: GridFunction::with_slopes(grid, xs, Slopes { right, left }), projected })
}

/// Grid of a solve from `s`: the scale grid from `s` refined by the breaking
/// points of `s` and of `t0`, and by the table's own points when it shares
/// the step. Solves from different starts then share nodes.
pub(crate) fn solver_grid(eq: &DelayEquation, table: &DelayTable, s: f64, h_max: f64) -> Result<Grid, DdeError> {
    let base = build_grid_from(&eq.ts, h_max, s)?;
    let mut extra = table.breaking_points(eq, s)?;
    if (s - eq.t0).abs() > base.tol {
        extra.extend(table.breaking_points(eq, eq.t0)?);
    }
    if table.grid.h_max == h_max {
        extra.extend_from_slice(&table.grid.points[table.grid.lower_index(s)..]);
    }
    extra.sort_by(f64::total_cmp);
    Ok(refine(base, &extra))
}

/// Inserts the points of sorted `extra` that fall inside dense cells of
/// `g`. A point within `1e-6·h_max` of an interior dense node replaces
/// it, so lookups at the node see the breaking point exactly.
fn refine(g: Grid, extra: &[f64]) -> Grid {
    let gap = 1e-6 * g.h_max;
    let n = g.len();
    // interior of a dense stretch, away from both ends of the grid
    let movable = |i: usize| i > 0 && i + 1 < n && g.kinds[i - 1] == PointKind::Dense && g.kinds[i] == PointKind::Dense;
    let mut points = Vec::with_capacity(n + extra.len());
    let mut kinds = Vec::with_capacity(n + extra.len());
    let mut e = extra.iter().copied().peekable();
    let mut snap = None;
    for i in 0..n {
        points.push(snap.take().unwrap_or(g.points[i]));
        kinds.push(g.kinds[i]);
        let Some(&q) = g.points.get(i + 1) else { break };
        let dense = g.kinds[i] == PointKind::Dense;
        while let Some(x) = e.next_if(|&x| x < q + gap) {
            let last = points.len() - 1;
            if !dense || x <= g.points[i] - gap {
                continue;
            }
            if (x - points[last]).abs() <= gap {
                if movable(i) && kinds[last] == g.kinds[i] && last > 0 && points[last - 1] < x {
                    points[last] = x;
                }
            } else if (q - x).abs() <= gap {
                if movable(i + 1) {
                    snap = Some(x);
                }
            } else {
                points.push(x);
                kinds.push(PointKind::Dense);
            }
        }
    }
    Grid { points, kinds, ..g }
}

/// Current dense cell as seen by delayed lookups.
struct Cur {
    t0: f64,
    t1: f64,
    x0: f64,
    m0: f64,
    /// Corrected end state `(x1, m1)`, once available.
    end: Option<(f64, f64)>,
    /// Hermite data of the preceding dense cell, for extrapolation.
    prev: Option<(f64, f64, f64, f64, f64, f64)>,
}

impl Cur {
    fn at(&self, a: f64) -> f64 {
        match (self.end, self.prev) {
            (Some((x1, m1)), _) => hermite(self.t0, self.t1, self.x0, x1, self.m0, m1, a),
            (None, Some((p0, p1, y0, y1, m0, m1))) => hermite(p0, p1, y0, y1, m0, m1, a),
            (None, None) => self.x0 + self.m0 * (a - self.t0),
        }
    }
}

struct Stepper<'a> {
    eq: &'a DelayEquation,
    grid: &'a Grid,
    history: &'a History,
    forcing: Option<&'a Coef>,
    s: f64,
    a_star: f64,
    xs: Vec<f64>,
    right: Vec<f64>,
    left: Vec<f64>,
    projected: Cell<usize>,
    /// Set when a lookup used the current cell's predicted polynomial.
    inside: Cell<bool>,
}

impl Stepper<'_> {
    fn tol(&self) -> f64 {
        self.grid.tol
    }

    /// History value at `a < s`, clamped to `α_*(s)` within tolerance.
    fn history_at(&self, tau: f64, a: f64) -> Result<f64, DdeError> {
        if a < self.a_star - self.tol() {
            return Err(DdeError::LookupBeforeHistory { t: tau, alpha: a, start: self.a_star });
        }
        Ok(self.history.phi.at(a.max(self.a_star)))
    }

    /// `x(α(τ))` where `y` is the stage state at `τ`; `n` is the index of
    /// the current cell's left point.
    fn delayed(&self, tau: f64, y: f64, left: bool, n: usize, cur: Option<&Cur>) -> Result<f64, DdeError> {
        let eq = self.eq;
        let ts = &eq.ts;
        let mut a = eq.alpha.eval_mode(tau, ts, left)?;
        if !ts.contains(a) {
            a = match ts.project_down(a) {
                Some(p) => p,
                None => return Err(DdeError::LookupBeforeHistory { t: tau, alpha: a, start: self.a_star }),
            };
            self.projected.set(self.projected.get() + 1);
        }
        let tol = self.tol();
        if a > tau + tol {
            return Err(DdeError::DelayAhead { t: tau, alpha: a });
        }
        if (a - tau).abs() <= tol {
            return Ok(y);
        }
        // a left limit approaching a from below reads ρ(a) across a gap, and
        // the history rather than x0 at a = s
        let mut from_below = false;
        if left {
            let h = self.grid.points[n + 1] - self.grid.points[n];
            if eq.alpha_on_scale(tau - 1e-3 * h)? < a - tol {
                let r = ts.rho(a).unwrap_or(a);
                if r < a - tol {
                    a = r;
                } else {
                    from_below = true;
                }
            }
        }
        if (a - self.s).abs() <= tol {
            return if from_below { self.history_at(tau, self.s) } else { Ok(self.history.x0) };
        }
        if a < self.s {
            return self.history_at(tau, a);
        }
        let tn = self.grid.points[n];
        if a <= tn + tol {
            return self.solution_at(a);
        }
        match cur {
            Some(c) => {
                self.inside.set(true);
                Ok(c.at(a))
            }
            None => Err(DdeError::DelayAhead { t: tau, alpha: a }),
        }
    }

    fn solution_at(&self, a: f64) -> Result<f64, DdeError> {
        let g = self.grid;
        match g.locate(a) {
            GridLoc::At(i) => Ok(self.xs[i]),
            GridLoc::Inside(i) => {
                let p = &g.points;
                Ok(hermite(p[i], p[i + 1], self.xs[i], self.xs[i + 1], self.right[i], self.left[i], a))
            }
            _ => Err(ScaleError::NotInScale(a).into()),
        }
    }

    /// Right-hand side `-A(τ) x(α(τ)) + f(τ)`.
    fn rhs(&self, tau: f64, y: f64, left: bool, n: usize, cur: Option<&Cur>) -> Result<f64, DdeError> {
        let ts = &self.eq.ts;
        let a = self.eq.a.eval_mode(tau, ts, left)?;
        let mut v = if a == 0.0 { 0.0 } else { -a * self.delayed(tau, y, left, n, cur)? };
        if let Some(f) = self.forcing {
            v += f.eval_mode(tau, ts, left)?;
        }
        Ok(v)
    }

    fn scattered_step(&self, i: usize) -> Result<f64, DdeError> {
        let t = self.grid.points[i];
        let x = self.xs[i];
        Ok(x + self.grid.mu_at(i) * self.rhs(t, x, false, i, None)?)
    }

    fn dense_step(&mut self, i: usize) -> Result<f64, DdeError> {
        let p = &self.grid.points;
        let (t0, t1) = (p[i], p[i + 1]);
        let h = t1 - t0;
        let tm = t0 + 0.5 * h;
        let x0 = self.xs[i];
        let prev = if i > 0 && self.grid.is_dense_cell(i - 1) {
            Some((p[i - 1], t0, self.xs[i - 1], x0, self.right[i - 1], self.left[i - 1]))
        } else {
            None
        };
        self.inside.set(false);
        let k1 = self.rhs(t0, x0, false, i, None)?;
        let mut cur = Cur { t0, t1, x0, m0: k1, end: None, prev };
        let mut out = (x0, 0.0);
        for iter in 0..4 {
            self.inside.set(false);
            let k2 = self.rhs(tm, x0 + 0.5 * h * k1, false, i, Some(&cur))?;
            let k3 = self.rhs(tm, x0 + 0.5 * h * k2, false, i, Some(&cur))?;
            let k4 = self.rhs(t1, x0 + h * k3, true, i, Some(&cur))?;
            let x1 = x0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            let m1 = self.rhs(t1, x1, true, i, Some(&cur))?;
            let done = !self.inside.get()
                || iter > 0 && (x1 - out.0).abs() <= 1e-15 * x1.abs().max(1e-300) && (m1 - out.1).abs() <= 1e-15 * m1.abs();
            out = (x1, m1);
            if done {
                break;
            }
            cur.end = Some(out);
        }
        self.right[i] = k1;
        self.left[i] = out.1;
        Ok(out.0)
    }
}
