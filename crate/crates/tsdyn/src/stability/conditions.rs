use std::sync::Arc;

use rayon::prelude::*;

use super::{ConditionReport, DelayCond, StabilityError};
use crate::dde::{DelayEquation, DelayTable};
use crate::tscale::{build_grid_from, CellIntegrals, Grid, PointKind};

pub(super) const GAUSS3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 18.0), (0.0, 8.0 / 18.0), (0.774_596_669_241_483_4, 5.0 / 18.0)];

/// Relative growth from the cut to the full horizon above which a supremum
/// is reported as unbounded.
const GROWTH_TOL: f64 = 1e-3;
/// Relative growth of `∫ A` over the last quarter that counts as divergence.
const DIVERGENCE_GROWTH: f64 = 0.02;
/// Tolerance of the weak (`≤ 1`) conditions.
const WEAK_TOL: f64 = 1e-9;
/// Slack of the exponential domination test, in log units.
const DOMINATION_TOL: f64 = 1e-13;
/// Largest number of start points sampled by the indicator conditions.
const CHI_SAMPLES: usize = 512;

/// A quadrature node of one cell of the analysis grid.
#[derive(Debug, Clone, Copy)]
pub(super) struct Node {
    pub x: f64,
    /// Weight times `A(x)`; `μA` for a scattered cell.
    pub wa: f64,
    /// Raw `α(x)`.
    pub alpha: f64,
}

/// Grids and samples shared by the condition checks of one equation.
pub struct Analysis<'a> {
    pub eq: &'a DelayEquation,
    pub h_max: f64,
    /// Safety margin of the strict (`< 1`) conditions.
    pub margin: f64,
    pub table: DelayTable,
    /// Grid from the lowest delayed argument `α_*(t0)` on.
    pub(super) wide: Arc<Grid>,
    pub(super) a_wide: CellIntegrals,
    /// Last grid index of the truncated horizon used by the growth tests.
    pub(super) cut: usize,
    pub(super) nodes: Vec<Vec<Node>>,
    /// `∫ A` over each cell of `table.grid`.
    pub(super) cell_a: Vec<f64>,
}

impl<'a> Analysis<'a> {
    pub fn new(eq: &'a DelayEquation, h_max: f64, margin: f64) -> Result<Self, StabilityError> {
        let table = eq.table(h_max)?;
        let lo = table.suffix_min[0].min(eq.t0);
        let wide = Arc::new(build_grid_from(&eq.ts, h_max, lo)?);
        for &p in &wide.points {
            eq.a.eval(p, &eq.ts)?;
        }
        let a = |x: f64| eq.a.eval(x, &eq.ts).unwrap_or(f64::NAN);
        let a_wide = CellIntegrals::new(wide.clone(), a);
        if let Some(i) = a_wide.cells().iter().position(|c| !c.is_finite()) {
            return Err(StabilityError::Numeric(format!("A is not finite on the cell at {}", wide.points[i])));
        }

        let g = &table.grid;
        let n = g.len();
        let mut nodes = Vec::with_capacity(n.saturating_sub(1));
        for c in 0..n - 1 {
            let (p0, p1) = (g.points[c], g.points[c + 1]);
            let mut cell = Vec::with_capacity(3);
            if g.kinds[c] == PointKind::Scattered {
                cell.push(Node { x: p0, wa: (p1 - p0) * eq.a.eval(p0, &eq.ts)?, alpha: eq.alpha.eval(p0, &eq.ts)? });
            } else {
                let (m, r) = (0.5 * (p0 + p1), 0.5 * (p1 - p0));
                for (z, w) in GAUSS3 {
                    let x = m + r * z;
                    cell.push(Node { x, wa: 2.0 * r * w * eq.a.eval(x, &eq.ts)?, alpha: eq.alpha.eval(x, &eq.ts)? });
                }
            }
            nodes.push(cell);
        }
        let cell_a: Vec<f64> = nodes.iter().map(|c| c.iter().map(|nd| nd.wa).sum()).collect();

        // progress: dense length plus one per scattered point
        let mut prog = vec![0.0; n];
        for c in 0..n - 1 {
            let step = if g.kinds[c] == PointKind::Scattered { 1.0 } else { g.points[c + 1] - g.points[c] };
            prog[c + 1] = prog[c] + step;
        }
        let target = 0.75 * prog[n - 1];
        let cut = prog.partition_point(|&p| p < target).clamp(1.min(n - 1), n - 1);

        Ok(Analysis { eq, h_max, margin, table, wide, a_wide, cut, nodes, cell_a })
    }

    pub fn horizon(&self) -> f64 {
        self.table.grid.last()
    }

    /// End of the truncated horizon used by the growth heuristics.
    pub fn cut_point(&self) -> f64 {
        self.table.grid.points[self.cut]
    }

    pub(super) fn a_at(&self, x: f64) -> f64 {
        self.eq.a.eval(x, &self.eq.ts).unwrap_or(f64::NAN)
    }

    /// `∫_lo^hi A Δη` for scale points in the analysis range; zero when
    /// `hi <= lo`.
    pub fn a_integral(&self, lo: f64, hi: f64) -> Result<f64, StabilityError> {
        if hi <= lo {
            return Ok(0.0);
        }
        Ok(self.a_wide.integral(&|x| self.a_at(x), lo, hi)?)
    }

    pub(super) fn sigma_at(&self, i: usize) -> f64 {
        let g = &self.table.grid;
        if g.kinds[i] == PointKind::Scattered && i + 1 < g.len() {
            g.points[i + 1]
        } else {
            g.points[i]
        }
    }

    fn report(&self, name: &'static str, satisfied: bool, value: f64, attained_at: f64) -> ConditionReport {
        ConditionReport { name, satisfied, value, attained_at, horizon: self.horizon() }
    }

    /// `α(t) ≤ t` at every grid point; the value is `max(α(t) - t)`.
    pub fn check_a1(&self) -> Result<ConditionReport, StabilityError> {
        let eq = self.eq;
        let g = &self.table.grid;
        let mut worst = (f64::NEG_INFINITY, g.first());
        for &p in &g.points {
            let d = eq.alpha.eval(p, &eq.ts)? - p;
            if d > worst.0 {
                worst = (d, p);
            }
        }
        Ok(self.report("A1", worst.0 <= g.tol, worst.0, worst.1))
    }

    /// `α(σ(t)) ≤ t` at every grid point below the horizon.
    pub fn check_a2(&self) -> Result<ConditionReport, StabilityError> {
        let eq = self.eq;
        let g = &self.table.grid;
        let mut worst = (f64::NEG_INFINITY, g.first());
        for i in 0..g.len().saturating_sub(1).max(1) {
            let p = g.points[i];
            let d = eq.alpha.eval(self.sigma_at(i), &eq.ts)? - p;
            if d > worst.0 {
                worst = (d, p);
            }
        }
        Ok(self.report("A2", worst.0 <= g.tol, worst.0, worst.1))
    }

    /// Supremum over grid `t` of `∫_{lower(t)}^{upper(t)} A Δη`.
    fn window_sup<L>(&self, lower: L, upper_sigma: bool) -> Result<(f64, f64), StabilityError>
    where
        L: Fn(usize) -> f64 + Sync,
    {
        let g = &self.table.grid;
        let vals: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let hi = if upper_sigma { self.sigma_at(i) } else { g.points[i] };
                self.a_integral(lower(i).min(hi), hi)
            })
            .collect::<Result<_, _>>()?;
        Ok(argmax(&vals, &g.points))
    }

    /// `sup ∫_{α_*(t)}^{σ(t)} A` (under A1) or `sup ∫_{α_*(t)}^{t} A` (under
    /// A2); satisfied when below `1 - margin`.
    pub fn strict_condition(&self, cond: DelayCond) -> Result<ConditionReport, StabilityError> {
        let (v, at) = self.window_sup(|i| self.table.suffix_min[i], cond == DelayCond::A1)?;
        let name = match cond {
            DelayCond::A1 => "L31_strict",
            DelayCond::A2 => "L41_strict",
        };
        Ok(self.report(name, v < 1.0 - self.margin, v, at))
    }

    /// `sup ∫_{α(t)}^{σ(t)} A` (A1) or `sup ∫_{α(t)}^{t} A` (A2); satisfied
    /// when at most 1.
    pub fn weak_condition(&self, cond: DelayCond) -> Result<ConditionReport, StabilityError> {
        let (v, at) = self.window_sup(|i| self.table.alpha[i], cond == DelayCond::A1)?;
        let name = match cond {
            DelayCond::A1 => "L32_weak",
            DelayCond::A2 => "L42_weak",
        };
        Ok(self.report(name, v <= 1.0 + WEAK_TOL, v, at))
    }

    /// The delay table restricted to grid indices `0..=k`.
    fn prefix_table(&self, k: usize) -> DelayTable {
        let g = &self.table.grid;
        let mut kinds = g.kinds[..=k].to_vec();
        kinds[k] = PointKind::Dense;
        let grid = Grid { points: g.points[..=k].to_vec(), kinds, h_max: g.h_max, tol: g.tol };
        let alpha = self.table.alpha[..=k].to_vec();
        let mut suffix_min = alpha.clone();
        for i in (0..k).rev() {
            suffix_min[i] = suffix_min[i].min(suffix_min[i + 1]);
        }
        let end = g.points[k];
        let jumps = self.table.jumps.iter().copied().filter(|&j| j < end).collect();
        DelayTable { grid: Arc::new(grid), alpha, suffix_min, jumps }
    }

    /// `K0 = sup ∫_s^{α_{-1}(s)} A` and `H0 = sup (α_{-1}(s) - s)`.
    /// Each is reported finite unless its supremum grows between the
    /// truncated and the full horizon.
    pub fn compute_k0_h0(&self) -> Result<(ConditionReport, ConditionReport), StabilityError> {
        let eq = self.eq;
        let pts = &self.table.grid.points;
        let sweep = |tab: &DelayTable, upto: usize| -> Result<(Vec<f64>, Vec<f64>), StabilityError> {
            let rows: Vec<(f64, f64)> = (0..=upto)
                .into_par_iter()
                .map(|i| {
                    let s = pts[i];
                    let inv = tab.alpha_inv(eq, s)?;
                    let v = inv.value.max(s);
                    Ok((self.a_integral(s, v)?, v - s))
                })
                .collect::<Result<_, StabilityError>>()?;
            Ok(rows.into_iter().unzip())
        };
        let (k_full, h_full) = sweep(&self.table, pts.len() - 1)?;
        let (k_cut, h_cut) = sweep(&self.prefix_table(self.cut), self.cut)?;
        let mk = |name, full: &[f64], cut: &[f64]| {
            let (v, at) = argmax(full, pts);
            let (vc, _) = argmax(cut, pts);
            self.report(name, v <= vc * (1.0 + GROWTH_TOL) + 1e-9, v, at)
        };
        Ok((mk("K0_finite", &k_full, &k_cut), mk("H0_finite", &h_full, &h_cut)))
    }

    /// `∫_{t0}^{T} A Δη`, reported divergent when the last quarter of the
    /// horizon adds at least 2% to the first three quarters.
    pub fn check_divergence(&self) -> ConditionReport {
        let full: f64 = self.cell_a.iter().sum();
        let cut: f64 = self.cell_a[..self.cut].iter().sum();
        let divergent = full > 1e-12 && full >= cut * (1.0 + DIVERGENCE_GROWTH);
        self.report("divergence", divergent, full, self.horizon())
    }

    /// The indicator conditions `sup_s ∫_s^∞ A(η) χ(α(η) < s) Δη` and its
    /// `e_λ(σ(η), s)`-weighted variant, over at most 512 start points.
    pub fn check_chi_conditions(&self, lambda: f64) -> Result<(ConditionReport, ConditionReport), StabilityError> {
        let eq = self.eq;
        let g = &self.table.grid;
        let n = g.len();
        let tol = g.tol;
        let mut cum = vec![0.0; n];
        for c in 0..n - 1 {
            let step = match g.kinds[c] {
                PointKind::Scattered => (g.mu_at(c) * lambda).ln_1p(),
                PointKind::Dense => lambda * (g.points[c + 1] - g.points[c]),
            };
            cum[c + 1] = cum[c] + step;
        }
        let stride = n.div_ceil(CHI_SAMPLES).max(1);
        let mut samples: Vec<usize> = (0..n).step_by(stride).collect();
        samples.push(self.cut);
        samples.sort_unstable();
        samples.dedup();

        // (plain, weighted) for the full and the truncated horizon
        let rows: Vec<[f64; 4]> = samples
            .par_iter()
            .map(|&i| {
                let s = g.points[i];
                let end = self.table.alpha_inv(eq, s)?.value;
                let mut acc = [0.0; 4];
                for c in i..n - 1 {
                    if g.points[c] > end + tol {
                        break;
                    }
                    if c == self.cut {
                        acc[2] = acc[0];
                        acc[3] = acc[1];
                    }
                    for nd in &self.nodes[c] {
                        if nd.alpha < s - tol {
                            let log_w = match g.kinds[c] {
                                PointKind::Scattered => cum[c + 1],
                                PointKind::Dense => cum[c] + lambda * (nd.x - g.points[c]),
                            } - cum[i];
                            acc[0] += nd.wa;
                            acc[1] += nd.wa * log_w.exp();
                        }
                    }
                }
                if i >= self.cut || end < self.cut_point() - tol {
                    acc[2] = if i >= self.cut { 0.0 } else { acc[0] };
                    acc[3] = if i >= self.cut { 0.0 } else { acc[1] };
                }
                Ok(acc)
            })
            .collect::<Result<_, StabilityError>>()?;
        let pts: Vec<f64> = samples.iter().map(|&i| g.points[i]).collect();
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
        let mk = |name, full: Vec<f64>, cut: Vec<f64>| {
            let (v, at) = argmax(&full, &pts);
            let (vc, _) = argmax(&cut, &pts);
            self.report(name, v <= vc * (1.0 + GROWTH_TOL) + 1e-9, v, at)
        };
        Ok((mk("chi_K", col(0), col(2)), mk("chi_H", col(1), col(3))))
    }

    /// Largest `λ1` with `e(t,s) ≤ e_{⊖λ1}(t,s)` for all grid pairs, where
    /// `e = e_{⊖(λA)}` under A1 and `e = e_{-λA}` under A2 (`M1 = 1`).
    /// Returns the fits over the full and over the truncated horizon.
    pub fn fit_lambda1(&self, cond: DelayCond, lambda: f64) -> (f64, f64) {
        let g = &self.table.grid;
        let n = g.len();
        // per cell: (graininess or 0, dense length, -ln e over the cell)
        let cells: Vec<(f64, f64, f64)> = (0..n - 1)
            .map(|c| match g.kinds[c] {
                PointKind::Scattered => {
                    let mu = g.mu_at(c);
                    let la = lambda * self.nodes[c][0].wa;
                    let f = match cond {
                        DelayCond::A1 => la.ln_1p(),
                        DelayCond::A2 if la < 1.0 => -(-la).ln_1p(),
                        DelayCond::A2 => f64::INFINITY,
                    };
                    (mu, 0.0, f)
                }
                PointKind::Dense => (0.0, g.points[c + 1] - g.points[c], lambda * self.cell_a[c]),
            })
            .collect();
        let fit = |cells: &[(f64, f64, f64)]| -> f64 {
            let excess = |l1: f64| {
                let (mut run, mut best) = (0.0f64, 0.0f64);
                for &(mu, h, f) in cells {
                    let gi = if mu > 0.0 { (mu * l1).ln_1p() } else { l1 * h };
                    run = (run + gi - f).max(0.0);
                    best = best.max(run);
                }
                best
            };
            let ok = |l1: f64| excess(l1) <= DOMINATION_TOL;
            if !ok(1e-12) {
                return 0.0;
            }
            let mut hi = 1.0;
            while ok(hi) && hi < 1e6 {
                hi *= 2.0;
            }
            if ok(hi) {
                return hi;
            }
            let mut lo = 1e-12;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            lo
        };
        (fit(&cells), fit(&cells[..self.cut]))
    }

    /// The domination hypothesis for one `λ`: a positive fit that does not
    /// shrink by more than half from the truncated to the full horizon.
    pub fn dominated(&self, cond: DelayCond, lambda: f64) -> (bool, f64) {
        let (full, cut) = self.fit_lambda1(cond, lambda);
        (full > 1e-9 && full >= 0.5 * cut, full)
    }
}

/// `(max, point)` with the first point attaining it.
fn argmax(vals: &[f64], pts: &[f64]) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, pts[0]);
    for (v, p) in vals.iter().zip(pts) {
        if *v > best.0 || v.is_nan() {
            best = (*v, *p);
        }
    }
    best
}
