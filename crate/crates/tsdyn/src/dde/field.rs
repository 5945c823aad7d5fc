use rayon::prelude::*;

use super::kinks::KinkMap;
use super::solver::solver_grid;
use super::{solve_ivp, Coef, DdeError, DelayEquation, DelayTable, History};
use crate::tscale::{Grid, GridFunction, PointKind, ScaleError};

/// Columns `t ↦ 𝒳(t, s)` of the fundamental solution, ordered by `s`.
#[derive(Debug, Clone)]
pub struct FundamentalField {
    pub s_samples: Vec<f64>,
    pub columns: Vec<GridFunction>,
    pub alpha_star: Vec<f64>,
    pub projected: usize,
    tol: f64,
}

impl FundamentalField {
    pub fn index_of(&self, s: f64) -> Option<usize> {
        let i = self.s_samples.partition_point(|&x| x < s - self.tol);
        (i < self.s_samples.len() && (self.s_samples[i] - s).abs() <= self.tol).then_some(i)
    }

    /// `𝒳(t, s_k)`; zero before `s_k`.
    pub fn value(&self, k: usize, t: f64) -> Result<f64, DdeError> {
        if t < self.s_samples[k] - self.tol {
            return Ok(0.0);
        }
        Ok(self.columns[k].eval(t)?)
    }

    pub fn max_abs(&self, k: usize) -> f64 {
        self.columns[k].values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Solves for each `s` with `x(s) = 1` and zero history. Columns are
/// computed in parallel on the current rayon pool.
pub fn fundamental_solution(
    eq: &DelayEquation,
    table: &DelayTable,
    s_samples: &[f64],
    h_max: f64,
) -> Result<FundamentalField, DdeError> {
    let mut s: Vec<f64> = s_samples.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup_by(|a, b| (*a - *b).abs() <= table.grid.tol);
    let unit = History::unit();
    let cols: Vec<_> = s
        .par_iter()
        .map(|&si| -> Result<_, DdeError> {
            let sol = solve_ivp(eq, table, si, &unit, None, h_max)?;
            Ok((sol, table.alpha_star(eq, si)?))
        })
        .collect::<Result<_, _>>()?;
    let projected = cols.iter().map(|(c, _)| c.projected).sum();
    let alpha_star = cols.iter().map(|(_, a)| *a).collect();
    let columns = cols.into_iter().map(|(c, _)| c.x).collect();
    Ok(FundamentalField { s_samples: s, columns, alpha_star, projected, tol: table.grid.tol })
}

/// All right-scattered grid points plus dense points, subsampled so the
/// dense share keeps the total at or below `max_cols` when possible.
pub fn default_s_samples(table: &DelayTable, max_cols: usize) -> Vec<f64> {
    let g = &table.grid;
    let n = g.len();
    let scattered: Vec<f64> = (0..n - 1).filter(|&i| g.kinds[i] == PointKind::Scattered).map(|i| g.points[i]).collect();
    let dense: Vec<f64> = (0..n - 1).filter(|&i| g.kinds[i] == PointKind::Dense).map(|i| g.points[i]).collect();
    let room = max_cols.saturating_sub(scattered.len()).max(usize::from(!dense.is_empty()));
    let mut out = scattered;
    if !dense.is_empty() {
        let stride = dense.len().div_ceil(room);
        out.extend(dense.iter().step_by(stride.max(1)));
    }
    if out.is_empty() {
        out.push(g.first());
    }
    out.sort_by(f64::total_cmp);
    out
}

const GAUSS3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 18.0), (0.0, 8.0 / 18.0), (0.774_596_669_241_483_4, 5.0 / 18.0)];

fn gauss_nodes(p0: f64, p1: f64) -> impl Iterator<Item = (f64, f64)> {
    let (m, r, h) = (0.5 * (p0 + p1), 0.5 * (p1 - p0), p1 - p0);
    GAUSS3.into_iter().map(move |(x, w)| (m + r * x, h * w))
}

fn split_nodes(g: &Grid, i: usize, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(g.points[i]);
    edges.extend_from_slice(cuts);
    edges.push(g.points[i + 1]);
    edges.windows(2).flat_map(|w| gauss_nodes(w[0], w[1])).collect()
}

/// Columns needed by [`variation_of_parameters`] from start `s`: `s`, the
/// right end of every scattered cell, three Gauss nodes inside every dense
/// cell and three on each piece of a cell split at a non-smooth point of
/// some `𝒳(t, ·)`.
pub fn vop_required_samples(eq: &DelayEquation, s: f64, h_max: f64) -> Result<Vec<f64>, DdeError> {
    let g = solver_grid(eq, &eq.table(h_max)?, s, h_max)?;
    let mut out = Vec::with_capacity(3 * g.len());
    out.push(g.first());
    for i in 0..g.len() - 1 {
        if g.is_dense_cell(i) {
            out.extend(gauss_nodes(g.points[i], g.points[i + 1]).map(|(x, _)| x));
        } else {
            out.push(g.points[i + 1]);
        }
    }
    let kinks = KinkMap::new(eq, &g)?;
    for &t in &g.points {
        for (i, cuts) in kinks.cells(t)? {
            out.extend(split_nodes(&g, i, &cuts).into_iter().map(|(x, _)| x));
        }
    }
    Ok(out)
}

/// Evaluates
/// `x(t) = 𝒳(t,s)x0 - ∫_s^t 𝒳(t,σ(η))A(η)φ(α(η))Δη + ∫_s^t 𝒳(t,σ(η))f(η)Δη`
/// on the grid from `s`. Scattered cells contribute `μ𝒳(t,σ(η))g(η)`;
/// dense cells use three-point Gauss quadrature, piecewise between the
/// points where `𝒳(t,·)` is not smooth. Interior nodes avoid the jumps
/// `𝒳(t,·)` has at cell ends.
pub fn variation_of_parameters(
    eq: &DelayEquation,
    table: &DelayTable,
    s: f64,
    history: &History,
    forcing: Option<&Coef>,
    field: &FundamentalField,
    h_max: f64,
) -> Result<GridFunction, DdeError> {
    let ts = &eq.ts;
    let s = ts.find(s).ok_or(ScaleError::NotInScale(s))?.t;
    let g = solver_grid(eq, table, s, h_max)?;
    let tol = g.tol;
    let a_star = table.alpha_star(eq, s)?;
    let col = |t: f64| field.index_of(t).ok_or(DdeError::MissingFieldSample(t));

    // g(η) = -A(η)φ(α(η)) + f(η), with φ vanishing from s on
    let source = |eta: f64| -> Result<f64, DdeError> {
        let a = eq.a.eval(eta, ts)?;
        let mut v = 0.0;
        if a != 0.0 {
            let al = eq.alpha_on_scale(eta)?;
            if al < s - tol {
                if al < a_star - tol {
                    return Err(DdeError::LookupBeforeHistory { t: eta, alpha: al, start: a_star });
                }
                v = -a * history.phi.at(al.max(a_star).min(s));
            }
        }
        if let Some(f) = forcing {
            v += f.eval(eta, ts)?;
        }
        Ok(v)
    };

    // per cell: (weights, column indices) for the quadrature nodes
    let n = g.len();
    let mut terms: Vec<Vec<(f64, usize)>> = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n - 1 {
        let (p0, p1) = (g.points[i], g.points[i + 1]);
        let h = p1 - p0;
        if g.kinds[i] == PointKind::Scattered {
            terms.push(vec![(h * source(p0)?, col(p1)?)]);
        } else {
            let mut cell = Vec::with_capacity(3);
            for (x, w) in gauss_nodes(p0, p1) {
                cell.push((w * source(x)?, col(x)?));
            }
            terms.push(cell);
        }
    }
    let kinks = KinkMap::new(eq, &g)?;
    let k_s = col(s)?;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<f64, DdeError> {
            let t = g.points[j];
            let mut x = field.value(k_s, t)? * history.x0;
            let split: Vec<_> = kinks.cells(t)?.into_iter().filter(|(i, _)| *i < j).collect();
            let mut next = split.iter().peekable();
            for (i, cell) in terms[..j].iter().enumerate() {
                if let Some((_, cuts)) = next.next_if(|(c, _)| *c == i) {
                    for (y, w) in split_nodes(&g, i, cuts) {
                        x += w * source(y)? * field.value(col(y)?, t)?;
                    }
                    continue;
                }
                for &(w, k) in cell {
                    if w != 0.0 {
                        x += w * field.value(k, t)?;
                    }
                }
            }
            Ok(x)
        })
        .collect::<Result<_, _>>()?;
    Ok(GridFunction::new(std::sync::Arc::new(g), values, crate::tscale::Interp::CubicHermite))
}
