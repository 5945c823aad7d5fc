use std::collections::HashMap;

use super::{DdeError, DelayEquation};
use crate::tscale::{Grid, GridLoc, PointKind};

/// Highest order of non-smoothness (0 a jump, 1 a kink, …) that splits a
/// quadrature cell.
const MAX_ORDER: usize = 2;

/// Where `η ↦ 𝒳(t, η)` fails to be smooth, traced back from `t` through the
/// grid: `𝒳(p, ·)` jumps at `p`; across a dense run `[q, p]` it inherits
/// the points of `q` and of the flat stretches of `α`, and gains one order
/// of smoothness at `α(q)` and `α(p)`; a scattered step inherits those of
/// `ρ` and `α(ρ)`.
pub(crate) struct KinkMap<'a> {
    eq: &'a DelayEquation,
    g: &'a Grid,
    alpha: Vec<f64>,
    alpha_left: Vec<f64>,
    run_start: Vec<usize>,
    /// Values `α` is flattened to by projection between the run start and
    /// each node.
    flats: Vec<Vec<f64>>,
}

impl<'a> KinkMap<'a> {
    pub(crate) fn new(eq: &'a DelayEquation, g: &'a Grid) -> Result<Self, DdeError> {
        let n = g.len();
        let tol = g.tol;
        let mut alpha = Vec::with_capacity(n);
        let mut alpha_left = Vec::with_capacity(n);
        let mut run_start = Vec::with_capacity(n);
        let mut flats: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (k, &p) in g.points.iter().enumerate() {
            let a = eq.alpha_on_scale(p)?;
            alpha.push(a);
            alpha_left.push(eq.alpha_on_scale_mode(p, true)?);
            let in_run = k > 0 && g.kinds[k - 1] == PointKind::Dense;
            run_start.push(if in_run { run_start[k - 1] } else { k });
            let mut f = if in_run { flats[k - 1].clone() } else { Vec::new() };
            for v in [a, alpha_left[k]] {
                if (eq.alpha.eval(p, &eq.ts)? - v).abs() > tol && f.iter().all(|&r| (r - v).abs() > tol) {
                    f.push(v);
                }
            }
            flats.push(f);
        }
        Ok(KinkMap { eq, g, alpha, alpha_left, run_start, flats })
    }

    /// Dense cells holding non-smooth points of `𝒳(t, ·)`, each with its
    /// sorted interior points.
    pub(crate) fn cells(&self, t: f64) -> Result<Vec<(usize, Vec<f64>)>, DdeError> {
        let g = self.g;
        let gap = 1e-6 * g.h_max;
        let mut best: HashMap<u64, usize> = HashMap::new();
        let mut stack = vec![(t, 0usize)];
        let mut out: Vec<(usize, Vec<f64>)> = Vec::new();
        while let Some((p, order)) = stack.pop() {
            if order > MAX_ORDER || p < g.first() - g.tol {
                continue;
            }
            if best.get(&p.to_bits()).is_some_and(|&b| b <= order) {
                continue;
            }
            best.insert(p.to_bits(), order);
            match g.locate(p) {
                GridLoc::At(k) => {
                    if k == 0 {
                        continue;
                    }
                    if g.kinds[k - 1] == PointKind::Scattered {
                        stack.push((g.points[k - 1], order));
                        stack.push((self.alpha[k - 1], order));
                    } else {
                        self.run(k, self.alpha_left[k], order, &mut stack);
                    }
                }
                GridLoc::Inside(i) => {
                    if p - g.points[i] > gap && g.points[i + 1] - p > gap {
                        match out.iter_mut().find(|(c, _)| *c == i) {
                            Some((_, v)) => v.push(p),
                            None => out.push((i, vec![p])),
                        }
                    }
                    self.run(i, self.eq.alpha_on_scale(p)?, order, &mut stack);
                }
                _ => {}
            }
        }
        for (_, v) in &mut out {
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= gap);
        }
        out.sort_by_key(|(c, _)| *c);
        Ok(out)
    }

    /// Dense run ending at node `k` (or inside cell `k`) with `α = a_end`
    /// at its end.
    fn run(&self, k: usize, a_end: f64, order: usize, stack: &mut Vec<(f64, usize)>) {
        let q = self.run_start[k];
        stack.push((self.g.points[q], order));
        stack.push((self.alpha[q], order + 1));
        stack.push((a_end, order + 1));
        stack.extend(self.flats[k].iter().map(|&r| (r, order)));
    }
}
