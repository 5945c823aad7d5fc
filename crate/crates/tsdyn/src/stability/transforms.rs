use super::StabilityError;
use crate::dde::{Coef, DelayEquation};
use crate::expr::{BinOp, Expr, Func};
use crate::tscale::{build_grid_from, Segment, TimeScale};
use crate::tsexp::{check_regressive_fn, log_exp_closure, ExpError};

/// `x'(t) + A(t) x(θt) = 0` on `[1, horizon]` under `u = ln t`: the
/// equation `y'(u) + e^u A(e^u) y(u - ln(1/θ)) = 0` from `u = 0`. The
/// scale starts at `-ln(1/θ)` so the initial segment is part of it.
pub fn pantograph_transform(a: &Expr, theta: f64, horizon: f64) -> Result<DelayEquation, StabilityError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(StabilityError::BadTheta(theta));
    }
    let d = (1.0 / theta).ln();
    let ts = TimeScale::new(vec![Segment::Dense { a: -d, b: horizon.ln() }])?;
    let exp_t = Expr::Call(Func::Exp, vec![Expr::T]);
    let coef = Expr::bin(BinOp::Mul, exp_t.clone(), a.substitute_t(&exp_t));
    Ok(DelayEquation::new(ts, Coef::Expr(coef), Coef::func(move |u| u - d), 0.0)?)
}

/// `(M, λ)` with `|𝒳(t, s)| ≤ M (t/s)^{-λ}` from an exponential bound
/// `M0 e^{-λ0 ∫A}` of the transformed equation, where `coef_inf` bounds
/// its coefficient from below.
pub fn pantograph_envelope(m0: f64, lambda0: f64, coef_inf: f64) -> (f64, f64) {
    (m0, lambda0 * coef_inf)
}

/// `x^Δ + A x^σ + B x(β) = 0` (`Sigma`) or `x^Δ + A x + B x(β) = 0` (`Plain`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoTermVariant {
    Sigma,
    Plain,
}

#[derive(Debug, Clone)]
pub struct TwoTerm {
    pub ts: TimeScale,
    pub a: Coef,
    pub b: Coef,
    pub beta: Coef,
    pub t0: f64,
    pub variant: TwoTermVariant,
    /// Panel width of the quadrature inside the exponentials.
    pub h_max: f64,
}

/// The single-term equation for `y = e_A(t,t0) x` (`Sigma`) or
/// `y = e_{⊖(-A)}(t,t0) x` (`Plain`).
#[derive(Debug, Clone)]
pub struct TwoTermReduction {
    pub eq: DelayEquation,
    source: TwoTerm,
}

impl TwoTermReduction {
    fn log_e(&self, f: impl Fn(f64) -> f64, s: f64, t: f64) -> Result<f64, StabilityError> {
        Ok(log_exp_closure(&self.source.ts, f, s, t, self.source.h_max)?.log_abs)
    }

    fn a(&self) -> impl Fn(f64) -> f64 + '_ {
        let src = &self.source;
        move |x| src.a.eval(x, &src.ts).unwrap_or(f64::NAN)
    }

    /// `x(t)` from `y(t)`.
    pub fn back_map(&self, t: f64, y: f64) -> Result<f64, StabilityError> {
        let t0 = self.source.t0;
        let a = self.a();
        let log = match self.source.variant {
            TwoTermVariant::Sigma => -self.log_e(&a, t0, t)?,
            TwoTermVariant::Plain => self.log_e(|x| -a(x), t0, t)?,
        };
        Ok(y * log.exp())
    }

    /// `M e_{⊖A}(t, t0)`: the bound on `|x(t)|` implied by `|y| ≤ M`.
    pub fn envelope(&self, m: f64, t: f64) -> Result<f64, StabilityError> {
        Ok(m * (-self.log_e(self.a(), self.source.t0, t)?).exp())
    }
}

/// Builds the single-term equation with coefficient `B(t) e_A(t, β(t))`
/// (`Sigma`) or `B(t) e_{⊖(-A)}(σ(t), β(t))` (`Plain`). The latter needs
/// `1 - μA > 0` on the grid.
pub fn two_term_reduction(tt: &TwoTerm) -> Result<TwoTermReduction, StabilityError> {
    let ts = tt.ts.clone();
    if tt.variant == TwoTermVariant::Plain {
        let grid = build_grid_from(&ts, tt.h_max, tt.t0)?;
        let rep = check_regressive_fn(&grid, |x| -tt.a.eval(x, &ts).unwrap_or(f64::NAN));
        if !rep.is_positively_regressive {
            let (t, value) = rep.witness.map_or((None, f64::NAN), |(t, v)| (Some(t), v));
            return Err(ExpError::NotRegressive { t, value }.into());
        }
    }
    let (a, b, beta, variant, h) = (tt.a.clone(), tt.b.clone(), tt.beta.clone(), tt.variant, tt.h_max);
    let ts_c = ts.clone();
    let coef = move |t: f64, left: bool| -> f64 {
        let ts = &ts_c;
        let go = || -> Result<f64, StabilityError> {
            let bt = b.eval_mode(t, ts, left)?;
            if bt == 0.0 {
                return Ok(0.0);
            }
            let bv = beta.eval_mode(t, ts, left)?;
            let bv = if ts.contains(bv) { bv } else { ts.project_down(bv).unwrap_or(bv) };
            let af = |x: f64| a.eval(x, ts).unwrap_or(f64::NAN);
            let log = match variant {
                TwoTermVariant::Sigma => log_exp_closure(ts, af, bv, t, h)?.log_abs,
                TwoTermVariant::Plain => {
                    let st = if left { t } else { ts.sigma(t)? };
                    -log_exp_closure(ts, |x| -af(x), bv, st, h)?.log_abs
                }
            };
            Ok(bt * log.exp())
        };
        go().unwrap_or(f64::NAN)
    };
    let eq = DelayEquation::new(ts, Coef::func_lr(coef), tt.beta.clone(), tt.t0)?;
    Ok(TwoTermReduction { eq, source: tt.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sharpness {
    pub stable: bool,
    /// Spectral radius of the companion matrix of
    /// `x_{n+1} = x_n - a x_{n-1}`.
    pub modulus: f64,
}

pub fn eigen_sharpness(a: f64) -> Sharpness {
    let modulus = if a > 0.25 { a.sqrt() } else { 0.5 * (1.0 + (1.0 - 4.0 * a).sqrt()) };
    Sharpness { stable: modulus <= 1.0, modulus }
}
