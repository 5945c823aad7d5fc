//! Calculus on time scales and linear delay dynamic equations
//! `x^Δ(t) + A(t) x(α(t)) = 0`: simulation, fundamental solutions and
//! explicit stability certificates.

pub mod dde;
pub mod expr;
pub mod tscale;
pub mod tsexp;
pub mod stability;
