//! Closed-form lower bounds on repair correctness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("log argument `{symbol}` = {value} must be positive")]
    Domain { symbol: &'static str, value: f64 },
    #[error("{symbol} = {value} outside [0, 1]")]
    Range { symbol: &'static str, value: f64 },
    #[error("lower bound {lower} exceeds upper bound {upper} for {symbol}")]
    Interval { symbol: &'static str, lower: f64, upper: f64 },
    #[error("tau values must be positive and finite, got {0}")]
    Tau(f64),
    #[error("non-finite intermediate in {0}")]
    NonFinite(&'static str),
}

/// Characteristic bounds and rates of one factor neighborhood for a concept
/// whose true value is `c`.
///
/// `T^P`/`T^N`: rule satisfied / violated when the concept is correct / wrong;
/// `F^N`/`F^P` are the complementary rates. Each rate `X` lies in `[l_x, u_x]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub l_tp: f64,
    pub u_tp: f64,
    pub l_tn: f64,
    pub u_tn: f64,
    pub l_fn: f64,
    pub u_fn: f64,
    pub l_fp: f64,
    pub u_fp: f64,
    pub t_p: f64,
    pub t_n: f64,
    pub f_n: f64,
    pub f_p: f64,
    pub c: bool,
}

impl BoundInputs {
    pub fn check(&self) -> Result<(), BoundError> {
        let triples = [
            ("T^P", self.l_tp, self.t_p, self.u_tp),
            ("T^N", self.l_tn, self.t_n, self.u_tn),
            ("F^N", self.l_fn, self.f_n, self.u_fn),
            ("F^P", self.l_fp, self.f_p, self.u_fp),
        ];
        for (symbol, lower, rate, upper) in triples {
            for value in [lower, rate, upper] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(BoundError::Range { symbol, value });
                }
            }
            if lower > upper {
                return Err(BoundError::Interval { symbol, lower, upper });
            }
        }
        Ok(())
    }
}

/// `coef · log(num / den)`, skipped when `coef` is zero.
fn log_term(coef: f64, num: (&'static str, f64), den: (&'static str, f64)) -> Result<f64, BoundError> {
    if coef == 0.0 {
        return Ok(0.0);
    }
    for (symbol, value) in [num, den] {
        if value <= 0.0 {
            return Err(BoundError::Domain { symbol, value });
        }
    }
    Ok(coef * (num.1 / den.1).ln())
}

/// Lower bound on the expected satisfaction gap of the correct over the wrong
/// concept value: `Z1 + Z2`, where only the branch selected by the binary
/// label contributes. The label-dependent log term is singular at both
/// endpoints and is taken in its one-sided limit, i.e. dropped.
pub fn lemma2_lower_bound(b: &BoundInputs) -> Result<f64, BoundError> {
    b.check()?;
    if b.c {
        Ok(log_term(b.t_p, ("L^T_P", b.l_tp), ("1 - U^F_P", 1.0 - b.u_fp))?
            + log_term(1.0 - b.t_p, ("1 - U^T_P", 1.0 - b.u_tp), ("1 - L^F_P", 1.0 - b.l_fp))?
            - log_term(b.f_n, ("U^T_N", b.u_tn), ("L^F_N", b.l_fn))?
            + log_term(1.0 - b.f_n, ("1 - L^T_N", 1.0 - b.l_tn), ("1 - U^F_N", 1.0 - b.u_fn))?)
    } else {
        Ok(log_term(b.t_n, ("L^T_N", b.l_tn), ("U^F_N", b.u_fn))?
            + log_term(1.0 - b.t_n, ("1 - U^T_N", 1.0 - b.u_tn), ("1 - L^F_N", 1.0 - b.l_fn))?
            - log_term(b.f_p, ("U^T_P", b.u_tp), ("L^F_P", b.l_fp))?
            + log_term(1.0 - b.f_p, ("1 - L^T_P", 1.0 - b.l_tp), ("1 - U^F_P", 1.0 - b.u_fp))?)
    }
}

/// τ = log(U^T (1 − L^F) / (L^F (1 − U^T))).
pub fn tau(u_t: f64, l_f: f64) -> Result<f64, BoundError> {
    for (symbol, value) in [("U^T", u_t), ("L^F", l_f), ("1 - U^T", 1.0 - u_t), ("1 - L^F", 1.0 - l_f)] {
        if value <= 0.0 {
            return Err(BoundError::Domain { symbol, value });
        }
    }
    let t = (u_t * (1.0 - l_f) / (l_f * (1.0 - u_t))).ln();
    if t > 0.0 && t.is_finite() {
        Ok(t)
    } else {
        Err(BoundError::Tau(t))
    }
}

/// Π_c (1 − exp(−2 L_c² / Σ τ_i²)), clamped to [0, 1].
pub fn theorem1_bound(l_values: &[f64], taus: &[f64]) -> Result<f64, BoundError> {
    if let Some(&t) = taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(BoundError::Tau(t));
    }
    let denom: f64 = taus.iter().map(|t| t * t).sum();
    if denom <= 0.0 {
        return Err(BoundError::Tau(0.0));
    }
    let product: f64 = l_values.iter().map(|l| 1.0 - (-2.0 * l * l / denom).exp()).product();
    if !product.is_finite() {
        return Err(BoundError::NonFinite("theorem1_bound"));
    }
    Ok(product.clamp(0.0, 1.0))
}

/// 1 − exp(−2N(Θ^T − Θ^F)). Negative when Θ^T < Θ^F, i.e. when the
/// hypothesis of the bound does not hold.
pub fn theorem2_bound(n: usize, theta_t: f64, theta_f: f64) -> f64 {
    1.0 - (-2.0 * n as f64 * (theta_t - theta_f)).exp()
}

pub fn theorem2_assumption_holds(theta_t: f64, theta_f: f64) -> bool {
    theta_t > theta_f
}
