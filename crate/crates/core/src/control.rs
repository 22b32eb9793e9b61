//! The distributed-delay gain functional, the raw parameter estimator and
//! the resulting feedback value.
//!
//! For a pair of histories `(x, u)` on `[-r, 0]`:
//!
//! ```text
//! p(x, u) = [(x(0)^2 - x(-r)^2 - 2<x, u>)^+ + c r x(0)^2] / [2 (|x|_2^2 + (eps^2 - x(0)^2)^+)]
//! q(x, u) = [x(0)^2 - x(-r)^2 - 2<x, u>] / [2 |x|_2^2]
//! u(t)    = -(2c + p(x_t, u_t)) x(t)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{HistoryWindow, WindowError};

/// Denominators at or below this are treated as a degenerate window. Only
/// guards floating underflow; no regularization is applied.
pub const DENOM_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid controller parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("decay-rate probe omega = {omega} violates 0 < omega <= c = {c} with exp(omega r) < 2 (r = {r})")]
    OmegaConstraint { omega: f64, c: f64, r: f64 },
    #[error("degenerate window: gain denominator {0:e} is not positive")]
    DegenerateWindow(f64),
    #[error("zero excitation: estimator needs a nonzero state history")]
    ZeroExcitation,
    #[error(transparent)]
    Window(#[from] WindowError),
}

/// Design constants of the controller plus numerical tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Residual-set radius.
    pub eps: f64,
    /// Assigned convergence rate.
    pub c: f64,
    /// Delay horizon.
    pub r: f64,
    /// Excitation threshold on `|x_t|_2` for identifier updates.
    pub sigma: f64,
    /// Decay-rate probe of the input estimate.
    pub omega: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// `|u|` above this aborts a run as a finite-time blow-up.
    pub blowup_limit: f64,
}

impl ControllerConfig {
    pub const DEFAULT_FP_TOL: f64 = 1e-12;
    pub const DEFAULT_FP_MAX_ITER: usize = 50;
    pub const DEFAULT_BLOWUP_LIMIT: f64 = 1e12;

    /// Config with default tolerances; `omega` defaults to the largest
    /// admissible value below `min(c, ln 2 / r)` scaled by one half.
    pub fn new(eps: f64, c: f64, r: f64, sigma: f64) -> Result<Self, ControlError> {
        let omega = 0.5 * c.min(std::f64::consts::LN_2 / r);
        Self::with_omega(eps, c, r, sigma, omega)
    }

    pub fn with_omega(eps: f64, c: f64, r: f64, sigma: f64, omega: f64) -> Result<Self, ControlError> {
        let cfg = Self {
            eps,
            c,
            r,
            sigma,
            omega,
            fp_tol: Self::DEFAULT_FP_TOL,
            fp_max_iter: Self::DEFAULT_FP_MAX_ITER,
            blowup_limit: Self::DEFAULT_BLOWUP_LIMIT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let positive = [
            ("eps", self.eps),
            ("c", self.c),
            ("r", self.r),
            ("sigma", self.sigma),
            ("blowup_limit", self.blowup_limit),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ControlError::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        if !(self.fp_tol.is_finite() && self.fp_tol >= 0.0) {
            return Err(ControlError::InvalidParameter {
                name: "fp_tol",
                value: self.fp_tol,
                reason: "must be nonnegative and finite",
            });
        }
        self.validate_omega()
    }

    /// `0 < omega <= c` and `exp(omega r) < 2`.
    pub fn validate_omega(&self) -> Result<(), ControlError> {
        let ok =
            self.omega.is_finite() && self.omega > 0.0 && self.omega <= self.c && (self.omega * self.r).exp() < 2.0;
        if ok {
            Ok(())
        } else {
            Err(ControlError::OmegaConstraint {
                omega: self.omega,
                c: self.c,
                r: self.r,
            })
        }
    }
}

/// The four scalars the gain and estimator functionals depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalParts {
    /// `x(0)`
    pub x_now: f64,
    /// `x(-r)`
    pub x_delayed: f64,
    /// `|x|_2^2`
    pub x_l2_sq: f64,
    /// `<x, u>`
    pub xu_inner: f64,
}

impl FunctionalParts {
    pub fn from_windows(xw: &HistoryWindow, uw: &HistoryWindow) -> Result<Self, ControlError> {
        let xu_inner = xw.inner(uw)?;
        Ok(Self {
            x_now: xw.newest(),
            x_delayed: xw.oldest(),
            x_l2_sq: xw.l2_norm_sq(),
            xu_inner,
        })
    }

    /// `x(0)^2 - x(-r)^2 - 2<x, u>`
    pub fn energy_balance(&self) -> f64 {
        self.x_now * self.x_now - self.x_delayed * self.x_delayed - 2.0 * self.xu_inner
    }
}

#[inline]
fn pos(v: f64) -> f64 {
    v.max(0.0)
}

pub fn p_from_parts(parts: &FunctionalParts, cfg: &ControllerConfig) -> Result<f64, ControlError> {
    let x0_sq = parts.x_now * parts.x_now;
    let denom = 2.0 * (parts.x_l2_sq + pos(cfg.eps * cfg.eps - x0_sq));
    if !(denom > DENOM_FLOOR) {
        return Err(ControlError::DegenerateWindow(denom));
    }
    Ok((pos(parts.energy_balance()) + cfg.c * cfg.r * x0_sq) / denom)
}

pub fn q_from_parts(parts: &FunctionalParts) -> Result<f64, ControlError> {
    if !(parts.x_l2_sq > 0.0) {
        return Err(ControlError::ZeroExcitation);
    }
    Ok(parts.energy_balance() / (2.0 * parts.x_l2_sq))
}

pub fn feedback_from_parts(parts: &FunctionalParts, cfg: &ControllerConfig) -> Result<f64, ControlError> {
    let p = p_from_parts(parts, cfg)?;
    Ok(-(2.0 * cfg.c + p) * parts.x_now)
}

/// Distributed-delay gain `p(x, u)`.
pub fn p_functional(xw: &HistoryWindow, uw: &HistoryWindow, cfg: &ControllerConfig) -> Result<f64, ControlError> {
    p_from_parts(&FunctionalParts::from_windows(xw, uw)?, cfg)
}

/// Raw estimate `q(x, u)` of the plant parameter.
pub fn q_functional(xw: &HistoryWindow, uw: &HistoryWindow) -> Result<f64, ControlError> {
    q_from_parts(&FunctionalParts::from_windows(xw, uw)?)
}

/// Feedback value `-(2c + p(x, u)) x(0)`.
pub fn feedback(xw: &HistoryWindow, uw: &HistoryWindow, cfg: &ControllerConfig) -> Result<f64, ControlError> {
    feedback_from_parts(&FunctionalParts::from_windows(xw, uw)?, cfg)
}
