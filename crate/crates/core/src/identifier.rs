//! Hybrid piecewise-constant parameter identifier.
//!
//! The estimate is held on each interval `[i r, (i + 1) r)`. At the boundary
//! `(i + 1) r` it is either kept (if `|x_s|_2 < sigma` for every observed
//! instant of the interval) or replaced by `q(x_tau, u_tau)`, where `tau` is
//! the latest instant at which the interval's maximum of `|x_s|_2` is
//! attained. The estimate is never fed back into the control law.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{q_functional, ControlError, ControllerConfig};
use crate::history::HistoryWindow;

/// Relative tolerance under which two window norms count as tied; the
/// later instant wins a tie.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdentifierError {
    #[error("observation at t = {t} lies outside interval [{lo}, {hi}]")]
    OutOfInterval { t: f64, lo: f64, hi: f64 },
    #[error("boundary update at interval {0} without any observation")]
    NoObservation(u64),
    #[error(transparent)]
    Estimator(#[from] ControlError),
}

/// One boundary decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub time: f64,
    pub theta_hat: f64,
    pub updated: bool,
    pub best_norm: f64,
    pub best_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Snapshot {
    norm: f64,
    time: f64,
    x: HistoryWindow,
    u: HistoryWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifierState {
    theta_hat: f64,
    interval_index: u64,
    horizon: f64,
    best: Option<Snapshot>,
    update_log: Vec<UpdateRecord>,
}

impl IdentifierState {
    pub fn new(theta_hat0: f64, horizon: f64) -> Self {
        Self {
            theta_hat: theta_hat0,
            interval_index: 0,
            horizon,
            best: None,
            update_log: Vec::new(),
        }
    }

    pub fn theta_hat(&self) -> f64 {
        self.theta_hat
    }

    pub fn interval_index(&self) -> u64 {
        self.interval_index
    }

    /// Running maximum of `|x_s|_2` over the current interval.
    pub fn best_norm(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.norm)
    }

    /// Latest time at which [`best_norm`](Self::best_norm) was attained.
    pub fn best_time(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.time)
    }

    pub fn update_log(&self) -> &[UpdateRecord] {
        &self.update_log
    }

    pub fn into_update_log(self) -> Vec<UpdateRecord> {
        self.update_log
    }

    fn interval_bounds(&self) -> (f64, f64) {
        let lo = self.interval_index as f64 * self.horizon;
        (lo, lo + self.horizon)
    }

    /// Records the grid instant `t` with histories `(x_t, u_t)`.
    pub fn observe(&mut self, t: f64, xw: &HistoryWindow, uw: &HistoryWindow) -> Result<(), IdentifierError> {
        let norm = xw.l2_norm_sq().sqrt();
        self.observe_with_norm(t, norm, xw, uw)
    }

    /// Same as [`observe`](Self::observe) with `|x_t|_2` already computed.
    pub(crate) fn observe_with_norm(
        &mut self,
        t: f64,
        norm: f64,
        xw: &HistoryWindow,
        uw: &HistoryWindow,
    ) -> Result<(), IdentifierError> {
        let (lo, hi) = self.interval_bounds();
        let slack = 1e-9 * self.horizon;
        if t < lo - slack || t > hi + slack {
            return Err(IdentifierError::OutOfInterval { t, lo, hi });
        }
        let replace = match &self.best {
            None => true,
            Some(b) => norm >= b.norm - TIE_TOL * b.norm.max(1.0),
        };
        if replace {
            let norm = self.best.as_ref().map_or(norm, |b| b.norm.max(norm));
            self.best = Some(Snapshot {
                norm,
                time: t,
                x: xw.clone(),
                u: uw.clone(),
            });
        }
        Ok(())
    }

    /// Closes the current interval at `(i + 1) r`.
    pub fn boundary_update(&mut self, cfg: &ControllerConfig) -> Result<UpdateRecord, IdentifierError> {
        let best = self
            .best
            .take()
            .ok_or(IdentifierError::NoObservation(self.interval_index))?;
        let updated = best.norm >= cfg.sigma;
        if updated {
            self.theta_hat = q_functional(&best.x, &best.u)?;
        }
        self.interval_index += 1;
        let record = UpdateRecord {
            time: self.interval_index as f64 * self.horizon,
            theta_hat: self.theta_hat,
            updated,
            best_norm: best.norm,
            best_time: best.time,
        };
        self.update_log.push(record);
        Ok(record)
    }
}

/// Ultimate estimation error bound `sqrt(r) / sigma * d_sup`.
pub fn estimation_bound(cfg: &ControllerConfig, d_sup: f64) -> f64 {
    cfg.r.sqrt() / cfg.sigma * d_sup
}
