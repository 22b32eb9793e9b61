//! Method-of-steps integration of the closed loop
//! `x' = theta x + u + d`, `u(t) = -(2c + p(x_t, u_t)) x(t)`.
//!
//! Each grid step is a Heun predictor-corrector on the plant. The input at
//! the new grid point enters its own gain through the `h / 2` trapezoid
//! weight of `<x_t, u_t>` (and through the corrected state), so it is found
//! by a scalar fixed-point iteration `u+ = feedback(x_t+, u_t+(u+))`. For
//! small `h` the map is a contraction.

mod disturbance;
mod trace;

pub use disturbance::{DisturbanceError, DisturbanceSpec};
pub use trace::{
    read_meta, read_rows, write_rows, SimulationTrace, SolverStats, TraceError, TraceMeta, TraceRow, COLUMNS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{feedback_from_parts, p_from_parts, ControlError, ControllerConfig, FunctionalParts};
use crate::history::{HistoryWindow, WindowError};
use crate::identifier::{IdentifierError, IdentifierState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("blow-up detected at t = {t}: |u| = {u:e} exceeds limit {limit:e}")]
    BlowUp { t: f64, u: f64, limit: f64 },
    #[error("input fixed point at t = {t} did not converge in {iterations} iterations (residual {residual:e})")]
    StepFailure { t: f64, iterations: usize, residual: f64 },
    #[error("compatibility condition unsolvable in {iterations} iterations (residual {residual:e})")]
    CompatibilityUnsolvable { iterations: usize, residual: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Disturbance(#[from] DisturbanceError),
    #[error(transparent)]
    Identifier(#[from] IdentifierError),
}

/// Ground-truth plant parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub theta: f64,
}

/// Outcome of one scalar fixed-point solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointStats {
    pub iterations: usize,
    /// `|G(u) - u| / max(1, |u|)` at the accepted `u`.
    pub residual: f64,
}

#[derive(Debug)]
enum FixedPointFailure {
    NotConverged {
        iterations: usize,
        residual: f64,
        last: f64,
    },
    Map(ControlError),
}

impl From<ControlError> for FixedPointFailure {
    fn from(e: ControlError) -> Self {
        Self::Map(e)
    }
}

/// Iterates `v <- map(v)` until `|map(v) - v| <= tol * max(1, |v|)`.
fn solve_fixed_point<F>(
    mut v: f64,
    tol: f64,
    max_iter: usize,
    mut map: F,
) -> Result<(f64, FixedPointStats), FixedPointFailure>
where
    F: FnMut(f64) -> Result<f64, ControlError>,
{
    let mut residual = f64::INFINITY;
    for iterations in 1..=max_iter {
        let g = map(v)?;
        residual = (g - v).abs() / v.abs().max(1.0);
        if residual <= tol {
            return Ok((v, FixedPointStats { iterations, residual }));
        }
        if !g.is_finite() {
            return Err(FixedPointFailure::NotConverged {
                iterations,
                residual,
                last: g,
            });
        }
        v = g;
    }
    Err(FixedPointFailure::NotConverged {
        iterations: max_iter,
        residual,
        last: v,
    })
}

/// Heun step for `x' = theta x + u + d` on `[t, t + h]` where the input at
/// `t + h` solves `u+ = input_at(x+, u+)`. Returns `(x+, u+, stats)`.
#[allow(clippy::too_many_arguments)]
fn heun_step<F>(
    x: f64,
    u: f64,
    theta: f64,
    h: f64,
    d: (f64, f64),
    tol: f64,
    max_iter: usize,
    mut input_at: F,
) -> Result<(f64, f64, FixedPointStats), FixedPointFailure>
where
    F: FnMut(f64, f64) -> Result<f64, ControlError>,
{
    let f0 = theta * x + u + d.0;
    let predicted = x + h * f0;
    let base = x + 0.5 * h * (f0 + theta * predicted + d.1);
    let (u_next, stats) = solve_fixed_point(u, tol, max_iter, |v| input_at(base + 0.5 * h * v, v))?;
    Ok((base + 0.5 * h * u_next, u_next, stats))
}

/// One step of the same integrator on the frozen-gain loop
/// `x' = (theta - 2c - gain) x`, i.e. with `p` held at `gain`.
pub fn frozen_gain_step(x: f64, theta: f64, c: f64, gain: f64, h: f64) -> f64 {
    let k = 2.0 * c + gain;
    match heun_step(x, -k * x, theta, h, (0.0, 0.0), 1e-15, 200, |xp, _| Ok(-k * xp)) {
        Ok((xp, _, _)) => xp,
        Err(_) => f64::NAN,
    }
}

/// State of the closed loop at a grid instant: paired histories
/// `(x_t, u_t)`, the identifier and the solver bookkeeping.
#[derive(Debug, Clone)]
pub struct ClosedLoopState {
    xw: HistoryWindow,
    uw: HistoryWindow,
    step_index: u64,
    gain: f64,
    identifier: Option<IdentifierState>,
    config: ControllerConfig,
    plant: PlantParams,
    init_stats: FixedPointStats,
}

/// Values at a freshly accepted grid instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub p: f64,
    pub theta_hat: f64,
    pub solver: FixedPointStats,
}

/// Builds a state in the compatibility set: `x0` on `[-r, 0]`, `u0` given
/// on `[-r, 0)` and `u0(0)` solved from `u0(0) = -(2c + p(x0, u0)) x0(0)`.
pub fn make_initial_state(
    x0: &HistoryWindow,
    u0_interior: &[f64],
    theta_hat0: f64,
    config: &ControllerConfig,
    plant: PlantParams,
) -> Result<ClosedLoopState, SimError> {
    config.validate()?;
    let cells = x0.cells();
    if (x0.horizon() - config.r).abs() > 1e-9 * config.r {
        return Err(SimError::InvalidScenario(format!(
            "initial profile spans {} time units but r = {}",
            x0.horizon(),
            config.r
        )));
    }
    if u0_interior.len() != cells {
        return Err(SimError::InvalidScenario(format!(
            "initial input needs {} samples on [-r, 0), got {}",
            cells,
            u0_interior.len()
        )));
    }
    if !plant.theta.is_finite() {
        return Err(SimError::InvalidScenario("theta must be finite".into()));
    }
    let h = x0.h();
    let x_now = x0.newest();
    let mut interior = 0.0;
    for (k, u) in u0_interior.iter().enumerate().skip(1) {
        interior += x0.get(k) * u;
    }
    let edge = x0.oldest() * u0_interior[0];
    let x_l2_sq = x0.l2_norm_sq();
    let parts = |v: f64| FunctionalParts {
        x_now,
        x_delayed: x0.oldest(),
        x_l2_sq,
        xu_inner: if cells >= 1 {
            h * (interior + 0.5 * (edge + x_now * v))
        } else {
            0.0
        },
    };
    let guess = -2.0 * config.c * x_now;
    let (u_now, init_stats) = solve_fixed_point(guess, config.fp_tol, config.fp_max_iter, |v| {
        feedback_from_parts(&parts(v), config)
    })
    .map_err(|e| match e {
        FixedPointFailure::NotConverged {
            iterations, residual, ..
        } => SimError::CompatibilityUnsolvable { iterations, residual },
        FixedPointFailure::Map(e) => e.into(),
    })?;
    let mut u_samples = u0_interior.to_vec();
    u_samples.push(u_now);
    let uw = HistoryWindow::new(u_samples, h, x0.t_end())?;
    let gain = p_from_parts(&parts(u_now), config)?;
    let mut identifier = IdentifierState::new(theta_hat0, config.r);
    identifier.observe_with_norm(x0.t_end(), x_l2_sq.sqrt(), x0, &uw)?;
    Ok(ClosedLoopState {
        xw: x0.clone(),
        uw,
        step_index: 0,
        gain,
        identifier: Some(identifier),
        config: *config,
        plant,
        init_stats,
    })
}

impl ClosedLoopState {
    pub fn t(&self) -> f64 {
        self.xw.t_end()
    }

    pub fn x(&self) -> f64 {
        self.xw.newest()
    }

    pub fn u(&self) -> f64 {
        self.uw.newest()
    }

    /// Gain `p(x_t, u_t)` at the current instant.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn x_window(&self) -> &HistoryWindow {
        &self.xw
    }

    pub fn u_window(&self) -> &HistoryWindow {
        &self.uw
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn plant(&self) -> PlantParams {
        self.plant
    }

    /// Current estimate, `None` once the identifier is detached.
    pub fn theta_hat(&self) -> Option<f64> {
        self.identifier.as_ref().map(IdentifierState::theta_hat)
    }

    pub fn identifier(&self) -> Option<&IdentifierState> {
        self.identifier.as_ref()
    }

    /// Removes the identifier; the closed loop itself is unaffected.
    pub fn detach_identifier(&mut self) -> Option<IdentifierState> {
        self.identifier.take()
    }

    /// Fixed-point statistics of the compatibility solve.
    pub fn init_stats(&self) -> FixedPointStats {
        self.init_stats
    }

    /// Advances one grid step.
    pub fn step(&mut self, disturbance: &DisturbanceSpec) -> Result<StepRecord, SimError> {
        let h = self.xw.h();
        let t = self.t();
        let limit = self.config.blowup_limit;
        let (x, u) = (self.x(), self.u());
        if !(u.abs() <= limit) {
            return Err(SimError::BlowUp { t, u, limit });
        }
        let d = disturbance.stage_values(t, h)?;

        // After the push the window is old[1..=N] followed by the new
        // sample, so its interior is old[2..=N].
        let cells = self.xw.cells();
        let mut interior_xx = 0.0;
        let mut interior_xu = 0.0;
        for k in 2..=cells {
            let xv = self.xw.get(k);
            interior_xx += xv * xv;
            interior_xu += xv * self.uw.get(k);
        }
        let x_tail = self.xw.get(1);
        let u_tail = self.uw.get(1);
        let config = self.config;
        let parts = |xp: f64, v: f64| FunctionalParts {
            x_now: xp,
            x_delayed: x_tail,
            x_l2_sq: h * (interior_xx + 0.5 * (x_tail * x_tail + xp * xp)),
            xu_inner: h * (interior_xu + 0.5 * (x_tail * u_tail + xp * v)),
        };

        let outcome = heun_step(
            x,
            u,
            self.plant.theta,
            h,
            d,
            config.fp_tol,
            config.fp_max_iter,
            |xp, v| feedback_from_parts(&parts(xp, v), &config),
        );
        let t_next = t + h;
        let (x_next, u_next, solver) = match outcome {
            Ok(v) => v,
            Err(FixedPointFailure::Map(e)) => return Err(e.into()),
            Err(FixedPointFailure::NotConverged {
                iterations,
                residual,
                last,
            }) => {
                if !(last.abs() <= limit) {
                    return Err(SimError::BlowUp {
                        t: t_next,
                        u: last,
                        limit,
                    });
                }
                return Err(SimError::StepFailure {
                    t: t_next,
                    iterations,
                    residual,
                });
            }
        };
        if !(u_next.abs() <= limit) || !x_next.is_finite() {
            return Err(SimError::BlowUp {
                t: t_next,
                u: u_next,
                limit,
            });
        }
        let accepted = parts(x_next, u_next);
        self.gain = p_from_parts(&accepted, &config)?;
        self.xw.push(x_next)?;
        self.uw.push(u_next)?;
        self.step_index += 1;

        let t = self.t();
        if let Some(id) = self.identifier.as_mut() {
            let norm = accepted.x_l2_sq.sqrt();
            id.observe_with_norm(t, norm, &self.xw, &self.uw)?;
            if self.step_index.is_multiple_of(cells as u64) {
                id.boundary_update(&config)?;
                id.observe_with_norm(t, norm, &self.xw, &self.uw)?;
            }
        }
        Ok(StepRecord {
            t,
            x: x_next,
            u: u_next,
            p: self.gain,
            theta_hat: self.theta_hat().unwrap_or(f64::NAN),
            solver,
        })
    }
}

/// A complete closed-loop experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: PlantParams,
    pub controller: ControllerConfig,
    pub disturbance: DisturbanceSpec,
    /// Initial state history on `[-r, 0]`, `N + 1` samples.
    pub x0: HistoryWindow,
    /// Initial input on `[-r, 0)`, `N` samples; `u0(0)` is solved for.
    pub u0_interior: Vec<f64>,
    pub theta_hat0: f64,
    pub t_final: f64,
    pub identifier_enabled: bool,
}

impl Scenario {
    pub fn h(&self) -> f64 {
        self.x0.h()
    }

    /// Number of grid steps up to `t_final`.
    pub fn steps(&self) -> Result<usize, SimError> {
        let h = self.h();
        let n = (self.t_final / h).round();
        if !(self.t_final >= 0.0) || (n * h - self.t_final).abs() > 1e-9 * h.max(self.t_final) {
            return Err(SimError::InvalidScenario(format!(
                "t_final = {} is not a multiple of h = {}",
                self.t_final, h
            )));
        }
        Ok(n as usize)
    }

    pub fn initial_state(&self) -> Result<ClosedLoopState, SimError> {
        self.disturbance.validate()?;
        let mut state = make_initial_state(
            &self.x0,
            &self.u0_interior,
            self.theta_hat0,
            &self.controller,
            self.plant,
        )?;
        if !self.identifier_enabled {
            state.detach_identifier();
        }
        Ok(state)
    }

    /// Trace metadata for this scenario, solver statistics filled from
    /// `state` (the initial state) only.
    pub fn meta(&self, state: &ClosedLoopState) -> TraceMeta {
        TraceMeta {
            plant: self.plant,
            controller: self.controller,
            disturbance: self.disturbance.clone(),
            h: self.h(),
            cells: self.x0.cells(),
            theta_hat0: self.theta_hat0,
            x0: self.x0.to_vec(),
            u0: state.u_window().to_vec(),
            identifier_enabled: self.identifier_enabled,
            solver: SolverStats {
                init: state.init_stats(),
                steps: 0,
                max_iterations: 0,
                max_residual: 0.0,
                total_iterations: 0,
            },
            update_log: Vec::new(),
        }
    }
}

/// Integrates `scenario` up to `t_final`, wiring the identifier in at every
/// grid instant and interval boundary.
pub fn run(scenario: &Scenario) -> Result<SimulationTrace, SimError> {
    let steps = scenario.steps()?;
    let mut state = scenario.initial_state()?;
    let mut meta = scenario.meta(&state);
    let dist = &scenario.disturbance;
    let mut rows = Vec::with_capacity(steps + 1);
    rows.push(TraceRow {
        t: state.t(),
        x: state.x(),
        u: state.u(),
        p: state.gain(),
        theta_hat: state.theta_hat().unwrap_or(f64::NAN),
        d: dist.eval(state.t())?,
    });
    let stats = &mut meta.solver;
    for _ in 0..steps {
        let rec = state.step(dist)?;
        stats.steps += 1;
        stats.max_iterations = stats.max_iterations.max(rec.solver.iterations);
        stats.max_residual = stats.max_residual.max(rec.solver.residual);
        stats.total_iterations += rec.solver.iterations as u64;
        rows.push(TraceRow {
            t: rec.t,
            x: rec.x,
            u: rec.u,
            p: rec.p,
            theta_hat: rec.theta_hat,
            d: dist.eval(rec.t)?,
        });
    }
    if let Some(id) = state.detach_identifier() {
        meta.update_log = id.into_update_log();
    }
    Ok(SimulationTrace { meta, rows })
}
