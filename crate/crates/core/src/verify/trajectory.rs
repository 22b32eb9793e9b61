//! Checks of the trajectory estimates against a stored trace.
//!
//! Windows that reach before `t = 0` use the initial profiles; the
//! disturbance there is the residual `x' - theta x - u` of those profiles,
//! taken per grid cell from difference quotients.

use std::collections::VecDeque;
use std::f64::consts::SQRT_2;

use super::constants::{constant_k, constant_m, constant_rho, state_gain};
use super::report::BoundReport;
use super::tolerance::{TolerancePolicy, TraceScale};
use super::VerifyError;
use crate::history::{difference_norms, trapezoid};
use crate::identifier::estimation_bound;
use crate::sim::SimulationTrace;

/// `out[k] = max(values[k..k + width])` for `k < count`.
pub(crate) fn sliding_max(values: &[f64], width: usize, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for k in 0..count {
        while next < k + width {
            while dq.back().is_some_and(|&j| values[j] <= values[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&j| j < k) {
            dq.pop_front();
        }
        out.push(values[*dq.front().expect("window is nonempty")]);
    }
    out
}

/// Trace on the extended grid `[-r, t_final]` plus per-cell disturbance sups.
#[derive(Debug, Clone)]
pub struct TraceView<'a> {
    pub trace: &'a SimulationTrace,
    pub cells: usize,
    pub h: f64,
    /// `x` at extended index `j`, time `(j - cells) h`.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Sup of `|d|` over cell `[j, j + 1]`.
    d_cell: Vec<f64>,
    /// Sup of `|d + h u|` over cell `[j, j + 1]` with `h = 1` before zero.
    dhu_cell: Vec<f64>,
}

impl<'a> TraceView<'a> {
    pub fn new(trace: &'a SimulationTrace) -> Result<Self, VerifyError> {
        let meta = &trace.meta;
        let n = meta.cells;
        if n == 0 || meta.x0.len() != n + 1 || meta.u0.len() != n + 1 {
            return Err(VerifyError::Precondition(format!(
                "initial profiles need {} samples, got {} and {}",
                n + 1,
                meta.x0.len(),
                meta.u0.len()
            )));
        }
        let Some(first) = trace.rows.first() else {
            return Err(VerifyError::Precondition("trace has no rows".into()));
        };
        if first.t != 0.0 || first.x != meta.x0[n] {
            return Err(VerifyError::Precondition(
                "first row must continue the initial profile at t = 0".into(),
            ));
        }
        let h = meta.h;
        let theta = meta.plant.theta;
        let x = trace.x_all();
        let u = trace.u_all();
        let ext = x.len();
        let mut d_cell = Vec::with_capacity(ext - 1);
        let mut dhu_cell = Vec::with_capacity(ext - 1);
        for j in 0..ext - 1 {
            if j < n {
                let slope = (x[j + 1] - x[j]) / h;
                let free = |i: usize| slope - theta * x[i];
                d_cell.push((free(j) - u[j]).abs().max((free(j + 1) - u[j + 1]).abs()));
                dhu_cell.push(free(j).abs().max(free(j + 1).abs()));
            } else {
                let (a, b) = (trace.rows[j - n].d, trace.rows[j + 1 - n].d);
                let s = a.abs().max(b.abs());
                d_cell.push(s);
                dhu_cell.push(s);
            }
        }
        Ok(Self {
            trace,
            cells: n,
            h,
            x,
            u,
            d_cell,
            dhu_cell,
        })
    }

    pub fn rows(&self) -> usize {
        self.trace.rows.len()
    }

    pub fn r(&self) -> f64 {
        self.trace.meta.controller.r
    }

    pub fn time(&self, k: usize) -> f64 {
        self.trace.rows[k].t
    }

    /// Samples of `x_t` for row `k`.
    pub fn x_window(&self, k: usize) -> &[f64] {
        &self.x[k..=k + self.cells]
    }

    pub fn u_window(&self, k: usize) -> &[f64] {
        &self.u[k..=k + self.cells]
    }

    pub fn x_l2_sq(&self, k: usize) -> f64 {
        trapezoid(self.h, self.x_window(k).iter().map(|v| v * v))
    }

    /// `|x_t|_inf` per row.
    pub fn x_window_sup(&self) -> Vec<f64> {
        let abs: Vec<f64> = self.x.iter().map(|v| v.abs()).collect();
        sliding_max(&abs, self.cells + 1, self.rows())
    }

    /// `|d_t|_inf` per row.
    pub fn d_window_sup(&self) -> Vec<f64> {
        sliding_max(&self.d_cell, self.cells, self.rows())
    }

    /// `|(d + h u)_t|_inf` per row.
    pub fn dhu_window_sup(&self) -> Vec<f64> {
        sliding_max(&self.dhu_cell, self.cells, self.rows())
    }

    pub fn scale(&self) -> TraceScale {
        let meta = &self.trace.meta;
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let p_max = self.trace.rows.iter().fold(0.0f64, |m, r| m.max(r.p));
        TraceScale {
            amplitude: 1f64.max(sup(&self.x)).max(sup(&self.u)),
            stiffness: 1f64.max(meta.plant.theta.abs() + 2.0 * meta.controller.c + p_max),
        }
    }

    fn roughness(&self) -> f64 {
        self.trace.meta.disturbance.roughness()
    }

    fn d_sup(&self) -> f64 {
        self.trace.meta.disturbance.d_sup()
    }
}

/// `|x(t)| <= M e^{-c (t - r)^+} |x0(0)| + eps + (1 + sqrt(r) M e^{-c (t - r)^+}) |d|_inf / (2^{1/4} c)`.
pub fn check_state_bound(view: &TraceView, policy: &TolerancePolicy) -> BoundReport {
    let meta = &view.trace.meta;
    let (cfg, plant) = (&meta.controller, &meta.plant);
    let m = constant_m(plant, cfg);
    let gain = state_gain(cfg.c);
    let d = view.d_sup();
    let x00 = meta.x0[view.cells].abs();
    let tol = policy.tolerance(&policy.state, view.scale().linear(), view.h, view.roughness());
    let mut rep = BoundReport::new("state_bound", tol)
        .constant("M", m)
        .constant("gain", gain)
        .constant("d_sup", d);
    for row in &view.trace.rows {
        let decay = m * (-cfg.c * (row.t - cfg.r).max(0.0)).exp();
        let bound = decay * x00 + cfg.eps + (1.0 + cfg.r.sqrt() * decay) * gain * d;
        rep.record(row.t, bound - row.x.abs());
    }
    rep
}

/// Residual radius on the final `r`-window: `sup |x| <= eps + 2^{-1/4} |d|_inf / c`.
pub fn check_state_radius(view: &TraceView, policy: &TolerancePolicy) -> BoundReport {
    let cfg = &view.trace.meta.controller;
    let radius = cfg.eps + state_gain(cfg.c) * view.d_sup();
    let tol = policy.tolerance(&policy.state, view.scale().linear(), view.h, view.roughness());
    let mut rep = BoundReport::new("state_radius", tol).constant("radius", radius);
    let t_end = view.trace.t_final();
    if t_end < 2.0 * cfg.r {
        rep.note("run shorter than 2r; residual radius not assessed");
        return rep;
    }
    for row in view.trace.rows.iter().filter(|r| r.t >= t_end - cfg.r - 1e-9 * cfg.r) {
        rep.record(row.t, radius - row.x.abs());
    }
    rep
}

/// Knobs of the input checks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InputCheckOptions {
    /// Analytic `|x0'|_inf`; finite differences of the stored profile otherwise.
    pub xdot0_sup: Option<f64>,
}

/// Forcing term `f(t)` of the input estimate per row and its discounted running max.
fn input_forcing(view: &TraceView) -> (Vec<f64>, Vec<f64>) {
    let meta = &view.trace.meta;
    let (cfg, theta) = (&meta.controller, meta.plant.theta);
    let (r, c, eps) = (cfg.r, cfg.c, cfg.eps);
    let xs = view.x_window_sup();
    let ds = view.d_window_sup();
    let dhu = view.dhu_window_sup();
    let lin = 2.0 * theta.abs() + c * (r + 3.0);
    let quad = 4.0 * SQRT_2 * (r + 3.0) * r / eps.powi(3);
    let fixed = eps / (2.0 * SQRT_2 * r);
    let decay = (-cfg.omega * view.h).exp();
    let mut f = Vec::with_capacity(view.rows());
    let mut env = Vec::with_capacity(view.rows());
    let mut m = 0.0f64;
    for (k, row) in view.trace.rows.iter().enumerate() {
        let fk = lin * xs[k] + 0.5 * ds[k] + fixed + quad * (ds[k] + c * r * dhu[k]).powi(2) * row.x * row.x;
        m = (m * decay).max(fk);
        f.push(fk);
        env.push(m);
    }
    (f, env)
}

/// `|u(t)| <= e^{-omega (t - r)} |u0|_inf / 2 + 2 (2 - e^{omega r})^{-1} e^{4 theta^+ r} max_s f(s) e^{-omega (t - s)}`.
pub fn check_input_bound(view: &TraceView, policy: &TolerancePolicy) -> Result<BoundReport, VerifyError> {
    let meta = &view.trace.meta;
    let (cfg, theta) = (&meta.controller, meta.plant.theta);
    cfg.validate_omega()?;
    let (r, w) = (cfg.r, cfg.omega);
    let u0 = meta.u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let amp = 2.0 / (2.0 - (w * r).exp()) * (4.0 * theta.max(0.0) * r).exp();
    let (_, env) = input_forcing(view);
    let tol = policy.tolerance(&policy.input, view.scale().linear(), view.h, view.roughness());
    let mut rep = BoundReport::new("input_bound", tol)
        .constant("K", constant_k(cfg))
        .constant("omega", w)
        .constant("u0_sup", u0)
        .constant("gain", amp);
    for (k, row) in view.trace.rows.iter().enumerate() {
        let bound = 0.5 * (-w * (row.t - r)).exp() * u0 + amp * env[k];
        rep.record(row.t, bound - row.u.abs());
    }
    Ok(rep)
}

/// Closed-form envelope of `max_s f(s) e^{-omega (t - s)}` in terms of the
/// initial data and `|d|_inf`, compared with the value measured on the trace.
pub fn check_input_envelope(
    view: &TraceView,
    policy: &TolerancePolicy,
    opts: &InputCheckOptions,
) -> Result<BoundReport, VerifyError> {
    let meta = &view.trace.meta;
    let (cfg, plant) = (&meta.controller, &meta.plant);
    cfg.validate_omega()?;
    let (r, c, eps, w) = (cfg.r, cfg.c, cfg.eps, cfg.omega);
    let th = plant.theta.abs();
    let m = constant_m(plant, cfg);
    let k = constant_k(cfg);
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let x0 = sup(&meta.x0);
    let u0 = sup(&meta.u0);
    let xd0 = opts.xdot0_sup.unwrap_or_else(|| difference_norms(view.h, &meta.x0).sup);
    let d = view.d_sup();
    let lin = 2.0 * th + c * (r + 3.0);
    let init = x0 + u0 + xd0;
    let spread = 1.0 + r.sqrt() * m;
    let steady = eps / (2.0 * SQRT_2 * r)
        + eps * lin
        + (lin * spread * state_gain(c) + 0.5) * d
        + k * (2.0 + (m * m + (2.0 + th).powi(2) * spread * spread / (c * c)) * (init + d).powi(2) / (eps * eps))
            * d
            * d;
    let transient = (3.0 * th + c * (r + 3.0)) * m * (2.0 * c * r).exp() * init
        + k * (m * m * x0 * x0 / (eps * eps) + 2.0) * (2.0 + th).powi(2) * (c * r).exp() * init * init;

    let (_, env) = input_forcing(view);
    let tol = policy.tolerance(&policy.input, view.scale().linear(), view.h, view.roughness());
    let mut rep = BoundReport::new("input_envelope", tol)
        .constant("K", k)
        .constant("M", m)
        .constant("xdot0_sup", xd0)
        .constant("steady", steady);
    for (i, row) in view.trace.rows.iter().enumerate() {
        let bound = steady + transient * (-w * row.t).exp();
        rep.record(row.t, bound - env[i]);
    }
    Ok(rep)
}

/// Disturbance-free steady state: `sup |u|` over the final `r`-window stays
/// below `eps rho`.
pub fn check_input_floor(view: &TraceView, policy: &TolerancePolicy) -> BoundReport {
    let meta = &view.trace.meta;
    let cfg = &meta.controller;
    let floor = cfg.eps * constant_rho(&meta.plant, cfg);
    let tol = policy.tolerance(&policy.input, view.scale().linear(), view.h, view.roughness());
    let mut rep = BoundReport::new("input_floor", tol).constant("eps_rho", floor);
    if view.d_sup() > 0.0 {
        rep.note("floor applies to disturbance-free runs only");
        return rep;
    }
    let t_end = view.trace.t_final();
    if t_end < 2.0 * cfg.r {
        rep.note("run shorter than 2r; steady state not assessed");
        return rep;
    }
    for row in view.trace.rows.iter().filter(|r| r.t >= t_end - cfg.r - 1e-9 * cfg.r) {
        rep.record(row.t, floor - row.u.abs());
    }
    rep
}

/// Residual of the energy identity at row `k >= cells`.
pub fn identity_residual(view: &TraceView, k: usize) -> f64 {
    let n = view.cells;
    let theta = view.trace.meta.plant.theta;
    let h = view.h;
    let xw = view.x_window(k);
    let uw = view.u_window(k);
    let dw = view.trace.rows[k - n..=k].iter().map(|r| r.d);
    let xu = trapezoid(h, xw.iter().zip(uw).map(|(a, b)| a * b));
    let xd = trapezoid(h, xw.iter().zip(dw).map(|(a, b)| a * b));
    let xx = view.x_l2_sq(k);
    xw[n] * xw[n] - xw[0] * xw[0] - 2.0 * xu - 2.0 * theta * xx - 2.0 * xd
}

/// Tolerance of the identity check on this trace.
pub fn identity_tolerance(view: &TraceView, policy: &TolerancePolicy) -> f64 {
    policy.tolerance(&policy.identity, view.scale().quadratic(), view.h, view.roughness())
}

/// `x^2(t) - x^2(t - r) - 2<x_t, u_t> = 2 theta |x_t|_2^2 + 2 <x_t, d_t>` for grid `t >= r`.
pub fn check_identity(view: &TraceView, policy: &TolerancePolicy) -> BoundReport {
    let mut rep = BoundReport::new("identity", identity_tolerance(view, policy));
    if view.rows() <= view.cells {
        rep.note("run shorter than r; identity not assessed");
        return rep;
    }
    for k in view.cells..view.rows() {
        rep.record(view.time(k), -identity_residual(view, k).abs());
    }
    rep
}

/// Worst identity residual over the trace, zero for runs shorter than `r`.
pub fn identity_worst(view: &TraceView) -> f64 {
    (view.cells..view.rows()).fold(0.0f64, |m, k| m.max(identity_residual(view, k).abs()))
}

/// `log2` of the ratio of two errors measured at `h` and `h / 2`; `None`
/// when both are zero.
pub fn observed_order(coarse: f64, fine: f64) -> Option<f64> {
    if coarse == 0.0 && fine == 0.0 {
        None
    } else {
        Some((coarse / fine).log2())
    }
}

/// Identifier settling time from the excitation set `I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationTimes {
    /// `min I`.
    pub first: f64,
    /// `r ceil(min I / r)` as stated for the continuous identifier.
    pub t_stated: f64,
    /// Start of the checked range, `r max(2, ceil(min I / r))`. The
    /// boundary update at `r` may pick `tau < r`, whose window reaches the
    /// initial profiles where `d` is the profile residual.
    pub t_check: f64,
}

pub fn excitation_times(view: &TraceView) -> Option<ExcitationTimes> {
    let cfg = &view.trace.meta.controller;
    let r = cfg.r;
    let k = (view.cells..view.rows()).find(|&k| view.x_l2_sq(k).sqrt() >= cfg.sigma)?;
    let first = view.time(k);
    let blocks = (first / r - 1e-9).ceil().max(1.0);
    Some(ExcitationTimes {
        first,
        t_stated: r * blocks,
        t_check: r * blocks.max(2.0),
    })
}

/// `|theta_hat(t) - theta| <= sqrt(r) / sigma |d|_inf` for grid `t >= T`.
pub fn check_identifier_bound(view: &TraceView, policy: &TolerancePolicy) -> BoundReport {
    let meta = &view.trace.meta;
    let cfg = &meta.controller;
    let bound = estimation_bound(cfg, view.d_sup());
    let tol = identity_tolerance(view, policy) / (2.0 * cfg.sigma * cfg.sigma);
    let mut rep = BoundReport::new("identifier_bound", tol).constant("bound", bound);
    if !meta.identifier_enabled {
        rep.note("identifier disabled");
        return rep;
    }
    let Some(times) = excitation_times(view) else {
        rep.note("no excitation, bound vacuous");
        // Only the update at r may fire, from a window that ends before r.
        let rows = &view.trace.rows;
        let slack = 1e-9 * cfg.r;
        if let Some(w) = rows
            .windows(2)
            .find(|w| w[1].theta_hat != w[0].theta_hat && (w[1].t - cfg.r).abs() > slack)
        {
            rep.record(w[1].t, f64::NEG_INFINITY);
            rep.note("estimate moved after r without excitation");
        }
        return rep;
    };
    rep = rep
        .constant("min_I", times.first)
        .constant("T_stated", times.t_stated)
        .constant("T", times.t_check);
    let slack = 1e-9 * cfg.r;
    for row in view.trace.rows.iter().filter(|r| r.t >= times.t_check - slack) {
        rep.record(row.t, bound - (row.theta_hat - meta.plant.theta).abs());
    }
    if rep.points == 0 {
        rep.note("run ends before T");
    }
    rep
}

/// `(x^2(t) - eps^2)^+ <= e^{-2c (t - r)} (x^2(r) - eps^2)^+ + |d|_inf^2 / (sqrt 2 c^2)` for grid `t >= r`.
pub fn check_lyapunov_decay(view: &TraceView, policy: &TolerancePolicy) -> BoundReport {
    let cfg = &view.trace.meta.controller;
    let (c, e2) = (cfg.c, cfg.eps * cfg.eps);
    let d = view.d_sup();
    let floor = d * d / (SQRT_2 * c * c);
    let tol = policy.tolerance(&policy.lyapunov, view.scale().quadratic(), view.h, view.roughness());
    let mut rep = BoundReport::new("lyapunov_decay", tol).constant("floor", floor);
    let n = view.cells;
    if view.rows() <= n {
        rep.note("run shorter than r; decay not assessed");
        return rep;
    }
    let rows = &view.trace.rows;
    let w_r = (rows[n].x * rows[n].x - e2).max(0.0);
    let t_r = rows[n].t;
    for row in &rows[n..] {
        let bound = (-2.0 * c * (row.t - t_r)).exp() * w_r + floor;
        rep.record(row.t, bound - (row.x * row.x - e2).max(0.0));
    }
    rep
}

/// All trajectory checks in a fixed order.
pub fn check_trace(
    trace: &SimulationTrace,
    policy: &TolerancePolicy,
    opts: &InputCheckOptions,
) -> Result<Vec<BoundReport>, VerifyError> {
    let view = TraceView::new(trace)?;
    Ok(vec![
        check_state_bound(&view, policy),
        check_state_radius(&view, policy),
        check_input_bound(&view, policy)?,
        check_input_envelope(&view, policy, opts)?,
        check_input_floor(&view, policy),
        check_identity(&view, policy),
        check_identifier_bound(&view, policy),
        check_lyapunov_decay(&view, policy),
    ])
}
