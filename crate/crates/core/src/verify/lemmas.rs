//! Window-level estimates: denominator floors, Lipschitz continuity of the
//! gain and continuous dependence on initial data.

use super::constants::{constant_h, constant_l, constant_q, lemma1_floor_l2, lemma1_floor_sup};
use super::report::BoundReport;
use super::trajectory::TraceView;
use super::VerifyError;
use crate::control::{p_functional, ControllerConfig};
use crate::history::{difference_norms, trapezoid, HistoryWindow};
use crate::sim::SimulationTrace;

/// Relative slack for the floor checks; both floors hold exactly for the
/// trapezoid norms of a piecewise-linear window.
pub const LEMMA1_REL_TOL: f64 = 1e-12;

/// `|x|_2^2 + (eps^2 - x^2(0))^+` against both floors.
pub fn lemma1_check(xw: &HistoryWindow, eps: f64) -> BoundReport {
    let r = xw.horizon();
    let dn = xw.derivative_norms();
    let x_now = xw.newest();
    let lhs = xw.l2_norm_sq() + (eps * eps - x_now * x_now).max(0.0);
    let f_sup = lemma1_floor_sup(eps, r, dn.sup);
    let f_l2 = lemma1_floor_l2(eps, r, dn.l2);
    let mut rep = BoundReport::new("lemma1_floor", LEMMA1_REL_TOL * lhs)
        .constant("floor_sup", f_sup)
        .constant("floor_l2", f_l2)
        .constant("lhs", lhs);
    rep.record(xw.t_end(), (lhs - f_sup).min(lhs - f_l2));
    rep
}

/// `max(|x|_inf, |x'|_2, |u|_1)` for a window pair.
pub fn lemma2_radius(xw: &HistoryWindow, uw: &HistoryWindow) -> f64 {
    xw.sup_norm().max(xw.derivative_norms().l2).max(uw.l1_norm())
}

/// `|p(x, u) - p(y, w)| <= L(R) (|x - y|_inf + |u - w|_1)`.
pub fn lemma2_check(
    pair1: (&HistoryWindow, &HistoryWindow),
    pair2: (&HistoryWindow, &HistoryWindow),
    big_r: f64,
    cfg: &ControllerConfig,
) -> Result<BoundReport, VerifyError> {
    for (i, (x, u)) in [pair1, pair2].into_iter().enumerate() {
        let rad = lemma2_radius(x, u);
        if !(rad <= big_r * (1.0 + 1e-12)) {
            return Err(VerifyError::Precondition(format!(
                "pair {} has norm {rad} above R = {big_r}",
                i + 1
            )));
        }
    }
    let l = constant_l(cfg, big_r);
    let lhs = (p_functional(pair1.0, pair1.1, cfg)? - p_functional(pair2.0, pair2.1, cfg)?).abs();
    let dist = pair1.0.sup_distance(pair2.0)? + pair1.1.l1_distance(pair2.1)?;
    let mut rep = BoundReport::new("lemma2_lipschitz", 1e-9 * l)
        .constant("H", constant_h(cfg, big_r))
        .constant("L", l)
        .constant("R", big_r);
    rep.record(pair1.0.t_end(), l * dist - lhs);
    Ok(rep)
}

/// Largest of `|x|, |u|, |x'|` on `[-r, horizon]` and `|d|_inf`, i.e. the
/// smallest admissible `R` for the continuity estimate.
pub fn lemma4_radius(view: &TraceView, horizon: f64) -> f64 {
    let last = view.cells + rows_upto(view.trace, horizon);
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    sup(&view.x[..last])
        .max(sup(&view.u[..last]))
        .max(difference_norms(view.h, &view.x[..last]).sup)
        .max(view.trace.meta.disturbance.d_sup())
}

fn rows_upto(trace: &SimulationTrace, horizon: f64) -> usize {
    let slack = 1e-9 * trace.meta.h;
    trace.rows.iter().take_while(|r| r.t <= horizon + slack).count()
}

/// `|x_t - y_t|_inf + |u_t - w_t|_1 <= Q(R, T) (|x_0 - y_0|_inf + |u_0 - w_0|_1)` for grid `t <= T`.
pub fn lemma4_check(a: &SimulationTrace, b: &SimulationTrace, horizon: f64) -> Result<BoundReport, VerifyError> {
    let (ma, mb) = (&a.meta, &b.meta);
    if ma.h != mb.h
        || ma.cells != mb.cells
        || ma.plant != mb.plant
        || ma.controller != mb.controller
        || ma.disturbance != mb.disturbance
    {
        return Err(VerifyError::GridMismatch(
            "paired traces must share grid, plant, controller and disturbance".into(),
        ));
    }
    let (va, vb) = (TraceView::new(a)?, TraceView::new(b)?);
    let big_r = lemma4_radius(&va, horizon).max(lemma4_radius(&vb, horizon));
    let q = constant_q(&ma.plant, &ma.controller, big_r, horizon);
    let h = ma.h;
    let distance = |k: usize| {
        let xs = va
            .x_window(k)
            .iter()
            .zip(vb.x_window(k))
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        let ul = trapezoid(h, va.u_window(k).iter().zip(vb.u_window(k)).map(|(p, q)| (p - q).abs()));
        xs + ul
    };
    let init = distance(0);
    let mut rep = BoundReport::new("lemma4_continuity", 1e-12 * init.max(f64::MIN_POSITIVE))
        .constant("R", big_r)
        .constant("L", constant_l(&ma.controller, (1.0 + ma.controller.r) * big_r))
        .constant("Q", q)
        .constant("initial_distance", init);
    let rows = rows_upto(a, horizon).min(rows_upto(b, horizon));
    let mut max_growth = 0.0f64;
    for k in 0..rows {
        let dk = distance(k);
        if init > 0.0 {
            max_growth = max_growth.max(dk / init);
        }
        rep.record(a.rows[k].t, q * init - dk);
    }
    rep = rep.constant("observed_growth", max_growth);
    if q.is_infinite() {
        rep.note("Q(R, T) overflows; estimate vacuous");
    }
    Ok(rep)
}
