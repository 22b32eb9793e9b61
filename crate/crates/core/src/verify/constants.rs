//! Closed-form constants of the stability and continuity estimates.

use std::f64::consts::SQRT_2;

use crate::control::ControllerConfig;
use crate::sim::PlantParams;

fn pos(v: f64) -> f64 {
    v.max(0.0)
}

/// `M = exp((theta + c^2 / sqrt 2 - 2c)^+ r)`.
pub fn constant_m(plant: &PlantParams, cfg: &ControllerConfig) -> f64 {
    let c = cfg.c;
    (pos(plant.theta + 0.5 * SQRT_2 * c * c - 2.0 * c) * cfg.r).exp()
}

/// `rho = 2|theta| + 1 / (2 sqrt 2 r) + c (r + 3)`, the steady input floor per unit `eps`.
pub fn constant_rho(plant: &PlantParams, cfg: &ControllerConfig) -> f64 {
    2.0 * plant.theta.abs() + 1.0 / (2.0 * SQRT_2 * cfg.r) + cfg.c * (cfg.r + 3.0)
}

/// `K = 16 eps^-1 sqrt 2 (r + 3) r (1 + c r)^2`.
pub fn constant_k(cfg: &ControllerConfig) -> f64 {
    let (r, c) = (cfg.r, cfg.c);
    16.0 / cfg.eps * SQRT_2 * (r + 3.0) * r * (1.0 + c * r).powi(2)
}

/// Asymptotic state gain `2^{-1/4} / c` from `|d|_inf` to `|x|`.
pub fn state_gain(c: f64) -> f64 {
    2f64.powf(-0.25) / c
}

/// `H(R) = (eps^2 r + 6 (eps^2 + 2 r R^2)) / (eps^4 r)`.
pub fn constant_h(cfg: &ControllerConfig, big_r: f64) -> f64 {
    let (e2, r) = (cfg.eps * cfg.eps, cfg.r);
    (e2 * r + 6.0 * (e2 + 2.0 * r * big_r * big_r)) / (e2 * e2 * r)
}

/// Lipschitz constant `L(R) = (3 + c r)(1 + 2 R^2 (r + 1) H(R)) 2 R H(R)` of the gain.
pub fn constant_l(cfg: &ControllerConfig, big_r: f64) -> f64 {
    let h = constant_h(cfg, big_r);
    let r = cfg.r;
    (3.0 + cfg.c * r) * (1.0 + 2.0 * big_r * big_r * (r + 1.0) * h) * 2.0 * big_r * h
}

/// `Q(R, T) = exp(2 (2c + |theta| + (2 + r) R L((1 + r) R)) T)`. Overflows
/// to `+inf` for most practical `R`.
pub fn constant_q(plant: &PlantParams, cfg: &ControllerConfig, big_r: f64, horizon: f64) -> f64 {
    let r = cfg.r;
    let l = constant_l(cfg, (1.0 + r) * big_r);
    (2.0 * (2.0 * cfg.c + plant.theta.abs() + (2.0 + r) * big_r * l) * horizon).exp()
}

/// Floor of `|x|_2^2 + (eps^2 - x^2(0))^+` in terms of `|x'|_inf`.
pub fn lemma1_floor_sup(eps: f64, r: f64, dx_sup: f64) -> f64 {
    r * eps.powi(3) / (2.0 * (3.0 + r) * (r * SQRT_2 * dx_sup + eps))
}

/// Floor of `|x|_2^2 + (eps^2 - x^2(0))^+` in terms of `|x'|_2`.
pub fn lemma1_floor_l2(eps: f64, r: f64, dx_l2: f64) -> f64 {
    let e2 = eps * eps;
    e2 * e2 * r / (2.0 * e2 * r + 12.0 * (e2 + 2.0 * r * dx_l2 * dx_l2))
}
