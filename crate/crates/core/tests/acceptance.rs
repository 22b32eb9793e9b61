//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always show.

use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use delay_adaptive::control::p_functional;
use delay_adaptive::experiment::{convergence_study, parse_config, run_scenario, ScenarioConfig, ScenarioOutcome};
use delay_adaptive::sim::SolverStats;
use delay_adaptive::verify::{
    constant_l, excitation_times, identity_worst, lemma1_check, lemma2_check, lemma2_radius, lemma4_check,
    observed_order, BoundReport, TraceView,
};
use delay_adaptive::{ControllerConfig, HistoryWindow, SimulationTrace};

const H: f64 = 1e-3;
const FP_ITER_LIMIT: usize = 50;
const FP_RESIDUAL_LIMIT: f64 = 1e-12;

/// Solver statistics of every simulation the suite runs.
static SOLVER_LOG: Mutex<Vec<SolverStats>> = Mutex::new(Vec::new());

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn config(text: &str) -> ScenarioConfig {
    parse_config(text).unwrap_or_else(|e| panic!("bad scenario: {e}\n{text}"))
}

fn simulate(cfg: &ScenarioConfig) -> ScenarioOutcome {
    let out = run_scenario(cfg).unwrap_or_else(|e| panic!("run failed: {e}"));
    SOLVER_LOG.lock().unwrap().push(out.trace.meta.solver);
    out
}

fn report<'a>(out: &'a ScenarioOutcome, name: &str) -> &'a BoundReport {
    out.reports.iter().find(|r| r.name == name).expect("report present")
}

fn canonical(h: f64, identifier: bool) -> ScenarioConfig {
    config(&format!(
        "[plant]\ntheta = 1\n[controller]\neps = 0.1\nc = 1\nr = 1\nsigma = 0.05\n\
         [run]\nh = {h}\nt_final = 10\nidentifier = {identifier}\n\
         [initial]\nkind = \"constant\"\nvalue = 1.0\nu0 = 0.0\n"
    ))
}

/// Largest `|theta_hat - theta|` from the checked settling time on.
fn settled_error(out: &ScenarioOutcome) -> f64 {
    let view = TraceView::new(&out.trace).unwrap();
    let t0 = excitation_times(&view).expect("canonical run is excited").t_check;
    let theta = out.trace.meta.plant.theta;
    out.trace
        .rows
        .iter()
        .filter(|r| r.t >= t0 - 1e-9)
        .fold(0.0, |m, r| m.max((r.theta_hat - theta).abs()))
}

fn c1_exact_identification() -> Outcome {
    let start = Instant::now();
    let out = simulate(&canonical(H, true));
    let elapsed = start.elapsed().as_secs_f64();
    let fine = simulate(&canonical(H / 2.0, true));
    let (e1, e2) = (settled_error(&out), settled_error(&fine));
    let rep = report(&out, "identifier_bound");
    let ratio = e1 / e2;
    Outcome::new(
        rep.pass && e1 <= 1e-3 && ratio >= 3.8 && elapsed < 5.0,
        format!(
            "err(h)={e1:.3e} err(h/2)={e2:.3e} shrink={ratio:.2} runtime={elapsed:.2}s check={}",
            rep.pass
        ),
    )
}

fn c2_identifier_gain() -> Outcome {
    let mut cases = Vec::new();
    for sigma in [0.05, 0.5] {
        for d in [0.1, 1.0] {
            for seed in 0..20u64 {
                cases.push((sigma, d, seed));
            }
        }
    }
    let results: Vec<(bool, bool, f64)> = cases
        .par_iter()
        .map(|&(sigma, d, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let theta: f64 = rng.gen_range(-2.0..3.0);
            let x0: f64 = rng.gen_range(2.0..4.0);
            let cfg = config(&format!(
                "[plant]\ntheta = {theta}\n[controller]\neps = 0.1\nc = 1\nr = 1\nsigma = {sigma}\n\
                 [run]\nh = {H}\nt_final = 10\nseed = {seed}\n\
                 [disturbance]\nkind = \"uniform_noise\"\namplitude = {d}\n\
                 [initial]\nvalue = {x0}\n"
            ));
            let out = simulate(&cfg);
            let view = TraceView::new(&out.trace).unwrap();
            let excited = excitation_times(&view).is_some();
            let rep = report(&out, "identifier_bound");
            (excited, rep.pass && rep.points > 0, rep.worst_margin)
        })
        .collect();
    let excited = results.iter().filter(|r| r.0).count();
    let violations = results.iter().filter(|r| !r.1).count();
    let worst = results.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    Outcome::new(
        excited == results.len() && violations == 0,
        format!(
            "runs={} excited={excited} violations={violations} worst_margin={worst:.3e}",
            results.len()
        ),
    )
}

/// One point of the theta x c x d_sup x seed grid.
#[derive(Debug, Clone, Copy)]
struct GridPoint {
    theta: f64,
    c: f64,
    d: f64,
    seed: u64,
}

impl GridPoint {
    fn config(&self) -> ScenarioConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed * 7919 + 17);
        let x0: f64 = rng.gen_range(0.2..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let slope: f64 = rng.gen_range(-1.0..1.0);
        let u0: f64 = rng.gen_range(-1.0..1.0);
        let disturbance = if self.d == 0.0 {
            "kind = \"zero\"".to_string()
        } else {
            match self.seed % 3 {
                0 => format!("kind = \"uniform_noise\"\namplitude = {}\nseed = {}", self.d, self.seed),
                1 => format!(
                    "kind = \"sinusoid\"\namplitude = {}\nfrequency = {}",
                    self.d,
                    0.3 + 0.4 * self.seed as f64
                ),
                _ => format!(
                    "kind = \"constant\"\nvalue = {}",
                    if self.seed.is_multiple_of(2) { self.d } else { -self.d }
                ),
            }
        };
        config(&format!(
            "[plant]\ntheta = {}\n[controller]\neps = 0.1\nc = {}\nr = 1\nsigma = 0.05\n\
             [run]\nh = {H}\nt_final = 10\n[disturbance]\n{disturbance}\n\
             [initial]\nkind = \"ramp\"\nvalue = {x0}\nslope = {slope}\nu0 = {u0}\n",
            self.theta, self.c
        ))
    }
}

struct GridRun {
    point: GridPoint,
    reports: Vec<BoundReport>,
}

fn grid_runs() -> Vec<GridRun> {
    let mut points = Vec::new();
    for theta in [-2.0, 0.0, 1.0, 3.0] {
        for c in [1.0, 2.0] {
            for d in [0.0, 0.1, 1.0, 10.0] {
                for seed in 0..5 {
                    points.push(GridPoint { theta, c, d, seed });
                }
            }
        }
    }
    points
        .into_par_iter()
        .map(|point| GridRun {
            point,
            reports: simulate(&point.config()).reports,
        })
        .collect()
}

/// Counts grid runs failing any of `names` and describes the worst one.
fn grid_summary(grid: &[GridRun], names: &[&str], only: impl Fn(&GridPoint) -> bool) -> Outcome {
    let mut failures = 0;
    let mut checked = 0;
    let mut worst: Option<(f64, String)> = None;
    for run in grid.iter().filter(|g| only(&g.point)) {
        checked += 1;
        let mut ok = true;
        for rep in run.reports.iter().filter(|r| names.contains(&r.name.as_str())) {
            ok &= rep.pass;
            let rel = rep.worst_margin;
            if worst.as_ref().is_none_or(|(w, _)| rel < *w) {
                worst = Some((rel, format!("{} at {:?}", rep.name, run.point)));
            }
        }
        failures += usize::from(!ok);
    }
    let (w, at) = worst.unwrap_or((f64::NAN, "none".into()));
    Outcome::new(
        failures == 0 && checked > 0,
        format!("runs={checked} failures={failures} worst_margin={w:.3e} ({at})"),
    )
}

fn c5_identity() -> Outcome {
    let out = simulate(&canonical(H, true));
    let worst = identity_worst(&TraceView::new(&out.trace).unwrap());
    let smooth = config(&format!(
        "[plant]\ntheta = 1\n[controller]\neps = 0.1\nc = 1\nr = 1\nsigma = 0.05\n\
         [run]\nh = {}\nt_final = 5\n[disturbance]\nkind = \"sinusoid\"\namplitude = 0.5\nfrequency = 0.7\n",
        2.0 * H
    ));
    let rough = config(&format!(
        "[plant]\ntheta = 1\n[controller]\neps = 0.1\nc = 1\nr = 1\nsigma = 0.05\n\
         [run]\nh = {h}\nt_final = 5\n[disturbance]\nkind = \"uniform_noise\"\namplitude = 0.5\nseed = 3\ncell = {h}\n",
        h = 2.0 * H
    ));
    let canon = convergence_study(&canonical(2.0 * H, true), 2).unwrap();
    let smooth = convergence_study(&smooth, 2).unwrap();
    let rough = convergence_study(&rough, 2).unwrap();
    let order = |t: &delay_adaptive::experiment::ConvergenceTable| t.identity_order().unwrap_or(f64::INFINITY);
    let (o_canon, o_smooth, o_rough) = (order(&canon), order(&smooth), order(&rough));
    Outcome::new(
        worst <= 1e-5 && o_canon >= 1.9 && o_smooth >= 1.9 && o_rough >= 0.9,
        format!(
            "worst_residual={worst:.3e} order_canonical={o_canon:.3} order_sinusoid={o_smooth:.3} order_noise={o_rough:.3}"
        ),
    )
}

/// Piecewise-linear window with values and slopes bounded by `1e3`.
fn random_window(rng: &mut ChaCha8Rng) -> HistoryWindow {
    let cells = rng.gen_range(4..200usize);
    let r = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
    let h = r / cells as f64;
    let max_slope = 10f64.powf(rng.gen_range(-2.0..3.0));
    let mut v = rng.gen_range(-1.0..1.0) * 10f64.powf(rng.gen_range(-3.0..3.0));
    let mut samples = Vec::with_capacity(cells + 1);
    samples.push(v);
    for _ in 0..cells {
        let next = v + rng.gen_range(-max_slope..=max_slope) * h;
        v = next.clamp(-1e3, 1e3);
        samples.push(v);
    }
    HistoryWindow::new(samples, h, 0.0).unwrap()
}

fn c6_lemma1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let windows: Vec<HistoryWindow> = (0..10_000).map(|_| random_window(&mut rng)).collect();
    let mut violations = 0;
    let mut checks = 0;
    let mut tightest = f64::INFINITY;
    for w in &windows {
        for eps in [0.1, 1.0, 10.0] {
            let rep = lemma1_check(w, eps);
            checks += 1;
            violations += usize::from(!rep.pass);
            tightest = tightest.min(rep.worst_margin / rep.constants["lhs"]);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Outcome::new(
        violations == 0 && elapsed < 10.0,
        format!("checks={checks} violations={violations} min_rel_margin={tightest:.3e} runtime={elapsed:.2}s"),
    )
}

/// Random window pair with `max(|x|_inf, |x'|_2, |u|_1) <= big_r`.
fn pair_within(rng: &mut ChaCha8Rng, cells: usize, big_r: f64) -> (Vec<f64>, Vec<f64>) {
    let h = 1.0 / cells as f64;
    let mut x = vec![rng.gen_range(-1.0..1.0)];
    for _ in 0..cells {
        let last = *x.last().unwrap();
        x.push(last + rng.gen_range(-1.0..1.0) * h * 10f64.powf(rng.gen_range(-1.0..1.5)));
    }
    let u: Vec<f64> = (0..=cells).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let xw = HistoryWindow::new(x.clone(), h, 0.0).unwrap();
    let uw = HistoryWindow::new(u.clone(), h, 0.0).unwrap();
    let scale = big_r * rng.gen_range(0.05..0.999) / lemma2_radius(&xw, &uw);
    (
        x.iter().map(|v| v * scale).collect(),
        u.iter().map(|v| v * scale).collect(),
    )
}

fn c7_lemma2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    let cells = 100;
    let h = 1.0 / cells as f64;
    let window = |v: Vec<f64>| HistoryWindow::new(v, h, 0.0).unwrap();
    for i in 0..10_000 {
        let big_r = [0.5, 1.0, 5.0][i % 3];
        let cfg = ControllerConfig::new([0.1, 1.0, 10.0][(i / 3) % 3], 1.0, 1.0, 0.05).unwrap();
        let (x1, u1) = pair_within(&mut rng, cells, big_r);
        let (x2, u2) = if i % 2 == 0 {
            pair_within(&mut rng, cells, big_r)
        } else {
            // Nearby pair, pulled back inside the ball when needed.
            let delta = 10f64.powf(rng.gen_range(-8.0..-2.0));
            let x2: Vec<f64> = x1.iter().map(|v| v + delta * rng.gen_range(-1.0..1.0)).collect();
            let u2: Vec<f64> = u1.iter().map(|v| v + delta * rng.gen_range(-1.0..1.0)).collect();
            let rad = lemma2_radius(&window(x2.clone()), &window(u2.clone()));
            let s = if rad > big_r { big_r / rad } else { 1.0 };
            (x2.iter().map(|v| v * s).collect(), u2.iter().map(|v| v * s).collect())
        };
        let (xa, ua, xb, ub) = (window(x1), window(u1), window(x2), window(u2));
        let rep = lemma2_check((&xa, &ua), (&xb, &ub), big_r, &cfg).expect("pairs lie within R");
        violations += usize::from(!rep.pass);
        tightest = tightest.min(rep.worst_margin / constant_l(&cfg, big_r));
    }
    Outcome::new(
        violations == 0,
        format!("pairs=10000 violations={violations} min_margin/L={tightest:.3e}"),
    )
}

/// Paired runs from `x0` and `x0 + delta` up to `horizon`.
fn lemma4_pair(eps: f64, x0: f64, u0: f64, delta: f64, horizon: f64) -> BoundReport {
    let run = |value: f64| -> SimulationTrace {
        simulate(&config(&format!(
            "[plant]\ntheta = 1\n[controller]\neps = {eps}\nc = 1\nr = 1\nsigma = 0.05\n\
             [run]\nh = {H}\nt_final = {horizon}\n[initial]\nvalue = {value}\nu0 = {u0}\n"
        )))
        .trace
    };
    lemma4_check(&run(x0), &run(x0 + delta), horizon).unwrap()
}

fn c8_lemma4() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut finite_q = 0;
    // Large eps with a small state keeps Q(R, T) finite.
    for (label, eps, x0, u0) in [("canonical", 0.1, 1.0, 0.0), ("eps10", 10.0, 0.01, -0.01)] {
        for delta in [1e-6, 1e-4] {
            for horizon in [1.0, 2.0] {
                let rep = lemma4_pair(eps, x0, u0, delta * x0, horizon);
                pass &= rep.pass;
                let q = rep.constants["Q"];
                finite_q += usize::from(q.is_finite());
                lines.push(format!(
                    "{label}/d={delta:e}/T={horizon}: Q={q:.3e} growth={:.3e}",
                    rep.constants["observed_growth"]
                ));
            }
        }
    }
    Outcome::new(
        pass && finite_q > 0,
        format!("finite_Q={finite_q} {}", lines.join("; ")),
    )
}

fn c10_well_posedness() -> Outcome {
    let with = simulate(&canonical(H, true)).trace;
    let without = simulate(&canonical(H, false)).trace;
    let identical = with.rows.len() == without.rows.len()
        && with.rows.iter().zip(&without.rows).all(|(a, b)| {
            a.x.to_bits() == b.x.to_bits() && a.u.to_bits() == b.u.to_bits() && a.p.to_bits() == b.p.to_bits()
        });
    let log = SOLVER_LOG.lock().unwrap();
    let max_iter = log.iter().map(|s| s.max_iterations).max().unwrap_or(0);
    let max_res = log.iter().map(|s| s.max_residual).fold(0.0, f64::max);
    let init_res = log.iter().map(|s| s.init.residual).fold(0.0, f64::max);
    let steps: usize = log.iter().map(|s| s.steps).sum();
    Outcome::new(
        identical && max_iter <= FP_ITER_LIMIT && max_res <= FP_RESIDUAL_LIMIT && init_res <= FP_RESIDUAL_LIMIT,
        format!(
            "runs={} steps={steps} max_iterations={max_iter} max_residual={max_res:.3e} init_residual={init_res:.3e} bit_identical={identical}",
            log.len()
        ),
    )
}

fn kink_sequence_p(n: u32, h: f64) -> f64 {
    let cfg = ControllerConfig::new(1.0, 1.0, 1.0, 0.05).unwrap();
    let cells = (1.0 / h).round() as usize;
    let k = f64::from(n) + 1.0;
    let x = HistoryWindow::from_profile(cells, h, 0.0, |s| (k * s + 1.0).max(0.0)).unwrap();
    let u = HistoryWindow::constant(cells, h, 0.0, 0.0).unwrap();
    p_functional(&x, &u, &cfg).unwrap()
}

fn c11_divergent_sequence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, expected) in [(1u32, 6.0), (4, 15.0), (9, 30.0)] {
        let (p1, p2) = (kink_sequence_p(n, H), kink_sequence_p(n, H / 2.0));
        let (e1, e2) = ((p1 - expected).abs(), (p2 - expected).abs());
        // Trapezoid error of |x_n|_2^2 is (n + 1)^2 h^2 / 2 relative.
        let k = f64::from(n) + 1.0;
        let budget = expected * k * k * H * H;
        let order = observed_order(e1, e2).unwrap_or(f64::INFINITY);
        pass &= e1 <= budget && order >= 1.9;
        parts.push(format!("n={n}: p={p1:.9} err={e1:.2e} order={order:.2}"));
    }
    Outcome::new(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 exact identification", c1_exact_identification()));
    results.push(("2 identifier disturbance gain", c2_identifier_gain()));
    let grid = grid_runs();
    results.push((
        "3 state bound and residual radius",
        grid_summary(&grid, &["state_bound", "state_radius"], |_| true),
    ));
    let input = grid_summary(&grid, &["input_bound", "input_envelope"], |_| true);
    let floor = grid_summary(&grid, &["input_floor"], |p| p.d == 0.0);
    results.push((
        "4 input bound and eps*rho floor",
        Outcome::new(
            input.pass && floor.pass,
            format!("bound: {}; floor: {}", input.detail, floor.detail),
        ),
    ));
    results.push(("5 energy identity", c5_identity()));
    results.push(("6 lemma 1 floors", c6_lemma1()));
    results.push(("7 lemma 2 lipschitz", c7_lemma2()));
    results.push(("8 lemma 4 continuity", c8_lemma4()));
    results.push(("9 lyapunov decay", grid_summary(&grid, &["lyapunov_decay"], |_| true)));
    results.push(("10 well-posedness", c10_well_posedness()));
    results.push(("11 divergent gain sequence", c11_divergent_sequence()));

    let mut failed = 0;
    for (name, out) in &results {
        println!("{} [{name}] {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        failed += usize::from(!out.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
