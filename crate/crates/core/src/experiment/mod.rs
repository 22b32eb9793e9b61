//! Scenario runs, parameter sweeps and step-halving studies.

mod config;

pub use config::{
    check_grid, parse_config, CheckSelection, ConfigError, InitialProfile, InputProfile, OutputPaths, ScenarioConfig,
};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::identifier::estimation_bound;
use crate::sim::{self, DisturbanceSpec, SimError, SimulationTrace, TraceError, TraceRow};
use crate::verify::{
    check_trace, identity_worst, observed_order, reports_to_json_lines, reports_to_text, state_gain, BoundReport,
    InputCheckOptions, TolerancePolicy, TraceView, VerifyError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("verification failed to run: {0}")]
    Verify(#[from] VerifyError),
    #[error("trace io: {0}")]
    Trace(#[from] TraceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Trace of one run plus the reports of every trajectory check.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub trace: SimulationTrace,
    pub reports: Vec<BoundReport>,
    pub checks: CheckSelection,
}

impl ScenarioOutcome {
    /// True when every enabled check passed.
    pub fn passed(&self) -> bool {
        self.reports
            .iter()
            .filter(|r| self.checks.enabled(&r.name))
            .all(|r| r.pass)
    }

    /// Writes trace CSV, metadata JSON and both report formats under `dir`.
    pub fn write(&self, dir: &Path, paths: &OutputPaths) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        self.trace.write_csv(fs::File::create(dir.join(&paths.trace))?)?;
        self.trace.write_meta(fs::File::create(dir.join(&paths.meta))?)?;
        fs::write(dir.join(&paths.reports), reports_to_text(&self.reports))?;
        fs::write(dir.join(&paths.json), reports_to_json_lines(&self.reports))?;
        Ok(())
    }
}

fn input_options(cfg: &ScenarioConfig) -> InputCheckOptions {
    InputCheckOptions {
        xdot0_sup: cfg.xdot0_sup,
    }
}

/// Simulates the scenario and runs all trajectory checks on the result.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, ExperimentError> {
    let trace = sim::run(&cfg.scenario()?)?;
    let reports = check_trace(&trace, &TolerancePolicy::calibrated(), &input_options(cfg))?;
    Ok(ScenarioOutcome {
        trace,
        reports,
        checks: cfg.checks,
    })
}

/// Re-verifies stored trace rows against the scenario they came from.
pub fn check_stored(cfg: &ScenarioConfig, rows: Vec<TraceRow>) -> Result<ScenarioOutcome, ExperimentError> {
    let scenario = cfg.scenario()?;
    let state = scenario.initial_state()?;
    let trace = SimulationTrace {
        meta: scenario.meta(&state),
        rows,
    };
    let h = trace.meta.h;
    let consistent = trace
        .rows
        .iter()
        .enumerate()
        .all(|(k, r)| (r.t - k as f64 * h).abs() <= 1e-9 * h.max(r.t))
        && trace
            .rows
            .first()
            .is_some_and(|r| r.x == trace.meta.x0[trace.meta.cells]);
    if !consistent {
        return Err(
            VerifyError::Precondition("trace does not match the scenario grid or initial profile".into()).into(),
        );
    }
    let reports = check_trace(&trace, &TolerancePolicy::calibrated(), &input_options(cfg))?;
    Ok(ScenarioOutcome {
        trace,
        reports,
        checks: cfg.checks,
    })
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Theta,
    C,
    Eps,
    Sigma,
    DAmplitude,
    H,
}

impl FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theta" => Ok(Self::Theta),
            "c" => Ok(Self::C),
            "eps" => Ok(Self::Eps),
            "sigma" => Ok(Self::Sigma),
            "d_amplitude" | "d" => Ok(Self::DAmplitude),
            "h" => Ok(Self::H),
            other => Err(ConfigError::InvalidValue {
                key: "axis".into(),
                reason: format!("`{other}` is not sweepable; use theta, c, eps, sigma, d_amplitude or h"),
            }),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Theta => "theta",
            Self::C => "c",
            Self::Eps => "eps",
            Self::Sigma => "sigma",
            Self::DAmplitude => "d_amplitude",
            Self::H => "h",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = base.clone();
        match self {
            Self::Theta => cfg.plant.theta = value,
            Self::C => cfg.set_c(value),
            Self::Eps => cfg.controller.eps = value,
            Self::Sigma => cfg.controller.sigma = value,
            Self::DAmplitude => {
                cfg.disturbance = match cfg.disturbance {
                    DisturbanceSpec::Zero | DisturbanceSpec::Constant { .. } => DisturbanceSpec::Constant { value },
                    DisturbanceSpec::Sinusoid { frequency, phase, .. } => DisturbanceSpec::Sinusoid {
                        amplitude: value,
                        frequency,
                        phase,
                    },
                    DisturbanceSpec::UniformNoise { seed, cell, .. } => DisturbanceSpec::UniformNoise {
                        amplitude: value,
                        seed,
                        cell,
                    },
                    DisturbanceSpec::Table { .. } => {
                        return Err(ConfigError::InvalidValue {
                            key: "axis".into(),
                            reason: "table disturbances have no amplitude".into(),
                        })
                    }
                }
            }
            Self::H => cfg.h = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One summary row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub final_abs_x: f64,
    pub max_abs_x_after_r: f64,
    pub theta_error: f64,
    /// `sqrt(r) / sigma * |d|_inf`.
    pub identifier_bound: f64,
    /// `2^{-1/4} / c`.
    pub state_gain: f64,
    /// `(report name, worst margin)` in check order.
    pub margins: Vec<(String, f64)>,
    pub pass: bool,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_outcome(value: f64, cfg: &ScenarioConfig, out: &ScenarioOutcome) -> Self {
        let rows = &out.trace.rows;
        let r = cfg.controller.r;
        let last = rows.last().expect("trace has a row");
        Self {
            value,
            final_abs_x: last.x.abs(),
            max_abs_x_after_r: rows
                .iter()
                .filter(|row| row.t >= r - 1e-9 * r)
                .fold(0.0, |m, row| m.max(row.x.abs())),
            theta_error: (last.theta_hat - cfg.plant.theta).abs(),
            identifier_bound: estimation_bound(&cfg.controller, cfg.disturbance.d_sup()),
            state_gain: state_gain(cfg.controller.c),
            margins: out
                .reports
                .iter()
                .map(|rep| (rep.name.clone(), rep.worst_margin))
                .collect(),
            pass: out.passed(),
            error: None,
        }
    }

    fn failed(value: f64, cfg: Option<&ScenarioConfig>, error: String) -> Self {
        Self {
            value,
            final_abs_x: f64::NAN,
            max_abs_x_after_r: f64::NAN,
            theta_error: f64::NAN,
            identifier_bound: cfg.map_or(f64::NAN, |c| estimation_bound(&c.controller, c.disturbance.d_sup())),
            state_gain: cfg.map_or(f64::NAN, |c| state_gain(c.controller.c)),
            margins: Vec::new(),
            pass: false,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let names: Vec<String> = self
            .rows
            .iter()
            .find(|r| !r.margins.is_empty())
            .map(|r| r.margins.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default();
        let mut out = format!(
            "{},final_abs_x,max_abs_x_after_r,theta_error,identifier_bound,state_gain",
            self.axis.name()
        );
        for n in &names {
            let _ = write!(out, ",margin_{n}");
        }
        out.push_str(",pass,error\n");
        for row in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                row.value,
                row.final_abs_x,
                row.max_abs_x_after_r,
                row.theta_error,
                row.identifier_bound,
                row.state_gain
            );
            for n in &names {
                let m = row.margins.iter().find(|(k, _)| k == n).map_or(f64::NAN, |(_, v)| *v);
                let _ = write!(out, ",{m}");
            }
            let err = row.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(out, ",{},{}", row.pass, err);
        }
        out
    }
}

/// Runs `base` once per value of `axis`. Rows run concurrently and come
/// back in input order; a failing run yields a row with its error.
pub fn sweep(base: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> SweepTable {
    let rows = values
        .par_iter()
        .map(|&v| match axis.apply(base, v) {
            Err(e) => SweepRow::failed(v, None, e.to_string()),
            Ok(cfg) => match run_scenario(&cfg) {
                Ok(out) => SweepRow::from_outcome(v, &cfg, &out),
                Err(e) => SweepRow::failed(v, Some(&cfg), e.to_string()),
            },
        })
        .collect();
    SweepTable { axis, rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub identity_residual: f64,
    /// Grid max of `|x_h - x_finest|` on the coarse grid.
    pub distance_to_finest: f64,
    /// Observed order of the identity residual against the next finer row.
    pub identity_order: Option<f64>,
    /// Observed order of the self-distance against the next finer row.
    pub distance_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Order of the identity residual from the two finest runs; `None`
    /// means both residuals vanish exactly.
    pub fn identity_order(&self) -> Option<f64> {
        let n = self.rows.len();
        if n < 2 {
            return None;
        }
        observed_order(self.rows[n - 2].identity_residual, self.rows[n - 1].identity_residual)
    }

    pub fn order_label(&self) -> String {
        match self.identity_order() {
            None => "exact".into(),
            Some(p) => format!("{p:.3}"),
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |p| p.to_string());
        let mut out = String::from("h,identity_residual,distance_to_finest,identity_order,distance_order\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.h,
                r.identity_residual,
                r.distance_to_finest,
                opt(r.identity_order),
                opt(r.distance_order)
            );
        }
        out
    }
}

/// Runs `cfg` at `h, h/2, ..., h/2^halvings`.
pub fn convergence_study(cfg: &ScenarioConfig, halvings: u32) -> Result<ConvergenceTable, ExperimentError> {
    if halvings < 2 {
        return Err(ConfigError::InvalidValue {
            key: "halvings".into(),
            reason: "need at least 2".into(),
        }
        .into());
    }
    let configs: Vec<ScenarioConfig> = (0..=halvings)
        .map(|i| {
            let mut c = cfg.clone();
            c.h = cfg.h / f64::from(1u32 << i);
            c.validate().map(|_| c)
        })
        .collect::<Result<_, _>>()?;
    let traces: Vec<SimulationTrace> = configs
        .par_iter()
        .map(|c| Ok(sim::run(&c.scenario()?)?))
        .collect::<Result<_, ExperimentError>>()?;
    let residuals: Vec<f64> = traces
        .iter()
        .map(|t| TraceView::new(t).map(|v| identity_worst(&v)))
        .collect::<Result<_, _>>()?;
    let finest = traces.last().expect("at least three runs");
    let distances: Vec<f64> = traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let stride = 1usize << (halvings as usize - i);
            t.rows
                .iter()
                .enumerate()
                .fold(0.0f64, |m, (k, row)| m.max((row.x - finest.rows[k * stride].x).abs()))
        })
        .collect();
    let n = traces.len();
    let rows = (0..n)
        .map(|i| ConvergenceRow {
            h: configs[i].h,
            identity_residual: residuals[i],
            distance_to_finest: distances[i],
            identity_order: (i + 1 < n)
                .then(|| observed_order(residuals[i], residuals[i + 1]))
                .flatten(),
            distance_order: (i + 2 < n)
                .then(|| observed_order(distances[i], distances[i + 1]))
                .flatten(),
        })
        .collect();
    Ok(ConvergenceTable { rows })
}
