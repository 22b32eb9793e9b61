//! Scenario files: flat `key = value` sections in TOML syntax.
//!
//! ```toml
//! [plant]
//! theta = 1.0
//!
//! [controller]
//! eps = 0.1
//! c = 1.0
//! r = 1.0
//! sigma = 0.05
//!
//! [initial]
//! kind = "constant"
//! value = 1.0
//!
//! [run]
//! t_final = 10.0
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use thiserror::Error;
use toml::{Table, Value};

use crate::control::{ControlError, ControllerConfig};
use crate::history::HistoryWindow;
use crate::sim::{DisturbanceSpec, PlantParams, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("invalid configuration: omega = {omega} must satisfy 0 < omega <= c = {c} and exp(omega r) < 2 (r = {r})")]
    OmegaConstraint { omega: f64, c: f64, r: f64 },
    #[error("invalid configuration: {0}")]
    Invariant(String),
    #[error("grid error: {0}")]
    Grid(String),
}

impl From<ControlError> for ConfigError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::OmegaConstraint { omega, c, r } => Self::OmegaConstraint { omega, c, r },
            other => Self::Invariant(other.to_string()),
        }
    }
}

/// Initial state history on `[-r, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    Constant {
        value: f64,
    },
    /// `value + slope * s`.
    Ramp {
        value: f64,
        slope: f64,
    },
    /// `eps ((n + 1) s / r + 1)` on `(-r / (n + 1), 0]`, zero before.
    Kink {
        n: u32,
    },
    /// `N + 1` samples from `-r` to `0`.
    Samples(Vec<f64>),
}

/// Initial input on `[-r, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputProfile {
    Constant(f64),
    /// `N` samples from `-r` to `-h`.
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub trace: String,
    pub meta: String,
    pub reports: String,
    pub json: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            trace: "trace.csv".into(),
            meta: "meta.json".into(),
            reports: "reports.txt".into(),
            json: "reports.jsonl".into(),
        }
    }
}

/// Which trajectory checks decide the run's verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSelection {
    pub state: bool,
    pub state_radius: bool,
    pub input: bool,
    pub input_envelope: bool,
    pub input_floor: bool,
    pub identity: bool,
    pub identifier: bool,
    pub lyapunov: bool,
}

impl Default for CheckSelection {
    fn default() -> Self {
        Self {
            state: true,
            state_radius: true,
            input: true,
            input_envelope: true,
            input_floor: true,
            identity: true,
            identifier: true,
            lyapunov: true,
        }
    }
}

impl CheckSelection {
    /// Whether the report named `name` is enabled.
    pub fn enabled(&self, name: &str) -> bool {
        match name {
            "state_bound" => self.state,
            "state_radius" => self.state_radius,
            "input_bound" => self.input,
            "input_envelope" => self.input_envelope,
            "input_floor" => self.input_floor,
            "identity" => self.identity,
            "identifier_bound" => self.identifier,
            "lyapunov_decay" => self.lyapunov,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub plant: PlantParams,
    pub controller: ControllerConfig,
    /// `omega` was given explicitly rather than derived from `c` and `r`.
    pub omega_explicit: bool,
    pub disturbance: DisturbanceSpec,
    pub initial: InitialProfile,
    pub u0: InputProfile,
    pub theta_hat0: f64,
    pub xdot0_sup: Option<f64>,
    pub h: f64,
    pub t_final: f64,
    pub identifier: bool,
    pub output: OutputPaths,
    pub checks: CheckSelection,
}

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    seen: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str) -> Result<Self, ConfigError> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                return Err(ConfigError::InvalidValue {
                    key: name.into(),
                    reason: "expected a section".into(),
                })
            }
        };
        Ok(Self {
            name,
            table,
            seen: BTreeSet::new(),
        })
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            key: self.path(key),
            reason: reason.into(),
        }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn f64(&mut self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(_) => Err(self.invalid(key, "expected a number")),
        }
    }

    fn req_f64(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        self.f64(key)?.ok_or_else(|| ConfigError::MissingKey(self.path(key)))
    }

    fn u64(&mut self, key: &'static str) -> Result<Option<u64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(_) => Err(self.invalid(key, "expected a nonnegative integer")),
        }
    }

    fn bool(&mut self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(self.invalid(key, "expected true or false")),
        }
    }

    fn string(&mut self, key: &'static str) -> Result<Option<String>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.invalid(key, "expected a string")),
        }
    }

    fn array(&mut self, key: &'static str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        let Value::Array(items) = v else {
            return Err(self.invalid(key, "expected an array of numbers"));
        };
        items
            .iter()
            .map(|item| match item {
                Value::Float(f) => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(self.invalid(key, "expected an array of numbers")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(t) = self.table {
            if let Some(k) = t.keys().find(|k| !self.seen.contains(k.as_str())) {
                return Err(ConfigError::UnknownKey(format!("{}.{}", self.name, k)));
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 7] = [
    "plant",
    "controller",
    "disturbance",
    "initial",
    "run",
    "output",
    "checks",
];

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_owned()))?;
    if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }

    let mut s = Section::new(&root, "plant")?;
    let theta = s.req_f64("theta")?;
    s.finish()?;
    if !theta.is_finite() {
        return Err(ConfigError::InvalidValue {
            key: "plant.theta".into(),
            reason: "must be finite".into(),
        });
    }
    let plant = PlantParams { theta };

    let mut s = Section::new(&root, "controller")?;
    let eps = s.req_f64("eps")?;
    let c = s.req_f64("c")?;
    let r = s.req_f64("r")?;
    let sigma = s.req_f64("sigma")?;
    let omega = s.f64("omega")?;
    let fp_tol = s.f64("fp_tol")?;
    let fp_max_iter = s.u64("fp_max_iter")?;
    let blowup_limit = s.f64("blowup_limit")?;
    s.finish()?;
    let mut controller = ControllerConfig {
        eps,
        c,
        r,
        sigma,
        omega: omega.unwrap_or(0.5 * c.min(std::f64::consts::LN_2 / r)),
        fp_tol: fp_tol.unwrap_or(ControllerConfig::DEFAULT_FP_TOL),
        fp_max_iter: ControllerConfig::DEFAULT_FP_MAX_ITER,
        blowup_limit: blowup_limit.unwrap_or(ControllerConfig::DEFAULT_BLOWUP_LIMIT),
    };
    if let Some(n) = fp_max_iter {
        controller.fp_max_iter = n as usize;
    }
    controller.validate()?;

    let mut s = Section::new(&root, "run")?;
    let h = s.f64("h")?.unwrap_or(1e-3 * r);
    let t_final = s.req_f64("t_final")?;
    let seed = s.u64("seed")?;
    let identifier = s.bool("identifier", true)?;
    s.finish()?;
    check_grid(h, r, t_final)?;

    let mut s = Section::new(&root, "disturbance")?;
    let kind = s.string("kind")?.unwrap_or_else(|| "zero".into());
    let disturbance = match kind.as_str() {
        "zero" => DisturbanceSpec::Zero,
        "constant" => DisturbanceSpec::Constant {
            value: s.req_f64("value")?,
        },
        "sinusoid" => DisturbanceSpec::Sinusoid {
            amplitude: s.req_f64("amplitude")?,
            frequency: s.req_f64("frequency")?,
            phase: s.f64("phase")?.unwrap_or(0.0),
        },
        "uniform_noise" => DisturbanceSpec::UniformNoise {
            amplitude: s.req_f64("amplitude")?,
            // A run seed takes precedence over the disturbance's own.
            seed: seed.or(s.u64("seed")?).unwrap_or(0),
            cell: s.f64("cell")?.unwrap_or(h),
        },
        "table" => DisturbanceSpec::Table {
            times: s
                .array("times")?
                .ok_or_else(|| ConfigError::MissingKey("disturbance.times".into()))?,
            values: s
                .array("values")?
                .ok_or_else(|| ConfigError::MissingKey("disturbance.values".into()))?,
        },
        other => {
            return Err(ConfigError::InvalidValue {
                key: "disturbance.kind".into(),
                reason: format!("unknown kind `{other}`"),
            })
        }
    };
    s.finish()?;
    disturbance.validate().map_err(|e| ConfigError::InvalidValue {
        key: "disturbance".into(),
        reason: e.to_string(),
    })?;

    let mut s = Section::new(&root, "initial")?;
    let kind = s.string("kind")?.unwrap_or_else(|| "constant".into());
    let initial = match kind.as_str() {
        "constant" => InitialProfile::Constant {
            value: s.f64("value")?.unwrap_or(1.0),
        },
        "ramp" => InitialProfile::Ramp {
            value: s.req_f64("value")?,
            slope: s.req_f64("slope")?,
        },
        "kink" => {
            let n = s.u64("n")?.ok_or_else(|| ConfigError::MissingKey("initial.n".into()))?;
            if n == 0 || n > u32::MAX as u64 {
                return Err(s.invalid("n", "must be a positive integer"));
            }
            InitialProfile::Kink { n: n as u32 }
        }
        "samples" => InitialProfile::Samples(
            s.array("samples")?
                .ok_or_else(|| ConfigError::MissingKey("initial.samples".into()))?,
        ),
        other => {
            return Err(s.invalid("kind", format!("unknown kind `{other}`")));
        }
    };
    let u0 = match (s.f64("u0")?, s.array("u0_samples")?) {
        (Some(_), Some(_)) => {
            return Err(s.invalid("u0", "give either u0 or u0_samples"));
        }
        (_, Some(v)) => InputProfile::Samples(v),
        (v, None) => InputProfile::Constant(v.unwrap_or(0.0)),
    };
    let theta_hat0 = s.f64("theta_hat0")?.unwrap_or(0.0);
    let xdot0_sup = s.f64("xdot0_sup")?;
    s.finish()?;

    let mut s = Section::new(&root, "output")?;
    let mut output = OutputPaths::default();
    if let Some(d) = s.string("dir")? {
        output.dir = PathBuf::from(d);
    }
    for (key, slot) in [
        ("trace", &mut output.trace),
        ("meta", &mut output.meta),
        ("reports", &mut output.reports),
        ("json", &mut output.json),
    ] {
        if let Some(v) = s.string(key)? {
            *slot = v;
        }
    }
    s.finish()?;

    let mut s = Section::new(&root, "checks")?;
    let checks = CheckSelection {
        state: s.bool("state", true)?,
        state_radius: s.bool("state_radius", true)?,
        input: s.bool("input", true)?,
        input_envelope: s.bool("input_envelope", true)?,
        input_floor: s.bool("input_floor", true)?,
        identity: s.bool("identity", true)?,
        identifier: s.bool("identifier", true)?,
        lyapunov: s.bool("lyapunov", true)?,
    };
    s.finish()?;

    let cfg = ScenarioConfig {
        plant,
        controller,
        omega_explicit: omega.is_some(),
        disturbance,
        initial,
        u0,
        theta_hat0,
        xdot0_sup,
        h,
        t_final,
        identifier,
        output,
        checks,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// `h` must divide `r` and `t_final` must be a multiple of `h`.
pub fn check_grid(h: f64, r: f64, t_final: f64) -> Result<usize, ConfigError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(ConfigError::Grid(format!("h = {h} must be positive")));
    }
    let cells = (r / h).round();
    if cells < 1.0 || ((cells * h) - r).abs() > 1e-9 * r {
        return Err(ConfigError::Grid(format!("h = {h} does not divide r = {r}")));
    }
    let steps = (t_final / h).round();
    if !(t_final >= 0.0) || (steps * h - t_final).abs() > 1e-9 * t_final.max(h) {
        return Err(ConfigError::Grid(format!(
            "t_final = {t_final} is not a multiple of h = {h}"
        )));
    }
    Ok(cells as usize)
}

impl ScenarioConfig {
    pub fn cells(&self) -> usize {
        (self.controller.r / self.h).round() as usize
    }

    /// Re-checks all invariants, e.g. after a sweep edits a field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.controller.validate()?;
        check_grid(self.h, self.controller.r, self.t_final)?;
        let n = self.cells();
        if let InitialProfile::Samples(v) = &self.initial {
            if v.len() != n + 1 {
                return Err(ConfigError::InvalidValue {
                    key: "initial.samples".into(),
                    reason: format!("expected {} samples, got {}", n + 1, v.len()),
                });
            }
        }
        if let InputProfile::Samples(v) = &self.u0 {
            if v.len() != n {
                return Err(ConfigError::InvalidValue {
                    key: "initial.u0_samples".into(),
                    reason: format!("expected {} samples on [-r, 0), got {}", n, v.len()),
                });
            }
        }
        if let DisturbanceSpec::UniformNoise { cell, .. } = self.disturbance {
            let ratio = (cell / self.h).round();
            if ratio < 1.0 || (ratio * self.h - cell).abs() > 1e-9 * cell {
                return Err(ConfigError::Grid(format!(
                    "noise cell {cell} must be a multiple of h = {}",
                    self.h
                )));
            }
        }
        Ok(())
    }

    /// Sets `c`, re-deriving `omega` unless it was given explicitly.
    pub fn set_c(&mut self, c: f64) {
        self.controller.c = c;
        if !self.omega_explicit {
            self.controller.omega = 0.5 * c.min(std::f64::consts::LN_2 / self.controller.r);
        }
    }

    pub fn x0_window(&self) -> Result<HistoryWindow, ConfigError> {
        let n = self.cells();
        let (r, eps) = (self.controller.r, self.controller.eps);
        let w = match &self.initial {
            InitialProfile::Constant { value } => HistoryWindow::constant(n, self.h, 0.0, *value),
            InitialProfile::Ramp { value, slope } => HistoryWindow::from_profile(n, self.h, 0.0, |s| value + slope * s),
            InitialProfile::Kink { n: k } => {
                let k = f64::from(*k) + 1.0;
                HistoryWindow::from_profile(n, self.h, 0.0, |s| eps * (k * s / r + 1.0).max(0.0))
            }
            InitialProfile::Samples(v) => HistoryWindow::new(v.clone(), self.h, 0.0),
        };
        w.map_err(|e| ConfigError::InvalidValue {
            key: "initial".into(),
            reason: e.to_string(),
        })
    }

    pub fn u0_interior(&self) -> Vec<f64> {
        match &self.u0 {
            InputProfile::Constant(v) => vec![*v; self.cells()],
            InputProfile::Samples(v) => v.clone(),
        }
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        self.validate()?;
        Ok(Scenario {
            plant: self.plant,
            controller: self.controller,
            disturbance: self.disturbance.clone(),
            x0: self.x0_window()?,
            u0_interior: self.u0_interior(),
            theta_hat0: self.theta_hat0,
            t_final: self.t_final,
            identifier_enabled: self.identifier,
        })
    }
}
