use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

/// Verdict on one inequality. `pass` holds exactly when
/// `worst_margin >= -tolerance`; a margin of `+inf` marks a vacuous check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub constants: BTreeMap<String, f64>,
    /// Minimum over checked points of `bound - measured`.
    pub worst_margin: f64,
    pub worst_time: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub points: usize,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            constants: BTreeMap::new(),
            worst_margin: f64::INFINITY,
            worst_time: None,
            tolerance,
            pass: true,
            points: 0,
            notes: Vec::new(),
        }
    }

    pub fn constant(mut self, name: &str, value: f64) -> Self {
        self.constants.insert(name.to_owned(), value);
        self
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Records `margin = bound - measured` at `time`. NaN margins count as
    /// failures.
    pub fn record(&mut self, time: f64, margin: f64) {
        self.points += 1;
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if margin < self.worst_margin || self.worst_time.is_none() {
            self.worst_margin = margin;
            self.worst_time = Some(time);
        }
        self.pass = self.worst_margin >= -self.tolerance;
    }

    pub fn set_tolerance(&mut self, tolerance: f64) {
        self.tolerance = tolerance;
        self.pass = self.worst_margin >= -self.tolerance;
    }

    pub fn is_vacuous(&self) -> bool {
        self.points == 0 || self.worst_margin == f64::INFINITY
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} worst_margin={:e} tol={:e} points={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.worst_margin,
            self.tolerance,
            self.points
        )?;
        if let Some(t) = self.worst_time {
            write!(f, " at_t={t}")?;
        }
        for (k, v) in &self.constants {
            write!(f, " {k}={v:e}")?;
        }
        for n in &self.notes {
            write!(f, " # {n}")?;
        }
        Ok(())
    }
}

/// One line per report.
pub fn reports_to_text(reports: &[BoundReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

/// One JSON object per line. Non-finite numbers are written as strings so
/// that records stay valid JSON.
pub fn reports_to_json_lines(reports: &[BoundReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let value = json_record(r);
        out.push_str(&value.to_string());
        out.push('\n');
    }
    out
}

fn num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or_else(|| serde_json::Value::String(format!("{v}")), Into::into)
}

fn json_record(r: &BoundReport) -> serde_json::Value {
    let constants: serde_json::Map<String, serde_json::Value> =
        r.constants.iter().map(|(k, v)| (k.clone(), num(*v))).collect();
    serde_json::json!({
        "bound": r.name,
        "pass": r.pass,
        "worst_margin": num(r.worst_margin),
        "worst_time": r.worst_time.map(num),
        "tolerance": num(r.tolerance),
        "points": r.points,
        "constants": constants,
        "notes": r.notes,
    })
}
