use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DisturbanceSpec, FixedPointStats, PlantParams};
use crate::control::ControllerConfig;
use crate::identifier::UpdateRecord;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace has unexpected columns {found:?}")]
    Columns { found: Vec<String> },
}

pub const COLUMNS: [&str; 6] = ["t", "x", "u", "p", "theta_hat", "d"];

/// One grid instant. `theta_hat` is NaN when the identifier is off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub p: f64,
    pub theta_hat: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub init: FixedPointStats,
    pub steps: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
    pub total_iterations: u64,
}

/// Everything needed to re-verify a trace besides the rows themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub plant: PlantParams,
    pub controller: ControllerConfig,
    pub disturbance: DisturbanceSpec,
    pub h: f64,
    pub cells: usize,
    pub theta_hat0: f64,
    /// `x0` on `[-r, 0]`, `cells + 1` samples.
    pub x0: Vec<f64>,
    /// `u0` on `[-r, 0]` including the solved `u0(0)`.
    pub u0: Vec<f64>,
    pub identifier_enabled: bool,
    pub solver: SolverStats,
    pub update_log: Vec<UpdateRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

impl SimulationTrace {
    pub fn t_final(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    /// `x` on the extended grid: `x0` on `[-r, 0)` followed by the rows.
    /// Index `j` corresponds to `t = (j - cells) h`.
    pub fn x_all(&self) -> Vec<f64> {
        self.extended(&self.meta.x0, |r| r.x)
    }

    pub fn u_all(&self) -> Vec<f64> {
        self.extended(&self.meta.u0, |r| r.u)
    }

    fn extended(&self, head: &[f64], f: impl Fn(&TraceRow) -> f64) -> Vec<f64> {
        let n = self.meta.cells;
        head[..n].iter().copied().chain(self.rows.iter().map(f)).collect()
    }

    /// Writes the rows as CSV with header `t,x,u,p,theta_hat,d`; floats use
    /// the shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        write_rows(&self.rows, out)
    }

    pub fn write_meta<W: Write>(&self, out: W) -> Result<(), TraceError> {
        serde_json::to_writer_pretty(out, &self.meta)?;
        Ok(())
    }
}

pub fn write_rows<W: Write>(rows: &[TraceRow], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(TraceError::Columns { found: header });
    }
    Ok(rdr.deserialize().collect::<Result<Vec<TraceRow>, _>>()?)
}

pub fn read_meta<R: Read>(input: R) -> Result<TraceMeta, TraceError> {
    Ok(serde_json::from_reader(input)?)
}
