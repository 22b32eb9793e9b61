use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisturbanceError {
    #[error("t = {t} lies outside the disturbance table range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("invalid disturbance: {0}")]
    Invalid(String),
}

/// Unmeasured additive disturbance `d(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude * sin(2 pi frequency t + phase)`
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// Piecewise constant on cells `[k cell, (k + 1) cell)`, each value
    /// uniform on `[-amplitude, amplitude]` and reproducible from `seed`.
    UniformNoise {
        amplitude: f64,
        seed: u64,
        cell: f64,
    },
    /// Linear interpolation of `(times, values)`.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<(), DisturbanceError> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(DisturbanceError::Invalid(format!("{name} must be finite")))
            }
        };
        match self {
            Self::Zero => Ok(()),
            Self::Constant { value } => finite("value", *value),
            Self::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                finite("amplitude", *amplitude)?;
                finite("frequency", *frequency)?;
                finite("phase", *phase)
            }
            Self::UniformNoise { amplitude, cell, .. } => {
                finite("amplitude", *amplitude)?;
                if !(*cell > 0.0 && cell.is_finite()) {
                    return Err(DisturbanceError::Invalid("noise cell must be positive".into()));
                }
                Ok(())
            }
            Self::Table { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return Err(DisturbanceError::Invalid(
                        "table needs matching times/values with at least two entries".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(DisturbanceError::Invalid(
                        "table times must be strictly increasing".into(),
                    ));
                }
                times.iter().chain(values).try_for_each(|v| finite("table entry", *v))
            }
        }
    }

    /// `|d|_inf` implied by the parameters.
    pub fn d_sup(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant { value } => value.abs(),
            Self::Sinusoid { amplitude, .. } => amplitude.abs(),
            Self::UniformNoise { amplitude, .. } => amplitude.abs(),
            Self::Table { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// Amplitude of jump discontinuities, zero for continuous kinds.
    pub fn roughness(&self) -> f64 {
        match self {
            Self::UniformNoise { amplitude, .. } => amplitude.abs(),
            _ => 0.0,
        }
    }

    fn noise_value(amplitude: f64, seed: u64, cell_index: i64) -> f64 {
        if amplitude == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(cell_index as u64);
        rng.gen_range(-amplitude.abs()..=amplitude.abs())
    }

    /// Disturbance sample at `t`.
    pub fn eval(&self, t: f64) -> Result<f64, DisturbanceError> {
        let v = match self {
            Self::Zero => 0.0,
            Self::Constant { value } => *value,
            Self::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin(),
            Self::UniformNoise { amplitude, seed, cell } => {
                // Grid instants sit on cell edges; nudge so they land in the
                // cell they open.
                let index = (t / cell + 1e-9).floor() as i64;
                Self::noise_value(*amplitude, *seed, index)
            }
            Self::Table { times, values } => {
                let (lo, hi) = (times[0], times[times.len() - 1]);
                if t < lo || t > hi {
                    return Err(DisturbanceError::OutOfRange { t, lo, hi });
                }
                let k = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[k - 1], times[k]);
                let w = (t - t0) / (t1 - t0);
                values[k - 1] + w * (values[k] - values[k - 1])
            }
        };
        debug_assert!(v.abs() <= self.d_sup() * (1.0 + 1e-12));
        Ok(v)
    }

    /// Values used by the two stages of an integration step over
    /// `[t, t + h]`. Piecewise-constant noise uses the value of the cell
    /// containing the step midpoint for both stages.
    pub fn stage_values(&self, t: f64, h: f64) -> Result<(f64, f64), DisturbanceError> {
        match self {
            Self::UniformNoise { .. } => {
                let v = self.eval(t + 0.5 * h)?;
                Ok((v, v))
            }
            _ => Ok((self.eval(t)?, self.eval(t + h)?)),
        }
    }
}
