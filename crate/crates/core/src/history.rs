//! Uniformly sampled history segments over `[t - r, t]`.
//!
//! A [`HistoryWindow`] holds `N + 1` samples at `t - r, t - r + h, ..., t`
//! with `N * h = r`. All functionals of the control loop (squared L2 norms,
//! inner products, sup norms, derivative norms) are evaluated here with the
//! composite trapezoid rule, so the newest sample always carries weight
//! `h / 2`.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowError {
    #[error("rejected non-finite sample {0}")]
    NonFinite(f64),
    #[error("a window needs at least two samples, got {0}")]
    TooShort(usize),
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("incompatible windows: {0}")]
    Incompatible(String),
}

/// Composite trapezoid rule over equally spaced `values`.
///
/// Evaluated as `h * (sum of interior samples + (first + last) / 2)` with
/// the interior summed front to back. The closed-loop stepper reproduces
/// this exact summation order, so window functionals computed either way
/// agree bit for bit.
pub fn trapezoid<I>(h: f64, values: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut it = values.into_iter();
    let Some(first) = it.next() else {
        return 0.0;
    };
    let mut interior = 0.0;
    let mut last = first;
    let mut count = 1usize;
    for v in it {
        if count >= 2 {
            interior += last;
        }
        last = v;
        count += 1;
    }
    if count < 2 {
        return 0.0;
    }
    h * (interior + 0.5 * (first + last))
}

/// First-order difference norms `(max |dx/dt|, sqrt(sum (dx/dt)^2 h))` of a
/// sampled signal.
pub fn difference_norms(h: f64, values: &[f64]) -> DerivativeNorms {
    let mut sup = 0.0f64;
    let mut sq = 0.0;
    for pair in values.windows(2) {
        let slope = (pair[1] - pair[0]) / h;
        sup = sup.max(slope.abs());
        sq += slope * slope * h;
    }
    DerivativeNorms { sup, l2: sq.sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeNorms {
    pub sup: f64,
    pub l2: f64,
}

/// Samples of a signal over the last `r = N h` time units.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    samples: VecDeque<f64>,
    h: f64,
    origin: f64,
    steps: u64,
}

impl HistoryWindow {
    /// Builds a window from samples ordered oldest first, ending at `t_end`.
    pub fn new(samples: Vec<f64>, h: f64, t_end: f64) -> Result<Self, WindowError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(WindowError::BadStep(h));
        }
        if samples.len() < 2 {
            return Err(WindowError::TooShort(samples.len()));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(WindowError::NonFinite(*bad));
        }
        Ok(Self {
            samples: samples.into(),
            h,
            origin: t_end,
            steps: 0,
        })
    }

    /// Window of `cells + 1` samples of `profile(s)` for `s` in `[-r, 0]`.
    pub fn from_profile<F>(cells: usize, h: f64, t_end: f64, profile: F) -> Result<Self, WindowError>
    where
        F: Fn(f64) -> f64,
    {
        let samples = (0..=cells).map(|k| profile(-((cells - k) as f64) * h)).collect();
        Self::new(samples, h, t_end)
    }

    pub fn constant(cells: usize, h: f64, t_end: f64, value: f64) -> Result<Self, WindowError> {
        Self::from_profile(cells, h, t_end, |_| value)
    }

    /// Appends `v` at `t_end + h` and drops the oldest sample.
    pub fn push(&mut self, v: f64) -> Result<(), WindowError> {
        if !v.is_finite() {
            return Err(WindowError::NonFinite(v));
        }
        self.samples.pop_front();
        self.samples.push_back(v);
        self.steps += 1;
        Ok(())
    }

    /// Number of cells `N`.
    pub fn cells(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Horizon `r = N h`.
    pub fn horizon(&self) -> f64 {
        self.cells() as f64 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.origin + self.steps as f64 * self.h
    }

    /// Sample at `t_end` (the `s = 0` endpoint).
    pub fn newest(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    /// Sample at `t_end - r` (the `s = -r` endpoint).
    pub fn oldest(&self) -> f64 {
        self.samples[0]
    }

    /// Sample `k`, counted from the oldest.
    pub fn get(&self, k: usize) -> f64 {
        self.samples[k]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.samples.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }

    fn ensure_compatible(&self, other: &Self) -> Result<(), WindowError> {
        if self.len() != other.len() {
            return Err(WindowError::Incompatible(format!(
                "sample counts {} and {}",
                self.len(),
                other.len()
            )));
        }
        if (self.h - other.h).abs() > 1e-12 * self.h {
            return Err(WindowError::Incompatible(format!(
                "step sizes {} and {}",
                self.h, other.h
            )));
        }
        if (self.t_end() - other.t_end()).abs() > 1e-6 * self.h {
            return Err(WindowError::Incompatible(format!(
                "end times {} and {}",
                self.t_end(),
                other.t_end()
            )));
        }
        Ok(())
    }

    /// Trapezoid approximation of `int_{-r}^0 x^2(s) ds`.
    pub fn l2_norm_sq(&self) -> f64 {
        trapezoid(self.h, self.iter().map(|v| v * v))
    }

    /// Trapezoid approximation of `int_{-r}^0 x(s) y(s) ds`.
    pub fn inner(&self, other: &Self) -> Result<f64, WindowError> {
        self.ensure_compatible(other)?;
        Ok(trapezoid(
            self.h,
            self.samples.iter().zip(&other.samples).map(|(a, b)| a * b),
        ))
    }

    /// Trapezoid approximation of `int_{-r}^0 |x(s)| ds`.
    pub fn l1_norm(&self) -> f64 {
        trapezoid(self.h, self.iter().map(f64::abs))
    }

    /// Grid maximum of `|x|`.
    pub fn sup_norm(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn derivative_norms(&self) -> DerivativeNorms {
        let v = self.to_vec();
        difference_norms(self.h, &v)
    }

    /// `max |x - y|` over the common grid.
    pub fn sup_distance(&self, other: &Self) -> Result<f64, WindowError> {
        self.ensure_compatible(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Trapezoid L1 norm of `x - y`.
    pub fn l1_distance(&self, other: &Self) -> Result<f64, WindowError> {
        self.ensure_compatible(other)?;
        Ok(trapezoid(
            self.h,
            self.samples.iter().zip(&other.samples).map(|(a, b)| (a - b).abs()),
        ))
    }
}
