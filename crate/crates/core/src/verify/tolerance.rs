use serde::{Deserialize, Serialize};

use super::VerifyError;

/// Discretization coefficients of one check: `a h^2 + b h roughness`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
}

/// Additive tolerance policy of the trajectory checks,
/// `floor + (a h^2 + b h roughness) * scale`, where `scale` is a per-trace
/// magnitude (see [`TraceScale`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancePolicy {
    pub floor: f64,
    /// Safety factor already folded into the coefficients.
    pub safety: f64,
    pub state: Coefficients,
    pub input: Coefficients,
    pub lyapunov: Coefficients,
    pub identity: Coefficients,
}

const FIXTURE: &str = include_str!("../../fixtures/tolerances.toml");

impl TolerancePolicy {
    /// The frozen calibration shipped with the crate.
    pub fn calibrated() -> Self {
        Self::from_toml(FIXTURE).expect("tolerance fixture parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, VerifyError> {
        toml::from_str(text).map_err(|e| VerifyError::Tolerance(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("policy serializes")
    }

    pub fn tolerance(&self, k: &Coefficients, scale: f64, h: f64, roughness: f64) -> f64 {
        self.floor + (k.a * h * h + k.b * h * roughness) * scale
    }
}

/// Magnitudes a trajectory's discretization error scales with: amplitude
/// `A = max(1, |x|_inf, |u|_inf)` and stiffness `S = max(1, |theta| + 2c + max p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceScale {
    pub amplitude: f64,
    pub stiffness: f64,
}

impl TraceScale {
    /// Scale for checks linear in the trajectory.
    pub fn linear(&self) -> f64 {
        self.amplitude * self.stiffness * self.stiffness
    }

    /// Scale for checks quadratic in the trajectory.
    pub fn quadratic(&self) -> f64 {
        self.amplitude * self.linear()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_round_trips() {
        let p = TolerancePolicy::calibrated();
        assert!(p.floor > 0.0 && p.safety >= 1.0);
        for k in [p.state, p.input, p.lyapunov, p.identity] {
            assert!(k.a >= 0.0 && k.b >= 0.0);
        }
        assert_eq!(TolerancePolicy::from_toml(&p.to_toml()).unwrap(), p);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{}\nextra = 1\n", TolerancePolicy::calibrated().to_toml());
        assert!(TolerancePolicy::from_toml(&text).is_err());
    }
}
