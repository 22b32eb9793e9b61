//! Numerical certification of the closed-loop estimates. Every constant is
//! recomputed from its closed form at call time.

mod constants;
mod lemmas;
mod report;
mod tolerance;
mod trajectory;

pub use constants::{
    constant_h, constant_k, constant_l, constant_m, constant_q, constant_rho, lemma1_floor_l2, lemma1_floor_sup,
    state_gain,
};
pub use lemmas::{lemma1_check, lemma2_check, lemma2_radius, lemma4_check, lemma4_radius, LEMMA1_REL_TOL};
pub use report::{reports_to_json_lines, reports_to_text, BoundReport};
pub use tolerance::{Coefficients, TolerancePolicy, TraceScale};
pub use trajectory::{
    check_identifier_bound, check_identity, check_input_bound, check_input_envelope, check_input_floor,
    check_lyapunov_decay, check_state_bound, check_state_radius, check_trace, excitation_times, identity_residual,
    identity_tolerance, identity_worst, observed_order, ExcitationTimes, InputCheckOptions, TraceView,
};

use thiserror::Error;

use crate::control::ControlError;
use crate::history::WindowError;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("tolerance fixture: {0}")]
    Tolerance(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Window(#[from] WindowError),
}
