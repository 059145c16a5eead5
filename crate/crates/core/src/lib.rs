//! Distance estimation for diffusive molecular communication with flow and
//! degradation: channel model, Fisher-information bound, estimators, a
//! particle simulator and a Monte Carlo harness.

pub mod channel;
pub mod crlb;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod report;
pub mod rng;
pub mod sim;

pub use channel::{expected_count, invert_count, peak_count, peak_time, EnvironmentParams};
pub use crlb::{crlb, fisher_information, log_likelihood, score, ObservationSeries};
pub use error::{Error, Result};
