//! Distance estimators: SA-T, RTT-T, ENVD and maximum likelihood.
//!
//! Every estimator returns an [`EstimateRecord`] whose `d_hat` is finite and
//! non-negative; degenerate observations are absorbed by correction rules and
//! recorded in [`Corrections`].

mod envelope;
mod ml;

use std::fmt;

use bitflags::bitflags;
use rand::Rng;

use crate::channel::{invert_count, Correction, DistanceSolutionSet, EnvironmentParams};
use crate::crlb::ObservationSeries;
use crate::error::{config, Result};

pub use envelope::{envd_estimate, envelope_peak, moving_max, moving_min, EnvelopePeak};
pub use ml::{ml_estimate, MlLikelihoodGrid, MlSearchSpec};

bitflags! {
    /// Corrections applied while producing an estimate.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct Corrections: u8 {
        const ZERO_OBSERVATION = 1 << 0;
        const NEGATIVE_DISCRIMINANT = 1 << 1;
        const NEGATIVE_ROOT = 1 << 2;
        /// Two valid roots; one was picked by a fair coin.
        const COIN_TOSS = 1 << 3;
        /// RTT-T: the threshold was never reached.
        const THRESHOLD_NEVER_CROSSED = 1 << 4;
        /// The estimate hit the upper search bound.
        const SATURATED = 1 << 5;
    }
}

impl Corrections {
    /// True if any rule other than the coin toss fired.
    pub fn is_corrected(&self) -> bool {
        !self.difference(Corrections::COIN_TOSS).is_empty()
    }
}

impl From<Correction> for Corrections {
    fn from(c: Correction) -> Self {
        match c {
            Correction::None => Corrections::empty(),
            Correction::ZeroObservation => Corrections::ZERO_OBSERVATION,
            Correction::NegativeDiscriminantOrLog => Corrections::NEGATIVE_DISCRIMINANT,
            Correction::NegativeRoot => Corrections::NEGATIVE_ROOT,
        }
    }
}

impl fmt::Display for Corrections {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<&str> = self
            .iter()
            .map(|flag| match flag {
                Corrections::ZERO_OBSERVATION => "zero_observation",
                Corrections::NEGATIVE_DISCRIMINANT => "negative_discriminant",
                Corrections::NEGATIVE_ROOT => "negative_root",
                Corrections::COIN_TOSS => "coin_toss",
                Corrections::THRESHOLD_NEVER_CROSSED => "threshold_never_crossed",
                _ => "saturated",
            })
            .collect();
        f.write_str(&names.join("|"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Sat,
    Rtt,
    Envd,
    Ml,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Sat => "SAT",
            Protocol::Rtt => "RTT",
            Protocol::Envd => "ENVD",
            Protocol::Ml => "ML",
        })
    }
}

/// One protocol's distance estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    /// Estimated distance (m).
    pub d_hat: f64,
    pub protocol: Protocol,
    pub corrections: Corrections,
    /// Number of observations the protocol had to consume.
    pub samples_used: usize,
}

/// Picks the estimate from an inversion: 0 when no root survived, a coin toss
/// between two roots.
pub(crate) fn resolve_roots<R: Rng + ?Sized>(sol: &DistanceSolutionSet, rng: &mut R) -> (f64, Corrections) {
    let mut flags = Corrections::from(sol.correction);
    let d_hat = match sol.roots.as_slice() {
        [] => 0.0,
        [only] => *only,
        [near, far, ..] => {
            flags |= Corrections::COIN_TOSS;
            if rng.gen_bool(0.5) {
                *far
            } else {
                *near
            }
        }
    };
    (d_hat, flags)
}

/// SA-T: invert the single observation taken at the agreed time `t_sa`.
pub fn sat_estimate<R: Rng + ?Sized>(
    env: &EnvironmentParams,
    obs_at_tsa: f64,
    t_sa: f64,
    rng: &mut R,
) -> Result<EstimateRecord> {
    let sol = invert_count(env, obs_at_tsa, t_sa)?;
    let (d_hat, corrections) = resolve_roots(&sol, rng);
    Ok(EstimateRecord {
        d_hat,
        protocol: Protocol::Sat,
        corrections,
        samples_used: 1,
    })
}

/// RTT-T: at the first sample whose count reaches `tau`, invert with `s = tau`.
pub fn rtt_estimate<R: Rng + ?Sized>(
    env: &EnvironmentParams,
    series: &ObservationSeries,
    tau: u32,
    rng: &mut R,
) -> Result<EstimateRecord> {
    if tau < 1 {
        return Err(config("RTT threshold must be at least 1"));
    }
    let threshold = f64::from(tau);
    let crossing = series.counts().iter().position(|&s| s >= threshold);
    let Some(index) = crossing else {
        return Ok(EstimateRecord {
            d_hat: 0.0,
            protocol: Protocol::Rtt,
            corrections: Corrections::THRESHOLD_NEVER_CROSSED,
            samples_used: series.len(),
        });
    };
    let sol = invert_count(env, threshold, series.times()[index])?;
    let (d_hat, corrections) = resolve_roots(&sol, rng);
    Ok(EstimateRecord {
        d_hat,
        protocol: Protocol::Rtt,
        corrections,
        samples_used: index + 1,
    })
}

/// Index of the sample time nearest `t`; exact ties go to the earlier sample.
pub fn nearest_sample_index(times: &[f64], t: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &ti) in times.iter().enumerate() {
        let gap = (ti - t).abs();
        if best.is_none_or(|(_, g)| gap < g) {
            best = Some((i, gap));
        }
    }
    best.map(|(i, _)| i)
}
