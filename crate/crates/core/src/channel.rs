//! Analytic model of the unbounded 3-D diffusive channel.
//!
//! The transmitter sits at `(-d, 0, 0)` and releases `n_emitted` molecules at
//! `t = 0`. The receiver is a passive sphere of radius `r_rx` centred on the
//! origin. Under the uniform-concentration assumption the expected number of
//! molecules inside the receiver is
//!
//! ```text
//! N(t) = N_EM V_RX / (4 pi D t)^{3/2} * exp(-k t - r_eff^2 / (4 D t))
//! r_eff^2 = (d - v_par t)^2 + (v_perp t)^2
//! ```
//!
//! All quantities are SI (meters, seconds).

use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Observation substituted for a zero count before inverting the channel.
pub const ZERO_OBSERVATION_SUBSTITUTE: f64 = 0.1;

/// Physical description of the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentParams {
    /// True TX-RX distance (m).
    pub d: f64,
    /// Flow component along the TX->RX line (m/s), may be negative.
    pub v_par: f64,
    /// Flow component perpendicular to the TX->RX line (m/s).
    pub v_perp: f64,
    /// Diffusion coefficient (m^2/s).
    pub diff_coeff: f64,
    /// First-order degradation rate (1/s).
    pub k_degrade: f64,
    /// Molecules released per impulse.
    pub n_emitted: u64,
    /// Receiver radius (m).
    pub r_rx: f64,
}

impl EnvironmentParams {
    /// No flow, no degradation; Table I "System 1" values with the given distance.
    pub fn system1(d: f64) -> Self {
        Self {
            d,
            v_par: 0.0,
            v_perp: 0.0,
            diff_coeff: 1e-9,
            k_degrade: 0.0,
            n_emitted: 100_000,
            r_rx: 0.5e-6,
        }
    }

    /// Degrading channel (`k = 62.5 1/s`) at `d = 4 um` with flow `v_par` toward the RX.
    pub fn system2(v_par: f64) -> Self {
        Self {
            d: 4e-6,
            v_par,
            k_degrade: 62.5,
            ..Self::system1(4e-6)
        }
    }

    pub fn with_distance(self, d: f64) -> Self {
        Self { d, ..self }
    }

    pub fn with_flow(self, v_par: f64, v_perp: f64) -> Self {
        Self {
            v_par,
            v_perp,
            ..self
        }
    }

    pub fn with_radius(self, r_rx: f64) -> Self {
        Self { r_rx, ..self }
    }

    /// Receiver volume `4/3 pi r^3`.
    pub fn rx_volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.r_rx.powi(3)
    }

    /// `eta = (v_par^2 + v_perp^2) / D + 4 k`, which governs the peak time.
    pub fn eta(&self) -> f64 {
        (self.v_par * self.v_par + self.v_perp * self.v_perp) / self.diff_coeff
            + 4.0 * self.k_degrade
    }

    /// Checks the parameter invariants. `d` itself is only required to be
    /// finite and non-negative here; ground-truth contexts check positivity.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.d,
            self.v_par,
            self.v_perp,
            self.diff_coeff,
            self.k_degrade,
            self.r_rx,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(domain("environment parameters must be finite"));
        }
        if self.diff_coeff <= 0.0 {
            return Err(domain("diffusion coefficient must be positive"));
        }
        if self.k_degrade < 0.0 {
            return Err(domain("degradation rate must be non-negative"));
        }
        if self.v_perp < 0.0 {
            return Err(domain("perpendicular flow must be non-negative"));
        }
        if self.n_emitted == 0 {
            return Err(domain("at least one molecule must be emitted"));
        }
        if self.r_rx <= 0.0 {
            return Err(domain("receiver radius must be positive"));
        }
        if self.d < 0.0 {
            return Err(domain("distance must be non-negative"));
        }
        Ok(())
    }

    fn emitted_volume(&self) -> f64 {
        self.n_emitted as f64 * self.rx_volume()
    }
}

/// Which correction rule fired while inverting an observation.
///
/// Only the first rule to fire, in the order listed, is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Correction {
    None,
    /// `s = 0` was replaced by [`ZERO_OBSERVATION_SUBSTITUTE`].
    ZeroObservation,
    /// The quantity under the square root was negative; the estimate is 0.
    NegativeDiscriminantOrLog,
    /// Every real root was negative; the estimate is 0.
    NegativeRoot,
}

/// Candidate distances produced by inverting an observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSolutionSet {
    /// Zero, one or two non-negative roots in ascending order.
    pub roots: Vec<f64>,
    pub correction: Correction,
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("time must be positive and finite, got {t}")))
    }
}

/// Natural log of [`expected_count`]. Stays finite where the count itself underflows.
pub fn log_expected_count(env: &EnvironmentParams, d: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(log_mean_unchecked(env, d, t))
}

#[inline]
pub(crate) fn log_mean_unchecked(env: &EnvironmentParams, d: f64, t: f64) -> f64 {
    let four_dt = 4.0 * env.diff_coeff * t;
    let along = d - env.v_par * t;
    let across = env.v_perp * t;
    env.emitted_volume().ln()
        - 1.5 * (PI * four_dt).ln()
        - env.k_degrade * t
        - (along * along + across * across) / four_dt
}

/// Expected number of molecules inside the receiver at time `t` for distance `d`.
///
/// Returns 0 rather than NaN when the exponential underflows.
pub fn expected_count(env: &EnvironmentParams, d: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(mean_unchecked(env, d, t))
}

#[inline]
pub(crate) fn mean_unchecked(env: &EnvironmentParams, d: f64, t: f64) -> f64 {
    let four_dt = 4.0 * env.diff_coeff * t;
    let along = d - env.v_par * t;
    let across = env.v_perp * t;
    let prefactor = env.emitted_volume() / (PI * four_dt).powf(1.5);
    let exponent = -env.k_degrade * t - (along * along + across * across) / four_dt;
    prefactor * exponent.exp()
}

/// Solves the impulse response for the distance that explains count `s` at time `t`.
///
/// Correction rules, in order: a zero count is replaced by 0.1; a negative
/// discriminant yields no roots; negative roots are discarded.
pub fn invert_count(env: &EnvironmentParams, s: f64, t: f64) -> Result<DistanceSolutionSet> {
    check_time(t)?;
    if !(s >= 0.0 && s.is_finite()) {
        return Err(domain(format!("observed count must be finite and >= 0, got {s}")));
    }
    let mut correction = Correction::None;
    let s = if s == 0.0 {
        correction = Correction::ZeroObservation;
        ZERO_OBSERVATION_SUBSTITUTE
    } else {
        s
    };

    let four_dt = 4.0 * env.diff_coeff * t;
    let log_term = (env.emitted_volume() / (s * (PI * four_dt).powf(1.5))).ln();
    let discriminant = four_dt * log_term
        - t * t * (env.v_perp * env.v_perp + 4.0 * env.k_degrade * env.diff_coeff);

    let first = |c: Correction, fallback: Correction| {
        if c == Correction::None {
            fallback
        } else {
            c
        }
    };

    if discriminant.is_nan() || discriminant < 0.0 {
        return Ok(DistanceSolutionSet {
            roots: Vec::new(),
            correction: first(correction, Correction::NegativeDiscriminantOrLog),
        });
    }

    let centre = env.v_par * t;
    let half_width = discriminant.sqrt();
    let mut roots = Vec::with_capacity(2);
    for root in [centre - half_width, centre + half_width] {
        if root >= 0.0 && root.is_finite() && roots.last() != Some(&root) {
            roots.push(root);
        }
    }
    if roots.is_empty() {
        correction = first(correction, Correction::NegativeRoot);
    }
    Ok(DistanceSolutionSet { roots, correction })
}

/// Time at which the expected count peaks.
pub fn peak_time(env: &EnvironmentParams, d: f64) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(domain(format!("distance must be positive, got {d}")));
    }
    let eta = env.eta();
    if eta == 0.0 {
        return Ok(d * d / (6.0 * env.diff_coeff));
    }
    // (-3 + sqrt(9 + d^2 eta / D)) / eta, rationalised so that small eta
    // does not cancel catastrophically.
    let root = (9.0 + d * d * eta / env.diff_coeff).sqrt();
    Ok(d * d / (env.diff_coeff * (3.0 + root)))
}

/// Expected count at [`peak_time`].
pub fn peak_count(env: &EnvironmentParams, d: f64) -> Result<f64> {
    let t_max = peak_time(env, d)?;
    if env.eta() == 0.0 {
        return Ok(peak_count_no_flow(env, d));
    }
    expected_count(env, d, t_max)
}

/// `N_EM V_RX e^{-3/2} / ((2 pi / 3)^{3/2} d^3)`, valid without flow or degradation.
pub fn peak_count_no_flow(env: &EnvironmentParams, d: f64) -> f64 {
    env.emitted_volume() * (-1.5f64).exp() / ((2.0 * PI / 3.0).powf(1.5) * d.powi(3))
}
