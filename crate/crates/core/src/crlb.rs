//! Poisson observation likelihood, its score, the Fisher information and the
//! Cramer-Rao lower bound on unbiased distance estimates.
//!
//! Each observation `s_m` taken at `t_m` is modelled as an independent Poisson
//! variable with mean `mu_m = Lambda_m exp(-d^2 Phi_m + d Psi)`.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use crate::channel::{log_mean_unchecked, EnvironmentParams};
use crate::error::{domain, Error, Result};

/// Time-stamped molecule counts observed at the receiver.
///
/// Counts are stored as `f64`: simulators always produce whole numbers, while
/// noiseless pseudo-observations (`s_m = mu_m`) are real-valued.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    times: Vec<f64>,
    counts: Vec<f64>,
}

impl ObservationSeries {
    pub fn new(times: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        if times.len() != counts.len() {
            return Err(Error::InvalidSeries(format!(
                "{} times but {} counts",
                times.len(),
                counts.len()
            )));
        }
        validate_times(&times).map_err(|e| Error::InvalidSeries(e.to_string()))?;
        if let Some(c) = counts.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidSeries(format!("count {c} is not a finite non-negative number")));
        }
        Ok(Self { times, counts })
    }

    /// Counts sampled at `dt, 2 dt, ..., n dt`.
    pub fn on_uniform_grid(dt: f64, counts: Vec<f64>) -> Result<Self> {
        let times = uniform_times(dt, counts.len());
        Self::new(times, counts)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Keeps only the sample at `index`.
    pub fn single(&self, index: usize) -> Option<Self> {
        Some(Self {
            times: vec![*self.times.get(index)?],
            counts: vec![self.counts[index]],
        })
    }
}

/// `dt, 2 dt, ..., n dt`.
pub fn uniform_times(dt: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 * dt).collect()
}

pub(crate) fn validate_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(domain(format!("sample time {t} must be positive and finite")));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("sample times must be strictly increasing"));
    }
    Ok(())
}

/// Per-sample constants of the compact mean `mu_m = Lambda_m exp(-d^2 Phi_m + d Psi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodConstants {
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: f64,
    ln_lambda: Vec<f64>,
}

impl LikelihoodConstants {
    pub fn new(env: &EnvironmentParams, times: &[f64]) -> Self {
        let d2 = env.diff_coeff;
        let flow_sq = env.v_par * env.v_par + env.v_perp * env.v_perp;
        let ln_nv = (env.n_emitted as f64 * env.rx_volume()).ln();
        let ln_lambda: Vec<f64> = times
            .iter()
            .map(|&t| ln_nv - 1.5 * (4.0 * PI * d2 * t).ln() - env.k_degrade * t - t * flow_sq / (4.0 * d2))
            .collect();
        Self {
            lambda: ln_lambda.iter().map(|l| l.exp()).collect(),
            phi: times.iter().map(|&t| 1.0 / (4.0 * d2 * t)).collect(),
            psi: env.v_par / (2.0 * d2),
            ln_lambda,
        }
    }

    /// `Lambda_m exp(-d^2 Phi_m + d Psi)`, computed in log space.
    #[inline]
    pub fn mean(&self, m: usize, d: f64) -> f64 {
        (self.ln_lambda[m] - d * d * self.phi[m] + d * self.psi).exp()
    }
}

/// Joint Poisson log-likelihood of `obs` under distance `d_hypothesis`.
///
/// The log-mean is evaluated analytically, so terms stay finite even where the
/// mean underflows. A zero mean paired with a positive count yields
/// `f64::NEG_INFINITY`.
pub fn log_likelihood(env: &EnvironmentParams, d_hypothesis: f64, obs: &ObservationSeries) -> f64 {
    obs.times
        .iter()
        .zip(&obs.counts)
        .map(|(&t, &s)| {
            let ln_mu = log_mean_unchecked(env, d_hypothesis, t);
            poisson_log_pmf(s, ln_mu)
        })
        .sum()
}

#[inline]
pub(crate) fn poisson_log_pmf(s: f64, ln_mu: f64) -> f64 {
    let mu = ln_mu.exp();
    if s == 0.0 {
        -mu
    } else if ln_mu == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        s * ln_mu - mu - ln_gamma(s + 1.0)
    }
}

/// Derivative of [`log_likelihood`] with respect to the distance.
pub fn score(env: &EnvironmentParams, d_hypothesis: f64, obs: &ObservationSeries) -> f64 {
    let c = LikelihoodConstants::new(env, &obs.times);
    let d = d_hypothesis;
    obs.counts
        .iter()
        .enumerate()
        .map(|(m, &s)| {
            let slope = c.psi - 2.0 * c.phi[m] * d;
            s * slope - c.mean(m, d) * slope
        })
        .sum()
}

/// Fisher information about `d` carried by samples at `times`,
/// `sum_m Lambda_m (Psi - 2 Phi_m d)^2 exp(-d^2 Phi_m + d Psi)`.
pub fn fisher_information(env: &EnvironmentParams, d: f64, times: &[f64]) -> f64 {
    let c = LikelihoodConstants::new(env, times);
    (0..times.len())
        .map(|m| {
            let slope = c.psi - 2.0 * c.phi[m] * d;
            slope * slope * c.mean(m, d)
        })
        .sum()
}

/// Same quantity as [`fisher_information`] written as
/// `sum_m (v_par - d/t_m)^2 mu_m / (4 D^2)`.
pub fn fisher_information_from_means(env: &EnvironmentParams, d: f64, times: &[f64]) -> f64 {
    let four_d_sq = 4.0 * env.diff_coeff * env.diff_coeff;
    times
        .iter()
        .map(|&t| {
            let lever = env.v_par - d / t;
            lever * lever * crate::channel::mean_unchecked(env, d, t) / four_d_sq
        })
        .sum()
}

/// Lower bound (m^2) on the variance of any unbiased estimator of `d`.
pub fn crlb(env: &EnvironmentParams, d: f64, times: &[f64]) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(domain(format!("distance must be positive, got {d}")));
    }
    validate_times(times)?;
    let info = fisher_information(env, d, times);
    if info > 0.0 && info.is_finite() {
        Ok(1.0 / info)
    } else {
        Err(Error::UnboundedCrlb)
    }
}
