//! Moving max/min envelope filters and the ENVD estimator.

use std::f64::consts::{E, PI};

use super::{Corrections, EstimateRecord, MlSearchSpec, Protocol};
use crate::channel::{peak_count, EnvironmentParams, ZERO_OBSERVATION_SUBSTITUTE};
use crate::crlb::ObservationSeries;
use crate::error::{config, Result};

fn check_window(w: usize) -> Result<usize> {
    if w == 0 || w.is_multiple_of(2) {
        return Err(config(format!("filter window must be odd and positive, got {w}")));
    }
    Ok(w / 2)
}

fn centred_filter(counts: &[f64], w: usize, pick: fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let half = check_window(w)?;
    let n = counts.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            counts[lo..=hi].iter().copied().reduce(pick).expect("window is non-empty")
        })
        .collect())
}

/// Upper envelope: the maximum over a centred window, truncated at the edges.
pub fn moving_max(counts: &[f64], w: usize) -> Result<Vec<f64>> {
    centred_filter(counts, w, f64::max)
}

/// Lower envelope: the minimum over a centred window, truncated at the edges.
pub fn moving_min(counts: &[f64], w: usize) -> Result<Vec<f64>> {
    centred_filter(counts, w, f64::min)
}

/// Peak of the mean of the two envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePeak {
    /// First index attaining the maximum.
    pub index: usize,
    pub value: f64,
}

pub fn envelope_peak(counts: &[f64], w: usize) -> Result<Option<EnvelopePeak>> {
    let upper = moving_max(counts, w)?;
    let lower = moving_min(counts, w)?;
    let mut peak: Option<EnvelopePeak> = None;
    for (index, (u, l)) in upper.iter().zip(&lower).enumerate() {
        let value = 0.5 * (u + l);
        if peak.is_none_or(|p| value > p.value) {
            peak = Some(EnvelopePeak { index, value });
        }
    }
    Ok(peak)
}

/// ENVD: treat the envelope-mean peak as the expected peak count and solve
/// the peak-count relation for `d`. The detected peak time is not used.
///
/// Without flow or degradation the solution is closed form; otherwise the
/// monotone relation `peak_count(d) = s` is bisected on `[d_min, d_max]`.
pub fn envd_estimate(
    env: &EnvironmentParams,
    series: &ObservationSeries,
    w: usize,
    bounds: &MlSearchSpec,
) -> Result<EstimateRecord> {
    let half = check_window(w)?;
    let mut corrections = Corrections::empty();
    let (peak_value, samples_used) = match envelope_peak(series.counts(), w)? {
        Some(p) => (p.value, (p.index + half + 1).min(series.len())),
        None => (0.0, 0),
    };
    let s = if peak_value == 0.0 {
        corrections |= Corrections::ZERO_OBSERVATION;
        ZERO_OBSERVATION_SUBSTITUTE
    } else {
        peak_value
    };

    let d_hat = if env.eta() == 0.0 {
        let emitted_volume = env.n_emitted as f64 * env.rx_volume();
        let d = (2.0 * PI * E / 3.0).powf(-0.5) * (emitted_volume / s).cbrt();
        if d > bounds.d_max {
            corrections |= Corrections::SATURATED;
            bounds.d_max
        } else {
            d
        }
    } else {
        solve_peak_relation(env, s, bounds, &mut corrections)?
    };

    Ok(EstimateRecord {
        d_hat,
        protocol: Protocol::Envd,
        corrections,
        samples_used,
    })
}

/// Bisection tolerance on `d` (m).
const BISECTION_TOL: f64 = 1e-10;

fn solve_peak_relation(
    env: &EnvironmentParams,
    s: f64,
    bounds: &MlSearchSpec,
    corrections: &mut Corrections,
) -> Result<f64> {
    let ln_s = s.ln();
    let gap = |d: f64| -> Result<f64> { Ok(peak_count(env, d)?.ln() - ln_s) };

    let (mut lo, mut hi) = (bounds.d_min, bounds.d_max);
    if gap(lo)? <= 0.0 {
        // More molecules than any admissible distance could deliver.
        *corrections |= Corrections::NEGATIVE_DISCRIMINANT;
        return Ok(0.0);
    }
    if gap(hi)? >= 0.0 {
        *corrections |= Corrections::SATURATED;
        return Ok(hi);
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
