//! Maximum-likelihood distance estimation.
//!
//! A single observation has a closed-form ML solution (the inversion used by
//! SA-T). With several observations the log-likelihood is maximised by an
//! exhaustive search over a uniform grid of distances, optionally polished by
//! a golden-section search around the winning grid point.

use rand::Rng;

use super::{resolve_roots, Corrections, EstimateRecord, Protocol};
use crate::channel::{invert_count, log_mean_unchecked, EnvironmentParams};
use crate::crlb::{validate_times, ObservationSeries};
use crate::error::{config, Result};

/// Bounds and resolution of the distance search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlSearchSpec {
    pub d_min: f64,
    pub d_max: f64,
    pub n_grid: usize,
    /// Golden-section refinement around the best grid point.
    pub refine: bool,
}

impl Default for MlSearchSpec {
    fn default() -> Self {
        Self {
            d_min: 0.01e-6,
            d_max: 20e-6,
            n_grid: 2000,
            refine: true,
        }
    }
}

impl MlSearchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > 0.0 && self.d_min < self.d_max && self.d_max.is_finite()) {
            return Err(config(format!(
                "search bounds must satisfy 0 < d_min < d_max, got [{}, {}]",
                self.d_min, self.d_max
            )));
        }
        if self.n_grid < 2 {
            return Err(config("search grid needs at least 2 points"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.d_max - self.d_min) / (self.n_grid - 1) as f64
    }

    /// Uniform grid over `[d_min, d_max]`, both ends included exactly.
    pub fn grid(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.n_grid)
            .map(|i| {
                if i + 1 == self.n_grid {
                    self.d_max
                } else {
                    self.d_min + i as f64 * step
                }
            })
            .collect()
    }
}

/// Log-means tabulated over the distance grid for one fixed set of sample
/// times, so that many realizations can be scored without recomputing them.
#[derive(Debug, Clone)]
pub struct MlLikelihoodGrid {
    env: EnvironmentParams,
    spec: MlSearchSpec,
    times: Vec<f64>,
    grid: Vec<f64>,
    /// Row-major `[grid point][sample]`.
    ln_mean: Vec<f64>,
    total_mean: Vec<f64>,
}

impl MlLikelihoodGrid {
    pub fn new(env: &EnvironmentParams, times: &[f64], spec: MlSearchSpec) -> Result<Self> {
        spec.validate()?;
        validate_times(times)?;
        let grid = spec.grid();
        let mut ln_mean = Vec::with_capacity(grid.len() * times.len());
        let mut total_mean = Vec::with_capacity(grid.len());
        for &d in &grid {
            let mut total = 0.0;
            for &t in times {
                let l = log_mean_unchecked(env, d, t);
                ln_mean.push(l);
                total += l.exp();
            }
            total_mean.push(total);
        }
        Ok(Self {
            env: *env,
            spec,
            times: times.to_vec(),
            grid,
            ln_mean,
            total_mean,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Log-likelihood at every grid point, up to the additive constant
    /// `-sum ln(s_m!)` which does not depend on `d`.
    pub fn grid_log_likelihood(&self, counts: &[f64]) -> Vec<f64> {
        let m = self.times.len();
        let observed: Vec<(usize, f64)> = counts
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .collect();
        self.total_mean
            .iter()
            .enumerate()
            .map(|(g, &total)| {
                let row = &self.ln_mean[g * m..(g + 1) * m];
                observed.iter().map(|&(i, s)| s * row[i]).sum::<f64>() - total
            })
            .collect()
    }

    fn kernel(&self, d: f64, counts: &[f64]) -> f64 {
        self.times
            .iter()
            .zip(counts)
            .map(|(&t, &s)| {
                let l = log_mean_unchecked(&self.env, d, t);
                if s > 0.0 {
                    s * l - l.exp()
                } else {
                    -l.exp()
                }
            })
            .sum()
    }

    /// ML estimate for a series sampled at this grid's times.
    ///
    /// A single sample takes the closed-form path with the coin-toss rule,
    /// which makes it identical to SA-T on the same input and random stream.
    pub fn estimate<R: Rng + ?Sized>(&self, series: &ObservationSeries, rng: &mut R) -> Result<EstimateRecord> {
        if series.times() != self.times.as_slice() {
            return Err(config("series sample times differ from the tabulated times"));
        }
        if series.len() == 1 {
            let sol = invert_count(&self.env, series.counts()[0], series.times()[0])?;
            let (d_hat, corrections) = resolve_roots(&sol, rng);
            return Ok(EstimateRecord {
                d_hat,
                protocol: Protocol::Ml,
                corrections,
                samples_used: 1,
            });
        }

        let scores = self.grid_log_likelihood(series.counts());
        let mut best = 0;
        for (g, &v) in scores.iter().enumerate() {
            if v > scores[best] {
                best = g;
            }
        }

        let counts = series.counts();
        let mut d_hat = self.grid[best];
        if self.spec.refine {
            let lo = self.grid[best.saturating_sub(1)];
            let hi = self.grid[(best + 1).min(self.grid.len() - 1)];
            let polished = golden_section_max(|d| self.kernel(d, counts), lo, hi, REFINE_TOL);
            if self.kernel(polished, counts) > self.kernel(d_hat, counts) {
                d_hat = polished;
            }
        }

        let mut corrections = Corrections::empty();
        if d_hat >= self.spec.d_max {
            corrections |= Corrections::SATURATED;
        }
        Ok(EstimateRecord {
            d_hat,
            protocol: Protocol::Ml,
            corrections,
            samples_used: series.len(),
        })
    }
}

const REFINE_TOL: f64 = 1e-13;

fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// ML estimate from `series`; builds the likelihood table on the fly.
pub fn ml_estimate<R: Rng + ?Sized>(
    env: &EnvironmentParams,
    series: &ObservationSeries,
    spec: &MlSearchSpec,
    rng: &mut R,
) -> Result<EstimateRecord> {
    if series.is_empty() {
        return Err(config("ML estimation needs at least one observation"));
    }
    if series.len() == 1 {
        // The closed form needs no table.
        let grid = MlLikelihoodGrid {
            env: *env,
            spec: *spec,
            times: series.times().to_vec(),
            grid: Vec::new(),
            ln_mean: Vec::new(),
            total_mean: Vec::new(),
        };
        return grid.estimate(series, rng);
    }
    MlLikelihoodGrid::new(env, series.times(), *spec)?.estimate(series, rng)
}
