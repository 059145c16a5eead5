//! Particle-based simulation of an impulsive release, plus a fast Poisson mode.
//!
//! Each released molecule is an independent particle. Per time step it moves
//! by the flow displacement plus an independent `N(0, 2 D dt)` draw on each
//! axis, then degrades with probability `k dt`. After every step the receiver
//! counts the surviving particles inside its sphere.
//!
//! Particles are traced one at a time over the whole window. Two exact
//! shortcuts keep this fast without changing the distribution of the counts:
//!
//! * The degradation step is drawn once per particle from the geometric
//!   distribution with success probability `k dt` rather than as a Bernoulli
//!   trial every step.
//! * The `y` and `z` coordinates are only advanced when the particle's `x`
//!   coordinate is within one receiver radius of the origin. Brownian
//!   increments are independent, so a skipped run of `n` steps is a single
//!   normal draw with `n` times the per-step variance.

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson, StandardNormal};

use crate::channel::{expected_count, EnvironmentParams};
use crate::crlb::{uniform_times, validate_times, ObservationSeries};
use crate::error::{config, domain, Result};
use crate::rng::{stream, StreamPurpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimMode {
    /// Brownian particle tracing.
    Particle,
    /// Independent Poisson counts with the analytic expected count as mean.
    PoissonAnalytic,
    /// Counts set to the expected count itself. Deterministic; for testing.
    Noiseless,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Time step (s).
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub mode: SimMode,
}

impl SimConfig {
    /// 0.1 ms steps, 200 of them.
    pub fn table1(seed: u64, mode: SimMode) -> Self {
        Self {
            dt: 1e-4,
            n_steps: 200,
            seed,
            mode,
        }
    }

    pub fn validate(&self, env: &EnvironmentParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(config(format!("time step must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(config("at least one simulation step is required"));
        }
        if env.k_degrade * self.dt >= 1.0 {
            return Err(config(format!(
                "per-step degradation probability k*dt = {} must be below 1",
                env.k_degrade * self.dt
            )));
        }
        Ok(())
    }

    /// Sample times `dt, 2 dt, ..., n_steps dt`.
    pub fn times(&self) -> Vec<f64> {
        uniform_times(self.dt, self.n_steps)
    }

    pub fn window_end(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// Result of tracing an ensemble of particles.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome {
    /// Particles inside the receiver after each step.
    pub counts: Vec<u64>,
    /// Particles that never degraded over the whole window.
    pub survivors: u64,
    /// Final displacement from the release point of every survivor, when requested.
    pub displacements: Vec<[f64; 3]>,
}

fn check_particle_env(env: &EnvironmentParams) -> Result<()> {
    // Pure drift (D = 0) is allowed here; everything else as usual.
    let probe = EnvironmentParams {
        diff_coeff: if env.diff_coeff == 0.0 { 1.0 } else { env.diff_coeff },
        ..*env
    };
    probe.validate()
}

/// Traces `n_particles` particles released from `(-env.d, 0, 0)`.
pub fn simulate_ensemble(
    env: &EnvironmentParams,
    cfg: &SimConfig,
    n_particles: u64,
    realization_index: u64,
    record_displacements: bool,
) -> Result<EnsembleOutcome> {
    check_particle_env(env)?;
    cfg.validate(env)?;
    let mut rng = stream(cfg.seed, StreamPurpose::Particles, realization_index);
    Ok(trace(env, cfg, n_particles, &mut rng, record_displacements))
}

fn trace<R: Rng>(
    env: &EnvironmentParams,
    cfg: &SimConfig,
    n_particles: u64,
    rng: &mut R,
    record_displacements: bool,
) -> EnsembleOutcome {
    let n = cfg.n_steps;
    let sigma = (2.0 * env.diff_coeff * cfg.dt).sqrt();
    // Standard deviation of `j` accumulated steps.
    let spread: Vec<f64> = (0..=n).map(|j| sigma * (j as f64).sqrt()).collect();
    let drift_x = env.v_par * cfg.dt;
    let drift_y = env.v_perp * cfg.dt;
    let r = env.r_rx;
    let r_sq = r * r;
    let lifetime = {
        let p = env.k_degrade * cfg.dt;
        (p > 0.0).then(|| Geometric::new(p).expect("0 < k dt < 1 checked by validate"))
    };

    let mut counts = vec![0u64; n];
    let mut survivors = 0;
    let mut displacements = Vec::new();

    for _ in 0..n_particles {
        // Steps whose end-of-step observation still sees the particle.
        let alive_steps = match &lifetime {
            Some(geo) => geo.sample(rng).min(n as u64) as usize,
            None => n,
        };
        if alive_steps == n {
            survivors += 1;
        }

        let mut x = -env.d;
        let (mut y, mut z) = (0.0, 0.0);
        let mut synced = 0usize;
        for step in 1..=alive_steps {
            let g: f64 = rng.sample(StandardNormal);
            x += drift_x + sigma * g;
            if x.abs() <= r {
                let gap = step - synced;
                let gy: f64 = rng.sample(StandardNormal);
                let gz: f64 = rng.sample(StandardNormal);
                y += drift_y * gap as f64 + spread[gap] * gy;
                z += spread[gap] * gz;
                synced = step;
                if x * x + y * y + z * z <= r_sq {
                    counts[step - 1] += 1;
                }
            }
        }

        if record_displacements && alive_steps == n {
            let gap = n - synced;
            if gap > 0 {
                let gy: f64 = rng.sample(StandardNormal);
                let gz: f64 = rng.sample(StandardNormal);
                y += drift_y * gap as f64 + spread[gap] * gy;
                z += spread[gap] * gz;
            }
            displacements.push([x + env.d, y, z]);
        }
    }

    EnsembleOutcome {
        counts,
        survivors,
        displacements,
    }
}

/// One particle-based realization with `env.n_emitted` molecules.
///
/// Deterministic for a fixed `(cfg.seed, realization_index)`.
pub fn simulate_realization(
    env: &EnvironmentParams,
    cfg: &SimConfig,
    realization_index: u64,
) -> Result<ObservationSeries> {
    let outcome = simulate_ensemble(env, cfg, env.n_emitted, realization_index, false)?;
    ObservationSeries::on_uniform_grid(cfg.dt, outcome.counts.into_iter().map(|c| c as f64).collect())
}

/// Independent Poisson counts with mean `expected_count(env, d, t_m)`.
pub fn sample_poisson_series(
    env: &EnvironmentParams,
    d: f64,
    times: &[f64],
    seed: u64,
    realization_index: u64,
) -> Result<ObservationSeries> {
    validate_times(times)?;
    let mut rng = stream(seed, StreamPurpose::Poisson, realization_index);
    let counts = times
        .iter()
        .map(|&t| Ok(poisson_draw(expected_count(env, d, t)?, &mut rng)))
        .collect::<Result<Vec<f64>>>()?;
    ObservationSeries::new(times.to_vec(), counts)
}

/// Below this mean the count is drawn by inversion; `rand_distr`'s Poisson
/// sampler returns -1 for means of order 1e-16 and smaller.
const TINY_MEAN: f64 = 1e-8;

/// One Poisson draw; a non-positive mean gives 0.
pub fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean >= TINY_MEAN {
        Poisson::new(mean).expect("positive finite mean").sample(rng)
    } else if mean > 0.0 {
        // P(X >= 2) < mean^2 / 2 is below f64 resolution here.
        let u: f64 = rng.gen();
        if u < -(-mean).exp_m1() {
            1.0
        } else {
            0.0
        }
    } else {
        0.0
    }
}

/// Pseudo-observations equal to the expected counts.
pub fn noiseless_series(env: &EnvironmentParams, d: f64, times: &[f64]) -> Result<ObservationSeries> {
    let counts = times
        .iter()
        .map(|&t| expected_count(env, d, t))
        .collect::<Result<Vec<f64>>>()?;
    ObservationSeries::new(times.to_vec(), counts)
}

/// Generates one realization at the environment's true distance, in `cfg.mode`.
pub fn observe(env: &EnvironmentParams, cfg: &SimConfig, realization_index: u64) -> Result<ObservationSeries> {
    if env.d.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(domain("true distance must be positive"));
    }
    match cfg.mode {
        SimMode::Particle => simulate_realization(env, cfg, realization_index),
        SimMode::PoissonAnalytic => {
            cfg.validate(env)?;
            sample_poisson_series(env, env.d, &cfg.times(), cfg.seed, realization_index)
        }
        SimMode::Noiseless => {
            cfg.validate(env)?;
            noiseless_series(env, env.d, &cfg.times())
        }
    }
}
