//! Monte Carlo experiments: sweep a parameter, run every protocol on the same
//! realizations and aggregate squared-error statistics next to the CRLB.

use std::fmt;

use rayon::prelude::*;

use crate::channel::{peak_time, EnvironmentParams};
use crate::crlb::{crlb, ObservationSeries};
use crate::error::{config, Error, Result};
use crate::estimators::{
    envd_estimate, nearest_sample_index, rtt_estimate, sat_estimate, Corrections,
    EstimateRecord, MlLikelihoodGrid, MlSearchSpec, Protocol,
};
use crate::rng::{realization_index, stream, StreamPurpose};
use crate::sim::{observe, SimConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// True distances (m).
    Distance(Vec<f64>),
    /// Parallel flow speeds (m/s).
    FlowParallel(Vec<f64>),
}

impl Sweep {
    pub fn values(&self) -> &[f64] {
        match self {
            Sweep::Distance(v) | Sweep::FlowParallel(v) => v,
        }
    }

    /// The environment at one sweep value.
    pub fn apply(&self, base: &EnvironmentParams, value: f64) -> EnvironmentParams {
        match self {
            Sweep::Distance(_) => base.with_distance(value),
            Sweep::FlowParallel(_) => base.with_flow(value, base.v_perp),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolConfig {
    /// Sampling time (s).
    Sat { t_sa: f64 },
    Rtt { tau: u32 },
    Envd { window: usize, search: MlSearchSpec },
    /// Uses every simulated sample.
    Ml { search: MlSearchSpec },
}

impl ProtocolConfig {
    pub fn protocol(&self) -> Protocol {
        match self {
            ProtocolConfig::Sat { .. } => Protocol::Sat,
            ProtocolConfig::Rtt { .. } => Protocol::Rtt,
            ProtocolConfig::Envd { .. } => Protocol::Envd,
            ProtocolConfig::Ml { .. } => Protocol::Ml,
        }
    }

    /// Label used in reports, e.g. `SAT(2.5ms)`, `RTT(2)`, `ENVD(7)`, `ML`.
    pub fn label(&self) -> String {
        match self {
            ProtocolConfig::Sat { t_sa } => format!("SAT({}ms)", t_sa * 1e3),
            ProtocolConfig::Rtt { tau } => format!("RTT({tau})"),
            ProtocolConfig::Envd { window, .. } => format!("ENVD({window})"),
            ProtocolConfig::Ml { .. } => "ML".to_string(),
        }
    }

    fn validate(&self, sim: &SimConfig) -> Result<()> {
        match self {
            ProtocolConfig::Sat { t_sa } => {
                if !(*t_sa > 0.0 && *t_sa <= sim.window_end()) {
                    return Err(config(format!(
                        "SA-T time {t_sa} s lies outside the simulated window (0, {}] s",
                        sim.window_end()
                    )));
                }
            }
            ProtocolConfig::Rtt { tau } => {
                if *tau < 1 {
                    return Err(config("RTT threshold must be at least 1"));
                }
            }
            ProtocolConfig::Envd { window, search } => {
                if *window == 0 || window.is_multiple_of(2) {
                    return Err(config(format!("ENVD window must be odd and positive, got {window}")));
                }
                if *window > sim.n_steps {
                    return Err(config(format!(
                        "ENVD window {window} exceeds the {} simulated samples",
                        sim.n_steps
                    )));
                }
                search.validate()?;
            }
            ProtocolConfig::Ml { search } => search.validate()?,
        }
        Ok(())
    }
}

impl fmt::Display for ProtocolConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Environment; the swept field is overwritten per sweep value.
    pub base_env: EnvironmentParams,
    pub sweep: Sweep,
    pub n_realizations: usize,
    pub sim: SimConfig,
    pub protocols: Vec<ProtocolConfig>,
    /// Time of the single-sample CRLB column. Defaults to the first SA-T
    /// sample, or to the sample nearest the peak time without one.
    pub crlb_m1_time: Option<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(config("at least one realization is required"));
        }
        if self.sweep.values().is_empty() {
            return Err(config("sweep list is empty"));
        }
        if self.protocols.is_empty() {
            return Err(config("no protocols configured"));
        }
        if let Some(t) = self.crlb_m1_time {
            if !(t > 0.0 && t <= self.sim.window_end()) {
                return Err(config(format!("CRLB time {t} s lies outside the simulated window")));
            }
        }
        for &value in self.sweep.values() {
            let env = self.sweep.apply(&self.base_env, value);
            env.validate()
                .map_err(|e| config(format!("sweep value {value}: {e}")))?;
            self.sim.validate(&env)?;
        }
        for p in &self.protocols {
            p.validate(&self.sim)?;
        }
        Ok(())
    }
}

/// How often each correction rule fired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorrectionTally {
    pub zero_observation: usize,
    pub negative_discriminant: usize,
    pub negative_root: usize,
    pub coin_toss: usize,
    pub threshold_never_crossed: usize,
    pub saturated: usize,
    /// Estimates where any rule other than the coin toss fired.
    pub corrected: usize,
}

impl CorrectionTally {
    fn add(&mut self, c: Corrections) {
        let flags = [
            (Corrections::ZERO_OBSERVATION, &mut self.zero_observation),
            (Corrections::NEGATIVE_DISCRIMINANT, &mut self.negative_discriminant),
            (Corrections::NEGATIVE_ROOT, &mut self.negative_root),
            (Corrections::COIN_TOSS, &mut self.coin_toss),
            (Corrections::THRESHOLD_NEVER_CROSSED, &mut self.threshold_never_crossed),
            (Corrections::SATURATED, &mut self.saturated),
        ];
        for (flag, slot) in flags {
            if c.contains(flag) {
                *slot += 1;
            }
        }
        if c.is_corrected() {
            self.corrected += 1;
        }
    }
}

/// Error statistics of one protocol at one sweep point. Lengths in m.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSummary {
    pub label: String,
    pub protocol: Protocol,
    pub mse: f64,
    pub bias: f64,
    /// `mse - bias^2`.
    pub variance: f64,
    /// Standard error of `mse`.
    pub mse_stderr: f64,
    /// Standard error of `bias`.
    pub bias_stderr: f64,
    pub tally: CorrectionTally,
}

impl ProtocolSummary {
    /// Aggregates estimates of a true distance `d`, in realization order.
    pub fn from_estimates(label: String, protocol: Protocol, d: f64, estimates: &[EstimateRecord]) -> Self {
        let n = estimates.len() as f64;
        let mut tally = CorrectionTally::default();
        let (mut sum_err, mut sum_sq) = (0.0, 0.0);
        for e in estimates {
            let err = e.d_hat - d;
            sum_err += err;
            sum_sq += err * err;
            tally.add(e.corrections);
        }
        let bias = sum_err / n;
        let mse = sum_sq / n;
        let (mut m2_sq, mut m2_err) = (0.0, 0.0);
        for e in estimates {
            let err = e.d_hat - d;
            m2_sq += (err * err - mse).powi(2);
            m2_err += (err - bias).powi(2);
        }
        let stderr = |m2: f64| if n > 1.0 { (m2 / (n - 1.0) / n).sqrt() } else { f64::NAN };
        Self {
            label,
            protocol,
            mse,
            bias,
            variance: mse - bias * bias,
            mse_stderr: stderr(m2_sq),
            bias_stderr: stderr(m2_err),
            tally,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub sweep_value: f64,
    /// True distance at this point (m).
    pub d: f64,
    pub per_protocol: Vec<ProtocolSummary>,
    /// Single-sample CRLB (m^2); infinite when the sample carries no information.
    pub crlb_m1: f64,
    /// CRLB over every simulated sample (m^2).
    pub crlb_full: f64,
    /// Time used for `crlb_m1` (s).
    pub crlb_m1_time: f64,
}

fn bound_or_inf(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::UnboundedCrlb) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Per-sweep-point precomputation shared by all realizations.
struct Point {
    env: EnvironmentParams,
    times: Vec<f64>,
    sat_index: Vec<Option<usize>>,
    ml_grids: Vec<Option<MlLikelihoodGrid>>,
}

impl Point {
    fn new(cfg: &ExperimentConfig, value: f64) -> Result<Self> {
        let env = cfg.sweep.apply(&cfg.base_env, value);
        let times = cfg.sim.times();
        let mut sat_index = Vec::new();
        let mut ml_grids = Vec::new();
        for p in &cfg.protocols {
            sat_index.push(match p {
                ProtocolConfig::Sat { t_sa } => nearest_sample_index(&times, *t_sa),
                _ => None,
            });
            ml_grids.push(match p {
                ProtocolConfig::Ml { search } => Some(MlLikelihoodGrid::new(&env, &times, *search)?),
                _ => None,
            });
        }
        Ok(Self {
            env,
            times,
            sat_index,
            ml_grids,
        })
    }

    fn estimate_all(&self, cfg: &ExperimentConfig, series: &ObservationSeries, index: u64) -> Result<Vec<EstimateRecord>> {
        cfg.protocols
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let mut rng = stream(cfg.sim.seed, StreamPurpose::Estimator(j as u32), index);
                match p {
                    ProtocolConfig::Sat { .. } => {
                        let i = self.sat_index[j].expect("validated SA-T time");
                        sat_estimate(&self.env, series.counts()[i], self.times[i], &mut rng)
                    }
                    ProtocolConfig::Rtt { tau } => rtt_estimate(&self.env, series, *tau, &mut rng),
                    ProtocolConfig::Envd { window, search } => envd_estimate(&self.env, series, *window, search),
                    ProtocolConfig::Ml { .. } => self.ml_grids[j]
                        .as_ref()
                        .expect("grid built for ML")
                        .estimate(series, &mut rng),
                }
            })
            .collect()
    }

    fn crlb_m1_time(&self, cfg: &ExperimentConfig) -> Result<f64> {
        let target = match cfg.crlb_m1_time {
            Some(t) => t,
            None => match cfg.protocols.iter().find_map(|p| match p {
                ProtocolConfig::Sat { t_sa } => Some(*t_sa),
                _ => None,
            }) {
                Some(t) => t,
                None => peak_time(&self.env, self.env.d)?,
            },
        };
        let i = nearest_sample_index(&self.times, target).expect("at least one sample");
        Ok(self.times[i])
    }
}

/// Runs every sweep point. Realizations run in parallel on the current rayon
/// pool; results do not depend on the number of threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SweepSummary>> {
    cfg.validate()?;
    cfg.sweep
        .values()
        .iter()
        .enumerate()
        .map(|(k, &value)| run_point(cfg, k, value))
        .collect()
}

fn run_point(cfg: &ExperimentConfig, k: usize, value: f64) -> Result<SweepSummary> {
    let point = Point::new(cfg, value)?;
    let per_realization: Vec<Vec<EstimateRecord>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| {
            let index = realization_index(k, r);
            let series = observe(&point.env, &cfg.sim, index)?;
            point.estimate_all(cfg, &series, index)
        })
        .collect::<Result<_>>()?;

    let per_protocol = cfg
        .protocols
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let estimates: Vec<EstimateRecord> = per_realization.iter().map(|row| row[j]).collect();
            ProtocolSummary::from_estimates(p.label(), p.protocol(), point.env.d, &estimates)
        })
        .collect();

    let crlb_m1_time = point.crlb_m1_time(cfg)?;
    Ok(SweepSummary {
        sweep_value: value,
        d: point.env.d,
        per_protocol,
        crlb_m1: bound_or_inf(crlb(&point.env, point.env.d, &[crlb_m1_time]))?,
        crlb_full: bound_or_inf(crlb(&point.env, point.env.d, &point.times))?,
        crlb_m1_time,
    })
}

/// One row of a CRLB table. SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbPoint {
    pub d: f64,
    pub t: f64,
    /// Single-sample bound (m^2); infinite when unbounded.
    pub crlb: f64,
}

/// Single-sample CRLB for every `(d, t)` pair, `d` outermost.
pub fn crlb_curve(env: &EnvironmentParams, ds: &[f64], ts: &[f64]) -> Result<Vec<CrlbPoint>> {
    if ds.is_empty() || ts.is_empty() {
        return Err(config("CRLB grid needs at least one distance and one time"));
    }
    let mut rows = Vec::with_capacity(ds.len() * ts.len());
    for &d in ds {
        for &t in ts {
            rows.push(CrlbPoint {
                d,
                t,
                crlb: bound_or_inf(crlb(env, d, &[t]))?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimMode;

    fn noiseless_config(sweep: Sweep, base: EnvironmentParams) -> ExperimentConfig {
        ExperimentConfig {
            base_env: base,
            sweep,
            n_realizations: 1,
            sim: SimConfig::table1(1, SimMode::Noiseless),
            protocols: vec![
                ProtocolConfig::Sat { t_sa: 2.5e-3 },
                ProtocolConfig::Ml { search: MlSearchSpec::default() },
            ],
            crlb_m1_time: None,
        }
    }

    #[test]
    fn noiseless_fixed_point() {
        let cfg = noiseless_config(Sweep::Distance(vec![2e-6, 4e-6, 6e-6]), EnvironmentParams::system1(4e-6));
        for s in run_experiment(&cfg).unwrap() {
            for p in &s.per_protocol {
                assert!(p.mse.sqrt() < 1e-8 * s.d, "{} {} {}", p.label, s.d, p.mse);
                assert_eq!(p.tally.corrected, 0);
            }
        }
    }

    #[test]
    fn mse_identity_and_crlb_columns() {
        let mut cfg = noiseless_config(Sweep::Distance(vec![4e-6]), EnvironmentParams::system1(4e-6));
        cfg.sim.mode = SimMode::PoissonAnalytic;
        cfg.n_realizations = 50;
        cfg.protocols.push(ProtocolConfig::Rtt { tau: 2 });
        cfg.protocols.push(ProtocolConfig::Envd { window: 7, search: MlSearchSpec::default() });
        let s = &run_experiment(&cfg).unwrap()[0];
        for p in &s.per_protocol {
            assert!((p.mse - (p.variance + p.bias * p.bias)).abs() <= 1e-9 * p.mse);
        }
        assert_eq!(s.crlb_m1_time, 2.5e-3);
        assert_eq!(s.crlb_m1, crlb(&EnvironmentParams::system1(4e-6), 4e-6, &[2.5e-3]).unwrap());
        assert!(s.crlb_full < s.crlb_m1);
    }

    #[test]
    fn flow_sweep_changes_environment_only_in_flow() {
        let cfg = noiseless_config(Sweep::FlowParallel(vec![0.0, 1e-3]), EnvironmentParams::system2(0.0));
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|s| s.d == 4e-6));
        assert_ne!(out[0].crlb_full, out[1].crlb_full);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = noiseless_config(Sweep::Distance(vec![4e-6]), EnvironmentParams::system1(4e-6));
        let mut c = base.clone();
        c.protocols = vec![ProtocolConfig::Sat { t_sa: 25e-3 }];
        assert!(matches!(run_experiment(&c), Err(Error::Config(_))));
        let mut c = base.clone();
        c.n_realizations = 0;
        assert!(run_experiment(&c).is_err());
        let mut c = base.clone();
        c.sweep = Sweep::Distance(vec![]);
        assert!(run_experiment(&c).is_err());
        let mut c = base;
        c.protocols = vec![ProtocolConfig::Envd { window: 4, search: MlSearchSpec::default() }];
        assert!(run_experiment(&c).is_err());
    }

    #[test]
    fn crlb_curve_doubles_with_half_emission() {
        let env = EnvironmentParams::system1(4e-6);
        let ts = [1e-3, 2e-3];
        let a = crlb_curve(&env, &[2e-6, 4e-6], &ts).unwrap();
        let doubled = EnvironmentParams { n_emitted: 2 * env.n_emitted, ..env };
        let b = crlb_curve(&doubled, &[2e-6, 4e-6], &ts).unwrap();
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.crlb / y.crlb - 2.0).abs() < 1e-12);
        }
        assert!(crlb_curve(&env, &[], &ts).is_err());
    }
}
