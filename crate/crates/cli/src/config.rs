//! `key = value` config files with `[section]` headers.
//!
//! Units follow the table conventions: µm, ms, mm/s and 1/s. Everything is
//! converted to SI here. Lists are comma separated; `#` starts a comment.

use std::collections::BTreeMap;

use mcdist::channel::EnvironmentParams;
use mcdist::estimators::MlSearchSpec;
use mcdist::harness::{ExperimentConfig, ProtocolConfig, Sweep};
use mcdist::sim::{SimConfig, SimMode};
use sha2::{Digest, Sha256};

use crate::CliError;

const UM: f64 = 1e-6;
const MS: f64 = 1e-3;
const MM_S: f64 = 1e-3;

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "environment",
        &["d_um", "v_par_mm_s", "v_perp_mm_s", "diff_coeff_m2_s", "k_per_s", "n_emitted", "r_rx_um"],
    ),
    ("simulation", &["dt_ms", "n_steps", "seed", "mode", "realizations"]),
    (
        "protocols",
        &["sat_t_ms", "rtt_tau", "envd_window", "ml", "ml_d_min_um", "ml_d_max_um", "ml_grid", "ml_refine"],
    ),
    ("sweep", &["distance_um", "flow_par_mm_s"]),
    ("crlb", &["d_um", "t_ms", "t_step_ms", "t_count", "m1_t_ms"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// A parsed config file. Values stay as text until a command asks for them.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    origin: String,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    headers: BTreeMap<String, usize>,
}

impl ConfigFile {
    pub fn load(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{path}: cannot read config: {e}")))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut cfg = Self {
            origin: origin.to_string(),
            sections: BTreeMap::new(),
            headers: BTreeMap::new(),
        };
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(cfg.error_at(line, format!("unknown section [{name}]")));
                }
                if cfg.headers.insert(name.to_string(), line).is_some() {
                    return Err(cfg.error_at(line, format!("section [{name}] appears twice")));
                }
                cfg.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(cfg.error_at(line, format!("expected `key = value`, found `{content}`")));
            };
            let key = key.trim();
            let Some(section) = current.clone() else {
                return Err(cfg.error_at(line, format!("key `{key}` appears before any section header")));
            };
            let allowed = SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(cfg.error_at(line, format!("unknown key `{key}` in [{section}]")));
            }
            let entry = Entry {
                value: normalize(value),
                line,
            };
            if cfg.sections.get_mut(&section).unwrap().insert(key.to_string(), entry).is_some() {
                return Err(cfg.error_at(line, format!("key `{key}` set twice in [{section}]")));
            }
        }
        Ok(cfg)
    }

    fn error_at(&self, line: usize, msg: String) -> CliError {
        CliError::Config(format!("{}:{line}: {msg}", self.origin))
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section)?.get(key)
    }

    fn section_line(&self, section: &str) -> usize {
        self.headers.get(section).copied().unwrap_or(0)
    }

    fn get<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError> {
        let Some(e) = self.entry(section, key) else { return Ok(None) };
        e.value
            .parse()
            .map(Some)
            .map_err(|_| self.error_at(e.line, format!("cannot parse `{}` as a value for `{key}`", e.value)))
    }

    fn get_or<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, CliError> {
        let Some(e) = self.entry(section, key) else { return Ok(None) };
        if e.value.is_empty() {
            return Err(self.error_at(e.line, format!("`{key}` is empty")));
        }
        e.value
            .split(',')
            .map(|v| {
                v.parse()
                    .map_err(|_| self.error_at(e.line, format!("cannot parse `{v}` in list `{key}`")))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// Sets a value from the command line; it counts as part of the resolved config.
    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        self.sections.entry(section.to_string()).or_default().insert(
            key.to_string(),
            Entry {
                value: normalize(&value.to_string()),
                line: 0,
            },
        );
    }

    /// SHA-256 of the resolved config in canonical form (sections and keys sorted).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (section, entries) in &self.sections {
            for (key, e) in entries {
                hasher.update(format!("{section}.{key}={}\n", e.value));
            }
        }
        hex::encode(hasher.finalize())
    }

    /// System 1 values for anything not given.
    pub fn environment(&self) -> Result<EnvironmentParams, CliError> {
        let s = "environment";
        let base = EnvironmentParams::system1(4.0 * UM);
        let env = EnvironmentParams {
            d: self.get_or(s, "d_um", base.d / UM)? * UM,
            v_par: self.get_or(s, "v_par_mm_s", 0.0)? * MM_S,
            v_perp: self.get_or(s, "v_perp_mm_s", 0.0)? * MM_S,
            diff_coeff: self.get_or(s, "diff_coeff_m2_s", base.diff_coeff)?,
            k_degrade: self.get_or(s, "k_per_s", base.k_degrade)?,
            n_emitted: self.get_or(s, "n_emitted", base.n_emitted)?,
            r_rx: self.get_or(s, "r_rx_um", base.r_rx / UM)? * UM,
        };
        env.validate()
            .map_err(|e| self.error_at(self.section_line(s), e.to_string()))?;
        Ok(env)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get_or("simulation", "seed", 1)
    }

    pub fn simulation(&self) -> Result<SimConfig, CliError> {
        let s = "simulation";
        let mode = match self.entry(s, "mode") {
            None => SimMode::PoissonAnalytic,
            Some(e) => parse_mode(&e.value).ok_or_else(|| {
                self.error_at(e.line, format!("unknown mode `{}` (particle, poisson, noiseless)", e.value))
            })?,
        };
        Ok(SimConfig {
            dt: self.get_or(s, "dt_ms", 0.1)? * MS,
            n_steps: self.get_or(s, "n_steps", 200)?,
            seed: self.seed()?,
            mode,
        })
    }

    fn search(&self) -> Result<MlSearchSpec, CliError> {
        let s = "protocols";
        let base = MlSearchSpec::default();
        let spec = MlSearchSpec {
            d_min: self.get_or(s, "ml_d_min_um", base.d_min / UM)? * UM,
            d_max: self.get_or(s, "ml_d_max_um", base.d_max / UM)? * UM,
            n_grid: self.get_or(s, "ml_grid", base.n_grid)?,
            refine: self.get_or(s, "ml_refine", base.refine)?,
        };
        spec.validate()
            .map_err(|e| self.error_at(self.section_line(s), e.to_string()))?;
        Ok(spec)
    }

    pub fn protocols(&self) -> Result<Vec<ProtocolConfig>, CliError> {
        let s = "protocols";
        let search = self.search()?;
        let mut out = Vec::new();
        for t in self.list::<f64>(s, "sat_t_ms")?.unwrap_or_default() {
            out.push(ProtocolConfig::Sat { t_sa: t * MS });
        }
        for tau in self.list::<u32>(s, "rtt_tau")?.unwrap_or_default() {
            out.push(ProtocolConfig::Rtt { tau });
        }
        for window in self.list::<usize>(s, "envd_window")?.unwrap_or_default() {
            out.push(ProtocolConfig::Envd { window, search });
        }
        if self.get_or(s, "ml", false)? {
            out.push(ProtocolConfig::Ml { search });
        }
        if out.is_empty() {
            return Err(self.error_at(self.section_line(s), "no protocols configured".to_string()));
        }
        Ok(out)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let s = "sweep";
        let sweep = match (self.list::<f64>(s, "distance_um")?, self.list::<f64>(s, "flow_par_mm_s")?) {
            (Some(d), None) => Sweep::Distance(d.into_iter().map(|v| v * UM).collect()),
            (None, Some(v)) => Sweep::FlowParallel(v.into_iter().map(|v| v * MM_S).collect()),
            _ => {
                return Err(self.error_at(
                    self.section_line(s),
                    "[sweep] needs exactly one of `distance_um` or `flow_par_mm_s`".to_string(),
                ))
            }
        };
        let cfg = ExperimentConfig {
            base_env: self.environment()?,
            sweep,
            n_realizations: self.get_or("simulation", "realizations", 1000)?,
            sim: self.simulation()?,
            protocols: self.protocols()?,
            crlb_m1_time: self.get::<f64>("crlb", "m1_t_ms")?.map(|t| t * MS),
        };
        cfg.validate().map_err(|e| CliError::Config(format!("{}: {e}", self.origin)))?;
        Ok(cfg)
    }

    /// Distances and times of the CRLB table, in SI.
    pub fn crlb_grid(&self, env: &EnvironmentParams) -> Result<(Vec<f64>, Vec<f64>), CliError> {
        let s = "crlb";
        let ds = self.list::<f64>(s, "d_um")?.unwrap_or_else(|| vec![env.d / UM]);
        let ts = match self.list::<f64>(s, "t_ms")? {
            Some(ts) => ts,
            None => {
                let step: f64 = self.get_or(s, "t_step_ms", 0.1)?;
                let count: usize = self.get_or(s, "t_count", 200)?;
                (1..=count).map(|i| i as f64 * step).collect()
            }
        };
        let line = self.section_line(s);
        if ts.is_empty() {
            return Err(self.error_at(line, "time grid is empty".to_string()));
        }
        if ds.iter().chain(&ts).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(self.error_at(line, "distances and times must be positive".to_string()));
        }
        Ok((ds.into_iter().map(|d| d * UM).collect(), ts.into_iter().map(|t| t * MS).collect()))
    }
}

pub fn parse_mode(s: &str) -> Option<SimMode> {
    match s {
        "particle" => Some(SimMode::Particle),
        "poisson" => Some(SimMode::PoissonAnalytic),
        "noiseless" => Some(SimMode::Noiseless),
        _ => None,
    }
}

fn normalize(value: &str) -> String {
    value.split(',').map(str::trim).collect::<Vec<_>>().join(",")
}
