mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mcdist::estimators::{
    envd_estimate, ml_estimate, nearest_sample_index, rtt_estimate, sat_estimate, EstimateRecord, MlSearchSpec,
};
use mcdist::harness::{crlb_curve, run_experiment, Sweep};
use mcdist::report::{write_crlb_curve, write_crlb_sweep, write_mse_sweep};
use mcdist::rng::{stream, StreamPurpose};
use mcdist::sim::observe;
use mcdist::ObservationSeries;
use serde::Serialize;

use config::ConfigFile;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<mcdist::Error> for CliError {
    fn from(e: mcdist::Error) -> Self {
        match e {
            mcdist::Error::Config(_) | mcdist::Error::InvalidSeries(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "mcdist", version, about = "Distance estimation over a diffusive molecular channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Particle,
    Poisson,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Single-sample CRLB table over a distance x time grid.
    Crlb {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Monte Carlo sweep of every configured protocol.
    Experiment {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Write one realization as a `t_ms,count` series.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, default_value_t = 0)]
        realization: u64,
    },
    /// Estimate the distance from a `t_ms,count` series and print one CSV row.
    Estimate {
        /// Environment from this config; System 1 values otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        series: PathBuf,
        /// sat, rtt, envd or ml.
        #[arg(long)]
        protocol: String,
        #[arg(long, default_value_t = 2.5)]
        t_sa_ms: f64,
        #[arg(long, default_value_t = 2)]
        tau: u32,
        #[arg(long, default_value_t = 7)]
        window: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        v_par_mm_s: Option<f64>,
        #[arg(long)]
        v_perp_mm_s: Option<f64>,
        #[arg(long)]
        k_per_s: Option<f64>,
        #[arg(long)]
        r_rx_um: Option<f64>,
        #[arg(long)]
        n_emitted: Option<u64>,
    },
}

#[derive(Serialize)]
struct RunManifest<'a> {
    config_digest: String,
    toolkit_version: &'a str,
    timestamp: String,
    seed: u64,
    command: &'a str,
}

fn write_manifest(dir: &Path, cfg: &ConfigFile, command: &str) -> Result<(), CliError> {
    let manifest = RunManifest {
        config_digest: cfg.digest(),
        toolkit_version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339(),
        seed: cfg.seed()?,
        command,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn load(run: &RunArgs) -> Result<ConfigFile, CliError> {
    let mut cfg = ConfigFile::load(&run.config.to_string_lossy())?;
    if let Some(seed) = run.seed {
        cfg.set("simulation", "seed", seed);
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn set_mode(cfg: &mut ConfigFile, mode: Option<ModeArg>) {
    if let Some(m) = mode {
        cfg.set(
            "simulation",
            "mode",
            match m {
                ModeArg::Particle => "particle",
                ModeArg::Poisson => "poisson",
            },
        );
    }
}

fn cmd_crlb(run: &RunArgs) -> Result<(), CliError> {
    let cfg = load(run)?;
    let env = cfg.environment()?;
    let (ds, ts) = cfg.crlb_grid(&env)?;
    let rows = crlb_curve(&env, &ds, &ts)?;
    let mut out = create(&run.out, "crlb_curve.csv")?;
    write_crlb_curve(&mut out, &rows)?;
    out.flush()?;
    write_manifest(&run.out, &cfg, "crlb")
}

fn cmd_experiment(run: &RunArgs, realizations: Option<usize>, mode: Option<ModeArg>) -> Result<(), CliError> {
    let mut cfg = load(run)?;
    if let Some(n) = realizations {
        cfg.set("simulation", "realizations", n);
    }
    set_mode(&mut cfg, mode);
    let experiment = cfg.experiment()?;
    let summaries = run_experiment(&experiment)?;
    let scale = match experiment.sweep {
        Sweep::Distance(_) => 1e6,
        Sweep::FlowParallel(_) => 1e3,
    };
    let mut out = create(&run.out, "mse_sweep.csv")?;
    write_mse_sweep(&mut out, &summaries, scale)?;
    out.flush()?;
    let mut out = create(&run.out, "crlb.csv")?;
    write_crlb_sweep(&mut out, &summaries, scale)?;
    out.flush()?;
    write_manifest(&run.out, &cfg, "experiment")
}

fn cmd_simulate(run: &RunArgs, mode: Option<ModeArg>, realization: u64) -> Result<(), CliError> {
    let mut cfg = load(run)?;
    set_mode(&mut cfg, mode);
    let env = cfg.environment()?;
    let sim = cfg.simulation()?;
    let series = observe(&env, &sim, realization)?;
    let mut out = create(&run.out, "series.csv")?;
    writeln!(out, "t_ms,count")?;
    for (t, c) in series.times().iter().zip(series.counts()) {
        writeln!(out, "{},{}", t * 1e3, c)?;
    }
    out.flush()?;
    write_manifest(&run.out, &cfg, "simulate")
}

fn read_series(path: &Path) -> Result<ObservationSeries, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (ti, ci) = (column("t_ms")?, column("count")?);
    let (mut times, mut counts) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |j: usize| -> Result<f64, CliError> {
            let raw = record.get(j).unwrap_or("");
            raw.parse()
                .map_err(|_| bad(format!("row {}: cannot parse `{raw}`", i + 2)))
        };
        times.push(field(ti)? * 1e-3);
        counts.push(field(ci)?);
    }
    Ok(ObservationSeries::new(times, counts)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    config: Option<&Path>,
    series: &Path,
    protocol: &str,
    t_sa_ms: f64,
    tau: u32,
    window: usize,
    seed: u64,
    overrides: [(&str, Option<f64>); 5],
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(p) => ConfigFile::load(&p.to_string_lossy())?,
        None => ConfigFile::parse("", "<defaults>")?,
    };
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set("environment", key, v);
        }
    }
    let env = cfg.environment()?;
    let obs = read_series(series)?;
    let mut rng = stream(seed, StreamPurpose::Estimator(0), 0);
    let search = MlSearchSpec::default();
    let record: EstimateRecord = match protocol.to_ascii_lowercase().as_str() {
        "sat" => {
            let i = nearest_sample_index(obs.times(), t_sa_ms * 1e-3)
                .ok_or_else(|| CliError::Config("series is empty".into()))?;
            sat_estimate(&env, obs.counts()[i], obs.times()[i], &mut rng)?
        }
        "rtt" => rtt_estimate(&env, &obs, tau, &mut rng)?,
        "envd" => envd_estimate(&env, &obs, window, &search)?,
        "ml" => ml_estimate(&env, &obs, &search, &mut rng)?,
        other => return Err(CliError::Config(format!("unknown protocol `{other}` (sat, rtt, envd, ml)"))),
    };
    println!("protocol,d_hat_um,corrections,samples_used");
    println!("{},{},{},{}", record.protocol, record.d_hat * 1e6, record.corrections, record.samples_used);
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MCDIST_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("MCDIST_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Crlb { run } => cmd_crlb(&run),
        Command::Experiment { run, realizations, mode } => cmd_experiment(&run, realizations, mode),
        Command::Simulate { run, mode, realization } => cmd_simulate(&run, mode, realization),
        Command::Estimate {
            config,
            series,
            protocol,
            t_sa_ms,
            tau,
            window,
            seed,
            v_par_mm_s,
            v_perp_mm_s,
            k_per_s,
            r_rx_um,
            n_emitted,
        } => cmd_estimate(
            config.as_deref(),
            &series,
            &protocol,
            t_sa_ms,
            tau,
            window,
            seed,
            [
                ("v_par_mm_s", v_par_mm_s),
                ("v_perp_mm_s", v_perp_mm_s),
                ("k_per_s", k_per_s),
                ("r_rx_um", r_rx_um),
                ("n_emitted", n_emitted.map(|n| n as f64)),
            ],
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
