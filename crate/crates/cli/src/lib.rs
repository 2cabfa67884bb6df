//! Command-line frontend: one subcommand per experiment, a TOML config file
//! with every default pre-filled, and flag overrides on top.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use otfs_noma::detection::User;
use otfs_noma::simulation::{
    benchmark_complexity, export_benchmark, export_results, simulate, sweep, DetectorKind, SimConfig,
    SweepAxis, SweepResult,
};
use thiserror::Error;

/// Overrides the directory used when `--out` is not given.
pub const RESULTS_DIR_ENV: &str = "OTFS_NOMA_RESULTS_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config file {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {message}")]
    ParseConfig { path: PathBuf, message: String },
    #[error("invalid value for --{flag}: {message}")]
    Flag { flag: &'static str, message: String },
    #[error(transparent)]
    Sim(#[from] otfs_noma::Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "otfs-noma",
    version,
    about = "Two-user downlink OTFS-NOMA link simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One Monte Carlo point at the configured parameters.
    Simulate(RunArgs),
    /// SER against User 1 SNR (User 2 follows at the configured gap).
    SweepSnr(RunArgs),
    /// SER against maximum Doppler shift in Hz.
    SweepDoppler(RunArgs),
    /// SER against the User 1 starting threshold, in units of d1.
    SweepThreshold(RunArgs),
    /// Wall-clock scaling of both detectors.
    Bench(BenchArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::SweepSnr(_) => "sweep-snr",
            Command::SweepDoppler(_) => "sweep-doppler",
            Command::SweepThreshold(_) => "sweep-threshold",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML config file; missing keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// User 1 SNR in dB.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Detector to run; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    pub detector: Vec<String>,
    /// QAM order for both users.
    #[arg(long)]
    pub qam: Option<usize>,
    #[arg(long)]
    pub speed_kmh: Option<f64>,
    /// Results CSV; metadata goes to the same path with a .json extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sweep values, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub values: Vec<f64>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Grid sizes as MxN, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "64x4,64x16,64x64")]
    pub sizes: Vec<String>,
    /// Repetitions per size; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Largest M*N timed on the dense MMSE path.
    #[arg(long, default_value_t = 1024)]
    pub dense_limit: usize,
}

/// Reads a TOML config; an empty file yields the defaults.
pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| CliError::ParseConfig {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })
}

/// File values, then flag overrides, then validation.
pub fn resolve_config(args: &RunArgs) -> Result<SimConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(v) = args.snr {
        cfg.snr1_db = v;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(q) = args.qam {
        cfg.qam1 = q;
        cfg.qam2 = q;
    }
    if let Some(v) = args.speed_kmh {
        cfg.speed_kmh = v;
        cfg.max_doppler_hz = None;
    }
    if !args.detector.is_empty() {
        cfg.detectors = args
            .detector
            .iter()
            .map(|d| {
                d.parse::<DetectorKind>().map_err(|e| CliError::Flag {
                    flag: "detector",
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn default_values(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Snr => (0..=7).map(|i| 5.0 * i as f64).collect(),
        SweepAxis::Doppler => vec![500.0, 1000.0, 1500.0, 2000.0, 2500.0],
        SweepAxis::Threshold => vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
    }
}

fn output_path(out: &Option<PathBuf>, subcommand: &str) -> PathBuf {
    match out {
        Some(p) => p.clone(),
        None => {
            let dir = std::env::var_os(RESULTS_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("results"));
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            dir.join(format!("{subcommand}-{stamp}.csv"))
        }
    }
}

fn parse_sizes(sizes: &[String]) -> Result<Vec<(usize, usize)>, CliError> {
    sizes
        .iter()
        .map(|s| {
            let bad = || CliError::Flag {
                flag: "sizes",
                message: format!("`{s}` is not of the form MxN"),
            };
            let (m, n) = s.split_once(['x', 'X']).ok_or_else(bad)?;
            Ok((
                m.trim().parse().map_err(|_| bad())?,
                n.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

fn print_summary(res: &SweepResult) {
    println!(
        "{:>10} {:>4} {:>9} {:>12} {:>12}",
        res.axis.name(),
        "user",
        "detector",
        "errors",
        "ser"
    );
    for row in &res.rows {
        println!(
            "{:>10} {:>4} {:>9} {:>12} {:>12.4e}",
            row.sweep_value,
            row.user.number(),
            row.detector.name(),
            row.errors,
            row.ser
        );
    }
}

fn dry_run(cfg: &SimConfig) -> Result<(), CliError> {
    let text = toml::to_string(cfg).map_err(|e| CliError::ParseConfig {
        path: PathBuf::from("<resolved>"),
        message: e.to_string(),
    })?;
    print!("{text}");
    println!(
        "# derived: snr2_db = {}, max_doppler_hz = {:.1}",
        cfg.snr_db(User::Two),
        cfg.max_doppler()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    match cli.command {
        Command::Bench(b) => {
            let cfg = resolve_config(&b.run)?;
            if b.run.dry_run {
                return dry_run(&cfg);
            }
            let sizes = parse_sizes(&b.sizes)?;
            let table = benchmark_complexity(&cfg, &sizes, b.reps, b.dense_limit)?;
            println!(
                "{:>6} {:>6} {:>8} {:>14} {:>14}",
                "M", "N", "MN", "proposed_ms", "mmse_ms"
            );
            for r in &table.rows {
                let mmse = r.mmse_ms.map_or_else(|| "-".to_string(), |t| format!("{t:.3}"));
                println!(
                    "{:>6} {:>6} {:>8} {:>14.3} {:>14}",
                    r.delay_bins, r.doppler_bins, r.symbols, r.proposed_ms, mmse
                );
            }
            println!("proposed exponent: {:.3}", table.proposed_exponent);
            if let Some(e) = table.mmse_exponent {
                println!("mmse exponent:     {e:.3}");
            }
            let path = output_path(&b.run.out, name);
            export_benchmark(&table, &path)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Simulate(a)
        | Command::SweepSnr(a)
        | Command::SweepDoppler(a)
        | Command::SweepThreshold(a)
            if a.dry_run =>
        {
            dry_run(&resolve_config(&a)?)?;
        }
        Command::Simulate(a) => {
            let cfg = resolve_config(&a)?;
            if !a.values.is_empty() {
                return Err(CliError::Flag {
                    flag: "values",
                    message: "simulate runs a single point; use a sweep subcommand".into(),
                });
            }
            finish(&simulate(&cfg)?, &a.out, name)?;
        }
        Command::SweepSnr(a) => run_sweep(&a, SweepAxis::Snr, name)?,
        Command::SweepDoppler(a) => run_sweep(&a, SweepAxis::Doppler, name)?,
        Command::SweepThreshold(a) => run_sweep(&a, SweepAxis::Threshold, name)?,
    }
    Ok(())
}

fn run_sweep(a: &RunArgs, axis: SweepAxis, name: &str) -> Result<(), CliError> {
    let cfg = resolve_config(a)?;
    let values = if a.values.is_empty() {
        default_values(axis)
    } else {
        a.values.clone()
    };
    finish(&sweep(&cfg, axis, &values)?, &a.out, name)
}

fn finish(res: &SweepResult, out: &Option<PathBuf>, name: &str) -> Result<(), CliError> {
    print_summary(res);
    let path = output_path(out, name);
    export_results(res, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn parse_and_run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
