use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use irs_outage::channel::ScenarioConfig;
use irs_outage::selftest::run_selftest;
use irs_outage::sweep::{format_summary, load_config, run_sweep, CellResult, DesignFile, SweepError};
use irs_outage::validator::{design_rates, monte_carlo_outage, OutageReport};

#[derive(Parser)]
#[command(name = "irs-outage", version, about = "Outage-constrained secure transmission design with an IRS")]
struct Cli {
    /// Log per-iteration optimizer progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario or sweep described by a configuration file.
    Run {
        config: PathBuf,
        /// CSV output path, overriding `out` in the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory receiving one JSON design file per cell.
        #[arg(long)]
        designs: Option<PathBuf>,
    },
    /// Re-evaluate a stored design: rates, constraint checks and Monte-Carlo outage.
    Validate {
        design: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the built-in solver and oracle checks.
    Selftest,
    /// Print the default scenario as a configuration file.
    Defaults,
}

#[derive(Serialize)]
struct ValidationReport {
    scheme: String,
    power_watts: f64,
    bob_rate: f64,
    bob_rate_required: f64,
    eve_rates: Vec<f64>,
    bob_constraint_met: bool,
    outage: OutageReport,
    rho: f64,
    outage_constraint_met: bool,
}

fn design_path(dir: &Path, r: &CellResult) -> PathBuf {
    dir.join(format!("{}_{}_{}.json", r.axis_value, r.seed, r.scheme))
}

fn run(config: &Path, out: Option<PathBuf>, jobs: usize, designs: Option<PathBuf>) -> Result<(), SweepError> {
    let mut spec = load_config(config)?;
    if out.is_some() {
        spec.out_path = out;
    }
    let total = spec.num_cells();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let (rows, summary) = run_sweep(&spec, jobs, |r| {
        let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        eprintln!(
            "[{n}/{total}] {}={} seed={} {}: {} {:.4} dBm{}",
            spec.axis.name(),
            r.axis_value,
            r.seed,
            r.scheme,
            r.status.as_str(),
            irs_outage::channel::watts_to_dbm(r.power_watts()),
            r.message.as_ref().map(|m| format!(" ({m})")).unwrap_or_default()
        );
    })?;
    if let Some(dir) = designs {
        std::fs::create_dir_all(&dir).map_err(|source| SweepError::Io { path: dir.clone(), source })?;
        for r in &rows {
            if let Some(d) = DesignFile::from_cell(r) {
                let path = design_path(&dir, r);
                let json = serde_json::to_string_pretty(&d).expect("design serializes");
                std::fs::write(&path, json).map_err(|source| SweepError::Io { path, source })?;
            }
        }
    }
    print!("{}", format_summary(&spec, &summary));
    if let Some(p) = &spec.out_path {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn validate(path: &Path, trials: usize, seed: u64, jobs: usize) -> Result<bool, SweepError> {
    let text = std::fs::read_to_string(path).map_err(|source| SweepError::Io { path: path.to_path_buf(), source })?;
    let file: DesignFile = serde_json::from_str(&text).map_err(|e| SweepError::Design(e.to_string()))?;
    let (ch, design) = file.restore()?;
    let cfg = &file.config;
    let (bob_rate, eve_rates) = design_rates(&design, &ch);
    let outage = monte_carlo_outage(&design, &ch, cfg.beta(), trials.max(1000), jobs, &mut ChaCha8Rng::seed_from_u64(seed))
        .map_err(|e| SweepError::Design(e.to_string()))?;
    let report = ValidationReport {
        scheme: file.scheme.to_string(),
        power_watts: design.power(),
        bob_rate,
        bob_rate_required: cfg.rate_bob_bps,
        eve_rates,
        bob_constraint_met: bob_rate >= cfg.rate_bob_bps - 1e-4,
        outage_constraint_met: outage.complies(cfg.rho),
        rho: cfg.rho,
        outage,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(report.bob_constraint_met && report.outage_constraint_met)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Run { config, out, jobs, designs } => match run(&config, out, jobs, designs) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Validate { design, trials, seed, jobs } => match validate(&design, trials, seed, jobs) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Selftest => {
            let results = run_selftest();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Defaults => {
            print!("{}", ScenarioConfig::default().to_key_values());
            ExitCode::SUCCESS
        }
    }
}
