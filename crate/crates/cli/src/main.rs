use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::{info, warn};

use segnet_core::casestudy::run_case_study;
use segnet_core::config::ScenarioConfig;
use segnet_core::error::ConfigError;
use segnet_core::fixtures;
use segnet_core::replay::{replay, ReplayError};
use segnet_core::sim::kernel::{run_with_seed, SimError, SimErrorKind};
use segnet_core::sweep::{parse_seeds, sweep, to_csv, SweepError, Vary};
use segnet_core::trace::{read_jsonl, write_jsonl};

#[derive(Parser)]
#[command(name = "segnet", version, about = "Sleep-deprivation intrusion detection simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write trace.jsonl, metrics.csv and energy.csv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Disable every detection module.
        #[arg(long)]
        no_detect: bool,
    },
    /// Run the built-in fourteen-node walkthrough and report each step.
    Casestudy,
    /// Re-evaluate every verdict in a trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a seed range, optionally crossed with values of one parameter.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Inclusive range, e.g. 1..20.
        #[arg(long)]
        seeds: String,
        /// key=v1,v2,...
        #[arg(long)]
        vary: Option<String>,
    },
}

/// Process outcomes, one per exit code.
enum Failure {
    Config(anyhow::Error),
    Election(anyhow::Error),
    Mismatch(anyhow::Error),
    /// Divergences, failed steps or I/O trouble.
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Election(_) => 3,
            Failure::Mismatch(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Election(e) | Failure::Mismatch(e) | Failure::Other(e) => e,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e.kind {
            SimErrorKind::Config(c) => c.into(),
            SimErrorKind::Election(el) => Failure::Election(el.into()),
        }
    }
}

fn other(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Other(e.into())
}

fn init_logging() {
    let level = std::env::var("SEGNET_LOG").unwrap_or_else(|_| "error".into());
    let filter = match level.as_str() {
        "error" | "info" | "debug" => level.as_str(),
        _ => "error",
    };
    env_logger::Builder::new()
        .parse_filters(filter)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if filter != level {
        eprintln!("segnet: SEGNET_LOG={level} not recognised, using error");
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    Ok(ScenarioConfig::from_path(path)?)
}

fn cmd_run(scenario: &Path, seed: Option<u64>, out: &Path, no_detect: bool) -> Result<(), Failure> {
    let mut cfg = load(scenario)?;
    if no_detect {
        cfg.detection_enabled = false;
    }
    if let Some(s) = seed {
        cfg.sim.seed = Some(s);
    }
    let seed = cfg.seed()?;
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(other)?;
    let trace_path = out.join("trace.jsonl");
    let write_trace = |records: &[_]| -> Result<(), Failure> {
        let f = fs::File::create(&trace_path)
            .with_context(|| format!("creating {}", trace_path.display()))
            .map_err(other)?;
        write_jsonl(records, std::io::BufWriter::new(f)).map_err(other)
    };
    let res = match run_with_seed(&cfg, seed) {
        Ok(r) => r,
        Err(e) => {
            if !e.trace.is_empty() {
                write_trace(&e.trace)?;
            }
            return Err(e.into());
        }
    };
    write_trace(&res.trace)?;
    fs::write(out.join("metrics.csv"), res.metrics.to_csv()).map_err(other)?;
    fs::write(out.join("energy.csv"), res.metrics.energy_csv()).map_err(other)?;
    info!("{} records written to {}", res.trace.len(), out.display());
    print!("{}", res.metrics.to_csv());
    Ok(())
}

fn cmd_casestudy() -> Result<(), Failure> {
    let cfg = fixtures::load("case_study")?;
    let (report, _) = run_case_study(&cfg)?;
    for (i, step) in report.steps.iter().enumerate() {
        println!("step {}  {step}", i + 1);
    }
    info!("case study ran in {:.1} ms", report.runtime_ms);
    if report.passed() {
        Ok(())
    } else {
        Err(other(anyhow::anyhow!("case study did not complete")))
    }
}

fn cmd_replay(trace: &Path, scenario: &Path) -> Result<(), Failure> {
    let cfg = load(scenario)?;
    let f = fs::File::open(trace)
        .with_context(|| format!("opening {}", trace.display()))
        .map_err(Failure::Config)?;
    let records = read_jsonl(BufReader::new(f))
        .with_context(|| format!("reading {}", trace.display()))
        .map_err(Failure::Config)?;
    let report = match replay(&records, &cfg) {
        Ok(r) => r,
        Err(e @ ReplayError::NoHeader) => return Err(Failure::Config(e.into())),
        Err(e) => return Err(Failure::Mismatch(e.into())),
    };
    for w in &report.warnings {
        warn!("{w}");
    }
    for d in &report.divergences {
        println!("divergence at record {}: {} {}", d.seq, d.kind, d.detail);
    }
    println!(
        "records {}, verdicts checked {}, skipped {}, divergences {}",
        report.records,
        report.checked,
        report.skipped,
        report.divergences.len()
    );
    if report.is_clean() {
        Ok(())
    } else {
        Err(other(anyhow::anyhow!("{} divergences", report.divergences.len())))
    }
}

fn cmd_sweep(scenario: &Path, seeds: &str, vary: Option<&str>) -> Result<(), Failure> {
    let doc = segnet_core::config::ScenarioDoc::from_path(scenario)?;
    let seeds = parse_seeds(seeds)?;
    let vary = vary.map(Vary::parse).transpose()?;
    let rows = sweep(&doc, seeds, vary.as_ref()).map_err(|e| match e {
        SweepError::Config(c) => c.into(),
        SweepError::Run { source, .. } => Failure::from(source),
    })?;
    print!("{}", to_csv(&rows, vary.as_ref()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let outcome = match &cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
            no_detect,
        } => cmd_run(scenario, *seed, out, *no_detect),
        Cmd::Casestudy => cmd_casestudy(),
        Cmd::Replay { trace, scenario } => cmd_replay(trace, scenario),
        Cmd::Sweep { scenario, seeds, vary } => cmd_sweep(scenario, seeds, vary.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("segnet: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
