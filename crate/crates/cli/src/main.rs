use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sleepy_core::config::{ScenarioConfig, StrategyName};
use sleepy_core::engine::run_config;
use sleepy_core::harness::{attack_demo, sweep_with, SweepReport};
use sleepy_core::metrics::{analyze, AttackOutcome, Metrics};
use sleepy_core::trace::Trace;
use sleepy_core::{AdversaryMode, Error};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sleepy", version, about = "Sleepy-model consensus simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and print its report.
    Run {
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write trace.bin, trace.txt and report.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario over an inclusive seed range and print the aggregate.
    Sweep {
        config: PathBuf,
        /// Inclusive range, e.g. 0..99.
        #[arg(long, value_parser = parse_seeds)]
        seeds: (u64, u64),
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Recompute the report of a persisted trace.
    Verify { trace: PathBuf },
    /// Run one of the scripted attacks.
    AttackDemo {
        /// key_transfer, forward_sim or backward_sim
        name: String,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    External,
    Standard,
}

fn parse_seeds(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

/// Per-run pass/fail of the properties the metrics cover.
#[derive(Debug, PartialEq, Serialize)]
struct Checks {
    safety: bool,
    liveness: bool,
    wakeness_soundness: bool,
    wakeness_completeness: bool,
    depth_timing: bool,
    synchrony: bool,
    key_policy: bool,
}

impl Checks {
    fn of(m: &Metrics) -> Checks {
        Checks {
            safety: m.safety.count == 0,
            liveness: m.liveness.misses == 0,
            wakeness_soundness: m.wakeness.soundness == 0,
            wakeness_completeness: m.wakeness.completeness == 0,
            depth_timing: m.depth_timing.early == 0 && m.depth_timing.absent_prover == 0,
            synchrony: m.synchrony.violations == 0,
            key_policy: m.mode == AdversaryMode::Standard || m.policy.cross_key_ok == 0,
        }
    }
}

#[derive(Serialize)]
struct RunReport {
    config: ScenarioConfig,
    metrics: Metrics,
    checks: Checks,
    seeds: Vec<u64>,
}

#[derive(Serialize)]
struct SweepOut {
    config: ScenarioConfig,
    aggregate: SweepReport,
    runs: Vec<Metrics>,
    seeds: Vec<u64>,
}

/// Failures mapped onto the exit-code contract.
enum Fail {
    Config(Error),
    Io(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::CorruptTrace(_) => Fail::Io(e.to_string()),
            e => Fail::Config(e),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> Fail {
    Fail::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<ScenarioConfig, Fail> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    Ok(ScenarioConfig::from_toml(&text)?)
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn report(trace: &Trace) -> Result<RunReport, Fail> {
    let cfg = ScenarioConfig::from_toml(trace.config_toml().ok_or(Error::CorruptTrace("no config record".into()))?)
        .map_err(|e| Fail::Io(format!("corrupt trace: {e}")))?;
    let metrics = analyze(trace)?;
    Ok(RunReport {
        checks: Checks::of(&metrics),
        seeds: vec![cfg.seed],
        config: cfg,
        metrics,
    })
}

/// Runs, persists if asked, prints. Safety violations fail the run unless a
/// scripted attack was the point of it.
fn run_and_report(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<ExitCode, Fail> {
    let trace = run_config(cfg)?;
    let r = report(&trace)?;
    let text = json(&r);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| io(&p, e))
        };
        write("trace.bin", &trace.to_bytes())?;
        write("trace.txt", trace.to_text().as_bytes())?;
        write("report.json", text.as_bytes())?;
    }
    emit(&text);
    Ok(if r.metrics.safety.count > 0 && r.metrics.attack == AttackOutcome::NoAttack {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn main_inner(cli: Cli) -> Result<ExitCode, Fail> {
    match cli.cmd {
        Cmd::Run { config, seed, out } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            run_and_report(&cfg, out.as_deref())
        }
        Cmd::Sweep { config, seeds, jobs } => {
            let cfg = load(&config)?;
            cfg.validate()?;
            let (runs, aggregate) = sweep_with(seeds.0..seeds.1 + 1, jobs.max(1), |s| ScenarioConfig {
                seed: s,
                ..cfg.clone()
            });
            let mut ok = Vec::new();
            for (_, m) in runs {
                ok.push(m?);
            }
            let clean = ok.iter().all(|m| m.safety.count == 0 || m.attack != AttackOutcome::NoAttack);
            emit(&json(&SweepOut {
                config: cfg,
                seeds: aggregate.seeds.clone(),
                aggregate,
                runs: ok,
            }));
            Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Verify { trace } => {
            let bytes = std::fs::read(&trace).map_err(|e| io(&trace, e))?;
            let t = Trace::from_bytes(&bytes)?;
            emit(&json(&report(&t)?));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::AttackDemo { name, mode, seed, out } => {
            let strategy = StrategyName::parse(&name)?;
            if !matches!(
                strategy,
                StrategyName::KeyTransfer | StrategyName::ForwardSim | StrategyName::BackwardSim
            ) {
                return Err(Fail::Config(Error::UnknownAttack(name)));
            }
            let mode = match mode {
                Mode::External => AdversaryMode::External,
                Mode::Standard => AdversaryMode::Standard,
            };
            run_and_report(&attack_demo(strategy, mode, seed), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(Fail::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Fail::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
