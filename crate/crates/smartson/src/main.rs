use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smartson::cli::{protocol_failure, CliError};
use smartson::concurrent::run_concurrent;
use smartson::config::load_config;
use smartson::replay::replay;
use smartson::report::{emit_report, Format};
use smartson::trace::{bundled_trace, load_trace};
use smartson_core::harness::{build_simulation, run_scenario_with, HarnessError};
use smartson_core::matching::{best_match, cosine_similarity};
use smartson_core::{Catalogue, ResourceSpec};

#[derive(Parser)]
#[command(name = "smartson", version, about = "Escrow-backed resource marketplace simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report.
    Run {
        /// Scenario config (JSON). `table3.json` and `table4.json` resolve to
        /// the bundled fixtures when no such file exists.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Trace CSV; defaults to the bundled trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score a request against a trace or against a scenario's catalogues.
    Match {
        #[arg(long)]
        trace: Option<PathBuf>,
        /// A trace title, or six comma-separated components
        /// (price,mips,usd_per_gb,ram_gb,bw_mbps,cpu_cores).
        #[arg(long)]
        request: String,
        /// Scenario config whose provider catalogues are scored instead of
        /// the whole trace.
        #[arg(long)]
        pools: Option<PathBuf>,
    },
    /// Re-validate a messages.jsonl log.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            format,
            out,
            trace,
        } => run(&config, seed, format, &out, trace.as_deref()),
        Command::Match { trace, request, pools } => score(trace.as_deref(), &request, pools.as_deref()),
        Command::Replay { log } => check_log(&log),
    };
    match result {
        Ok(text) => match io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                eprintln!("error: {e}");
                ExitCode::from(smartson::cli::EXIT_CONFIG)
            }
            _ => ExitCode::SUCCESS,
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

/// Text for stdout on success.
type CliResult = Result<String, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::config(e)
}

fn read_trace(path: Option<&Path>) -> Result<Vec<ResourceSpec>, CliError> {
    match path {
        Some(p) => load_trace(p).map_err(config_err),
        None => Ok(bundled_trace()),
    }
}

fn run(config: &Path, seed: Option<u64>, format: Format, out: &Path, trace: Option<&Path>) -> CliResult {
    let mut text = String::new();
    let mut cfg = load_config(config).map_err(config_err)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let trace = read_trace(trace)?;
    let run = if cfg.deterministic {
        run_scenario_with(&cfg, &trace, |sim| sim.run_until_idle())
    } else {
        run_concurrent(&cfg, &trace)
    };
    let run = match run {
        Ok(run) => run,
        Err(HarnessError::Config(e)) => return Err(config_err(e)),
        Err(HarnessError::Protocol { error, log }) => return Err(protocol_failure(&error, &log, out)),
    };
    let report = &run.report;
    let world = &run.simulation.world;
    let written = emit_report(report, &world.ledger, world.platform.log(), format, out)
        .map_err(|e| config_err(format!("writing report: {e}")))?;

    writeln!(
        text,
        "{:>5}  {:<12} {:<11} {:<12} {:>10} {:>12}",
        "epoch", "requested", "winner", "offered", "wei", "fee"
    )
    .unwrap();
    for r in &report.records {
        writeln!(
            text,
            "{:>5}  {:<12} {:<11} {:<12} {:>10} {:>12}",
            r.epoch,
            r.requested,
            r.winner,
            r.offered,
            r.amount.trimmed().to_string(),
            r.contract_fee.trimmed().to_string()
        )
        .unwrap();
    }
    writeln!(
        text,
        "total  {:>49} {:>12}",
        report.totals.amount.trimmed().to_string(),
        report.totals.contract_fee.trimmed().to_string()
    )
    .unwrap();
    for u in &report.unfilled {
        writeln!(text, "epoch {} ({}): {:?}", u.epoch, u.consumer, u.status).unwrap();
    }
    for path in written {
        writeln!(text, "wrote {}", path.display()).unwrap();
    }
    Ok(text)
}

fn parse_request(text: &str, trace: &[ResourceSpec]) -> Result<ResourceSpec, CliError> {
    if let Some(r) = trace.iter().find(|r| r.title == text) {
        return Ok(r.clone());
    }
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(config_err(format!(
            "{text:?} is neither a trace title nor six components"
        )));
    }
    let price = parts[0].parse().map_err(config_err)?;
    let mut v = [0.0; 5];
    for (slot, p) in v.iter_mut().zip(&parts[1..]) {
        *slot = p.parse().map_err(|e| config_err(format!("{p:?}: {e}")))?;
    }
    ResourceSpec::new("request", price, v[0], v[1], v[2], v[3], v[4]).map_err(config_err)
}

fn score(trace: Option<&Path>, request: &str, pools: Option<&Path>) -> CliResult {
    let mut text = String::new();
    let trace = read_trace(trace)?;
    let target = parse_request(request, &trace)?;
    let groups: Vec<(String, Catalogue)> = match pools {
        Some(path) => {
            let cfg = load_config(path).map_err(config_err)?;
            let (sim, _) = build_simulation(&cfg, &trace).map_err(config_err)?;
            (0..cfg.num_providers)
                .map(|i| {
                    let name = smartson_core::harness::provider_name(i);
                    let cat = sim
                        .provider(&smartson_core::AgentId::new(name.clone()))
                        .expect("provider was built")
                        .catalogue
                        .clone();
                    (name, cat)
                })
                .collect()
        }
        None => vec![("trace".to_string(), Catalogue::new(trace.clone()))],
    };
    writeln!(text, "request {request}").unwrap();
    for (name, catalogue) in &groups {
        writeln!(text, "{name}").unwrap();
        let best = best_match(&target, catalogue).map(|m| m.index);
        for (i, r) in catalogue.iter().enumerate() {
            let s = cosine_similarity(&target, r).map_err(config_err)?;
            let mark = if Some(i) == best { " *" } else { "" };
            writeln!(text, "  {:<12} {:.15}{mark}", r.title, s).unwrap();
        }
    }
    Ok(text)
}

fn check_log(path: &Path) -> CliResult {
    let mut text = String::new();
    let file = File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let summary = replay(BufReader::new(file)).map_err(CliError::protocol)?;
    writeln!(
        text,
        "{} messages in {} conversations",
        summary.messages, summary.conversations
    )
    .unwrap();
    for (perf, n) in &summary.by_performative {
        writeln!(text, "  {perf:<16} {n}").unwrap();
    }
    for o in &summary.unanswered {
        writeln!(
            text,
            "unanswered {} from {} to {} in {}",
            o.performative, o.sender, o.receiver, o.conversation
        )
        .unwrap();
    }
    Ok(text)
}
