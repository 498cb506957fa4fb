use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use clique_core::experiment::{run_experiment, ExperimentConfig};
use clique_core::{Error, InitialStateSpec, StopWhen, TopologyKind};

/// Simulate self-stabilizing clique formation in synchronous rounds.
///
/// Exit status: 0 when every run reached the stop predicate, 1 when some did
/// not, 2 on invalid input.
#[derive(Parser, Debug)]
#[command(name = "clique-sim", version)]
struct Cli {
    /// Experiment config (JSON). Flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Initial topology, e.g. `line`, `random-connected:10`, `heap-forest:4`.
    #[arg(long)]
    kind: Option<TopologyKind>,
    #[arg(long)]
    max_rounds: Option<u64>,
    /// legal | valid | one-heap | never
    #[arg(long)]
    stop_when: Option<StopWhen>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Write the final state document here.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Start from a state document instead of generating one.
    #[arg(long)]
    load: Option<PathBuf>,
    /// Shuffle each inbox with this seed instead of the canonical order.
    #[arg(long)]
    fuzz_msg_order: Option<u64>,
}

const DEFAULT_MAX_ROUNDS: u64 = 1000;

fn build_config(cli: Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::new(
            InitialStateSpec::dense(TopologyKind::Line, 8, 0),
            DEFAULT_MAX_ROUNDS,
            StopWhen::Legal,
        ),
    };
    if let Some(n) = cli.n {
        cfg.spec.n = n;
    }
    if let Some(seed) = cli.seed {
        cfg.spec.seed = seed;
    }
    if let Some(kind) = cli.kind {
        cfg.spec.kind = kind;
    }
    if let Some(r) = cli.max_rounds {
        cfg.max_rounds = r;
    }
    if let Some(s) = cli.stop_when {
        cfg.stop_when = s;
    }
    if cli.trace_out.is_some() {
        cfg.outputs.trace_path = cli.trace_out;
    }
    if cli.metrics_out.is_some() {
        cfg.outputs.metrics_path = cli.metrics_out;
    }
    if cli.dump.is_some() {
        cfg.outputs.final_state_path = cli.dump;
    }
    if cli.load.is_some() {
        cfg.load = cli.load;
    }
    if cli.fuzz_msg_order.is_some() {
        cfg.options.fuzz_msg_order = cli.fuzz_msg_order;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cfg = match build_config(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let stuck = outcome.unconverged(cfg.stop_when);
    if stuck.is_empty() {
        return ExitCode::SUCCESS;
    }
    for p in stuck {
        eprintln!(
            "not {} after {} rounds: n={} seed={}",
            cfg.stop_when.as_str(),
            cfg.max_rounds,
            p.spec.n,
            p.spec.seed
        );
    }
    ExitCode::from(1)
}
