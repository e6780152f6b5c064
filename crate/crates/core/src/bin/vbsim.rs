use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use biased_consensus::harness::{self, CampaignRequest, ExploreRequest, RunRequest};
use biased_consensus::par::Mode;

/// Deterministic simulator for the biased consensus fast path.
#[derive(Parser)]
#[command(name = "vbsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario to quiescence.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Replace the scenario's schedule with a seeded random one.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Enumerate every schedule and base decision.
    Explore {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        max_states: Option<u64>,
        /// Also run the concrete base protocol at every base branch point.
        #[arg(long)]
        check_concrete: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a scenario under many random schedules.
    Campaign {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sequential: bool,
    },
    /// Write a named scenario family as scenario files.
    Scenario {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 1)]
        f: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Replay the golden scenarios and compare traces byte for byte.
    Goldens {
        #[arg(long)]
        dir: PathBuf,
        /// Overwrite the traces instead of comparing.
        #[arg(long)]
        bless: bool,
        /// Write the built-in golden scenario files first.
        #[arg(long)]
        init: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let mut out = std::io::stdout().lock();
    let res = match cli.command {
        Command::Run { scenario, seed, trace, summary } => {
            harness::run_command(&RunRequest { scenario, seed, trace, summary }, &mut out)
        }
        Command::Explore { scenario, depth, max_states, check_concrete, report } => harness::explore_command(
            &ExploreRequest { scenario, depth, max_states, check_concrete, report },
            &mut out,
        ),
        Command::Campaign { scenario, runs, seed, sequential } => {
            let mode = if sequential { Mode::Sequential } else { Mode::Parallel };
            harness::campaign_command(&CampaignRequest { scenario, runs, seed, mode }, &mut out)
        }
        Command::Scenario { name, f, out: dir } => harness::scenario_command(&name, f, &dir, &mut out),
        Command::Goldens { dir, bless, init } => harness::goldens_command(&dir, bless, init, &mut out),
    };
    match res {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
