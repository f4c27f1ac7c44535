use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use energy_sharing::equilibrium::{DynamicsOptions, Scenario, UpdateMode};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

mod commands;
mod scenario;
mod table;

use commands::{Failure, Output};
use scenario::ScenarioFile;

#[derive(Parser)]
#[command(name = "sharing", version, about = "Energy sharing market experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `sweep.seed` in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Significant digits in the CSV.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u16).range(1..=17))]
    precision: u16,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sequential,
    Simultaneous,
}

#[derive(Subcommand)]
enum Command {
    /// Clear the market at given bids.
    Clear {
        #[command(flatten)]
        common: Common,
        /// Comma-separated bids; defaults to `bids` in the scenario file.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bids: Option<Vec<f64>>,
    },
    /// Market equilibrium under price regulation.
    Gne {
        #[command(flatten)]
        common: Common,
    },
    /// Social optimum.
    Sco {
        #[command(flatten)]
        common: Common,
    },
    /// Best-response dynamics; writes the bid trajectory.
    Brd {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Mode::Sequential)]
        mode: Mode,
        /// Initial bids; defaults to `bids` in the file, then zeros.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bids: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 500)]
        max_rounds: usize,
    },
    /// Market against social optimum over a common flow limit.
    SweepFlow {
        #[command(flatten)]
        common: Common,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
    },
    /// Efficiency gap against the number of prosumers.
    SweepCount {
        #[command(flatten)]
        common: Common,
        /// Comma-separated population sizes; defaults to `sweep.counts`.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
    },
    /// Total disutility before and after equal partitions.
    Partition {
        #[command(flatten)]
        common: Common,
        /// Comma-separated block counts; defaults to `sweep.blocks`, then the divisors of the shared resource count.
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
    },
    /// Equilibrium diagnostics.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Clear { .. } => "clear",
            Command::Gne { .. } => "gne",
            Command::Sco { .. } => "sco",
            Command::Brd { .. } => "brd",
            Command::SweepFlow { .. } => "sweep-flow",
            Command::SweepCount { .. } => "sweep-count",
            Command::Partition { .. } => "partition",
            Command::Verify { .. } => "verify",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Clear { common, .. }
            | Command::Gne { common }
            | Command::Sco { common }
            | Command::Brd { common, .. }
            | Command::SweepFlow { common, .. }
            | Command::SweepCount { common, .. }
            | Command::Partition { common, .. }
            | Command::Verify { common } => common,
        }
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    command: &'a str,
    input_sha256: &'a str,
    seed: Option<u64>,
    outputs: Vec<String>,
    wall_time_ms: f64,
    solver_iterations: usize,
    #[serde(flatten)]
    notes: Map<String, Value>,
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = |e: String| Failure::Usage(format!("invalid --grid {spec:?}: {e}"));
    if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
            .collect::<Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad("expected start:stop:step".into()));
        };
        scenario::Grid { start, stop, step }.values().map_err(bad)
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
            .collect()
    }
}

fn execute(
    command: &Command,
    file: &ScenarioFile,
    scenario: &Scenario,
    seed: u64,
) -> Result<Output, Failure> {
    let sweep = file.sweep();
    match command {
        Command::Clear { bids, .. } => {
            let bids = bids.clone().or_else(|| file.bids.clone()).ok_or_else(|| {
                Failure::Usage("no bids: pass --bids or set `bids` in the scenario".into())
            })?;
            commands::clear(scenario, &bids)
        }
        Command::Gne { .. } => commands::gne(scenario),
        Command::Sco { .. } => commands::sco(scenario),
        Command::Brd {
            mode,
            bids,
            tolerance,
            max_rounds,
            ..
        } => {
            let initial = bids
                .clone()
                .or_else(|| file.bids.clone())
                .unwrap_or_else(|| vec![0.0; scenario.count()]);
            let options = DynamicsOptions {
                mode: match mode {
                    Mode::Sequential => UpdateMode::Sequential,
                    Mode::Simultaneous => UpdateMode::Simultaneous,
                },
                tolerance: *tolerance,
                max_rounds: *max_rounds,
            };
            commands::brd(scenario, &initial, &options)
        }
        Command::SweepFlow { grid, .. } => {
            let limits = match grid {
                Some(spec) => parse_grid(spec)?,
                None => sweep
                    .flow_limits()
                    .map_err(Failure::Usage)?
                    .ok_or_else(|| {
                        Failure::Usage("no flow grid: pass --grid or set it in [sweep]".into())
                    })?,
            };
            commands::sweep_flow(scenario, &limits)
        }
        Command::SweepCount { counts, .. } => {
            let counts = counts
                .clone()
                .or_else(|| sweep.counts.clone())
                .unwrap_or_else(|| vec![2, 5, 10, 20, 30]);
            commands::sweep_count(scenario, &counts, seed, &sweep)
        }
        Command::Partition { blocks, .. } => {
            let blocks = blocks
                .clone()
                .or_else(|| sweep.blocks.clone())
                .unwrap_or_else(|| commands::default_blocks(scenario));
            commands::partition(scenario, &blocks)
        }
        Command::Verify { .. } => commands::verify(scenario),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let command = &cli.command;
    let common = command.common();
    let source_name = common.scenario.display().to_string();
    let bytes = fs::read(&common.scenario)
        .map_err(|e| Failure::Usage(format!("{source_name}: cannot read: {e}")))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|_| Failure::Usage(format!("{source_name}: not UTF-8")))?;
    let file =
        ScenarioFile::parse(&text, &source_name).map_err(|e| Failure::Usage(e.to_string()))?;
    let scenario = file
        .to_scenario()
        .map_err(|e| Failure::Usage(format!("{source_name}: {e}")))?;

    let seed = common.seed.or(file.sweep.as_ref().and_then(|s| s.seed));
    let output = execute(command, &file, &scenario, seed.unwrap_or(0))?;

    let mut comment = format!(
        "command={} input_sha256={} seed={}",
        command.name(),
        digest,
        seed.map_or_else(|| "none".to_string(), |s| s.to_string())
    );
    for (k, v) in &output.provenance {
        comment.push_str(&format!(" {k}={v}"));
    }
    let csv = output.table.render(&comment, common.precision as usize);
    let destination = match &common.out {
        Some(path) => {
            fs::write(path, &csv)
                .map_err(|e| Failure::Usage(format!("{}: cannot write: {e}", path.display())))?;
            path.display().to_string()
        }
        None => {
            std::io::stdout()
                .write_all(csv.as_bytes())
                .map_err(|e| Failure::Usage(format!("cannot write to stdout: {e}")))?;
            "-".to_string()
        }
    };

    let report = RunReport {
        command: command.name(),
        input_sha256: &digest,
        seed,
        outputs: vec![destination],
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        solver_iterations: output.iterations,
        notes: output.notes,
    };
    eprintln!(
        "{}",
        serde_json::to_string(&report).expect("report serializes")
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
