use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use evacsim_cli::{cmd_compare_modes, cmd_run, cmd_sweep_window, CliError, ErrorKind, ExperimentConfig, Overrides};
use evacsim_core::net::validate_reachability;
use evacsim_core::{generate_grid, GridSpec, Mode, Phase, RoadNetwork};
use serde_json::json;

#[derive(Parser)]
#[command(name = "evacsim", version, about = "Evacuation traffic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every configured scenario and seed.
    Run(RunArgs),
    /// Pick the departure window with the lowest loss.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated candidate windows in seconds.
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<f64>>,
    },
    /// Run each scenario with SAVs and with buses.
    Compare(RunArgs),
    /// Network utilities.
    Net {
        #[command(subcommand)]
        command: NetCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<u32>>,
    #[arg(long)]
    phase: Option<PhaseArg>,
    #[arg(long)]
    mode: Option<ModeArg>,
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Pre,
    Post,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sav,
    Bus,
}

#[derive(Subcommand)]
enum NetCommand {
    /// Load a network file and report reachability.
    Validate { file: PathBuf },
    /// Generate a seeded grid network.
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 250.0)]
        edge_length: f64,
        #[arg(long, default_value_t = 13.89)]
        speed_limit: f64,
        #[arg(long, default_value_t = 1)]
        lanes: u32,
        #[arg(long, default_value_t = 10)]
        starts: usize,
        #[arg(long, default_value_t = 10)]
        stops: usize,
        #[arg(long, default_value_t = 4)]
        exits: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(args: &RunArgs, windows: Option<Vec<f64>>) -> Result<(evacsim_cli::Experiment, Vec<f64>), CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    Overrides {
        out_dir: args.out.clone(),
        seeds: args.seeds.clone(),
        scenarios: args.scenarios.clone(),
        phase: args.phase.map(|p| match p {
            PhaseArg::Pre => Phase::Pre,
            PhaseArg::Post => Phase::Post,
        }),
        mode: args.mode.map(|m| match m {
            ModeArg::Sav => Mode::Sav,
            ModeArg::Bus => Mode::Bus,
        }),
        window: args.window,
        windows,
    }
    .apply(&mut cfg);
    let exp = cfg.resolve()?;
    Ok((exp, cfg.windows))
}

fn print(value: serde_json::Value) {
    use std::io::Write;
    // A closed pipe downstream is not our failure.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&value).expect("serializes"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let exp = load(&args, None)?.0;
            let report = cmd_run(&exp)?;
            print(json!({
                "out_dir": report.out_dir,
                "runs": report.runs.len(),
                "comparison": report.comparison,
            }));
        }
        Command::Sweep { run, windows } => {
            let (exp, candidates) = load(&run, windows)?;
            let report = cmd_sweep_window(&exp, &candidates)?;
            print(serde_json::to_value(&report).expect("serializes"));
        }
        Command::Compare(args) => {
            let exp = load(&args, None)?.0;
            let cmp = cmd_compare_modes(&exp)?;
            let reroutes = |runs: &[evacsim_cli::runner::RunResult]| runs.iter().map(|r| r.reroute_events).sum::<usize>();
            print(json!({
                "rows": cmp.rows,
                "sav_reroute_events": reroutes(&cmp.sav),
                "bus_reroute_events": reroutes(&cmp.bus),
            }));
        }
        Command::Net { command: NetCommand::Validate { file } } => {
            let net = RoadNetwork::load_file(&file).map_err(CliError::config)?;
            let open = validate_reachability(&net, false);
            let closed = validate_reachability(&net, true);
            print(json!({
                "nodes": net.nodes().len(),
                "edges": net.edges().len(),
                "routable": open.is_routable(),
                "routable_with_closures": closed.is_routable(),
                "report": open,
                "report_with_closures": closed,
            }));
            if !open.is_routable() {
                return Err(CliError::config(anyhow::anyhow!("some origin/exit pairs are unreachable")));
            }
        }
        Command::Net {
            command: NetCommand::Grid { rows, cols, edge_length, speed_limit, lanes, starts, stops, exits, seed, out },
        } => {
            let spec = GridSpec {
                rows,
                cols,
                edge_length,
                speed_limit,
                lanes,
                n_start_edges: starts,
                n_bus_stops: stops,
                n_exits: exits,
                seed,
            };
            let net = generate_grid(&spec).map_err(CliError::config)?;
            std::fs::write(&out, net.to_json())
                .with_context(|| format!("writing {}", out.display()))
                .map_err(|e| CliError::new(ErrorKind::Runtime, "write", e))?;
            print(json!({ "out": out, "nodes": net.nodes().len(), "edges": net.edges().len() }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
