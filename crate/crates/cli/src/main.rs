use clap::{Args, Parser, Subcommand};
use gca_cli::{
    cmd_check, cmd_crossvalidate, cmd_dacheck, cmd_simulate, load_model, CheckOptions,
    CrossValidateOptions, DaCheckOptions, Format, SimulateOptions, SimulationMode,
};
use std::path::PathBuf;
use std::process::ExitCode;

/// Workbench for redundant globally-cycle-accurate systems: checks local
/// temporal properties on the synchronized verification model under an
/// injected fault model, validates the deterministic assumption, and
/// cross-checks the synchronized model against asynchronous interleavings.
#[derive(Parser)]
#[command(name = "gcaw", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model file (TOML).
    model: PathBuf,
    /// Output format.
    #[arg(long, value_parser = parse_format, default_value = "text")]
    format: Format,
}

fn parse_format(text: &str) -> Result<Format, String> {
    match text {
        "text" => Ok(Format::Text),
        "machine-readable" => Ok(Format::MachineReadable),
        other => Err(format!("unknown format `{other}` (text, machine-readable)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the model's properties on the synchronized product graph.
    Check {
        #[command(flatten)]
        common: Common,
        /// Check only the named property.
        #[arg(long)]
        property: Option<String>,
        /// Node cap for bounded exploration.
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Compare every admitted asynchronous interleaving against its
    /// synchronized twin (desk-scale models).
    Crossvalidate {
        #[command(flatten)]
        common: Common,
        /// Periods to enumerate.
        #[arg(long, default_value_t = 1)]
        periods: usize,
        /// Total interleaving budget.
        #[arg(long, default_value_t = 20_000)]
        cap: usize,
        /// Drop the deterministic-assumption filter to demonstrate
        /// scheduling nondeterminism.
        #[arg(long)]
        all_interleavings: bool,
        /// Validate only the named property.
        #[arg(long)]
        property: Option<String>,
    },
    /// Check the timed deterministic assumption of the model's schedule.
    Dacheck {
        #[command(flatten)]
        common: Common,
        /// Synthesize a window schedule instead of reading one.
        #[arg(long)]
        synthesize_window: bool,
        /// Network latency bound for synthesis (defaults to the schedule's).
        #[arg(long)]
        tau_net: Option<f64>,
    },
    /// Run one seeded simulation and dump the trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        periods: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample a deterministic-assumption-compliant interleaving.
        #[arg(long, conflicts_with = "sync")]
        r#async: bool,
        /// Run the synchronized lockstep model (default).
        #[arg(long)]
        sync: bool,
    },
}

fn run() -> Result<i32, String> {
    let cli = Cli::parse();
    let (code, text) = match &cli.command {
        Command::Check {
            common,
            property,
            cap,
        } => {
            let model = load_model(&common.model).map_err(|e| e.to_string())?;
            cmd_check(
                &model,
                &CheckOptions {
                    property: property.clone(),
                    cap: *cap,
                    format: common.format,
                },
            )
            .map_err(|e| e.to_string())?
        }
        Command::Crossvalidate {
            common,
            periods,
            cap,
            all_interleavings,
            property,
        } => {
            let model = load_model(&common.model).map_err(|e| e.to_string())?;
            cmd_crossvalidate(
                &model,
                &CrossValidateOptions {
                    periods: *periods,
                    cap: *cap,
                    all_interleavings: *all_interleavings,
                    property: property.clone(),
                    format: common.format,
                },
            )
            .map_err(|e| e.to_string())?
        }
        Command::Dacheck {
            common,
            synthesize_window,
            tau_net,
        } => {
            let model = load_model(&common.model).map_err(|e| e.to_string())?;
            cmd_dacheck(
                &model,
                &DaCheckOptions {
                    synthesize: *synthesize_window,
                    tau_net: *tau_net,
                    format: common.format,
                },
            )
            .map_err(|e| e.to_string())?
        }
        Command::Simulate {
            common,
            periods,
            seed,
            r#async,
            sync: _,
        } => {
            let model = load_model(&common.model).map_err(|e| e.to_string())?;
            cmd_simulate(
                &model,
                &SimulateOptions {
                    periods: *periods,
                    seed: *seed,
                    mode: if *r#async {
                        SimulationMode::Async
                    } else {
                        SimulationMode::Sync
                    },
                    format: common.format,
                },
            )
            .map_err(|e| e.to_string())?
        }
    };
    print!("{text}");
    Ok(code)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
