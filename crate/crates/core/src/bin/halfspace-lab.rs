use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use halfspace_lab::scenario::{bundled, run_scenario, zoo_list, ScenarioConfig, BUNDLED};

#[derive(Parser)]
#[command(version, about = "Finite-rank perturbations with invariant half-spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its JSON report.
    Run(RunArgs),
    /// Operator catalogue.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
    /// Names of the scenarios shipped with the crate.
    Scenarios,
}

#[derive(Subcommand)]
enum ZooAction {
    /// Print every zoo operator with its known spectral facts.
    List {
        /// Keep entries whose name contains this text.
        #[arg(default_value = "")]
        filter: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file.
    #[arg(long, required_unless_present = "bundled", conflicts_with = "bundled")]
    config: Option<PathBuf>,
    /// Name of a shipped scenario instead of a file.
    #[arg(long)]
    bundled: Option<String>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Repeatable, e.g. `--tol-override invariance=1e-6`.
    #[arg(long = "tol-override", value_name = "KEY=VAL")]
    tol_override: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load(args: &RunArgs) -> halfspace_lab::Result<ScenarioConfig> {
    let mut cfg = match (&args.config, &args.bundled) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => bundled(name)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(d) = args.dim {
        cfg.dim = d;
    }
    if let Some(e) = args.eps {
        cfg.epsilon = e;
    }
    if let Some(s) = args.seed {
        cfg.reseed(s);
    }
    for o in &args.tol_override {
        cfg.tolerances.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> ExitCode {
    let report = match load(&args).and_then(|cfg| run_scenario(&cfg)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let json = report.to_json();
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json + "\n") {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => println!("{json}"),
    }
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    match report.error() {
        Some(e) => eprintln!("{}: {verdict} ({e})", report.scenario),
        None => eprintln!("{}: {verdict}", report.scenario),
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Zoo {
            action: ZooAction::List { filter },
        } => {
            for e in zoo_list(&filter) {
                println!("{:<28} {:<15} {}", e.name, e.structure, e.facts.join("; "));
            }
            ExitCode::SUCCESS
        }
        Command::Scenarios => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
    }
}
