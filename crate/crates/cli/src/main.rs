use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use switchreach_cli::{cmd_example, effective_config, run, CliError, CliResult, Command, RunConfig};

#[derive(Parser)]
#[command(name = "switchreach", version, about = "Approximate reachability for switched linear systems")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Monte Carlo seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample mode paths and integrate the state under the configured control.
    Simulate,
    /// Solve the iterated Riccati system; write Sigma and Theta tables.
    Riccati,
    /// Penalized values over the N-schedule, lower bounds and a verdict.
    Value,
    /// Build the optimal control and write control traces.
    Synthesize,
    /// Compare the Monte Carlo cost of the optimal control with V^N.
    Verify,
    /// Run one of the reference examples.
    Example {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        id: u8,
    },
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<String> {
    let cmd = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Riccati => Command::Riccati,
        Cmd::Value => Command::Value,
        Cmd::Synthesize => Command::Synthesize,
        Cmd::Verify => Command::Verify,
        Cmd::Example { id } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("out/example{id}")));
            let report = cmd_example(id, cli.seed, &out)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            if !report.passed {
                return Err(CliError::Failed(format!("example {id} has failing checks\n{text}")));
            }
            return Ok(text);
        }
    };
    let cfg = load(cli)?;
    let sys = cfg.build_system()?;
    let out = cfg.output.directory.clone();
    print!("{}", effective_config(&cfg, &sys, &out).to_json());
    let summary = run(cmd, &cfg, &out)?;
    Ok(serde_json::to_string_pretty(&summary).expect("summary serializes"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
