use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffnet_core::analysis::time_scales;
use diffnet_core::linalg::limit_threads;
use diffnet_core::scenario::presets::{bundled, BUNDLED};
use diffnet_core::scenario::{execute, ModelChoice, Overrides, Scenario, ScenarioError, Stage, Task};
use diffnet_core::Error;

#[derive(Parser)]
#[command(name = "diffnet", version, about = "Sender/receiver cell networks coupled by diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario without running it.
    Validate(Common),
    /// Export the Green's and gain matrices.
    Gain(Common),
    /// Run the configured model(s) and write trajectories.
    Simulate(Common),
    /// Run the configured error-table analyses.
    Sweep(Common),
    /// Run every configured analysis.
    Analyze(Common),
    /// Trajectories plus every configured analysis.
    Run(Common),
    /// List the bundled scenarios.
    Presets,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled scenario name (see `diffnet presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Root directory for results.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `model`.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelChoice>,
}

fn parse_model(s: &str) -> Result<ModelChoice, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn load(&self) -> Result<Scenario, ScenarioError> {
        let overrides = Overrides {
            seed: self.seed,
            model: self.model,
        };
        match (&self.config, &self.preset) {
            (Some(path), _) => Scenario::load(path, overrides),
            (None, Some(name)) => {
                let text = bundled(name).ok_or_else(|| {
                    ScenarioError::new(Stage::Parse, Error::Config(format!("no bundled scenario named {name:?}")))
                })?;
                Scenario::parse(text, overrides)
            }
            (None, None) => unreachable!("clap requires --config or --preset"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("DIFFNET_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        limit_threads(n);
    }
    let (common, task) = match &cli.command {
        Command::Presets => {
            for (name, text) in BUNDLED {
                let description = serde_json::from_str::<serde_json::Value>(text)
                    .ok()
                    .and_then(|v| v["description"].as_str().map(str::to_owned))
                    .unwrap_or_default();
                println!("{name:18} {description}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Validate(c) => (c, None),
        Command::Gain(c) => (c, Some(Task::Gain)),
        Command::Simulate(c) => (c, Some(Task::Simulate)),
        Command::Sweep(c) => (c, Some(Task::Sweep)),
        Command::Analyze(c) => (c, Some(Task::Analyze)),
        Command::Run(c) => (c, Some(Task::Run)),
    };
    match dispatch(common, task) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("diffnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(common: &Common, task: Option<Task>) -> Result<(), ScenarioError> {
    let scenario = common.load()?;
    let Some(task) = task else {
        report(&scenario);
        return Ok(());
    };
    let mut log = |line: &str| eprintln!("[{}] {line}", scenario.config.name);
    let outcome = execute(&scenario, task, &common.out, &mut log)?;
    println!("{}", outcome.dir.display());
    for (name, _) in &outcome.files {
        println!("  {name}");
    }
    Ok(())
}

fn report(scenario: &Scenario) {
    let spec = &scenario.spec;
    println!("scenario   {}", scenario.config.name);
    println!("output     {}", scenario.output_dir_name());
    println!("model      {:?}", scenario.config.model);
    println!(
        "cells      {} senders, {} receivers",
        spec.n_senders(),
        spec.n_cells() - spec.n_senders()
    );
    println!("domain     L = {}, D = {}", spec.domain.radius, spec.domain.diffusivity);
    match time_scales(spec) {
        Ok(ts) => println!(
            "scales     tau_v = {:.4e}, tau_u = {:.4e}, tau_x = {:.4e}, eps_v = {:.3e}, eps_u = {:.3e}{}",
            ts.tau_v,
            ts.tau_u,
            ts.tau_x,
            ts.eps_v,
            ts.eps_u,
            if ts.ok { "" } else { " (weak separation)" }
        ),
        Err(e) => println!("scales     unavailable: {e}"),
    }
    println!("valid");
}
