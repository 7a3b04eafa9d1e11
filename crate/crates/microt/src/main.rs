use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use microt::{Pipeline, PipelineConfig, PipelineError, STAGES};

/// Runs the on-device personalization pipeline, or one stage of it.
#[derive(Debug, Parser)]
#[command(name = "microt", version)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Stage to run, or "all".
    #[arg(long, default_value = "all", value_parser = stage_name)]
    stage: String,
    /// Directory for artifacts and reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn stage_name(s: &str) -> Result<String, String> {
    if s == "all" || STAGES.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!("expected one of all, {}", STAGES.join(", ")))
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let pipeline = Pipeline::new(cfg, cli.out);
    if cli.stage == "all" {
        for stage in STAGES {
            eprintln!("running {stage}");
            pipeline.run_stage(stage)?;
        }
        Ok(())
    } else {
        pipeline.run_stage(&cli.stage)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
