use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use otlaplace::experiment::{self, ExperimentConfig, ExperimentError, ExperimentKind, EXIT_CODES};

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Kind {
    Synthetic2d,
    Pointcloud,
    Consistency,
    Rates,
    TlpDemo,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Synthetic2d => ExperimentKind::Synthetic2d,
            Kind::Pointcloud => ExperimentKind::Pointcloud,
            Kind::Consistency => ExperimentKind::Consistency,
            Kind::Rates => ExperimentKind::Rates,
            Kind::TlpDemo => ExperimentKind::TlpDemo,
        }
    }
}

fn exit_code_help() -> String {
    let mut s = String::from("Exit codes:\n");
    for (code, meaning) in EXIT_CODES {
        s.push_str(&format!("  {code:>2}  {meaning}\n"));
    }
    s.push_str("\nOn failure a JSON object {\"error\", \"exit_code\", \"message\"} is printed to stderr.");
    s
}

/// Semi-supervised classification of empirical measures: experiment runner.
#[derive(Debug, Parser)]
#[command(name = "otlaplace", version, after_help = exit_code_help())]
struct Cli {
    /// Experiment to run; must agree with the config's `kind` when that is set.
    kind: Kind,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output_dir`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<PathBuf, ExperimentError> {
    let mut config = ExperimentConfig::from_file(&cli.config)?;
    let kind = ExperimentKind::from(cli.kind);
    if config.kind != kind {
        return Err(ExperimentError::Config(format!(
            "command asks for {} but the config describes {}",
            kind.name(),
            config.kind.name()
        )));
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let output = experiment::run_experiment_with_jobs(&config, cli.jobs)?;
    output.write_to(&out)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
