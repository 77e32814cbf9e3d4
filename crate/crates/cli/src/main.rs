use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use driftlab_cli::{
    cmd_evaluate, cmd_reproduce, cmd_run, cmd_train, cmd_world, CliError, Context, ExperimentConfig,
    OUT_ENV,
};

#[derive(Parser)]
#[command(name = "driftlab", version, about = "Vocoder drift laboratory")]
struct Cli {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root (overrides the config's output_dir).
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Master seed of the synthetic world.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-utterance processing.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Config override as dotted.key=value; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic world and x-vector pool.
    World,
    /// Train the vocoder and extractor.
    Train,
    /// Anonymise and resynthesise the evaluation utterances at one λ.
    Run {
        #[arg(long)]
        lambda: f64,
        /// Also run inference-time drift compensation.
        #[arg(long, overrides_with = "no_compensate")]
        compensate: bool,
        #[arg(long = "no-compensate")]
        no_compensate: bool,
    },
    /// Write drift, EER, projection and dispersion reports.
    Evaluate,
    /// Run every stage of the full sweep.
    Reproduce,
    /// Print the effective configuration.
    ShowConfig,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| writeln!(buf, "driftlab {} {}", record.level(), record.args()))
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let base = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut config = base.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.world.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Command::ShowConfig = cli.command {
        config.validate()?;
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    let root = config.output_dir.clone();
    let mut ctx = Context::open(config, &root, cli.jobs)
        .with_context(|| format!("opening output root {}", root.display()))?;
    match cli.command {
        Command::World => {
            cmd_world(&mut ctx)?;
        }
        Command::Train => {
            cmd_train(&mut ctx)?;
        }
        Command::Run {
            lambda,
            compensate,
            no_compensate,
        } => {
            cmd_run(&mut ctx, lambda, compensate && !no_compensate)?;
        }
        Command::Evaluate => {
            cmd_evaluate(&mut ctx)?;
        }
        Command::Reproduce => cmd_reproduce(&mut ctx)?,
        Command::ShowConfig => unreachable!("handled above"),
    }
    Ok(())
}
