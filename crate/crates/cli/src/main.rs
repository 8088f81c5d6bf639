use clap::{Parser, Subcommand};
use dctconv::data::{Split, Task};
use dctconv_cli::{
    cmd_bench, cmd_eval, cmd_gradcheck, cmd_synth_data, cmd_train, CmdError, EvalArgs,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dctconv",
    about = "Dual-branch DCT-attention / mobile-convolution classifier: train, eval, gradcheck, bench, synth-data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per seed from a JSON run config; writes checkpoints, learning
    /// curves, and an aggregate report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list (repeatable).
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint, overall and per magnification.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run config; defaults to the checkpoint's embedded snapshot.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Manifest CSV overriding the config's data source.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Label set of the manifest: binary or multiclass.
        #[arg(long)]
        task: Option<String>,
        /// Only evaluate rows at this magnification.
        #[arg(long)]
        magnification: Option<u32>,
        /// Only evaluate rows of this split: train or val.
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference gradient verification per op or for everything.
    Gradcheck {
        /// Op name, "model", or "all".
        #[arg(long, default_value = "all")]
        scope: String,
        #[arg(long, default_value_t = 12345)]
        seed: u64,
    },
    /// MAC counts and forward wall-clock across low-pass reduction factors.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Reduction factors to sweep (repeatable; default 1 2 4).
        #[arg(long = "r")]
        reductions: Vec<usize>,
        /// Timed forward passes per factor (at least 20).
        #[arg(long, default_value_t = 20)]
        iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the spectral synthetic dataset as PPM images + manifest +
    /// tensor archive.
    SynthData {
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 50)]
        n_per_class: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_task(s: &str) -> Result<Task, CmdError> {
    match s {
        "binary" => Ok(Task::Binary),
        "multiclass" => Ok(Task::Multiclass),
        other => Err(CmdError::usage(format!(
            "task must be binary or multiclass, got '{other}'"
        ))),
    }
}

fn parse_split(s: &str) -> Result<Split, CmdError> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        other => Err(CmdError::usage(format!(
            "split must be train or val, got '{other}'"
        ))),
    }
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Train { config, seed, out } => cmd_train(&config, &seed, &out),
        Command::Eval {
            checkpoint,
            config,
            manifest,
            task,
            magnification,
            split,
            out,
        } => {
            let task = task.as_deref().map(parse_task).transpose()?;
            let split = split.as_deref().map(parse_split).transpose()?;
            cmd_eval(&EvalArgs {
                checkpoint: &checkpoint,
                config: config.as_deref(),
                manifest: manifest.as_deref(),
                task,
                magnification,
                split,
                out: out.as_deref(),
            })
        }
        Command::Gradcheck { scope, seed } => cmd_gradcheck(&scope, seed),
        Command::Bench {
            config,
            reductions,
            iterations,
            out,
        } => cmd_bench(config.as_deref(), &reductions, iterations, out.as_deref()),
        Command::SynthData {
            classes,
            n_per_class,
            size,
            seed,
            train_fraction,
            out,
        } => cmd_synth_data(classes, n_per_class, size, seed, train_fraction, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
