use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use percnn::experiment::{self, ExperimentConfig};
use percnn::Error;

#[derive(Parser)]
#[command(name = "percnn", version, about = "Physics-embedded recurrent-convolutional networks for sparse PDE data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system on the fine grid.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subsample a fine trajectory and add measurement noise.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a measurement trajectory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Print a progress line every this many epochs (0 = silent).
        #[arg(long, default_value_t = 10)]
        log_every: usize,
    },
    /// Roll out a trained model past its window and score it.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 0)]
        extra: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the learned right-hand side as an explicit expression.
    Interpret {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Terms below this fraction of the largest coefficient are pruned.
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
    },
    /// Predict from a new initial condition.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        ic: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also integrate the solver from a fine-grid IC and report the RMSE.
        #[arg(long)]
        reference: bool,
    },
    /// Print a built-in experiment config, or list them when no name is given.
    Preset {
        name: Option<String>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BlowUp { .. }
        | Error::RolloutBlowUp { .. }
        | Error::Diverged { .. }
        | Error::NonFinite(_)
        | Error::Degenerate(_)
        | Error::CrossTape { .. }
        | Error::BackwardTwice
        | Error::NonScalarLoss(_) => 1,
        Error::Uninterpretable(_) | Error::ShapeMismatch(_) | Error::TimeMisalignment(_) | Error::UnknownSymbol(_) => 3,
        _ => 2,
    }
}

fn config(path: &Path) -> percnn::Result<ExperimentConfig> {
    ExperimentConfig::load(path)
}

fn print(report: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(report).expect("report serialises"));
}

fn threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("PERCNN_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| format!("PERCNN_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("PERCNN_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> percnn::Result<()> {
    match cli.command {
        Command::Generate { config: c, out } => print(&experiment::generate(&config(&c)?, &out)?),
        Command::Sample { config: c, input, out } => print(&experiment::sample(&config(&c)?, &input, &out)?),
        Command::Train { config: c, data, out, resume, log_every } => {
            let cfg = config(&c)?;
            let mut log = |row: &percnn::trainer::HistoryRow| {
                if log_every > 0 && row.epoch.is_multiple_of(log_every) {
                    let val = row.val_loss.map(|v| format!(" val {v:.6e}")).unwrap_or_default();
                    eprintln!("epoch {:>5} train {:.6e}{val}", row.epoch, row.train_loss);
                }
            };
            print(&experiment::train(&cfg, &data, &out, resume, &mut log)?)
        }
        Command::Eval { model, reference, extra, out } => print(&experiment::eval(&model, &reference, extra, &out)?),
        Command::Interpret { model, out, threshold } => {
            let report = experiment::interpret(&model, &out, threshold)?;
            println!("{}", report.pruned);
        }
        Command::Infer { model, ic, steps, out, reference } => {
            print(&experiment::infer(&model, &ic, steps, &out, reference)?)
        }
        Command::Preset { name: None, .. } => {
            for name in experiment::PRESETS {
                println!("{name}");
            }
        }
        Command::Preset { name: Some(name), out } => {
            let cfg = experiment::preset(&name).ok_or_else(|| {
                Error::Config(format!("unknown preset {name:?}; known: {}", experiment::PRESETS.join(", ")))
            })?;
            let text = cfg.to_json() + "\n";
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
