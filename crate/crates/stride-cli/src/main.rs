//! `stride`: forecast foot center-of-pressure and time-of-impact from
//! synthetic shank-camera video, end to end.
//!
//! Exit codes: 0 success; 2 usage errors (clap); 3 unreadable or unwritable
//! files; 4 malformed file formats; 5 constraint violations (task
//! mismatches, insufficient data, invalid configurations); 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stride_cli::commands::{self, FoldsArg, TaskArg};
use stride_core::model::io::WeightFileError;
use stride_core::datagen::io::DatasetFileError;
use stride_core::training::{FoldPlan, TrainError};
use stride_core::{StreamMode, Task};

#[derive(Parser)]
#[command(name = "stride", version, about = "COP/TOI forecasting pipeline on synthetic stair-approach video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stereo gait dataset.
    Gen {
        /// Master seed (mandatory: generation is seeded end to end).
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        subjects: usize,
        /// Trials per subject.
        #[arg(long, default_value_t = 90)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train base models on the synthetic pretraining task.
    Pretrain {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "both")]
        task: TaskArg,
        /// Pretraining clips to generate.
        #[arg(long, default_value_t = 16)]
        clips: usize,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        /// Pretraining learning rate (fine-tuning always uses a tenth).
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a base model on one subject's trials.
    Finetune {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        dataset: PathBuf,
        /// Base weight file.
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        subject: u16,
        #[arg(long, default_value_t = 250)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate per subject and emit forecast records.
    Loocv {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "both")]
        task: TaskArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        base_cop: Option<PathBuf>,
        #[arg(long)]
        base_toi: Option<PathBuf>,
        /// 'loo' or a fold count (k-fold is a desk-scale approximation).
        #[arg(long, default_value = "loo")]
        folds: FoldsArg,
        #[arg(long, default_value_t = 250)]
        epochs: usize,
        /// Clamp COP predictions to [-0.5, 0.5] at reporting time.
        #[arg(long)]
        clamp_cop: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast-quality analytics over a record CSV.
    Eval {
        #[arg(long)]
        records: PathBuf,
        /// Bootstrap seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        bootstrap: usize,
        /// Piecewise TOI split (ms).
        #[arg(long, default_value_t = 166.67)]
        fh_split_ms: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mixed-effects error modelling over a record CSV.
    Lmm {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        task: Task,
        /// TOI records above this horizon are excluded (ms).
        #[arg(long, default_value_t = 166.67)]
        fh_split_ms: f64,
        /// Significance level of the drop-and-refit pass.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// 60 FPS frame-paced benchmark running both models concurrently.
    Livesim {
        /// COP weight file.
        #[arg(long)]
        cop: PathBuf,
        /// TOI weight file.
        #[arg(long)]
        toi: PathBuf,
        #[arg(long, default_value_t = 120.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value = "windowed")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit SVG figures from a record CSV.
    Plots {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        bootstrap: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen { seed, subjects, trials, out } => {
            commands::cmd_gen(&commands::GenArgs { seed, subjects, trials, out })?;
        }
        Command::Pretrain { seed, task, clips, epochs, lr, out } => {
            commands::cmd_pretrain(&commands::PretrainArgs { seed, task, clips, epochs, lr, out })?;
        }
        Command::Finetune { seed, task, dataset, base, subject, epochs, out } => {
            commands::cmd_finetune(&commands::FinetuneArgs {
                seed, task, dataset, base, subject, epochs, out,
            })?;
        }
        Command::Loocv { seed, task, dataset, base_cop, base_toi, folds, epochs, clamp_cop, out } => {
            commands::cmd_loocv(&commands::LoocvArgs {
                seed, task, dataset, base_cop, base_toi,
                folds: folds.0, epochs, clamp_cop, out,
            })?;
        }
        Command::Eval { records, seed, bootstrap, fh_split_ms, out } => {
            commands::cmd_eval(&commands::EvalArgs { records, seed, bootstrap, fh_split_ms, out })?;
        }
        Command::Lmm { records, task, fh_split_ms, alpha, out } => {
            commands::cmd_lmm(&commands::LmmArgs { records, task, fh_split_ms, alpha, out })?;
        }
        Command::Livesim { cop, toi, duration_s, repeats, mode, seed, out } => {
            let mode = match mode.as_str() {
                "windowed" => StreamMode::Windowed,
                "continuous" => StreamMode::Continuous,
                other => anyhow::bail!("unknown mode '{other}' (expected windowed or continuous)"),
            };
            commands::cmd_livesim(&commands::LivesimArgs {
                cop, toi, duration_s, repeats, mode, seed, out,
            })?;
        }
        Command::Plots { records, seed, bootstrap, out } => {
            commands::cmd_plots(&commands::PlotsArgs { records, seed, bootstrap, out })?;
        }
    }
    Ok(())
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if let Some(w) = cause.downcast_ref::<WeightFileError>() {
            return match w {
                WeightFileError::Io(_) => 3,
                _ => 4,
            };
        }
        if let Some(d) = cause.downcast_ref::<DatasetFileError>() {
            return match d {
                DatasetFileError::Io(_) => 3,
                _ => 4,
            };
        }
        if cause.downcast_ref::<csv::Error>().is_some() {
            return 4;
        }
        if cause.downcast_ref::<TrainError>().is_some()
            || cause.downcast_ref::<stride_core::lmm::LmmError>().is_some()
            || cause.downcast_ref::<stride_core::eval::EvalError>().is_some()
            || cause.downcast_ref::<stride_core::datagen::DatagenError>().is_some()
            || cause.downcast_ref::<stride_core::ShapeError>().is_some()
        {
            return 5;
        }
    }
    1
}

fn main() -> ExitCode {
    stride_cli::init_thread_cap();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

// Referenced by arg parsing via FromStr; silence the unused-import lint on
// FoldPlan, which only appears in type positions above.
#[allow(unused)]
fn _fold_plan_used(_: FoldPlan) {}
