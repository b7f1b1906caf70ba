//! `qoe`: dataset validation, preprocessing, feature extraction, evaluation,
//! rating statistics and synthetic data generation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qoe_core::commands;
use qoe_core::config::RunConfig;
use qoe_core::evaluate::{EvalModality, Scenario, Task};
use qoe_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qoe", version, about = "Implicit quality-of-experience analysis of physiological recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset against the format and recording invariants.
    Validate { path: PathBuf },
    /// Write resampled, filtered and re-referenced recordings.
    Preprocess {
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write per-segment EEG and peripheral feature tables.
    Extract {
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the classification protocol and write reports.
    Evaluate {
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// hdr, q1 or q3
        #[arg(long)]
        task: Option<Task>,
        /// dep or indep
        #[arg(long)]
        scenario: Option<Scenario>,
        /// eeg, peri or fusion
        #[arg(long)]
        modality: Option<EvalModality>,
        #[arg(long)]
        reps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize explicit ratings.
    Ratings {
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic dataset with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        subjects: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn validate(path: &Path) -> Result<ExitCode> {
    let outcome = commands::cmd_validate(path)?;
    for v in &outcome.violations {
        println!("{v}");
    }
    if outcome.is_clean() {
        println!("ok: {} subject(s)", outcome.subjects);
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} violation(s)", outcome.violations.len());
        Ok(ExitCode::from(2))
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { path } => validate(&path),
        Command::Preprocess { path, out, common } => {
            let n = commands::cmd_preprocess(&path, &out, &load_config(&common)?)?;
            println!("preprocessed {n} recording(s) into {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Extract { path, out, common } => {
            let n = commands::cmd_extract(&path, &out, &load_config(&common)?)?;
            println!("extracted features for {n} segment(s) into {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { path, out, task, scenario, modality, reps, common } => {
            let mut cfg = load_config(&common)?;
            let e = &mut cfg.evaluate;
            e.task = task.unwrap_or(e.task);
            e.scenario = scenario.unwrap_or(e.scenario);
            e.modality = modality.unwrap_or(e.modality);
            e.reps = reps.unwrap_or(e.reps);
            e.seed = common.seed.unwrap_or(e.seed);
            let report = commands::cmd_evaluate(&path, &out, &cfg)?;
            print!("{}", commands::summary_text(&report));
            println!("reports written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Ratings { path, out, common } => {
            print!("{}", commands::cmd_ratings(&path, &out, &load_config(&common)?)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, subjects, common } => {
            let mut cfg = load_config(&common)?;
            cfg.synth.subjects = subjects.unwrap_or(cfg.synth.subjects);
            if let Some(s) = common.seed {
                cfg.synth.effect.seed = s;
            }
            let o = commands::cmd_synth(&out, &cfg)?;
            println!("seed {}", o.seed);
            println!("subjects {}", o.subjects);
            println!("sha256 {}", o.checksum);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_input_error() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
