//! `tandem`: corpus generation, the three training stages, evaluation and
//! gradient checks, each reproducible from a config file and a seed.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use tandem_core::config::ExperimentConfig;
use tandem_core::gradcheck::{run_gradcheck, GradcheckOptions};
use tandem_core::workflow::{self, Setting, Workspace};
use tandem_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "tandem",
    version,
    about = "Decoupled interpreter/reasoner training on synthetic geometry"
)]
struct Cli {
    /// TOML config file; values override the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Preset to start from: toy or paper.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Run seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Dotted-key override, e.g. `--set stage2.learning_rate=5e-4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the training, held-out and RL corpora.
    GenData,
    /// Supervised fine-tuning of both policies.
    Sft,
    /// RL of the interpreter against the frozen SFT reasoner.
    RlStage2,
    /// RL of the reasoner against a frozen interpreter.
    RlStage3 {
        /// Use the SFT interpreter instead of the stage-2 one.
        #[arg(long)]
        on_sft: bool,
    },
    /// Evaluate one setting on the held-out corpus.
    Eval {
        /// sft, sft+s2, sft+s3 or sft+s2+s3.
        #[arg(long, default_value = "sft+s2+s3")]
        setting: String,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Corrupt the analytic gradients; the check must then fail.
        #[arg(long, hide = true)]
        sabotage: bool,
    },
    /// gen-data, sft, both RL stages and evaluation of all four settings.
    FullRun,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_MISSING: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_IO: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::MissingPrerequisite { .. } => EXIT_MISSING,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Io { .. } | Error::Checkpoint(_) | Error::Corpus { .. } => EXIT_IO,
        _ => 1,
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let text = match &cli.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    ExperimentConfig::resolve(cli.preset.as_deref(), text.as_deref(), &overrides)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = resolve(cli)?;
    let ws = Workspace::new(&cli.out);
    let started = Instant::now();
    match &cli.command {
        Command::GenData => workflow::gen_data(&cfg, &ws)?,
        Command::Sft => workflow::sft(&cfg, &ws)?,
        Command::RlStage2 => workflow::rl_stage2(&cfg, &ws)?,
        Command::RlStage3 { on_sft } => workflow::rl_stage3(&cfg, &ws, *on_sft)?,
        Command::Eval { setting } => {
            let report = workflow::eval(&cfg, &ws, Setting::parse(setting)?)?;
            print!("{}", report.to_csv());
            println!("overall,{:.1}", report.overall());
        }
        Command::Gradcheck {
            instances,
            sabotage,
        } => {
            let opts = GradcheckOptions {
                instances: *instances,
                seed: cfg.seed,
                sabotage: *sabotage,
                ..Default::default()
            };
            let report = run_gradcheck(&opts)?;
            print!("{}", report.to_text());
            if !report.passed() {
                return Ok(EXIT_NUMERICAL);
            }
        }
        Command::FullRun => {
            let summary = workflow::full_run(&cfg, &ws)?;
            print!("{}", summary.to_csv());
        }
    }
    eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
