mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use incongruity::Error;

use crate::config::RunConfig;

/// Headline incongruence detection: corpus generation, training and
/// evaluation.
#[derive(Debug, Parser)]
#[command(name = "incongruity", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// KEY=VALUE override, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// rde, cde, ahde, hre or baseline
    #[arg(long)]
    model: Option<String>,
    /// Independent-paragraph scoring
    #[arg(long)]
    ip: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic topic corpus as article JSONL.
    ToyCorpus {
        #[arg(long)]
        out: PathBuf,
    },
    /// Cleanse, tokenize and label a corpus, or import stance data.
    BuildDataset {
        /// Article JSONL
        #[arg(long, required_unless_present = "fnc_stances")]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the Type 1-4 test sets
        #[arg(long)]
        types: bool,
        #[arg(long, requires = "fnc_bodies", conflicts_with = "data")]
        fnc_stances: Option<PathBuf>,
        #[arg(long, requires = "fnc_stances")]
        fnc_bodies: Option<PathBuf>,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score a labeled set and write the evaluation tables.
    Eval {
        /// Dataset directory (its test split) or an instance JSONL file
        #[arg(long)]
        data: PathBuf,
        /// Trained model directory; an untrained model is used when absent
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated list for precision@N
        #[arg(long, value_name = "N,N,...")]
        top_n: Option<String>,
        /// Add the Type 1-4 breakdown from the dataset directory
        #[arg(long)]
        types: bool,
    },
    /// Score articles or instances and write one JSON line per input.
    Predict {
        /// Article or instance JSONL
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ip: bool,
    },
    /// Compare analytic and finite-difference gradients of the models.
    Gradcheck {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failed command: exit status plus a one-line description.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn numeric(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            kind: "numeric",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Config(_) => (2, "config"),
            Error::Diverged { .. } | Error::NonFinite(_) => (4, "numeric"),
            Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Format(_)
            | Error::Rejected(_)
            | Error::EmptyInput(_)
            | Error::Overlap(_)
            | Error::InfeasibleImplant(_)
            | Error::Vocabulary { .. }
            | Error::EmptySequence
            | Error::UndefinedMetric(_) => (3, "data"),
            _ => (1, "internal"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn setup_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("INCONGRUITY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| Error::Config(format!("INCONGRUITY_THREADS must be a number, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(())
}

fn run_config(common: &Common, extra: &[(&str, String)]) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::new();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    for (k, v) in extra {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn model_overrides(m: &ModelArgs) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if let Some(name) = &m.model {
        out.push(("model", name.clone()));
    }
    if m.ip {
        out.push(("ip", "true".into()));
    }
    out
}

fn run(command: Command, common: Common) -> Result<(), Failure> {
    setup_threads()?;
    match command {
        Command::ToyCorpus { out } => commands::toy_corpus(&run_config(&common, &[])?, &out),
        Command::BuildDataset {
            data,
            out,
            types,
            fnc_stances,
            fnc_bodies,
        } => {
            let mut extra = Vec::new();
            if types {
                extra.push(("dataset.types", "true".to_string()));
            }
            let cfg = run_config(&common, &extra)?;
            match (fnc_stances, fnc_bodies) {
                (Some(s), Some(b)) => commands::import_fnc(&cfg, &s, &b, &out),
                _ => commands::build_dataset(&cfg, data.as_deref().expect("clap requires data"), &out),
            }
        }
        Command::Train { data, out, model } => {
            let cfg = run_config(&common, &model_overrides(&model))?;
            commands::train(&cfg, &data, &out)
        }
        Command::Eval {
            data,
            checkpoint,
            out,
            model,
            top_n,
            types,
        } => {
            let mut extra = model_overrides(&model);
            if let Some(n) = top_n {
                extra.push(("top_n", n));
            }
            let cfg = run_config(&common, &extra)?;
            let requested = model.model.as_deref().map(str::parse).transpose()?;
            commands::eval(&cfg, &data, checkpoint.as_deref(), requested, types, &out)
        }
        Command::Predict {
            data,
            checkpoint,
            out,
            ip,
        } => {
            let extra = if ip { vec![("ip", "true".to_string())] } else { vec![] };
            commands::predict(&run_config(&common, &extra)?, &data, &checkpoint, &out)
        }
        Command::Gradcheck { model, out } => {
            let cfg = run_config(&common, &[])?;
            let requested = model.as_deref().map(str::parse).transpose()?;
            commands::gradcheck(&cfg, requested, out.as_deref())
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fail(f: &Failure) -> ExitCode {
    let line = serde_json::json!({
        "error": f.kind,
        "code": f.code,
        "message": one_line(&f.message),
    });
    eprintln!("{line}");
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(f) => f,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            return fail(&Failure {
                code: 2,
                kind: "usage",
                message: first.trim_start_matches("error: ").to_string(),
            });
        }
    };
    match run(cli.command, cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(&f),
    }
}
