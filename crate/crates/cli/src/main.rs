//! `poem-lab`: dataset generation, training, ablation, diagnostics and
//! gradient checks from the command line.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
//! 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poem_lab::gradsuite::Fault;
use poem_lab::{LabError, Result};

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "poem-lab", version, about = "Polarized elementary embeddings on synthetic multi-domain data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trial seeds, comma separated.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    /// Held-out domain; comma separated for ablate.
    #[arg(long)]
    target_domain: Option<String>,
    /// Enable tail weight averaging.
    #[arg(long)]
    swad: bool,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.seed {
            cfg.set("seeds", s)?;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(v) = &self.variant {
            cfg.set("variant", v)?;
        }
        if let Some(t) = &self.target_domain {
            cfg.set("target_domains", t)?;
        }
        if self.swad {
            cfg.swad = true;
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InjectedFault {
    CosineSignFlip,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-domain dataset.
    GenData(Common),
    /// Train one variant for each seed.
    Train(Common),
    /// Train every listed variant for each seed and target domain.
    Ablate(Common),
    /// Diagnostics for a trained model file.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        models: usize,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<InjectedFault>,
    },
}

fn exit_code(e: &LabError) -> u8 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::GenData(c) => {
            commands::gen_data(&c.resolve()?)?;
        }
        Command::Train(c) => {
            commands::train(&c.resolve()?)?;
        }
        Command::Ablate(c) => {
            commands::ablate(&c.resolve()?)?;
        }
        Command::Analyze { model, data, out } => {
            commands::analyze(&model, &data, &out)?;
        }
        Command::Gradcheck {
            models,
            inject_fault,
        } => {
            let fault = match inject_fault {
                Some(InjectedFault::CosineSignFlip) => Fault::CosineSignFlip,
                None => Fault::None,
            };
            let report = commands::gradcheck(models, fault)?;
            if !report.passed() {
                eprintln!("gradient check failed: {}", report.failures().join(", "));
                return Ok(1);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
