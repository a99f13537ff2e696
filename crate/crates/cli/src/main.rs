//! `toll`: train and benchmark targeted-collapse autoencoders, and run the
//! linear-dynamics laboratory.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Train one model and write its checkpoint history.
    Train,
    /// Train over several seeds and report the aggregated test metric.
    Benchmark,
    /// Integrate the linear autoencoder gradient flow.
    Dynamics,
    /// Train a 2-D linear autoencoder and export its score contour.
    Contour,
    /// Finite-difference check of backpropagation on random networks.
    Gradcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Benchmark => "benchmark",
            Command::Dynamics => "dynamics",
            Command::Contour => "contour",
            Command::Gradcheck => "gradcheck",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "toll", version, about)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Number of seeds (1..=n); overrides the `seeds` key.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Normal class for one-vs-rest splits; overrides `normal_class`.
    #[arg(long)]
    pub normal_class: Option<i64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e);
            ExitCode::FAILURE
        }
    }
}
