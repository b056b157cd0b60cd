//! `chainmap`: data generation, training, evaluation, transferability
//! analysis and chain planning for motion mappings between agents.

mod cmd;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::cmd::{data, eval, map, plan, reproduce, train, transfer};
use crate::config::{ConfigFile, Overlay};
use crate::output::Context;

#[derive(Debug, Parser)]
#[command(
    name = "chainmap",
    version,
    about = "Motion mapping chains between articulated agents"
)]
struct Cli {
    /// Master seed; every random stream derives from it. Defaults to 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all outputs. Defaults to the current directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a paired dataset by having one agent mimic another.
    GenData(data::GenDataArgs),
    /// Train a dual-autoencoder or direct mapping on a paired dataset.
    Train(train::TrainArgs),
    /// Score a model or chain of models, or cross-validate a method.
    Eval(eval::EvalArgs),
    /// Map one side of a dataset through a single model.
    Map(map::MapArgs),
    /// Map one side of a dataset through a chain of models.
    ChainMap(map::MapArgs),
    /// Transferability between two agents in both directions.
    Transfer(transfer::TransferArgs),
    /// Choose where to attach a new agent to a fleet of trained pairs.
    Plan(plan::PlanArgs),
    /// Run the three-agent experiment and write every report.
    Reproduce(reproduce::ReproduceArgs),
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let out_dir = cli
        .out_dir
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut ctx = Context::new(seed, out_dir, &args)?;
    if let Some(path) = &cli.config {
        ctx.read_input(path)?;
    }
    match cli.command {
        Command::GenData(mut a) => {
            a.overlay(file.gen_data);
            data::run(&mut ctx, a)
        }
        Command::Train(mut a) => {
            a.overlay(file.train);
            train::run(&mut ctx, a)
        }
        Command::Eval(mut a) => {
            a.overlay(file.eval);
            eval::run(&mut ctx, a)
        }
        Command::Map(mut a) => {
            a.overlay(file.map);
            map::run(&mut ctx, a, false)
        }
        Command::ChainMap(mut a) => {
            a.overlay(file.chain_map);
            map::run(&mut ctx, a, true)
        }
        Command::Transfer(mut a) => {
            a.overlay(file.transfer);
            transfer::run(&mut ctx, a)
        }
        Command::Plan(mut a) => {
            a.overlay(file.plan);
            plan::run(&mut ctx, a)
        }
        Command::Reproduce(mut a) => {
            a.overlay(file.reproduce);
            reproduce::run(&mut ctx, a)
        }
    }
}
