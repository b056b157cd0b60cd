use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use chainmap::syda::{train_direct, train_syda, LossReport, MappingModel, Method};
use clap::Args;
use serde::Deserialize;

use super::{required, NetOpts};
use crate::config::Overlay;
use crate::output::Context;

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Paired dataset to train on.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// syda (dual autoencoder, default) or direct.
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub net: NetOpts,
    /// Model file name inside the output directory. Defaults to model.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch loss CSV inside the output directory. Defaults to loss.csv.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

impl Overlay for TrainArgs {
    fn overlay(&mut self, file: Self) {
        for (flag, value) in [
            (&mut self.dataset, file.dataset),
            (&mut self.out, file.out),
            (&mut self.loss_csv, file.loss_csv),
        ] {
            if flag.is_none() {
                *flag = value;
            }
        }
        if self.method.is_none() {
            self.method = file.method;
        }
        self.net.overlay(file.net);
    }
}

fn write_losses(w: &mut Vec<u8>, method: Method, report: &LossReport) -> Result<()> {
    match method {
        Method::Syda => {
            writeln!(w, "epoch,l_a,l_b,l_latent,total")?;
            for (i, e) in report.epochs.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    i + 1,
                    e.l_a,
                    e.l_b,
                    e.l_latent,
                    e.total
                )?;
            }
        }
        Method::Direct => {
            writeln!(w, "epoch,loss")?;
            for (i, e) in report.epochs.iter().enumerate() {
                writeln!(w, "{},{}", i + 1, e.total)?;
            }
        }
    }
    Ok(())
}

pub fn run(ctx: &mut Context, args: TrainArgs) -> Result<()> {
    let dataset = ctx.dataset(&required(args.dataset, "dataset")?)?;
    let method: Method = args.method.as_deref().unwrap_or("syda").parse()?;
    let (arch, config) = args.net.resolve(ctx.seed)?;
    let (model, report) = match method {
        Method::Syda => {
            let (m, r) = train_syda(&dataset, &arch, &config)?;
            (MappingModel::Syda(m), r)
        }
        Method::Direct => {
            let (m, r) = train_direct(&dataset, &arch, &config)?;
            (MappingModel::Direct(m), r)
        }
    };
    for (side, floored) in [("A", &report.floored_a), ("B", &report.floored_b)] {
        if !floored.is_empty() {
            eprintln!(
                "warning: side {side} features {floored:?} are constant; their scale was floored"
            );
        }
    }
    let model_path = ctx.save_model(
        &args.out.unwrap_or_else(|| PathBuf::from("model.txt")),
        &model,
    )?;
    let reloaded = MappingModel::load(&model_path)?;
    if reloaded != model {
        bail!(
            "{} did not reload to the trained model",
            model_path.display()
        );
    }
    let loss_path = ctx.write_text(
        &args.loss_csv.unwrap_or_else(|| PathBuf::from("loss.csv")),
        |w| write_losses(w, method, &report),
    )?;
    let last = report.epochs.last().expect("at least one epoch");
    println!(
        "trained {method} {} <-> {} for {} epochs, final loss {:.6}; model {}, losses {}",
        dataset.agent_a.name,
        dataset.agent_b.name,
        report.epochs.len(),
        last.total,
        model_path.display(),
        loss_path.display()
    );
    Ok(())
}
