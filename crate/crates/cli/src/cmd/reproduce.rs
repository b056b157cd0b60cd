use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use chainmap::experiment::{run_experiment, ExperimentConfig, Trio};
use chainmap::syda::Method;
use clap::Args;
use serde::Deserialize;

use crate::config::Overlay;
use crate::output::Context;

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReproduceArgs {
    /// Independent repetitions. Defaults to 5.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Training samples per pair. Defaults to 700.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Held-out samples per run. Defaults to 300.
    #[arg(long)]
    pub test_samples: Option<usize>,
    /// Training epochs per model. Defaults to 150.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Cross-validation folds. Defaults to 3.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Joint configurations sampled per workspace. Defaults to 50000.
    #[arg(long)]
    pub workspace_samples: Option<usize>,
    /// Feed held-out inputs with capture noise instead of clean.
    #[arg(long)]
    pub noisy_test_inputs: bool,
    /// First agent of the chain, replacing the built-in trio's; a spec file
    /// or fixture:<name>.
    #[arg(long)]
    pub first: Option<String>,
    /// Second agent of the chain.
    #[arg(long)]
    pub second: Option<String>,
    /// Agent every chain ends at.
    #[arg(long)]
    pub target: Option<String>,
    /// Every experiment setting; only settable in the config file.
    #[arg(skip)]
    pub experiment: Option<ExperimentConfig>,
}

impl Overlay for ReproduceArgs {
    fn overlay(&mut self, file: Self) {
        for (flag, value) in [
            (&mut self.runs, file.runs),
            (&mut self.samples, file.samples),
            (&mut self.test_samples, file.test_samples),
            (&mut self.epochs, file.epochs),
            (&mut self.folds, file.folds),
            (&mut self.workspace_samples, file.workspace_samples),
        ] {
            if flag.is_none() {
                *flag = value;
            }
        }
        for (flag, value) in [
            (&mut self.first, file.first),
            (&mut self.second, file.second),
            (&mut self.target, file.target),
        ] {
            if flag.is_none() {
                *flag = value;
            }
        }
        self.noisy_test_inputs |= file.noisy_test_inputs;
        if self.experiment.is_none() {
            self.experiment = file.experiment;
        }
    }
}

impl ReproduceArgs {
    fn config(&self, seed: u64) -> ExperimentConfig {
        let mut c = self.experiment.clone().unwrap_or_default();
        c.seed = seed;
        if let Some(v) = self.runs {
            c.runs = v;
        }
        if let Some(v) = self.samples {
            c.samples = v;
        }
        if let Some(v) = self.test_samples {
            c.test_samples = v;
        }
        if let Some(v) = self.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        if let Some(v) = self.workspace_samples {
            c.workspace_samples = v;
        }
        c.noisy_test_inputs |= self.noisy_test_inputs;
        c
    }
}

pub fn run(ctx: &mut Context, args: ReproduceArgs) -> Result<()> {
    let config = args.config(ctx.seed);
    let mut trio = Trio::fixture();
    for (slot, reference) in [
        (&mut trio.first, &args.first),
        (&mut trio.second, &args.second),
        (&mut trio.target, &args.target),
    ] {
        if let Some(r) = reference {
            *slot = ctx.agent(r)?;
        }
    }
    let start = Instant::now();
    let results = run_experiment(&trio, &config)?;
    eprintln!(
        "experiment finished in {:.1} s",
        start.elapsed().as_secs_f64()
    );

    let mut written = vec![ctx.write_text(&PathBuf::from("transferability.csv"), |w| {
        Ok(results.write_transfer_csv(w)?)
    })?];
    for (i, order) in results.orders.iter().enumerate() {
        let name = PathBuf::from(format!("chain_{}.csv", order.name()));
        written.push(ctx.write_text(&name, |w| Ok(results.write_chain_csv(w, i)?))?);
    }
    written.push(ctx.write_text(&PathBuf::from("chain_ranking.csv"), |w| {
        Ok(results.write_chains_csv(w)?)
    })?);
    written.push(ctx.write_text(&PathBuf::from("runs.csv"), |w| {
        Ok(results.write_runs_csv(w)?)
    })?);

    let errors = results.pair_errors()?;
    for (r, e) in results.transfer.iter().zip(&errors) {
        println!(
            "{} -> {}: T {:.4}, error {:.4} m",
            r.from, r.to, r.transferability, e
        );
    }
    for (i, o) in results.orders.iter().enumerate() {
        println!(
            "chain {}: product T {:.4}, syda {:.4} m, direct {:.4} m",
            o.name(),
            o.transferability,
            results.mean_chain_error(i, Method::Syda)?,
            results.mean_chain_error(i, Method::Direct)?
        );
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
