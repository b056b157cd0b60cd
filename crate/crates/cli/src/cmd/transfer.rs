use std::path::PathBuf;

use anyhow::Result;
use chainmap::transferability::{
    alpha_for_pair, analyze_pair, write_reports_csv, WorkspaceOptions,
};
use clap::Args;
use serde::Deserialize;

use super::required;
use crate::output::Context;
use crate::overlay;

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TransferArgs {
    /// Agent spec file or fixture:<name>.
    #[arg(long)]
    pub agent_a: Option<String>,
    /// Second agent, spec file or fixture:<name>.
    #[arg(long)]
    pub agent_b: Option<String>,
    /// Chain compared on both agents. Defaults to left_arm.
    #[arg(long)]
    pub chain: Option<String>,
    /// Chain on agent A, overriding --chain.
    #[arg(long)]
    pub chain_a: Option<String>,
    /// Chain on agent B, overriding --chain.
    #[arg(long)]
    pub chain_b: Option<String>,
    /// Joint configurations sampled per agent. Defaults to 50000.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Grid cell edge in meters; defaults to the longer total length over 20.
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Fixed alpha in (0, 1]. By default alpha is the best sensor sigma over
    /// the pair's worse sigma.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Best sensor sigma in the system; defaults to the better of the pair.
    #[arg(long)]
    pub sigma_best: Option<f64>,
    /// Output CSV inside the output directory. Defaults to transfer.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

overlay!(TransferArgs {
    options: [
        agent_a, agent_b, chain, chain_a, chain_b, samples, cell_size, alpha, sigma_best, out
    ],
    lists: [],
    switches: []
});

pub fn run(ctx: &mut Context, args: TransferArgs) -> Result<()> {
    let a = ctx.agent(&required(args.agent_a, "agent-a")?)?;
    let b = ctx.agent(&required(args.agent_b, "agent-b")?)?;
    let chain = args.chain.unwrap_or_else(|| "left_arm".into());
    let opts = WorkspaceOptions {
        n_samples: args.samples.unwrap_or(50_000),
        cell_size: args.cell_size,
        seed: ctx.seed,
        chain_a: args.chain_a.unwrap_or_else(|| chain.clone()),
        chain_b: args.chain_b.unwrap_or(chain),
    };
    let (sa, sb) = (a.sensor_noise_sigma(), b.sensor_noise_sigma());
    let alpha = match args.alpha {
        Some(alpha) => alpha,
        None => alpha_for_pair(sa, sb, args.sigma_best.unwrap_or(sa.min(sb)))?,
    };
    let reports = analyze_pair(&a, &b, &opts, alpha)?;
    let out = ctx.write_text(
        &args.out.unwrap_or_else(|| PathBuf::from("transfer.csv")),
        |w| Ok(write_reports_csv(w, &reports, &[])?),
    )?;
    for r in &reports {
        println!(
            "{} -> {}: L {:.4}, S {:.4}, D {:.4}, alpha {:.4}, T {:.6}",
            r.from,
            r.to,
            r.length_ratio,
            r.sufficient_ratio,
            r.dissimilarity,
            r.alpha,
            r.transferability
        );
    }
    println!("written to {}", out.display());
    Ok(())
}
