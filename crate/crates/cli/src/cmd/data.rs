use std::path::PathBuf;

use anyhow::{Context as _, Result};
use chainmap::datagen::{
    add_sensor_noise, feature_noise_sigma, generate_paired_dataset, CorrespondenceMap,
    GenerationConfig,
};
use chainmap::derive_seed;
use clap::Args;
use serde::Deserialize;

use super::required;
use crate::output::Context;
use crate::overlay;

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenDataArgs {
    /// Agent spec file (or fixture:<name>) whose motion is mimicked; side A.
    #[arg(long)]
    pub leader: Option<String>,
    /// Agent spec file (or fixture:<name>) doing the mimicking; side B.
    #[arg(long)]
    pub follower: Option<String>,
    /// Keypoint correspondence JSON; defaults to pairing shared keypoint names.
    #[arg(long)]
    pub correspondence: Option<PathBuf>,
    /// Number of frames. Defaults to 700.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Random waypoints in the leader trajectory.
    #[arg(long)]
    pub waypoints: Option<usize>,
    /// Add each agent's capture noise to its features.
    #[arg(long)]
    #[serde(default)]
    pub noise: bool,
    /// Output file name inside the output directory. Defaults to dataset.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

overlay!(GenDataArgs {
    options: [leader, follower, correspondence, samples, waypoints, out],
    lists: [],
    switches: [noise]
});

pub fn run(ctx: &mut Context, args: GenDataArgs) -> Result<()> {
    let leader = ctx.agent(&required(args.leader, "leader")?)?;
    let follower = ctx.agent(&required(args.follower, "follower")?)?;
    let map = match &args.correspondence {
        Some(path) => {
            let text = ctx.read_input(path)?;
            CorrespondenceMap::from_json(&text, &leader, &follower)
                .with_context(|| format!("correspondence {}", path.display()))?
        }
        None => CorrespondenceMap::matching_names(&leader, &follower)?,
    };
    let config = GenerationConfig {
        waypoints: args.waypoints,
        ..GenerationConfig::default()
    };
    let n = args.samples.unwrap_or(700);
    let generated = generate_paired_dataset(
        &leader,
        &follower,
        &map,
        n,
        derive_seed(ctx.seed, 0),
        &config,
    )?;
    let dataset = if args.noise {
        add_sensor_noise(
            &generated.dataset,
            feature_noise_sigma(&leader),
            feature_noise_sigma(&follower),
            derive_seed(ctx.seed, 1),
        )?
    } else {
        generated.dataset.clone()
    };
    let out = args.out.unwrap_or_else(|| PathBuf::from("dataset.txt"));
    let path = ctx.save_dataset(&out, &dataset)?;
    println!(
        "{} samples {} -> {}, mean mimic residual {:.6} m, written to {}",
        dataset.len(),
        leader.name(),
        follower.name(),
        generated.mean_residual(),
        path.display()
    );
    Ok(())
}
