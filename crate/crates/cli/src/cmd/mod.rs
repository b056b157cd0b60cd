pub mod data;
pub mod eval;
pub mod map;
pub mod plan;
pub mod reproduce;
pub mod train;
pub mod transfer;

use anyhow::{Context as _, Result};
use chainmap::experiment::ExperimentConfig;
use chainmap::neuralnet::TrainConfig;
use chainmap::syda::Architecture;
use clap::Args;
use serde::Deserialize;

use crate::overlay;

/// Network and optimizer flags shared by training and cross-validation.
/// Flattened into other sections, so their unknown keys are checked
/// against the flag list when the config file loads.
#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct NetOpts {
    /// Passes over the training pairs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Pairs per gradient step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Weight of the latent alignment loss.
    #[arg(long)]
    pub latent_weight: Option<f64>,
    /// Width of the shared latent layer.
    #[arg(long)]
    pub latent_width: Option<usize>,
    /// Hidden layer widths from the feature side inward, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden_widths: Vec<usize>,
    /// Hidden layer count when no widths are given.
    #[arg(long)]
    pub hidden_layers: Option<usize>,
}

overlay!(NetOpts {
    options: [
        epochs,
        learning_rate,
        batch_size,
        latent_weight,
        latent_width,
        hidden_layers
    ],
    lists: [hidden_widths],
    switches: []
});

impl NetOpts {
    /// Architecture and training settings, defaulting to the experiment's.
    pub fn resolve(&self, seed: u64) -> Result<(Architecture, TrainConfig)> {
        let base = ExperimentConfig::default();
        let mut arch = base.arch;
        if let Some(n) = self.hidden_layers {
            arch.hidden_layers = n;
        }
        if self.latent_width.is_some() {
            arch.latent_width = self.latent_width;
        }
        if !self.hidden_widths.is_empty() {
            arch.hidden_widths = Some(self.hidden_widths.clone());
        }
        let d = base.train;
        let train = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            latent_loss_weight: self.latent_weight.unwrap_or(d.latent_loss_weight),
            seed,
            ..d
        };
        train.validate().context("training settings")?;
        Ok((arch, train))
    }
}

/// Returns the value or an error naming the missing flag.
pub fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.with_context(|| format!("missing --{flag} (give it as a flag or in the config file)"))
}

/// Chain stages paired with the agents they visit.
type OrientedChain<'a> = (Vec<Box<dyn chainmap::syda::FeatureMap + 'a>>, Vec<String>);

/// Orients each model so the chain runs from agent `from` through every model
/// in order. Returns the stages and the agents visited, `from` first.
pub fn orient_chain<'a>(
    models: &'a [chainmap::syda::MappingModel],
    from: &str,
) -> Result<OrientedChain<'a>> {
    if models.is_empty() {
        anyhow::bail!("give at least one --model");
    }
    let mut agents = vec![from.to_string()];
    let mut stages = Vec::with_capacity(models.len());
    for (i, m) in models.iter().enumerate() {
        let current = agents.last().expect("starts non-empty").clone();
        let (a, b) = m.agents();
        let next = if a == current {
            b
        } else if b == current {
            a
        } else {
            anyhow::bail!(
                "model {} ({a} <-> {b}) does not start from `{current}`",
                i + 1
            );
        };
        stages.push(m.stage(&current, next)?);
        agents.push(next.to_string());
    }
    Ok((stages, agents))
}
