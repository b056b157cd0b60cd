//! TOML configuration files. Top-level keys mirror the global flags and one
//! table per subcommand mirrors that subcommand's flags; any flag given on
//! the command line replaces the file's value.
//!
//! ```toml
//! seed = 7
//! out-dir = "results"
//!
//! [train]
//! dataset = "results/pair.txt"
//! epochs = 300
//! hidden-widths = [48, 24]
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use crate::cmd::{
    data::GenDataArgs, eval::EvalArgs, map::MapArgs, plan::PlanArgs, reproduce::ReproduceArgs,
    train::TrainArgs, transfer::TransferArgs,
};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub gen_data: GenDataArgs,
    pub train: TrainArgs,
    pub eval: EvalArgs,
    pub map: MapArgs,
    pub chain_map: MapArgs,
    pub transfer: TransferArgs,
    pub plan: PlanArgs,
    pub reproduce: ReproduceArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        check_flattened_keys::<TrainArgs>(&table, "train")
            .and_then(|()| check_flattened_keys::<EvalArgs>(&table, "eval"))
            .with_context(|| format!("parsing config {}", path.display()))?;
        table
            .try_into()
            .with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Rejects keys of `section` that are not flags of `A`. Sections holding
/// flattened option groups cannot reject unknown keys through serde.
fn check_flattened_keys<A: Args>(table: &toml::Table, section: &str) -> Result<()> {
    let Some(toml::Value::Table(keys)) = table.get(section) else {
        return Ok(());
    };
    let command = A::augment_args(clap::Command::new("config"));
    let known: Vec<&str> = command
        .get_arguments()
        .filter_map(|a| a.get_long())
        .collect();
    for key in keys.keys() {
        if !known.contains(&key.as_str()) {
            bail!(
                "unknown key `{key}` in [{section}], expected one of {}",
                known.join(", ")
            );
        }
    }
    Ok(())
}

/// Fills every unset field of a flag struct from the config file's values.
pub trait Overlay {
    fn overlay(&mut self, file: Self);
}

/// Implements [`Overlay`]: `Option` fields take the file value when unset,
/// `Vec` fields when empty, and `bool` switches are on if either sets them.
#[macro_export]
macro_rules! overlay {
    ($ty:ty { options: [$($opt:ident),*], lists: [$($list:ident),*], switches: [$($sw:ident),*] }) => {
        impl $crate::config::Overlay for $ty {
            fn overlay(&mut self, file: Self) {
                $(if self.$opt.is_none() { self.$opt = file.$opt; })*
                $(if self.$list.is_empty() { self.$list = file.$list; })*
                $(self.$sw |= file.$sw;)*
            }
        }
    };
}
