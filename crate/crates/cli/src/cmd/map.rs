use std::path::PathBuf;

use anyhow::{bail, Result};
use chainmap::syda::chain_map;
use clap::Args;
use serde::Deserialize;

use super::{orient_chain, required};
use crate::output::{write_features_csv, Context};
use crate::overlay;

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct MapArgs {
    /// Model files in chain order (exactly one for `map`).
    #[arg(long)]
    pub model: Vec<PathBuf>,
    /// Dataset whose features are mapped.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Which dataset side to map: a (default) or b.
    #[arg(long)]
    pub side: Option<String>,
    /// Output CSV inside the output directory. Defaults to mapped.csv;
    /// chain intermediates go next to it as <stem>_<agent>.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

overlay!(MapArgs {
    options: [input, side, out],
    lists: [model],
    switches: []
});

pub fn run(ctx: &mut Context, args: MapArgs, chain: bool) -> Result<()> {
    if !chain && args.model.len() != 1 {
        bail!("map takes exactly one --model; use chain-map for several");
    }
    let data = ctx.dataset(&required(args.input, "input")?)?;
    let models = args
        .model
        .iter()
        .map(|p| ctx.model(p))
        .collect::<Result<Vec<_>>>()?;
    let (from, rows): (&str, Vec<&[f64]>) = match args.side.as_deref().unwrap_or("a") {
        "a" => (&data.agent_a.name, data.features_a()),
        "b" => (&data.agent_b.name, data.features_b()),
        other => bail!("--side must be a or b, not `{other}`"),
    };
    let (stages, path) = orient_chain(&models, from)?;
    let mut outputs = Vec::with_capacity(rows.len());
    let mut intermediates = vec![Vec::with_capacity(rows.len()); stages.len() - 1];
    for r in rows {
        let out = chain_map(&stages, r)?;
        for (store, v) in intermediates.iter_mut().zip(out.intermediates) {
            store.push(v);
        }
        outputs.push(out.output);
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("mapped.csv"));
    let written = ctx.write_text(&out, |w| write_features_csv(w, &outputs))?;
    println!(
        "mapped {} samples {} into {}",
        outputs.len(),
        path.join(" -> "),
        written.display()
    );
    let stem = out
        .file_stem()
        .map_or("mapped".into(), |s| s.to_string_lossy().into_owned());
    for (agent, rows) in path[1..].iter().zip(&intermediates) {
        let name = out.with_file_name(format!("{stem}_{agent}.csv"));
        let written = ctx.write_text(&name, |w| write_features_csv(w, rows))?;
        println!("intermediate {agent} features in {}", written.display());
    }
    Ok(())
}
