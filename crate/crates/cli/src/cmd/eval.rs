use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use chainmap::datagen::MotionDataset;
use chainmap::kinematics::AgentModel;
use chainmap::syda::{
    chain_map, cross_validate, keypoint_distances, EvalReport, EvalSide, FeatureMap, Method,
};
use clap::Args;
use serde::Deserialize;

use super::{orient_chain, required, NetOpts};
use crate::config::Overlay;
use crate::output::{find_agent, Context};

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Model files applied in order from side A of the dataset to side B.
    /// Repeat for a chain.
    #[arg(long)]
    pub model: Vec<PathBuf>,
    /// Held-out pairs: side A is the input, side B the ground truth. With
    /// --folds, the dataset to cross-validate on.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Agent spec files (or fixture:<name>) for every scored agent.
    #[arg(long)]
    pub agent: Vec<String>,
    /// Keypoints to score; defaults to all.
    #[arg(long, value_delimiter = ',')]
    pub keypoints: Vec<String>,
    /// Cross-validate a freshly trained method with this many folds
    /// instead of scoring given models.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Method for cross-validation: syda (default) or direct.
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub net: NetOpts,
    /// Use side B of the dataset as the input and side A as the truth.
    #[arg(long)]
    #[serde(default)]
    pub reverse: bool,
    /// One held-out dataset per chain stage, for per-stage errors.
    #[arg(long)]
    pub stage_dataset: Vec<PathBuf>,
    /// Output CSV inside the output directory. Defaults to eval.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Overlay for EvalArgs {
    fn overlay(&mut self, file: Self) {
        for (flag, value) in [
            (&mut self.model, file.model),
            (&mut self.stage_dataset, file.stage_dataset),
        ] {
            if flag.is_empty() {
                *flag = value;
            }
        }
        for (flag, value) in [
            (&mut self.agent, file.agent),
            (&mut self.keypoints, file.keypoints),
        ] {
            if flag.is_empty() {
                *flag = value;
            }
        }
        for (flag, value) in [(&mut self.dataset, file.dataset), (&mut self.out, file.out)] {
            if flag.is_none() {
                *flag = value;
            }
        }
        if self.folds.is_none() {
            self.folds = file.folds;
        }
        if self.method.is_none() {
            self.method = file.method;
        }
        self.reverse |= file.reverse;
        self.net.overlay(file.net);
    }
}

struct Scoped {
    scope: String,
    report: EvalReport,
}

fn write_reports(w: &mut Vec<u8>, reports: &[Scoped]) -> Result<()> {
    writeln!(w, "scope,keypoint,mean_m,std_m")?;
    for s in reports {
        for k in &s.report.keypoints {
            writeln!(w, "{},{},{},{}", s.scope, k.keypoint, k.mean, k.std)?;
        }
        writeln!(
            w,
            "{},total,{},{}",
            s.scope, s.report.total_mean, s.report.total_std
        )?;
    }
    for s in reports {
        if s.report.folds.len() > 1 {
            for f in &s.report.folds {
                writeln!(w, "{} fold {},total,{},", s.scope, f.fold + 1, f.mean)?;
            }
        }
    }
    Ok(())
}

fn scored_agent<'a>(
    agents: &'a [AgentModel],
    side: &chainmap::datagen::AgentSide,
) -> Result<&'a AgentModel> {
    let agent = find_agent(agents, &side.name)?;
    side.check(agent)?;
    Ok(agent)
}

fn cross_validated(
    ctx: &Context,
    args: &EvalArgs,
    agents: &[AgentModel],
    data: &MotionDataset,
    k: usize,
) -> Result<Vec<Scoped>> {
    if !args.model.is_empty() {
        bail!("--folds trains its own models; drop --model");
    }
    let method: Method = args.method.as_deref().unwrap_or("syda").parse()?;
    let (arch, config) = args.net.resolve(ctx.seed)?;
    let a = scored_agent(agents, &data.agent_a)?;
    let b = scored_agent(agents, &data.agent_b)?;
    let side = |agent| EvalSide {
        agent,
        keypoints: &args.keypoints,
    };
    let cv = cross_validate(data, method, &arch, &config, k, side(a), side(b))?;
    Ok(vec![
        Scoped {
            scope: format!("{method} {}->{}", a.name(), b.name()),
            report: cv.forward,
        },
        Scoped {
            scope: format!("{method} {}->{}", b.name(), a.name()),
            report: cv.backward,
        },
    ])
}

fn score<M: FeatureMap>(
    stages: &[M],
    data: &MotionDataset,
    target: &AgentModel,
    keypoints: &[String],
) -> Result<EvalReport> {
    let mut predicted = Vec::with_capacity(data.len());
    for s in &data.samples {
        predicted.push(chain_map(stages, &s.a)?.output);
    }
    let truth: Vec<Vec<f64>> = data.samples.iter().map(|s| s.b.clone()).collect();
    Ok(keypoint_distances(target, &predicted, &truth, keypoints)?.report()?)
}

pub fn run(ctx: &mut Context, args: EvalArgs) -> Result<()> {
    let data = ctx.dataset(&required(args.dataset.clone(), "dataset")?)?;
    let data = if args.reverse { data.swapped() } else { data };
    let agents: Vec<AgentModel> = args
        .agent
        .iter()
        .map(|r| ctx.agent(r))
        .collect::<Result<_>>()?;
    let reports = if let Some(k) = args.folds {
        cross_validated(ctx, &args, &agents, &data, k)?
    } else {
        let models = args
            .model
            .iter()
            .map(|p| ctx.model(p))
            .collect::<Result<Vec<_>>>()?;
        let (stages, path) = orient_chain(&models, &data.agent_a.name)?;
        if path.last() != Some(&data.agent_b.name) {
            bail!(
                "models map {} but the dataset pairs {} with {}",
                path.join(" -> "),
                data.agent_a.name,
                data.agent_b.name
            );
        }
        scored_agent(&agents, &data.agent_a)?;
        let target = scored_agent(&agents, &data.agent_b)?;
        let mut reports = vec![Scoped {
            scope: format!("chain {}", path.join("->")),
            report: score(&stages, &data, target, &args.keypoints)?,
        }];
        if !args.stage_dataset.is_empty() {
            if args.stage_dataset.len() != stages.len() {
                bail!(
                    "{} stage datasets for {} stages",
                    args.stage_dataset.len(),
                    stages.len()
                );
            }
            for (i, p) in args.stage_dataset.iter().enumerate() {
                let (from, to) = (&path[i], &path[i + 1]);
                let ds = ctx.dataset(p)?;
                let ds = if &ds.agent_a.name == from && &ds.agent_b.name == to {
                    ds
                } else if &ds.agent_b.name == from && &ds.agent_a.name == to {
                    ds.swapped()
                } else {
                    bail!("{} does not pair {from} with {to}", p.display());
                };
                scored_agent(&agents, &ds.agent_a)?;
                let stage_target = scored_agent(&agents, &ds.agent_b)?;
                reports.push(Scoped {
                    scope: format!("stage {} {from}->{to}", i + 1),
                    report: score(&stages[i..=i], &ds, stage_target, &args.keypoints)?,
                });
            }
        }
        reports
    };
    let out = ctx.write_text(
        &args.out.unwrap_or_else(|| PathBuf::from("eval.csv")),
        |w| write_reports(w, &reports),
    )?;
    for s in &reports {
        println!(
            "{}: mean {:.6} m, std {:.6} m over {} samples",
            s.scope, s.report.total_mean, s.report.total_std, s.report.samples
        );
    }
    println!("written to {}", out.display());
    Ok(())
}
