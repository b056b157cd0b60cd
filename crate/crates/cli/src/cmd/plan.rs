use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use chainmap::transferability::{
    min_models, plan_chain, AgentKind, ChainPlan, FleetAgent, FleetEdge, Objective,
};
use clap::Args;
use serde::Deserialize;

use super::required;
use crate::output::Context;
use crate::overlay;

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PlanArgs {
    /// Fleet JSON with agents and trained edges.
    #[arg(long)]
    pub fleet: Option<PathBuf>,
    /// Id of the agent being added.
    #[arg(long)]
    pub new_agent: Option<String>,
    /// human or robot.
    #[arg(long)]
    pub kind: Option<String>,
    /// Candidate attachment `ID:T_ID_TO_NEW:T_NEW_TO_ID`; repeat for each.
    #[arg(long)]
    pub candidate: Vec<String>,
    /// max-min (default) or query:<agent>.
    #[arg(long)]
    pub objective: Option<String>,
    /// Candidate audit CSV inside the output directory. Defaults to plan.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

overlay!(PlanArgs {
    options: [fleet, new_agent, kind, objective, out],
    lists: [candidate],
    switches: []
});

fn parse_candidate(text: &str, new_agent: &str) -> Result<FleetEdge> {
    let parts: Vec<&str> = text.split(':').collect();
    let [id, to_new, from_new] = parts[..] else {
        bail!("candidate `{text}` is not ID:T_ID_TO_NEW:T_NEW_TO_ID");
    };
    let parse = |t: &str| -> Result<f64> {
        t.parse()
            .with_context(|| format!("candidate `{text}`: bad transferability `{t}`"))
    };
    Ok(FleetEdge::new(
        id,
        new_agent,
        parse(to_new)?,
        parse(from_new)?,
    ))
}

fn write_plan(w: &mut Vec<u8>, plan: &ChainPlan) -> Result<()> {
    writeln!(
        w,
        "attach_to,chosen,objective_value,counterpart,path,hops,product,long_path"
    )?;
    for (i, c) in plan.candidates.iter().enumerate() {
        for q in &c.queries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                c.attach_to,
                i == plan.chosen,
                c.objective_value,
                q.from,
                q.path.join(">"),
                q.hops(),
                q.product,
                q.is_long()
            )?;
        }
    }
    Ok(())
}

pub fn run(ctx: &mut Context, args: PlanArgs) -> Result<()> {
    let fleet = ctx.fleet(&required(args.fleet, "fleet")?)?;
    let id = required(args.new_agent, "new-agent")?;
    let kind: AgentKind = required(args.kind, "kind")?.parse()?;
    let objective: Objective = args.objective.as_deref().unwrap_or("max-min").parse()?;
    if args.candidate.is_empty() {
        bail!("give at least one --candidate");
    }
    let candidates = args
        .candidate
        .iter()
        .map(|c| parse_candidate(c, &id))
        .collect::<Result<Vec<_>>>()?;
    let new_agent = FleetAgent {
        id: id.clone(),
        kind,
        spec: None,
        sigma: None,
    };
    let plan = plan_chain(&fleet, &new_agent, &candidates, &objective)?;
    let out = ctx.write_text(
        &args.out.unwrap_or_else(|| PathBuf::from("plan.csv")),
        |w| write_plan(w, &plan),
    )?;

    println!("objective {objective}");
    for (i, c) in plan.candidates.iter().enumerate() {
        let mark = if i == plan.chosen { "*" } else { " " };
        println!(
            "{mark} attach {id} to {}: objective {:.6}",
            c.attach_to, c.objective_value
        );
        for q in &c.queries {
            let flag = if q.is_long() {
                " (longer than two hops)"
            } else {
                ""
            };
            println!(
                "    from {}: {} product {:.6}{flag}",
                q.from,
                q.path.join(" -> "),
                q.product
            );
        }
    }
    println!("chosen: attach {id} to {}", plan.chosen().attach_to);
    let n_h = fleet.count(AgentKind::Human) + usize::from(kind == AgentKind::Human);
    let n_r = fleet.count(AgentKind::Robot) + usize::from(kind == AgentKind::Robot);
    match min_models(n_h, n_r) {
        Ok((pairs, tree)) => println!(
            "models: {n_h} humans x {n_r} robots = {pairs} pairwise, {n_h} + {n_r} - 1 = {tree} chained"
        ),
        Err(_) => println!("models: {n_h} humans, {n_r} robots (no human-robot pairs)"),
    }
    println!("written to {}", out.display());
    Ok(())
}
