use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FLEET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Human,
    Robot,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Human => "human",
            AgentKind::Robot => "robot",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" => Ok(AgentKind::Human),
            "robot" => Ok(AgentKind::Robot),
            other => Err(Error::invalid(format!("unknown agent kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetAgent {
    pub id: String,
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

/// A trained pair. `t_ab` is the transferability from `a` to `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetEdge {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub t_ab: f64,
    pub t_ba: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_ab: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_ba: Option<f64>,
}

impl FleetEdge {
    pub fn new(a: &str, b: &str, t_ab: f64, t_ba: f64) -> Self {
        FleetEdge {
            a: a.to_string(),
            b: b.to_string(),
            model: None,
            t_ab,
            t_ba,
            error_ab: None,
            error_ba: None,
        }
    }

    /// Transferability when travelling from `from` across this edge.
    pub fn t_from(&self, from: &str) -> Option<f64> {
        if self.a == from {
            Some(self.t_ab)
        } else if self.b == from {
            Some(self.t_ba)
        } else {
            None
        }
    }

    pub fn other(&self, id: &str) -> Option<&str> {
        if self.a == id {
            Some(&self.b)
        } else if self.b == id {
            Some(&self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetGraph {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub agents: Vec<FleetAgent>,
    #[serde(default)]
    pub edges: Vec<FleetEdge>,
}

fn schema_version() -> u32 {
    FLEET_SCHEMA_VERSION
}

fn check_t(t: f64, what: &str) -> Result<()> {
    if t.is_finite() && (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what}: transferability {t} must lie in [0, 1]"
        )))
    }
}

/// Directed adjacency `from -> [(to, T)]` in id order.
type Adjacency<'a> = BTreeMap<&'a str, Vec<(&'a str, f64)>>;

impl FleetGraph {
    pub fn new(agents: Vec<FleetAgent>, edges: Vec<FleetEdge>) -> Result<Self> {
        let fleet = FleetGraph {
            schema_version: FLEET_SCHEMA_VERSION,
            agents,
            edges,
        };
        fleet.validate()?;
        Ok(fleet)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != FLEET_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported fleet schema_version {}",
                self.schema_version
            )));
        }
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(a.id.as_str()) {
                return Err(Error::invalid(format!("duplicate agent `{}`", a.id)));
            }
        }
        let mut pairs = BTreeSet::new();
        for e in &self.edges {
            for end in [&e.a, &e.b] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::invalid(format!(
                        "edge references unknown agent `{end}`"
                    )));
                }
            }
            if e.a == e.b {
                return Err(Error::invalid(format!("self-loop on `{}`", e.a)));
            }
            let key = if e.a < e.b {
                (&e.a, &e.b)
            } else {
                (&e.b, &e.a)
            };
            if !pairs.insert(key) {
                return Err(Error::invalid(format!("duplicate edge {}-{}", e.a, e.b)));
            }
            check_t(e.t_ab, &format!("{}->{}", e.a, e.b))?;
            check_t(e.t_ba, &format!("{}->{}", e.b, e.a))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fleet: FleetGraph = serde_json::from_str(text)?;
        fleet.validate()?;
        Ok(fleet)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fleet serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn agent(&self, id: &str) -> Option<&FleetAgent> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn count(&self, kind: AgentKind) -> usize {
        self.agents.iter().filter(|a| a.kind == kind).count()
    }

    /// Connected components (undirected), each sorted, in order of their
    /// smallest id.
    pub fn components(&self) -> Vec<Vec<String>> {
        let mut parent: BTreeMap<&str, &str> = self
            .agents
            .iter()
            .map(|a| (a.id.as_str(), a.id.as_str()))
            .collect();
        fn find<'a>(p: &mut BTreeMap<&'a str, &'a str>, x: &'a str) -> &'a str {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p.insert(x, r);
            r
        }
        for e in &self.edges {
            let (ra, rb) = (find(&mut parent, &e.a), find(&mut parent, &e.b));
            if ra != rb {
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent.insert(hi, lo);
            }
        }
        let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        let ids: Vec<&str> = parent.keys().copied().collect();
        for id in ids {
            let root = find(&mut parent, id);
            groups.entry(root).or_default().push(id.to_string());
        }
        groups.into_values().collect()
    }

    pub fn check_connected(&self) -> Result<()> {
        let comps = self.components();
        if comps.len() > 1 {
            return Err(Error::Disconnected(comps));
        }
        Ok(())
    }

    /// Connected with exactly one edge fewer than agents.
    pub fn is_spanning_tree(&self) -> bool {
        !self.agents.is_empty()
            && self.edges.len() + 1 == self.agents.len()
            && self.components().len() == 1
    }

    fn adjacency(&self) -> Adjacency<'_> {
        let mut adj: Adjacency<'_> = self
            .agents
            .iter()
            .map(|a| (a.id.as_str(), Vec::new()))
            .collect();
        for e in &self.edges {
            adj.get_mut(e.a.as_str())
                .expect("validated")
                .push((&e.b, e.t_ab));
            adj.get_mut(e.b.as_str())
                .expect("validated")
                .push((&e.a, e.t_ba));
        }
        for list in adj.values_mut() {
            list.sort_by(|x, y| x.0.cmp(y.0));
        }
        adj
    }

    /// Adds the agent and the chosen attachment edge of a plan.
    pub fn attach(&mut self, agent: FleetAgent, plan: &ChainPlan) -> Result<()> {
        if agent.id != plan.new_agent {
            return Err(Error::invalid("plan was made for a different agent"));
        }
        self.agents.push(agent);
        self.edges.push(plan.candidates[plan.chosen].edge.clone());
        self.validate()
    }
}

/// How candidate attachments are compared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Objective {
    /// Maximize the smallest best-path product over all counterparts.
    MaxMin,
    /// Maximize the best-path product from one named counterpart.
    Query(String),
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::MaxMin => f.write_str("max-min"),
            Objective::Query(id) => write!(f, "query:{id}"),
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-min" => Ok(Objective::MaxMin),
            _ => match s.strip_prefix("query:") {
                Some(id) if !id.is_empty() => Ok(Objective::Query(id.to_string())),
                _ => Err(Error::invalid(format!(
                    "unknown objective `{s}` (expected max-min or query:<agent>)"
                ))),
            },
        }
    }
}

/// Best path from one counterpart to the new agent.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPath {
    pub from: String,
    /// Agent ids from the counterpart to the new agent; empty if unreachable.
    pub path: Vec<String>,
    pub product: f64,
}

impl QueryPath {
    pub fn hops(&self) -> usize {
        self.path.len().saturating_sub(1)
    }

    /// Paths of more than two hops go beyond a single intermediate agent.
    pub fn is_long(&self) -> bool {
        self.hops() > 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEval {
    pub edge: FleetEdge,
    /// The existing agent the new agent attaches to.
    pub attach_to: String,
    pub queries: Vec<QueryPath>,
    pub objective_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainPlan {
    pub new_agent: String,
    pub objective: Objective,
    /// Index into `candidates` of the chosen attachment.
    pub chosen: usize,
    /// Every candidate, ordered by attachment id.
    pub candidates: Vec<CandidateEval>,
}

impl ChainPlan {
    pub fn chosen(&self) -> &CandidateEval {
        &self.candidates[self.chosen]
    }
}

/// `(n_h * n_r, n_h + n_r - 1)`: models for every human-robot pair versus a
/// spanning tree over all agents.
pub fn min_models(n_h: usize, n_r: usize) -> Result<(usize, usize)> {
    if n_h == 0 || n_r == 0 {
        return Err(Error::invalid("need at least one human and one robot"));
    }
    Ok((n_h * n_r, n_h + n_r - 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry<'a> {
    cost: f64,
    node: &'a str,
}

impl Eq for Entry<'_> {}

impl Ord for Entry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(self.node))
    }
}

impl PartialOrd for Entry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-product paths from every node to `target`, as Dijkstra over
/// `-ln T` on reversed edges. Returns, per node, the product and the next
/// hop toward the target.
fn best_paths_to<'a>(
    adj: &Adjacency<'a>,
    target: &'a str,
) -> BTreeMap<&'a str, (f64, Option<&'a str>)> {
    let mut incoming: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for (&from, list) in adj {
        for &(to, t) in list {
            incoming.entry(to).or_default().push((from, t));
        }
    }
    let mut cost: BTreeMap<&str, f64> = BTreeMap::new();
    let mut next: BTreeMap<&str, Option<&str>> = BTreeMap::new();
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    cost.insert(target, 0.0);
    next.insert(target, None);
    heap.push(Entry {
        cost: 0.0,
        node: target,
    });
    while let Some(Entry { cost: c, node }) = heap.pop() {
        if !done.insert(node) {
            continue;
        }
        for &(from, t) in incoming.get(node).map_or(&[][..], Vec::as_slice) {
            if t <= 0.0 || done.contains(from) {
                continue;
            }
            let nc = c - t.ln();
            if cost.get(from).is_none_or(|&old| nc < old) {
                cost.insert(from, nc);
                next.insert(from, Some(node));
                heap.push(Entry {
                    cost: nc,
                    node: from,
                });
            }
        }
    }
    cost.into_iter()
        .map(|(n, c)| (n, ((-c).exp(), next[n])))
        .collect()
}

fn trace_path(next: &BTreeMap<&str, (f64, Option<&str>)>, from: &str) -> Vec<String> {
    let mut path = vec![from.to_string()];
    let mut cur = from;
    while let Some(Some(n)) = next.get(cur).map(|e| e.1) {
        path.push(n.to_string());
        cur = n;
    }
    path
}

/// Chooses where to attach `new_agent` among `candidates` (edges between the
/// new agent and existing agents), scoring each by the best-path products
/// from every counterpart agent of the opposite kind (every existing agent if
/// there is none) to the new agent.
pub fn plan_chain(
    fleet: &FleetGraph,
    new_agent: &FleetAgent,
    candidates: &[FleetEdge],
    objective: &Objective,
) -> Result<ChainPlan> {
    fleet.validate()?;
    if fleet.agents.is_empty() {
        return Err(Error::invalid("fleet has no agents"));
    }
    if fleet.agent(&new_agent.id).is_some() {
        return Err(Error::invalid(format!(
            "agent `{}` is already in the fleet",
            new_agent.id
        )));
    }
    fleet.check_connected()?;
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate attachments"));
    }

    let mut counterparts: Vec<&str> = fleet
        .agents
        .iter()
        .filter(|a| a.kind != new_agent.kind)
        .map(|a| a.id.as_str())
        .collect();
    if counterparts.is_empty() {
        counterparts = fleet.agents.iter().map(|a| a.id.as_str()).collect();
    }
    counterparts.sort_unstable();
    if let Objective::Query(q) = objective {
        if !counterparts.contains(&q.as_str()) {
            return Err(Error::invalid(format!(
                "query agent `{q}` is not a counterpart"
            )));
        }
    }

    let mut sorted: Vec<(&str, &FleetEdge)> = Vec::with_capacity(candidates.len());
    for edge in candidates {
        let attach = edge.other(&new_agent.id).ok_or_else(|| {
            Error::invalid(format!(
                "candidate {}-{} does not touch the new agent",
                edge.a, edge.b
            ))
        })?;
        if fleet.agent(attach).is_none() {
            return Err(Error::invalid(format!(
                "candidate attaches to unknown agent `{attach}`"
            )));
        }
        check_t(edge.t_ab, "candidate")?;
        check_t(edge.t_ba, "candidate")?;
        sorted.push((attach, edge));
    }
    sorted.sort_by(|x, y| x.0.cmp(y.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("two candidates attach to the same agent"));
    }

    let mut evals = Vec::with_capacity(sorted.len());
    for (attach, edge) in sorted {
        let mut extended = fleet.clone();
        extended.agents.push(new_agent.clone());
        extended.edges.push(edge.clone());
        let adj = extended.adjacency();
        let best = best_paths_to(&adj, &new_agent.id);
        let queries: Vec<QueryPath> = counterparts
            .iter()
            .map(|&c| match best.get(c) {
                Some(&(product, _)) => QueryPath {
                    from: c.to_string(),
                    path: trace_path(&best, c),
                    product,
                },
                None => QueryPath {
                    from: c.to_string(),
                    path: Vec::new(),
                    product: 0.0,
                },
            })
            .collect();
        let objective_value = match objective {
            Objective::MaxMin => queries
                .iter()
                .map(|q| q.product)
                .fold(f64::INFINITY, f64::min),
            Objective::Query(id) => {
                queries
                    .iter()
                    .find(|q| &q.from == id)
                    .expect("checked")
                    .product
            }
        };
        evals.push(CandidateEval {
            edge: edge.clone(),
            attach_to: attach.to_string(),
            queries,
            objective_value,
        });
    }
    let mut chosen = 0;
    for (i, e) in evals.iter().enumerate() {
        if e.objective_value > evals[chosen].objective_value {
            chosen = i;
        }
    }
    Ok(ChainPlan {
        new_agent: new_agent.id.clone(),
        objective: objective.clone(),
        chosen,
        candidates: evals,
    })
}
