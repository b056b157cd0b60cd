use std::collections::BTreeMap;

use chainmap::transferability::{
    min_models, plan_chain, AgentKind, FleetAgent, FleetEdge, FleetGraph, Objective,
};
use chainmap::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn agent(id: &str, kind: AgentKind) -> FleetAgent {
    FleetAgent {
        id: id.into(),
        kind,
        spec: None,
        sigma: None,
    }
}

fn random_kind(rng: &mut ChaCha8Rng) -> AgentKind {
    if rng.random_bool(0.5) {
        AgentKind::Human
    } else {
        AgentKind::Robot
    }
}

fn random_edge(rng: &mut ChaCha8Rng, a: &str, b: &str) -> FleetEdge {
    FleetEdge::new(
        a,
        b,
        rng.random_range(0.05..1.0),
        rng.random_range(0.05..1.0),
    )
}

/// A connected fleet of `n` agents: a random tree plus a few extra edges.
fn random_fleet(rng: &mut ChaCha8Rng, n: usize) -> FleetGraph {
    let agents: Vec<FleetAgent> = (0..n)
        .map(|i| agent(&format!("A{i}"), random_kind(rng)))
        .collect();
    let mut edges = Vec::new();
    let mut linked = BTreeMap::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        linked.insert((j, i), ());
        edges.push(random_edge(rng, &agents[j].id, &agents[i].id));
    }
    for _ in 0..rng.random_range(0..=n) {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        let key = (i.min(j), i.max(j));
        if i != j && linked.insert(key, ()).is_none() {
            edges.push(random_edge(rng, &agents[key.0].id, &agents[key.1].id));
        }
    }
    FleetGraph::new(agents, edges).unwrap()
}

/// Largest transferability product over simple directed paths from `from` to `to`.
fn brute_best(edges: &[FleetEdge], from: &str, to: &str) -> f64 {
    fn walk(
        edges: &[FleetEdge],
        at: &str,
        to: &str,
        visited: &mut Vec<String>,
        product: f64,
    ) -> f64 {
        if at == to {
            return product;
        }
        let mut best = 0.0f64;
        for e in edges {
            let (Some(next), Some(t)) = (e.other(at), e.t_from(at)) else {
                continue;
            };
            if visited.iter().any(|v| v == next) {
                continue;
            }
            visited.push(next.to_string());
            best = best.max(walk(edges, next, to, visited, product * t));
            visited.pop();
        }
        best
    }
    walk(edges, from, to, &mut vec![from.to_string()], 1.0)
}

fn path_product(edges: &[FleetEdge], path: &[String]) -> f64 {
    path.windows(2)
        .map(|w| {
            edges
                .iter()
                .find(|e| e.other(&w[0]) == Some(w[1].as_str()))
                .and_then(|e| e.t_from(&w[0]))
                .expect("path follows edges")
        })
        .product()
}

#[test]
fn planner_matches_exhaustive_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..20 {
        let n = rng.random_range(1..=5);
        let fleet = random_fleet(&mut rng, n);
        let new = agent("NEW", random_kind(&mut rng));
        let mut candidates = Vec::new();
        for a in &fleet.agents {
            if rng.random_bool(0.7) {
                candidates.push(random_edge(&mut rng, &a.id, "NEW"));
            }
        }
        if candidates.is_empty() {
            candidates.push(random_edge(&mut rng, "NEW", &fleet.agents[0].id));
        }
        let mut counterparts: Vec<&FleetAgent> =
            fleet.agents.iter().filter(|a| a.kind != new.kind).collect();
        if counterparts.is_empty() {
            counterparts = fleet.agents.iter().collect();
        }

        let plan = plan_chain(&fleet, &new, &candidates, &Objective::MaxMin).unwrap();
        assert_eq!(plan.candidates.len(), candidates.len());
        let mut best_value = f64::NEG_INFINITY;
        for cand in &plan.candidates {
            let mut edges = fleet.edges.clone();
            edges.push(cand.edge.clone());
            let mut worst = f64::INFINITY;
            for c in &counterparts {
                let expected = brute_best(&edges, &c.id, "NEW");
                let q = cand.queries.iter().find(|q| q.from == c.id).unwrap();
                assert!(
                    (q.product - expected).abs() < 1e-12,
                    "case {case}: {} via {}: {} vs {expected}",
                    c.id,
                    cand.attach_to,
                    q.product
                );
                assert_eq!(q.path.first(), Some(&c.id));
                assert_eq!(q.path.last().map(String::as_str), Some("NEW"));
                assert!((path_product(&edges, &q.path) - q.product).abs() < 1e-12);
                worst = worst.min(expected);
            }
            assert!((cand.objective_value - worst).abs() < 1e-12);
            best_value = best_value.max(worst);
        }
        assert!((plan.chosen().objective_value - best_value).abs() < 1e-12);

        let query = &counterparts[rng.random_range(0..counterparts.len())].id;
        let plan = plan_chain(&fleet, &new, &candidates, &Objective::Query(query.clone())).unwrap();
        let best = plan
            .candidates
            .iter()
            .map(|c| {
                let mut edges = fleet.edges.clone();
                edges.push(c.edge.clone());
                brute_best(&edges, query, "NEW")
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((plan.chosen().objective_value - best).abs() < 1e-12);
    }
}

#[test]
fn plan_ignores_edge_and_candidate_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let fleet = random_fleet(&mut rng, 5);
        let new = agent("NEW", AgentKind::Robot);
        let candidates: Vec<FleetEdge> = fleet
            .agents
            .iter()
            .map(|a| random_edge(&mut rng, &a.id, "NEW"))
            .collect();
        let plan = plan_chain(&fleet, &new, &candidates, &Objective::MaxMin).unwrap();
        let mut shuffled = fleet.clone();
        shuffled.edges.shuffle(&mut rng);
        shuffled.agents.shuffle(&mut rng);
        let mut cands = candidates.clone();
        cands.shuffle(&mut rng);
        let again = plan_chain(&shuffled, &new, &cands, &Objective::MaxMin).unwrap();
        assert_eq!(again.chosen().attach_to, plan.chosen().attach_to);
        for (x, y) in plan.candidates.iter().zip(&again.candidates) {
            assert_eq!(x.attach_to, y.attach_to);
            assert!((x.objective_value - y.objective_value).abs() < 1e-12);
        }
    }
}

#[test]
fn attaching_agents_one_at_a_time_builds_a_spanning_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let mut fleet = FleetGraph::new(vec![agent("H0", AgentKind::Human)], Vec::new()).unwrap();
        let n_extra = rng.random_range(1..=5);
        for i in 0..n_extra {
            let kind = if i == 0 {
                AgentKind::Robot
            } else {
                random_kind(&mut rng)
            };
            let id = format!("{}{}", kind.as_str(), i + 1);
            let new = agent(&id, kind);
            let candidates: Vec<FleetEdge> = fleet
                .agents
                .iter()
                .map(|a| random_edge(&mut rng, &a.id, &id))
                .collect();
            let plan = plan_chain(&fleet, &new, &candidates, &Objective::MaxMin).unwrap();
            fleet.attach(new, &plan).unwrap();
        }
        let n_h = fleet.count(AgentKind::Human);
        let n_r = fleet.count(AgentKind::Robot);
        let (all_pairs, tree) = min_models(n_h, n_r).unwrap();
        assert!(fleet.is_spanning_tree());
        assert_eq!(fleet.edges.len(), tree);
        assert_eq!(tree, n_h + n_r - 1);
        assert_eq!(all_pairs, n_h * n_r);
        assert_eq!(fleet.components().len(), 1);
    }
}

#[test]
fn two_human_fleet_attaches_robot_to_the_better_human() {
    let fleet = FleetGraph::new(
        vec![agent("H1", AgentKind::Human), agent("H2", AgentKind::Human)],
        vec![FleetEdge::new("H1", "H2", 0.1071 / 0.2358, 0.1186 / 0.2335)],
    )
    .unwrap();
    let candidates = [
        FleetEdge::new("H1", "R1", 0.2335, 0.2002),
        FleetEdge::new("H2", "R1", 0.2358, 0.1991),
    ];
    let plan = plan_chain(
        &fleet,
        &agent("R1", AgentKind::Robot),
        &candidates,
        &Objective::MaxMin,
    )
    .unwrap();
    assert_eq!(plan.chosen().attach_to, "H1");
    assert!((plan.chosen().objective_value - 0.1186).abs() < 1e-12);
}

#[test]
fn disconnected_fleet_is_reported_by_component() {
    let fleet = FleetGraph::new(
        vec![
            agent("H1", AgentKind::Human),
            agent("R1", AgentKind::Robot),
            agent("R2", AgentKind::Robot),
        ],
        vec![FleetEdge::new("H1", "R1", 0.3, 0.2)],
    )
    .unwrap();
    let err = plan_chain(
        &fleet,
        &agent("H2", AgentKind::Human),
        &[FleetEdge::new("R1", "H2", 0.2, 0.2)],
        &Objective::MaxMin,
    )
    .unwrap_err();
    let Error::Disconnected(components) = err else {
        panic!("expected a disconnected fleet error");
    };
    assert_eq!(
        components,
        vec![vec!["H1".to_string(), "R1".into()], vec!["R2".into()]]
    );
}

#[test]
fn shipped_fleet_file_parses() {
    let path =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fleets/two_humans.json");
    let fleet = FleetGraph::load(path).unwrap();
    assert_eq!(fleet.count(AgentKind::Human), 2);
    assert!(fleet.is_spanning_tree());
}
