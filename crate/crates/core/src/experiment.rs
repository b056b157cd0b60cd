//! The three-agent reproduction experiment: two humanoid-like agents and a
//! target robot, trained pairwise, composed into both chain orders, and scored
//! against the transferability ranking.
//!
//! Agent roles:
//! - `first` leads the dataset it shares with `second`
//! - `target` leads the datasets it shares with `first` and `second`
//! - held-out triples are produced by `target` leading while both others follow
//!
//! Training data carries each agent's capture noise on both sides. Held-out
//! triples are scored against clean ground truth; their inputs are clean
//! unless `noisy_test_inputs` is set.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{
    add_sensor_noise, feature_noise_sigma, generate_paired_dataset, CorrespondenceMap,
    GenerationConfig, MotionDataset,
};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::fixture;
use crate::kinematics::AgentModel;
use crate::neuralnet::TrainConfig;
use crate::syda::{
    aggregate, chain_map, cross_validate, keypoint_distances, train_direct, train_syda,
    Architecture, DirectModel, Distances, EvalReport, EvalSide, FeatureMap, Method, SydaModel,
};
use crate::transferability::{
    alpha_for_pair, analyze_pair, TransferabilityReport, WorkspaceOptions,
};

/// The three agents of the experiment.
#[derive(Debug, Clone)]
pub struct Trio {
    pub first: AgentModel,
    pub second: AgentModel,
    pub target: AgentModel,
}

impl Trio {
    /// Small humanoid, large humanoid and robot arm.
    pub fn fixture() -> Self {
        Trio {
            first: fixture::small_humanoid(),
            second: fixture::large_humanoid(),
            target: fixture::robot_arm(),
        }
    }

    fn all(&self) -> [&AgentModel; 3] {
        [&self.first, &self.second, &self.target]
    }

    fn get(&self, name: &str) -> Result<&AgentModel> {
        self.all()
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::invalid(format!("no agent `{name}` in the experiment")))
    }

    fn validate(&self) -> Result<()> {
        let [a, b, c] = self.all().map(AgentModel::name);
        if a == b || a == c || b == c {
            return Err(Error::invalid("experiment agents need distinct names"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Independent repetitions, each with its own data and initializations.
    pub runs: usize,
    /// Samples per training pair.
    pub samples: usize,
    /// Held-out triples per run.
    pub test_samples: usize,
    pub folds: usize,
    /// Keypoints scored on every agent; empty selects all.
    pub keypoints: Vec<String>,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub workspace_samples: usize,
    pub cell_size: Option<f64>,
    pub chain: String,
    /// Adds capture noise to held-out inputs; ground truth is always clean.
    pub noisy_test_inputs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            runs: 5,
            samples: 700,
            test_samples: 300,
            folds: 3,
            keypoints: Vec::new(),
            arch: Architecture {
                hidden_layers: 2,
                latent_width: Some(8),
                hidden_widths: Some(vec![48, 24]),
            },
            train: TrainConfig {
                learning_rate: 3e-3,
                epochs: 150,
                ..TrainConfig::default()
            },
            workspace_samples: 50_000,
            cell_size: None,
            chain: "left_arm".into(),
            noisy_test_inputs: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.runs == 0 {
            return Err(Error::invalid("runs must be >= 1"));
        }
        if self.samples < self.folds || self.test_samples == 0 {
            return Err(Error::invalid("too few samples for the experiment"));
        }
        if self.workspace_samples == 0 {
            return Err(Error::invalid("workspace_samples must be >= 1"));
        }
        Ok(())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        derive_seed(self.seed, run as u64)
    }
}

/// An ordered chain of agents from a source to the target.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOrder {
    pub agents: Vec<String>,
    /// Product of the per-hop transferabilities.
    pub transferability: f64,
}

impl ChainOrder {
    pub fn name(&self) -> String {
        self.agents.join("-")
    }
}

/// Held-out distances for one chain and method in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    /// Chain output scored on the target agent.
    pub chain: Distances,
    /// Each stage applied to noisy ground-truth input, scored on its own
    /// output agent.
    pub stages: Vec<Distances>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    /// Cross-validated dual-autoencoder errors on the first/second pair,
    /// first-to-second (`forward`) and back.
    pub cv_forward: EvalReport,
    pub cv_backward: EvalReport,
    /// Round trip first -> second -> first through one dual autoencoder.
    pub round_trip: Distances,
    /// `chains[order][method]`, methods ordered as [`METHODS`].
    pub chains: Vec<[ChainRun; 2]>,
    /// Dual-autoencoder errors per directed pair on held-out triples, in the
    /// order of [`ExperimentResults::transfer`].
    pub pair_errors: Vec<Distances>,
    pub mean_residual: f64,
}

pub const METHODS: [Method; 2] = [Method::Syda, Method::Direct];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub agents: [String; 3],
    /// Directed reports for every ordered pair.
    pub transfer: Vec<TransferabilityReport>,
    pub orders: Vec<ChainOrder>,
    pub runs: Vec<RunResult>,
}

struct RunData {
    pair_first_second: MotionDataset,
    pair_target_first: MotionDataset,
    pair_target_second: MotionDataset,
    /// Clean held-out features per agent, aligned by sample.
    test_clean: [Vec<Vec<f64>>; 3],
    test_noisy: [Vec<Vec<f64>>; 3],
    mean_residual: f64,
}

fn generate(
    leader: &AgentModel,
    follower: &AgentModel,
    n: usize,
    seed: u64,
) -> Result<(MotionDataset, f64)> {
    let map = CorrespondenceMap::matching_names(leader, follower)?;
    let g = generate_paired_dataset(
        leader,
        follower,
        &map,
        n,
        seed,
        &GenerationConfig::default(),
    )?;
    let residual = g.mean_residual();
    Ok((g.dataset, residual))
}

fn noisy(ds: &MotionDataset, a: &AgentModel, b: &AgentModel, seed: u64) -> Result<MotionDataset> {
    add_sensor_noise(ds, feature_noise_sigma(a), feature_noise_sigma(b), seed)
}

fn run_data(trio: &Trio, config: &ExperimentConfig, seed: u64) -> Result<RunData> {
    let (f, s, t) = (&trio.first, &trio.second, &trio.target);
    let n = config.samples;
    let (fs, r0) = generate(f, s, n, derive_seed(seed, 1))?;
    let (tf, r1) = generate(t, f, n, derive_seed(seed, 2))?;
    let (ts, r2) = generate(t, s, n, derive_seed(seed, 3))?;
    let test_seed = derive_seed(seed, 4);
    let (test_f, r3) = generate(t, f, config.test_samples, test_seed)?;
    let (test_s, r4) = generate(t, s, config.test_samples, test_seed)?;
    let clean = [
        test_f
            .samples
            .iter()
            .map(|x| x.b.clone())
            .collect::<Vec<_>>(),
        test_s.samples.iter().map(|x| x.b.clone()).collect(),
        test_f.samples.iter().map(|x| x.a.clone()).collect(),
    ];
    let gain = if config.noisy_test_inputs { 1.0 } else { 0.0 };
    let noisy_f = add_sensor_noise(
        &test_f,
        gain * feature_noise_sigma(t),
        gain * feature_noise_sigma(f),
        derive_seed(seed, 5),
    )?;
    let noisy_s = add_sensor_noise(
        &test_s,
        0.0,
        gain * feature_noise_sigma(s),
        derive_seed(seed, 6),
    )?;
    let test_noisy = [
        noisy_f
            .samples
            .iter()
            .map(|x| x.b.clone())
            .collect::<Vec<_>>(),
        noisy_s.samples.iter().map(|x| x.b.clone()).collect(),
        noisy_f.samples.iter().map(|x| x.a.clone()).collect(),
    ];
    Ok(RunData {
        pair_first_second: noisy(&fs, f, s, derive_seed(seed, 7))?,
        pair_target_first: noisy(&tf, t, f, derive_seed(seed, 8))?,
        pair_target_second: noisy(&ts, t, s, derive_seed(seed, 9))?,
        test_clean: clean,
        test_noisy,
        mean_residual: (r0 + r1 + r2 + r3 + r4) / 5.0,
    })
}

/// Trained models of one run, addressable by direction.
struct Models {
    syda: Vec<SydaModel>,
    direct: Vec<DirectModel>,
}

impl Models {
    fn syda_stage(&self, from: &str, to: &str) -> Result<Box<dyn FeatureMap + '_>> {
        self.syda
            .iter()
            .find_map(|m| m.stage(from, to))
            .map(|s| Box::new(s) as Box<dyn FeatureMap>)
            .ok_or_else(|| Error::invalid(format!("no dual autoencoder for {from} -> {to}")))
    }

    fn direct_stage(&self, from: &str, to: &str) -> Result<Box<dyn FeatureMap + '_>> {
        self.direct
            .iter()
            .find(|m| m.agent_a == from && m.agent_b == to)
            .map(|m| Box::new(m) as Box<dyn FeatureMap>)
            .ok_or_else(|| Error::invalid(format!("no direct model for {from} -> {to}")))
    }

    fn stage(&self, method: Method, from: &str, to: &str) -> Result<Box<dyn FeatureMap + '_>> {
        match method {
            Method::Syda => self.syda_stage(from, to),
            Method::Direct => self.direct_stage(from, to),
        }
    }
}

fn train_config(config: &ExperimentConfig, seed: u64, stream: u64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(seed, stream),
        ..config.train
    }
}

fn train_models(config: &ExperimentConfig, data: &RunData, seed: u64) -> Result<Models> {
    let pairs = [
        &data.pair_first_second,
        &data.pair_target_first,
        &data.pair_target_second,
    ];
    let syda = pairs
        .par_iter()
        .enumerate()
        .map(|(i, ds)| {
            Ok(train_syda(ds, &config.arch, &train_config(config, seed, 20 + i as u64))?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let directed: Vec<MotionDataset> = pairs
        .iter()
        .flat_map(|ds| [(*ds).clone(), ds.swapped()])
        .collect();
    let direct = directed
        .par_iter()
        .enumerate()
        .map(|(i, ds)| {
            Ok(train_direct(ds, &config.arch, &train_config(config, seed, 30 + i as u64))?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Models { syda, direct })
}

fn map_all(stage: &dyn FeatureMap, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    inputs.iter().map(|x| stage.map(x)).collect()
}

fn run_once(
    trio: &Trio,
    config: &ExperimentConfig,
    orders: &[ChainOrder],
    directions: &[(String, String)],
    run: usize,
) -> Result<RunResult> {
    let seed = config.run_seed(run);
    let data = run_data(trio, config, seed)?;
    let models = train_models(config, &data, seed)?;
    let index = |name: &str| -> Result<usize> {
        trio.all()
            .iter()
            .position(|a| a.name() == name)
            .ok_or_else(|| Error::invalid(format!("no agent `{name}`")))
    };
    let kps = &config.keypoints;

    let mut chains = Vec::with_capacity(orders.len());
    for order in orders {
        let per_method = METHODS.map(|method| -> Result<ChainRun> {
            let stages = order
                .agents
                .windows(2)
                .map(|w| models.stage(method, &w[0], &w[1]))
                .collect::<Result<Vec<_>>>()?;
            let last = order.agents.last().expect("chain has agents");
            let (src, dst) = (index(&order.agents[0])?, index(last)?);
            let outputs = data.test_noisy[src]
                .iter()
                .map(|x| Ok(chain_map(&stages, x)?.output))
                .collect::<Result<Vec<_>>>()?;
            let chain = keypoint_distances(trio.get(last)?, &outputs, &data.test_clean[dst], kps)?;
            let stage_errors = order
                .agents
                .windows(2)
                .zip(&stages)
                .map(|(w, stage)| {
                    let (i, o) = (index(&w[0])?, index(&w[1])?);
                    let pred = map_all(stage.as_ref(), &data.test_noisy[i])?;
                    keypoint_distances(trio.get(&w[1])?, &pred, &data.test_clean[o], kps)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ChainRun {
                chain,
                stages: stage_errors,
            })
        });
        let [a, b] = per_method;
        chains.push([a?, b?]);
    }

    let pair_errors = directions
        .iter()
        .map(|(from, to)| {
            let stage = models.syda_stage(from, to)?;
            let pred = map_all(stage.as_ref(), &data.test_noisy[index(from)?])?;
            keypoint_distances(trio.get(to)?, &pred, &data.test_clean[index(to)?], kps)
        })
        .collect::<Result<Vec<_>>>()?;

    let (first, second) = (&trio.first, &trio.second);
    let cv = cross_validate(
        &data.pair_first_second,
        Method::Syda,
        &config.arch,
        &train_config(config, seed, 40),
        config.folds,
        EvalSide {
            agent: first,
            keypoints: kps,
        },
        EvalSide {
            agent: second,
            keypoints: kps,
        },
    )?;

    let pair = models
        .syda
        .iter()
        .find(|m| m.stage(first.name(), second.name()).is_some())
        .expect("first/second model trained");
    let there = pair.stage(first.name(), second.name()).expect("checked");
    let back = pair.stage(second.name(), first.name()).expect("checked");
    let inputs = &data.test_noisy[0];
    let returned = inputs
        .iter()
        .map(|x| back.map(&there.map(x)?))
        .collect::<Result<Vec<_>>>()?;
    let round_trip = keypoint_distances(first, &returned, inputs, kps)?;

    Ok(RunResult {
        run,
        seed,
        cv_forward: cv.forward,
        cv_backward: cv.backward,
        round_trip,
        chains,
        pair_errors,
        mean_residual: data.mean_residual,
    })
}

/// Transferability for every ordered pair; α compares each pair's noise
/// against the quietest agent.
pub fn transfer_reports(
    trio: &Trio,
    config: &ExperimentConfig,
) -> Result<Vec<TransferabilityReport>> {
    let agents = trio.all();
    let best = agents
        .iter()
        .map(|a| a.sensor_noise_sigma())
        .fold(f64::INFINITY, f64::min);
    let opts = WorkspaceOptions {
        n_samples: config.workspace_samples,
        cell_size: config.cell_size,
        seed: derive_seed(config.seed, 500),
        chain_a: config.chain.clone(),
        chain_b: config.chain.clone(),
    };
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let reports = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (agents[i], agents[j]);
            let alpha = alpha_for_pair(a.sensor_noise_sigma(), b.sensor_noise_sigma(), best)?;
            analyze_pair(a, b, &opts, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reports.into_iter().flatten().collect())
}

fn hop(reports: &[TransferabilityReport], from: &str, to: &str) -> Result<f64> {
    reports
        .iter()
        .find(|r| r.from == from && r.to == to)
        .map(|r| r.transferability)
        .ok_or_else(|| Error::invalid(format!("no transferability for {from} -> {to}")))
}

/// Both chain orders from a humanoid through the other to the target.
pub fn chain_orders(trio: &Trio, reports: &[TransferabilityReport]) -> Result<Vec<ChainOrder>> {
    let (f, s, t) = (trio.first.name(), trio.second.name(), trio.target.name());
    [[f, s, t], [s, f, t]]
        .iter()
        .map(|agents| {
            let product = hop(reports, agents[0], agents[1])? * hop(reports, agents[1], agents[2])?;
            Ok(ChainOrder {
                agents: agents.iter().map(|a| a.to_string()).collect(),
                transferability: product,
            })
        })
        .collect()
}

/// Runs the full experiment; repetitions run in parallel and results are
/// independent of scheduling.
pub fn run_experiment(trio: &Trio, config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    trio.validate()?;
    let transfer = transfer_reports(trio, config)?;
    let orders = chain_orders(trio, &transfer)?;
    let directions: Vec<(String, String)> = transfer
        .iter()
        .map(|r| (r.from.clone(), r.to.clone()))
        .collect();
    let runs = (0..config.runs)
        .into_par_iter()
        .map(|run| run_once(trio, config, &orders, &directions, run))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResults {
        agents: trio.all().map(|a| a.name().to_string()),
        transfer,
        orders,
        runs,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

impl ExperimentResults {
    /// Pooled chain report over all runs for chain order `order` and method.
    pub fn chain_report(&self, order: usize, method: Method) -> Result<EvalReport> {
        let m = METHODS
            .iter()
            .position(|x| *x == method)
            .expect("known method");
        let d: Vec<Distances> = self
            .runs
            .iter()
            .map(|r| r.chains[order][m].chain.clone())
            .collect();
        aggregate(&d)
    }

    /// Mean over runs of the per-run chain error.
    pub fn mean_chain_error(&self, order: usize, method: Method) -> Result<f64> {
        let m = METHODS
            .iter()
            .position(|x| *x == method)
            .expect("known method");
        let per_run = self
            .runs
            .iter()
            .map(|r| Ok(r.chains[order][m].chain.report()?.total_mean))
            .collect::<Result<Vec<f64>>>()?;
        Ok(mean(per_run.into_iter()))
    }

    pub fn mean_cv_errors(&self) -> (f64, f64) {
        (
            mean(self.runs.iter().map(|r| r.cv_forward.total_mean)),
            mean(self.runs.iter().map(|r| r.cv_backward.total_mean)),
        )
    }

    /// Mean dual-autoencoder error per directed pair, aligned with `transfer`.
    pub fn pair_errors(&self) -> Result<Vec<f64>> {
        (0..self.transfer.len())
            .map(|i| {
                let d: Vec<Distances> =
                    self.runs.iter().map(|r| r.pair_errors[i].clone()).collect();
                Ok(aggregate(&d)?.total_mean)
            })
            .collect()
    }

    /// Transferability report for the first/second pair in both directions.
    pub fn pair_transfer(&self) -> Result<(f64, f64)> {
        let (a, b) = (&self.agents[0], &self.agents[1]);
        Ok((hop(&self.transfer, a, b)?, hop(&self.transfer, b, a)?))
    }

    pub fn write_transfer_csv<W: Write>(&self, w: W) -> Result<()> {
        let errors: Vec<Option<f64>> = self.pair_errors()?.into_iter().map(Some).collect();
        crate::transferability::write_reports_csv(w, &self.transfer, &errors)
    }

    /// Per-keypoint chain errors (mean and std pooled over runs) for one
    /// chain order, both methods side by side.
    pub fn write_chain_csv<W: Write>(&self, mut w: W, order: usize) -> Result<()> {
        let syda = self.chain_report(order, Method::Syda)?;
        let direct = self.chain_report(order, Method::Direct)?;
        writeln!(
            w,
            "chain,keypoint,syda_mean_m,syda_std_m,direct_mean_m,direct_std_m"
        )?;
        let name = self.orders[order].name();
        for (s, d) in syda.keypoints.iter().zip(&direct.keypoints) {
            writeln!(
                w,
                "{name},{},{},{},{},{}",
                s.keypoint, s.mean, s.std, d.mean, d.std
            )?;
        }
        writeln!(
            w,
            "{name},total,{},{},{},{}",
            syda.total_mean, syda.total_std, direct.total_mean, direct.total_std
        )?;
        Ok(())
    }

    /// Chain transferability against measured chain error per method.
    pub fn write_chains_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "chain,T,E_syda,E_direct")?;
        for (i, o) in self.orders.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                o.name(),
                o.transferability,
                self.mean_chain_error(i, Method::Syda)?,
                self.mean_chain_error(i, Method::Direct)?
            )?;
        }
        Ok(())
    }

    /// One row per run, chain order and method with chain and stage errors.
    pub fn write_runs_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "run,seed,chain,method,E_chain,E_stage1,E_stage2,cv_forward,cv_backward,round_trip"
        )?;
        for r in &self.runs {
            for (i, o) in self.orders.iter().enumerate() {
                for (m, method) in METHODS.iter().enumerate() {
                    let c = &r.chains[i][m];
                    let stage = |k: usize| -> Result<f64> { Ok(c.stages[k].report()?.total_mean) };
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{},{}",
                        r.run,
                        r.seed,
                        o.name(),
                        method,
                        c.chain.report()?.total_mean,
                        stage(0)?,
                        stage(1)?,
                        r.cv_forward.total_mean,
                        r.cv_backward.total_mean,
                        r.round_trip.report()?.total_mean
                    )?;
                }
            }
        }
        Ok(())
    }
}
