use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datagen::MotionDataset;
use crate::derive_seed;
use crate::error::{ensure_width, Error, Result};
use crate::kinematics::AgentModel;
use crate::neuralnet::TrainConfig;

use super::{train_direct, train_syda, Architecture};

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointError {
    pub keypoint: String,
    /// Mean Euclidean distance in meters.
    pub mean: f64,
    /// Population standard deviation in meters.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldError {
    pub fold: usize,
    pub samples: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub keypoints: Vec<KeypointError>,
    /// Mean of the per-keypoint means.
    pub total_mean: f64,
    /// Standard deviation over all (sample, keypoint) distances.
    pub total_std: f64,
    pub samples: usize,
    pub folds: Vec<FoldError>,
}

impl EvalReport {
    /// CSV with columns `keypoint,mean_m,std_m` and a final `total` row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "keypoint,mean_m,std_m")?;
        for k in &self.keypoints {
            writeln!(w, "{},{},{}", k.keypoint, k.mean, k.std)?;
        }
        writeln!(w, "total,{},{}", self.total_mean, self.total_std)?;
        Ok(())
    }

    pub fn keypoint(&self, name: &str) -> Option<&KeypointError> {
        self.keypoints.iter().find(|k| k.keypoint == name)
    }
}

/// Per-keypoint distances for a set of predictions, kept so that reports
/// over several folds can be pooled.
#[derive(Debug, Clone, PartialEq)]
pub struct Distances {
    pub keypoints: Vec<String>,
    /// `values[k][s]`: distance of keypoint `k` in sample `s`.
    pub values: Vec<Vec<f64>>,
}

impl Distances {
    pub fn samples(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn report(&self) -> Result<EvalReport> {
        aggregate(std::slice::from_ref(self))
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pools distance tables (one per fold) into a single report with a fold
/// breakdown.
pub fn aggregate(folds: &[Distances]) -> Result<EvalReport> {
    let first = folds
        .first()
        .ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    if first.keypoints.is_empty() {
        return Err(Error::invalid("no keypoints to aggregate"));
    }
    for f in folds {
        if f.keypoints != first.keypoints || f.values.len() != f.keypoints.len() {
            return Err(Error::invalid("folds disagree on keypoints"));
        }
        if f.values.iter().any(|v| v.len() != f.samples()) {
            return Err(Error::invalid("keypoints disagree on sample count"));
        }
    }
    let samples: usize = folds.iter().map(Distances::samples).sum();
    if samples == 0 {
        return Err(Error::invalid("no samples to aggregate"));
    }
    let keypoints: Vec<KeypointError> = first
        .keypoints
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (mean, std) = mean_std(folds.iter().flat_map(|f| f.values[k].iter().copied()));
            KeypointError {
                keypoint: name.clone(),
                mean,
                std,
            }
        })
        .collect();
    let total_mean = keypoints.iter().map(|k| k.mean).sum::<f64>() / keypoints.len() as f64;
    let (_, total_std) = mean_std(
        folds
            .iter()
            .flat_map(|f| f.values.iter().flat_map(|v| v.iter().copied())),
    );
    let fold_breakdown = folds
        .iter()
        .enumerate()
        .map(|(i, f)| FoldError {
            fold: i,
            samples: f.samples(),
            mean: f.values.iter().map(|v| v.iter().sum::<f64>()).sum::<f64>()
                / (f.samples() * f.keypoints.len()).max(1) as f64,
        })
        .collect();
    Ok(EvalReport {
        keypoints,
        total_mean,
        total_std,
        samples,
        folds: fold_breakdown,
    })
}

/// Resolves evaluation keypoint names; an empty list selects every keypoint.
pub fn resolve_keypoints(agent: &AgentModel, names: &[String]) -> Result<Vec<(usize, String)>> {
    if names.is_empty() {
        return Ok(agent
            .keypoints()
            .iter()
            .enumerate()
            .map(|(i, k)| (i, k.name.clone()))
            .collect());
    }
    names
        .iter()
        .map(|n| Ok((agent.keypoint_index(n)?, n.clone())))
        .collect()
}

/// Distances between predicted and true keypoints, decoding features with
/// the agent's encoding (forward kinematics for joint angles).
pub fn keypoint_distances(
    agent: &AgentModel,
    predicted: &[Vec<f64>],
    truth: &[Vec<f64>],
    keypoints: &[String],
) -> Result<Distances> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} targets",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("no predictions to evaluate"));
    }
    let selected = resolve_keypoints(agent, keypoints)?;
    let mut values = vec![Vec::with_capacity(predicted.len()); selected.len()];
    for (p, t) in predicted.iter().zip(truth) {
        ensure_width("predicted features", agent.feature_width(), p.len())?;
        let kp = agent.decode_keypoints(p)?;
        let kt = agent.decode_keypoints(t)?;
        for (col, (idx, _)) in values.iter_mut().zip(&selected) {
            col.push((kp[*idx] - kt[*idx]).norm());
        }
    }
    Ok(Distances {
        keypoints: selected.into_iter().map(|(_, n)| n).collect(),
        values,
    })
}

/// Average keypoint distance error with per-keypoint mean and std.
pub fn avg_distance_error(
    agent: &AgentModel,
    predicted: &[Vec<f64>],
    truth: &[Vec<f64>],
    keypoints: &[String],
) -> Result<EvalReport> {
    keypoint_distances(agent, predicted, truth, keypoints)?.report()
}

/// `k` disjoint folds covering `0..n` after a seeded shuffle; sizes differ
/// by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("k must be >= 2"));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} samples cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Syda,
    Direct,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Syda => "syda",
            Method::Direct => "direct",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "syda" => Ok(Method::Syda),
            "direct" => Ok(Method::Direct),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// An agent whose keypoints are scored, and which of them.
#[derive(Debug, Clone, Copy)]
pub struct EvalSide<'a> {
    pub agent: &'a AgentModel,
    pub keypoints: &'a [String],
}

/// Held-out errors in both directions of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub forward: EvalReport,
    pub backward: EvalReport,
}

/// Seed used to train fold `fold` under a run seed.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(seed, 1000 + fold as u64)
}

/// k-fold cross-validation in both directions. A dual autoencoder serves
/// both directions from one model per fold; the direct baseline trains a
/// separate model per direction. Folds train in parallel.
pub fn cross_validate(
    dataset: &MotionDataset,
    method: Method,
    arch: &Architecture,
    config: &TrainConfig,
    k: usize,
    side_a: EvalSide<'_>,
    side_b: EvalSide<'_>,
) -> Result<CvReport> {
    dataset.check_agents(side_a.agent, side_b.agent)?;
    let folds = kfold_indices(dataset.len(), k, config.seed)?;
    let per_fold: Vec<Result<(Distances, Distances)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let train = dataset.subset(&train_idx);
            let test = dataset.subset(&folds[f]);
            let fold_config = TrainConfig {
                seed: fold_seed(config.seed, f),
                ..*config
            };
            let (pred_b, pred_a) = match method {
                Method::Syda => {
                    let (m, _) = train_syda(&train, arch, &fold_config)?;
                    (
                        predict_all(&test.features_a(), |x| m.map_forward(x))?,
                        predict_all(&test.features_b(), |x| m.map_backward(x))?,
                    )
                }
                Method::Direct => {
                    let (fwd, _) = train_direct(&train, arch, &fold_config)?;
                    let (bwd, _) = train_direct(&train.swapped(), arch, &fold_config)?;
                    (
                        predict_all(&test.features_a(), |x| fwd.map_forward(x))?,
                        predict_all(&test.features_b(), |x| bwd.map_forward(x))?,
                    )
                }
            };
            let true_b: Vec<Vec<f64>> = test.samples.iter().map(|s| s.b.clone()).collect();
            let true_a: Vec<Vec<f64>> = test.samples.iter().map(|s| s.a.clone()).collect();
            Ok((
                keypoint_distances(side_b.agent, &pred_b, &true_b, side_b.keypoints)?,
                keypoint_distances(side_a.agent, &pred_a, &true_a, side_a.keypoints)?,
            ))
        })
        .collect();
    let mut forward = Vec::with_capacity(k);
    let mut backward = Vec::with_capacity(k);
    for r in per_fold {
        let (f, b) = r?;
        forward.push(f);
        backward.push(b);
    }
    Ok(CvReport {
        forward: aggregate(&forward)?,
        backward: aggregate(&backward)?,
    })
}

pub(crate) fn predict_all(
    inputs: &[&[f64]],
    f: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<Vec<f64>>> {
    inputs.iter().map(|x| f(x)).collect()
}
