//! Keypoint mimicry: a follower agent imitating a leader's keypoints by
//! projected gradient descent on joint angles.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{AgentModel, Pose};

const ARMIJO: f64 = 0.5;

/// Keypoint pairs matched during mimicry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceMap {
    pub pairs: Vec<KeypointPair>,
    /// Multiplies the leader's keypoints before matching.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointPair {
    pub leader: String,
    pub follower: String,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// File form of a correspondence map; `scale` defaults to the length ratio.
#[derive(Debug, Clone, Deserialize)]
struct CorrespondenceFile {
    pairs: Vec<KeypointPair>,
    #[serde(default)]
    scale: Option<f64>,
}

impl CorrespondenceMap {
    /// Pairs every keypoint name the two agents share, with unit weights and
    /// scale `follower.total_length / leader.total_length`.
    pub fn matching_names(leader: &AgentModel, follower: &AgentModel) -> Result<Self> {
        let pairs: Vec<KeypointPair> = leader
            .keypoints()
            .iter()
            .filter(|k| follower.keypoint_index(&k.name).is_ok())
            .map(|k| KeypointPair {
                leader: k.name.clone(),
                follower: k.name.clone(),
                weight: 1.0,
            })
            .collect();
        let map = CorrespondenceMap {
            pairs,
            scale: default_scale(leader, follower),
        };
        map.validate(leader, follower)?;
        Ok(map)
    }

    pub fn from_json(text: &str, leader: &AgentModel, follower: &AgentModel) -> Result<Self> {
        let file: CorrespondenceFile = serde_json::from_str(text)?;
        let map = CorrespondenceMap {
            pairs: file.pairs,
            scale: file
                .scale
                .unwrap_or_else(|| default_scale(leader, follower)),
        };
        map.validate(leader, follower)?;
        Ok(map)
    }

    pub fn validate(&self, leader: &AgentModel, follower: &AgentModel) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid("correspondence scale must be > 0"));
        }
        if !self.pairs.iter().any(|p| p.weight > 0.0) {
            return Err(Error::invalid(
                "correspondence map needs at least one pair with positive weight",
            ));
        }
        for p in &self.pairs {
            if !(p.weight.is_finite() && p.weight >= 0.0) {
                return Err(Error::invalid(format!(
                    "weight for `{}` -> `{}` must be >= 0",
                    p.leader, p.follower
                )));
            }
            leader.keypoint_index(&p.leader)?;
            follower.keypoint_index(&p.follower)?;
        }
        Ok(())
    }

    /// `(leader keypoint index, follower keypoint index, weight)` triples.
    pub(crate) fn resolve(
        &self,
        leader: &AgentModel,
        follower: &AgentModel,
    ) -> Result<Vec<(usize, usize, f64)>> {
        self.validate(leader, follower)?;
        self.pairs
            .iter()
            .map(|p| {
                Ok((
                    leader.keypoint_index(&p.leader)?,
                    follower.keypoint_index(&p.follower)?,
                    p.weight,
                ))
            })
            .collect()
    }
}

fn default_scale(leader: &AgentModel, follower: &AgentModel) -> f64 {
    follower.total_length() / leader.total_length()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MimicConfig {
    /// Initial gradient step; adapted by backtracking.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop when the residual, or its change between accepted steps, drops below this (meters).
    pub tolerance: f64,
}

impl Default for MimicConfig {
    fn default() -> Self {
        MimicConfig {
            step_size: 1.0,
            max_iters: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimicOutcome {
    pub pose: Pose,
    /// Weighted RMS keypoint distance, `sqrt(sum w d^2 / sum w)`, in meters.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective (weighted squared distance) after every accepted step, starting value first.
    pub trace: Vec<f64>,
}

/// A resolved mimicry target: follower keypoint, target point, weight.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Target {
    pub keypoint: usize,
    pub point: Vector3<f64>,
    pub weight: f64,
}

/// Moves `init` toward a pose whose keypoints match the scaled leader keypoints.
pub fn mimic(
    follower: &AgentModel,
    leader_keypoints: &HashMap<String, Vector3<f64>>,
    map: &CorrespondenceMap,
    init: &Pose,
    config: &MimicConfig,
) -> Result<MimicOutcome> {
    if !map.pairs.iter().any(|p| p.weight > 0.0) {
        return Err(Error::invalid(
            "correspondence map needs at least one pair with positive weight",
        ));
    }
    let targets = map
        .pairs
        .iter()
        .map(|p| {
            let point = leader_keypoints
                .get(&p.leader)
                .ok_or_else(|| Error::UnknownKeypoint(p.leader.clone()))?;
            Ok(Target {
                keypoint: follower.keypoint_index(&p.follower)?,
                point: point * map.scale,
                weight: p.weight,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    mimic_targets(follower, &targets, init, config)
}

pub(crate) fn mimic_targets(
    follower: &AgentModel,
    targets: &[Target],
    init: &Pose,
    config: &MimicConfig,
) -> Result<MimicOutcome> {
    follower.check_pose(init)?;
    if !follower.within_limits(init) {
        return Err(Error::invalid(
            "initial pose violates the follower's joint limits",
        ));
    }
    if !(config.step_size > 0.0 && config.tolerance >= 0.0) {
        return Err(Error::invalid(
            "mimic step size must be > 0 and tolerance >= 0",
        ));
    }
    let total_weight: f64 = targets.iter().map(|t| t.weight).sum();
    let links: Vec<usize> = follower.keypoints().iter().map(|k| k.link).collect();
    let dof = follower.dof();

    let objective = |angles: &[f64]| -> f64 {
        let frames = follower.frames(angles);
        targets
            .iter()
            .map(|t| t.weight * (frames.link_ends[links[t.keypoint]] - t.point).norm_squared())
            .sum()
    };
    let residual_of = |f: f64| (f / total_weight).sqrt();

    let mut angles = init.angles.clone();
    let mut f = objective(&angles);
    let mut step = config.step_size;
    let mut grad = vec![0.0; dof];
    let mut columns = vec![Vector3::zeros(); dof];
    let mut candidate = vec![0.0; dof];
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = vec![f];

    while iterations < config.max_iters {
        if residual_of(f) < config.tolerance {
            converged = true;
            break;
        }
        let frames = follower.frames(&angles);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for t in targets {
            let link = links[t.keypoint];
            let err = frames.link_ends[link] - t.point;
            follower.keypoint_jacobian_into(&frames, link, &mut columns);
            for (g, c) in grad.iter_mut().zip(&columns) {
                *g += 2.0 * t.weight * c.dot(&err);
            }
        }
        if grad.iter().all(|g| *g == 0.0) {
            converged = true;
            break;
        }
        iterations += 1;

        // Halve until the projected step gives a sufficient (Armijo) decrease.
        let accepted = loop {
            for ((c, a), g) in candidate.iter_mut().zip(&angles).zip(&grad) {
                *c = a - step * g;
            }
            follower.clamp(&mut candidate);
            let predicted: f64 = grad
                .iter()
                .zip(angles.iter().zip(&candidate))
                .map(|(g, (a, c))| g * (a - c))
                .sum();
            let fc = objective(&candidate);
            if fc < f && f - fc >= ARMIJO * predicted {
                break Some(fc);
            }
            step *= 0.5;
            if step < 1e-14 {
                break None;
            }
        };
        let Some(fc) = accepted else {
            // No descent along the projected gradient: a constrained stationary point.
            converged = true;
            break;
        };
        let change = residual_of(f) - residual_of(fc);
        angles.copy_from_slice(&candidate);
        f = fc;
        trace.push(f);
        if change < config.tolerance {
            converged = true;
            break;
        }
        step *= 2.0;
    }

    Ok(MimicOutcome {
        pose: Pose::new(angles),
        residual: residual_of(f),
        iterations,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::planar_arm;

    fn single_target(
        follower: &AgentModel,
        point: Vector3<f64>,
    ) -> (HashMap<String, Vector3<f64>>, CorrespondenceMap) {
        let _ = follower;
        let mut kp = HashMap::new();
        kp.insert("tip".to_string(), point);
        let map = CorrespondenceMap {
            pairs: vec![KeypointPair {
                leader: "tip".into(),
                follower: "tip".into(),
                weight: 1.0,
            }],
            scale: 1.0,
        };
        (kp, map)
    }

    #[test]
    fn already_optimal_pose_is_returned_unchanged() {
        let arm = planar_arm("a", &[0.6, 0.4]).unwrap();
        let init = Pose::new(vec![0.3, -0.8]);
        let tip = arm.forward_kinematics(&init).unwrap()[0];
        let (kp, map) = single_target(&arm, tip);
        let out = mimic(&arm, &kp, &map, &init, &MimicConfig::default()).unwrap();
        assert_eq!(out.pose, init);
        assert_eq!(out.iterations, 0);
        assert!(out.residual < 1e-12);
    }

    #[test]
    fn reaches_a_reachable_two_link_target() {
        let (l1, l2): (f64, f64) = (0.6, 0.4);
        let arm = planar_arm("a", &[l1, l2]).unwrap();
        // Closed-form IK oracle: elbow angle from the law of cosines.
        let target: Vector3<f64> = Vector3::new(0.5, 0.55, 0.0);
        let r2 = target.norm_squared();
        let c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        let t2 = c2.acos();
        let t1 = target.y.atan2(target.x) - (l2 * t2.sin()).atan2(l1 + l2 * t2.cos());
        let oracle = arm.forward_kinematics(&Pose::new(vec![t1, t2])).unwrap()[0];
        assert!((oracle - target).norm() < 1e-12);

        let (kp, map) = single_target(&arm, target);
        let out = mimic(
            &arm,
            &kp,
            &map,
            &Pose::new(vec![-1.0, 0.3]),
            &MimicConfig::default(),
        )
        .unwrap();
        assert!(out.residual < 1e-3, "residual {}", out.residual);
    }

    #[test]
    fn unreachable_target_leaves_the_reach_gap() {
        let arm = planar_arm("one", &[1.0]).unwrap();
        let (kp, map) = single_target(&arm, Vector3::new(2.0, 0.0, 0.0));
        let out = mimic(
            &arm,
            &kp,
            &map,
            &Pose::new(vec![1.2]),
            &MimicConfig::default(),
        )
        .unwrap();
        assert!(
            (out.residual - 1.0).abs() < 1e-4,
            "residual {}",
            out.residual
        );
    }

    #[test]
    fn rejects_init_outside_limits() {
        let arm = planar_arm("one", &[1.0]).unwrap();
        let (kp, map) = single_target(&arm, Vector3::new(1.0, 0.0, 0.0));
        assert!(mimic(
            &arm,
            &kp,
            &map,
            &Pose::new(vec![4.0]),
            &MimicConfig::default()
        )
        .is_err());
    }

    #[test]
    fn rejects_all_zero_weights() {
        let arm = planar_arm("one", &[1.0]).unwrap();
        let (kp, mut map) = single_target(&arm, Vector3::new(1.0, 0.0, 0.0));
        map.pairs[0].weight = 0.0;
        assert!(mimic(&arm, &kp, &map, &Pose::zeros(1), &MimicConfig::default()).is_err());
    }
}
