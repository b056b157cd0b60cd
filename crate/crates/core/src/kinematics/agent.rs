//! Articulated agent definitions.
//!
//! An agent is a tree of revolute joints. Joint `i` owns link `i`, which
//! extends along the local x axis of the frame produced by rotating the
//! parent frame about the joint axis. A joint's origin sits at the distal end
//! of its parent's link (or at the agent base), displaced by an optional fixed
//! offset expressed in the parent frame.

use std::path::Path;

use nalgebra::{Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_width, Error, Result};

pub const AGENT_SCHEMA_VERSION: u32 = 1;

const AXIS_NORM_TOLERANCE: f64 = 1e-9;

/// How an agent's pose is presented to the mapping models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    /// One feature per joint angle (radians).
    JointAngles,
    /// Declared keypoints flattened as `x, y, z` triples (meters).
    CartesianKeypoints,
}

impl FeatureEncoding {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureEncoding::JointAngles => "joint_angles",
            FeatureEncoding::CartesianKeypoints => "cartesian_keypoints",
        }
    }
}

impl std::str::FromStr for FeatureEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint_angles" => Ok(FeatureEncoding::JointAngles),
            "cartesian_keypoints" => Ok(FeatureEncoding::CartesianKeypoints),
            other => Err(Error::invalid(format!(
                "unknown feature encoding `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for FeatureEncoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    #[serde(default)]
    pub name: String,
    /// Rotation axis in the parent frame; must have unit norm.
    pub axis: [f64; 3],
    /// `[lower, upper]` in radians.
    pub limits: [f64; 2],
    /// Index of the parent joint, `None` for joints attached to the base.
    #[serde(default)]
    pub parent: Option<usize>,
    /// Fixed translation from the parent link's distal end, in the parent frame.
    #[serde(default)]
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointSpec {
    pub name: String,
    /// The keypoint sits at the distal end of this link.
    pub link: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub name: String,
    /// Base-to-tip joint indices; the tip is the distal end of the last link.
    pub joints: Vec<usize>,
}

/// On-disk agent description. See `schemas/agent.schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub schema_version: u32,
    pub name: String,
    pub joints: Vec<JointSpec>,
    pub link_lengths: Vec<f64>,
    pub keypoints: Vec<KeypointSpec>,
    pub chains: Vec<ChainSpec>,
    pub sensor_noise_sigma: f64,
    pub feature_encoding: FeatureEncoding,
    /// Overrides the length used in the length ratio; defaults to the
    /// longest base-to-leaf sum of link lengths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_length: Option<f64>,
}

/// Joint angles in radians, one per agent joint.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub angles: Vec<f64>,
}

impl Pose {
    pub fn new(angles: Vec<f64>) -> Self {
        Pose { angles }
    }

    pub fn zeros(dof: usize) -> Self {
        Pose {
            angles: vec![0.0; dof],
        }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

impl From<Vec<f64>> for Pose {
    fn from(angles: Vec<f64>) -> Self {
        Pose { angles }
    }
}

/// World-frame quantities for every joint at one configuration.
#[derive(Debug, Clone)]
pub struct Frames {
    pub origins: Vec<Vector3<f64>>,
    pub axes: Vec<Vector3<f64>>,
    pub link_ends: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    spec: AgentSpec,
    total_length: f64,
    /// `ancestors[i]` lists joint `i` and every joint above it, base first.
    ancestors: Vec<Vec<usize>>,
}

impl AgentModel {
    pub fn new(spec: AgentSpec) -> Result<Self> {
        validate(&spec)?;
        let n = spec.joints.len();
        let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(n);
        for joint in &spec.joints {
            let mut chain = match joint.parent {
                Some(p) => ancestors[p].clone(),
                None => Vec::new(),
            };
            chain.push(ancestors.len());
            ancestors.push(chain);
        }
        let total_length = ancestors
            .iter()
            .map(|chain| chain.iter().map(|&j| spec.link_lengths[j]).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(AgentModel {
            spec,
            total_length,
            ancestors,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: AgentSpec = serde_json::from_str(text)?;
        Self::new(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).expect("agent spec serializes")
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn dof(&self) -> usize {
        self.spec.joints.len()
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.spec.joints
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.spec.link_lengths
    }

    pub fn keypoints(&self) -> &[KeypointSpec] {
        &self.spec.keypoints
    }

    pub fn chains(&self) -> &[ChainSpec] {
        &self.spec.chains
    }

    /// Longest base-to-leaf sum of link lengths.
    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Length entering the length ratio of the transferability metric.
    pub fn reference_length(&self) -> f64 {
        self.spec.reference_length.unwrap_or(self.total_length)
    }

    pub fn sensor_noise_sigma(&self) -> f64 {
        self.spec.sensor_noise_sigma
    }

    pub fn feature_encoding(&self) -> FeatureEncoding {
        self.spec.feature_encoding
    }

    /// Width of the feature vector produced by [`AgentModel::encode_features`].
    pub fn feature_width(&self) -> usize {
        match self.spec.feature_encoding {
            FeatureEncoding::JointAngles => self.dof(),
            FeatureEncoding::CartesianKeypoints => 3 * self.spec.keypoints.len(),
        }
    }

    pub fn keypoint_index(&self, name: &str) -> Result<usize> {
        self.spec
            .keypoints
            .iter()
            .position(|k| k.name == name)
            .ok_or_else(|| Error::UnknownKeypoint(name.to_string()))
    }

    pub fn chain(&self, name: &str) -> Result<&ChainSpec> {
        self.spec
            .chains
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownChain(name.to_string()))
    }

    /// Upper bound on the distance from the base origin to the chain tip.
    pub fn chain_reach(&self, chain: &str) -> Result<f64> {
        let chain = self.chain(chain)?;
        Ok(chain
            .joints
            .iter()
            .map(|&j| Vector3::from(self.spec.joints[j].offset).norm() + self.spec.link_lengths[j])
            .sum())
    }

    pub fn check_pose(&self, pose: &Pose) -> Result<()> {
        ensure_width("pose", self.dof(), pose.len())
    }

    pub fn within_limits(&self, pose: &Pose) -> bool {
        pose.len() == self.dof()
            && pose
                .angles
                .iter()
                .zip(&self.spec.joints)
                .all(|(&a, j)| a >= j.limits[0] && a <= j.limits[1])
    }

    /// Clamps every angle into its joint limits.
    pub fn clamp(&self, angles: &mut [f64]) {
        for (a, j) in angles.iter_mut().zip(&self.spec.joints) {
            *a = a.clamp(j.limits[0], j.limits[1]);
        }
    }

    /// The pose halfway between every joint's limits.
    pub fn mid_pose(&self) -> Pose {
        Pose::new(
            self.spec
                .joints
                .iter()
                .map(|j| 0.5 * (j.limits[0] + j.limits[1]))
                .collect(),
        )
    }

    pub(crate) fn frames(&self, angles: &[f64]) -> Frames {
        let n = self.dof();
        let mut rotations: Vec<Rotation3<f64>> = Vec::with_capacity(n);
        let mut frames = Frames {
            origins: Vec::with_capacity(n),
            axes: Vec::with_capacity(n),
            link_ends: Vec::with_capacity(n),
        };
        for (i, joint) in self.spec.joints.iter().enumerate() {
            let (parent_rot, parent_end) = match joint.parent {
                Some(p) => (rotations[p], frames.link_ends[p]),
                None => (Rotation3::identity(), Vector3::zeros()),
            };
            let axis_local = Vector3::from(joint.axis);
            let origin = parent_end + parent_rot * Vector3::from(joint.offset);
            let rot = parent_rot
                * Rotation3::from_axis_angle(&Unit::new_unchecked(axis_local), angles[i]);
            let end = origin + rot * Vector3::new(self.spec.link_lengths[i], 0.0, 0.0);
            frames.origins.push(origin);
            frames.axes.push(parent_rot * axis_local);
            frames.link_ends.push(end);
            rotations.push(rot);
        }
        frames
    }

    /// Keypoint positions in declared order, expressed in the base frame.
    pub fn forward_kinematics(&self, pose: &Pose) -> Result<Vec<Vector3<f64>>> {
        self.check_pose(pose)?;
        let frames = self.frames(&pose.angles);
        Ok(self
            .spec
            .keypoints
            .iter()
            .map(|k| frames.link_ends[k.link])
            .collect())
    }

    pub fn named_keypoints(&self, pose: &Pose) -> Result<Vec<(String, Vector3<f64>)>> {
        let positions = self.forward_kinematics(pose)?;
        Ok(self
            .spec
            .keypoints
            .iter()
            .map(|k| k.name.clone())
            .zip(positions)
            .collect())
    }

    pub(crate) fn ancestors(&self, joint: usize) -> &[usize] {
        &self.ancestors[joint]
    }

    /// Features for `pose` under the agent's encoding.
    pub fn encode_features(&self, pose: &Pose) -> Result<Vec<f64>> {
        self.check_pose(pose)?;
        Ok(match self.spec.feature_encoding {
            FeatureEncoding::JointAngles => pose.angles.clone(),
            FeatureEncoding::CartesianKeypoints => self
                .forward_kinematics(pose)?
                .iter()
                .flat_map(|p| [p.x, p.y, p.z])
                .collect(),
        })
    }

    /// Keypoint positions (declared order) recovered from a feature vector.
    pub fn decode_keypoints(&self, features: &[f64]) -> Result<Vec<Vector3<f64>>> {
        ensure_width("features", self.feature_width(), features.len())?;
        match self.spec.feature_encoding {
            FeatureEncoding::JointAngles => self.forward_kinematics(&Pose::new(features.to_vec())),
            FeatureEncoding::CartesianKeypoints => Ok(features
                .chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect()),
        }
    }
}

fn validate(spec: &AgentSpec) -> Result<()> {
    if spec.schema_version != AGENT_SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "unsupported agent schema_version {} (expected {AGENT_SCHEMA_VERSION})",
            spec.schema_version
        )));
    }
    if spec.name.is_empty() || spec.name.chars().any(char::is_whitespace) {
        return Err(Error::invalid(format!(
            "agent name `{}` must be non-empty without whitespace",
            spec.name
        )));
    }
    let n = spec.joints.len();
    if n == 0 {
        return Err(Error::invalid("agent has no joints"));
    }
    ensure_width("link_lengths", n, spec.link_lengths.len())?;
    for (i, joint) in spec.joints.iter().enumerate() {
        let norm = Vector3::from(joint.axis).norm();
        if !norm.is_finite() || (norm - 1.0).abs() > AXIS_NORM_TOLERANCE {
            return Err(Error::invalid(format!(
                "joint {i}: axis norm {norm} is not 1"
            )));
        }
        let [lo, hi] = joint.limits;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "joint {i}: limits [{lo}, {hi}] must be finite with lower < upper"
            )));
        }
        if let Some(p) = joint.parent {
            if p >= i {
                return Err(Error::invalid(format!(
                    "joint {i}: parent {p} must precede the joint"
                )));
            }
        }
        if joint.offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("joint {i}: offset is not finite")));
        }
    }
    for (i, &l) in spec.link_lengths.iter().enumerate() {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::invalid(format!("link {i}: length {l} must be > 0")));
        }
    }
    for k in &spec.keypoints {
        if k.link >= n {
            return Err(Error::invalid(format!(
                "keypoint `{}` references missing link {}",
                k.name, k.link
            )));
        }
    }
    for (i, k) in spec.keypoints.iter().enumerate() {
        if spec.keypoints[..i].iter().any(|o| o.name == k.name) {
            return Err(Error::invalid(format!("duplicate keypoint `{}`", k.name)));
        }
    }
    for c in &spec.chains {
        let Some(&first) = c.joints.first() else {
            return Err(Error::invalid(format!("chain `{}` is empty", c.name)));
        };
        if c.joints.iter().any(|&j| j >= n) {
            return Err(Error::invalid(format!(
                "chain `{}` references a missing joint",
                c.name
            )));
        }
        if spec.joints[first].parent.is_some() {
            return Err(Error::invalid(format!(
                "chain `{}` must start at a base joint",
                c.name
            )));
        }
        for w in c.joints.windows(2) {
            if spec.joints[w[1]].parent != Some(w[0]) {
                return Err(Error::invalid(format!(
                    "chain `{}` is not contiguous at joint {}",
                    c.name, w[1]
                )));
            }
        }
    }
    if !(spec.sensor_noise_sigma.is_finite() && spec.sensor_noise_sigma >= 0.0) {
        return Err(Error::invalid("sensor_noise_sigma must be >= 0"));
    }
    if let Some(l) = spec.reference_length {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::invalid("reference_length must be > 0"));
        }
    }
    Ok(())
}

/// Builds a single serial chain named `arm` with one keypoint `tip`.
///
/// Mostly useful for tests and small experiments: joint `i` rotates about
/// `axes[i]` with the given limits and carries a link of `lengths[i]`.
pub fn serial_arm(
    name: &str,
    axes: &[[f64; 3]],
    lengths: &[f64],
    limits: &[[f64; 2]],
) -> Result<AgentModel> {
    ensure_width("lengths", axes.len(), lengths.len())?;
    ensure_width("limits", axes.len(), limits.len())?;
    let joints = axes
        .iter()
        .zip(limits)
        .enumerate()
        .map(|(i, (axis, lim))| JointSpec {
            name: format!("j{i}"),
            axis: *axis,
            limits: *lim,
            parent: i.checked_sub(1),
            offset: [0.0; 3],
        })
        .collect();
    AgentModel::new(AgentSpec {
        schema_version: AGENT_SCHEMA_VERSION,
        name: name.to_string(),
        joints,
        link_lengths: lengths.to_vec(),
        keypoints: vec![KeypointSpec {
            name: "tip".into(),
            link: axes.len() - 1,
        }],
        chains: vec![ChainSpec {
            name: "arm".into(),
            joints: (0..axes.len()).collect(),
        }],
        sensor_noise_sigma: 0.0,
        feature_encoding: FeatureEncoding::CartesianKeypoints,
        reference_length: None,
    })
}

/// Planar arm rotating about z with links `lengths` and limits `[-pi, pi]`.
pub fn planar_arm(name: &str, lengths: &[f64]) -> Result<AgentModel> {
    let pi = std::f64::consts::PI;
    serial_arm(
        name,
        &vec![[0.0, 0.0, 1.0]; lengths.len()],
        lengths,
        &vec![[-pi, pi]; lengths.len()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn one_link_tip_at_identity() {
        let arm = planar_arm("one", &[1.0]).unwrap();
        let tip = arm.forward_kinematics(&Pose::new(vec![0.0])).unwrap()[0];
        assert!((tip - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn two_link_right_angle() {
        let arm = planar_arm("two", &[1.0, 1.0]).unwrap();
        let tip = arm
            .forward_kinematics(&Pose::new(vec![0.0, FRAC_PI_2]))
            .unwrap()[0];
        assert!((tip - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pose_width_is_checked() {
        let arm = planar_arm("two", &[1.0, 1.0]).unwrap();
        let err = arm.forward_kinematics(&Pose::new(vec![0.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                got: 1,
                ..
            }
        ));
    }

    #[test]
    fn rejects_bad_specs() {
        let good = planar_arm("a", &[1.0, 0.5]).unwrap().spec().clone();

        let mut s = good.clone();
        s.joints[0].limits = [1.0, -1.0];
        assert!(AgentModel::new(s).is_err());

        let mut s = good.clone();
        s.joints[1].axis = [0.0, 0.0, 1.1];
        assert!(AgentModel::new(s).is_err());

        let mut s = good.clone();
        s.link_lengths[1] = 0.0;
        assert!(AgentModel::new(s).is_err());

        let mut s = good.clone();
        s.chains[0].joints = vec![1];
        assert!(AgentModel::new(s).is_err());

        let mut s = good.clone();
        s.sensor_noise_sigma = -0.1;
        assert!(AgentModel::new(s).is_err());

        let mut s = good;
        s.joints[0].limits = [f64::NEG_INFINITY, 0.0];
        assert!(AgentModel::new(s).is_err());
    }

    #[test]
    fn total_length_follows_longest_branch() {
        let mut spec = planar_arm("a", &[1.0, 0.5]).unwrap().spec().clone();
        spec.joints.push(JointSpec {
            name: "branch".into(),
            axis: [0.0, 0.0, 1.0],
            limits: [-1.0, 1.0],
            parent: Some(0),
            offset: [0.0; 3],
        });
        spec.link_lengths.push(2.0);
        let agent = AgentModel::new(spec).unwrap();
        assert_eq!(agent.total_length(), 3.0);
        assert_eq!(agent.reference_length(), 3.0);
    }

    #[test]
    fn json_round_trip() {
        let arm = planar_arm("a", &[1.0, 0.5]).unwrap();
        let back = AgentModel::from_json(&arm.to_json()).unwrap();
        assert_eq!(arm, back);
    }

    #[test]
    fn joint_encoding_decodes_through_fk() {
        let mut spec = planar_arm("a", &[1.0, 1.0]).unwrap().spec().clone();
        spec.feature_encoding = FeatureEncoding::JointAngles;
        let agent = AgentModel::new(spec).unwrap();
        let pose = Pose::new(vec![0.0, FRAC_PI_2]);
        let features = agent.encode_features(&pose).unwrap();
        assert_eq!(features, pose.angles);
        let kp = agent.decode_keypoints(&features).unwrap();
        assert!((kp[0] - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }
}
