//! Synthetic two-armed agents used by the reproduction experiment.
//!
//! Three agents share a torso-centered base frame with the arms' shoulders on
//! the y axis:
//! - `small_humanoid`: short arms with four joints each (shoulder yaw, pitch,
//!   upper-arm roll, elbow), cartesian keypoints
//! - `large_humanoid`: long arms with three joints each (no upper-arm roll),
//!   cartesian keypoints
//! - `robot_arm`: a two-armed robot larger than both humanoids with three
//!   joints per arm
//!
//! Each agent exposes `left_elbow`, `left_wrist`, `right_elbow`, `right_wrist`
//! keypoints and `left_arm` / `right_arm` chains.

use crate::error::Result;
use crate::kinematics::{
    AgentModel, AgentSpec, ChainSpec, FeatureEncoding, JointSpec, KeypointSpec,
    AGENT_SCHEMA_VERSION,
};

const X: [f64; 3] = [1.0, 0.0, 0.0];
const Y: [f64; 3] = [0.0, 1.0, 0.0];
const Z: [f64; 3] = [0.0, 0.0, 1.0];

/// One revolute joint of an arm, described for the left side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmJoint {
    pub name: &'static str,
    pub axis: [f64; 3],
    pub limits: [f64; 2],
    pub length: f64,
}

/// A symmetric two-armed agent. The right arm mirrors the left through the
/// xz plane, so limits of joints about x or z are negated and swapped.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoArmDesign {
    pub name: String,
    pub shoulder_half_width: f64,
    pub arm: Vec<ArmJoint>,
    /// Index into `arm` of the joint whose link ends at the elbow.
    pub elbow_link: usize,
    pub sensor_noise_sigma: f64,
    pub encoding: FeatureEncoding,
    pub reference_length: Option<f64>,
}

impl TwoArmDesign {
    pub fn build(&self) -> Result<AgentModel> {
        let n = self.arm.len();
        let mut joints = Vec::with_capacity(2 * n);
        let mut link_lengths = Vec::with_capacity(2 * n);
        for (side, sign) in [("left", 1.0), ("right", -1.0)] {
            let base = joints.len();
            for (i, j) in self.arm.iter().enumerate() {
                let mirrored = sign < 0.0 && j.axis != Y;
                let limits = if mirrored {
                    [-j.limits[1], -j.limits[0]]
                } else {
                    j.limits
                };
                joints.push(JointSpec {
                    name: format!("{side}_{}", j.name),
                    axis: j.axis,
                    limits,
                    parent: if i == 0 { None } else { Some(base + i - 1) },
                    offset: if i == 0 {
                        [0.0, sign * self.shoulder_half_width, 0.0]
                    } else {
                        [0.0; 3]
                    },
                });
                link_lengths.push(j.length);
            }
        }
        let keypoints = ["left", "right"]
            .iter()
            .enumerate()
            .flat_map(|(s, side)| {
                [
                    KeypointSpec {
                        name: format!("{side}_elbow"),
                        link: s * n + self.elbow_link,
                    },
                    KeypointSpec {
                        name: format!("{side}_wrist"),
                        link: s * n + n - 1,
                    },
                ]
            })
            .collect();
        let chains = vec![
            ChainSpec {
                name: "left_arm".into(),
                joints: (0..n).collect(),
            },
            ChainSpec {
                name: "right_arm".into(),
                joints: (n..2 * n).collect(),
            },
        ];
        AgentModel::new(AgentSpec {
            schema_version: AGENT_SCHEMA_VERSION,
            name: self.name.clone(),
            joints,
            link_lengths,
            keypoints,
            chains,
            sensor_noise_sigma: self.sensor_noise_sigma,
            feature_encoding: self.encoding,
            reference_length: self.reference_length,
        })
    }
}

const SHOULDER_LINK: f64 = 0.02;

fn humanoid_arm(upper: f64, fore: f64, roll: bool) -> (Vec<ArmJoint>, usize) {
    let mut arm = vec![
        ArmJoint {
            name: "shoulder_yaw",
            axis: Z,
            limits: [-0.7, 1.4],
            length: SHOULDER_LINK,
        },
        ArmJoint {
            name: "shoulder_pitch",
            axis: Y,
            limits: [-1.3, 1.3],
            length: if roll { SHOULDER_LINK } else { upper },
        },
    ];
    if roll {
        arm.push(ArmJoint {
            name: "upper_arm_roll",
            axis: X,
            limits: [-1.2, 1.2],
            length: upper,
        });
    }
    arm.push(ArmJoint {
        name: "elbow",
        axis: Z,
        limits: [0.05, 2.0],
        length: fore,
    });
    let elbow_link = arm.len() - 2;
    (arm, elbow_link)
}

pub fn small_humanoid_design() -> TwoArmDesign {
    let (arm, elbow_link) = humanoid_arm(0.22, 0.20, true);
    TwoArmDesign {
        name: "small_humanoid".into(),
        shoulder_half_width: 0.16,
        arm,
        elbow_link,
        sensor_noise_sigma: 0.020,
        encoding: FeatureEncoding::CartesianKeypoints,
        reference_length: None,
    }
}

pub fn large_humanoid_design() -> TwoArmDesign {
    let (arm, elbow_link) = humanoid_arm(0.30, 0.27, false);
    TwoArmDesign {
        name: "large_humanoid".into(),
        shoulder_half_width: 0.21,
        arm,
        elbow_link,
        sensor_noise_sigma: 0.0076,
        encoding: FeatureEncoding::CartesianKeypoints,
        reference_length: None,
    }
}

pub fn robot_arm_design() -> TwoArmDesign {
    let arm = vec![
        ArmJoint {
            name: "shoulder_yaw",
            axis: Z,
            limits: [-0.5, 1.2],
            length: SHOULDER_LINK,
        },
        ArmJoint {
            name: "shoulder_pitch",
            axis: Y,
            limits: [-1.1, 1.1],
            length: 0.34,
        },
        ArmJoint {
            name: "elbow",
            axis: Z,
            limits: [0.05, 2.2],
            length: 0.26,
        },
    ];
    TwoArmDesign {
        name: "robot_arm".into(),
        shoulder_half_width: 0.26,
        arm,
        elbow_link: 1,
        sensor_noise_sigma: 0.0076,
        encoding: FeatureEncoding::CartesianKeypoints,
        reference_length: None,
    }
}

pub fn small_humanoid() -> AgentModel {
    small_humanoid_design().build().expect("valid fixture")
}

pub fn large_humanoid() -> AgentModel {
    large_humanoid_design().build().expect("valid fixture")
}

pub fn robot_arm() -> AgentModel {
    robot_arm_design().build().expect("valid fixture")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose;

    #[test]
    fn fixtures_are_valid_and_mirrored() {
        for agent in [small_humanoid(), large_humanoid(), robot_arm()] {
            let n = agent.dof() / 2;
            let mid = agent.mid_pose();
            let mut mirrored = mid.angles.clone();
            for (i, j) in agent.joints()[..n].iter().enumerate() {
                if j.axis != Y {
                    mirrored[n + i] = -mid.angles[i];
                } else {
                    mirrored[n + i] = mid.angles[i];
                }
            }
            let kp = agent.forward_kinematics(&Pose::new(mirrored)).unwrap();
            assert!((kp[0].y + kp[2].y).abs() < 1e-12, "{}", agent.name());
            assert!((kp[1].x - kp[3].x).abs() < 1e-12);
            assert!((kp[1].z - kp[3].z).abs() < 1e-12);
        }
        assert_eq!(small_humanoid().feature_width(), 12);
        assert_eq!(robot_arm().feature_width(), 12);
    }
}
