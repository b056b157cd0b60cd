//! Forward kinematics, positional Jacobians, manipulability and sampled
//! workspaces for revolute-joint agents.

mod agent;
mod workspace;

use nalgebra::{DMatrix, Matrix3xX, Vector3};

pub(crate) use agent::Frames;
pub use agent::{
    planar_arm, serial_arm, AgentModel, AgentSpec, ChainSpec, FeatureEncoding, JointSpec,
    KeypointSpec, Pose, AGENT_SCHEMA_VERSION,
};
pub use workspace::{sample_workspace, sample_workspace_within, Aabb, CellIndex, WorkspaceGrid};

use crate::error::Result;

impl AgentModel {
    /// Positional Jacobian of a chain tip with respect to the chain joints.
    ///
    /// Column `k` is `axis_k x (tip - origin_k)` for the `k`-th chain joint.
    pub fn jacobian(&self, pose: &Pose, chain: &str) -> Result<Matrix3xX<f64>> {
        self.check_pose(pose)?;
        let chain = self.chain(chain)?;
        let frames = self.frames(&pose.angles);
        Ok(chain_jacobian(&frames, &chain.joints))
    }

    /// Yoshikawa manipulability of a chain, `sqrt(det(J J^T))`.
    ///
    /// Chains with fewer than three joints use the Gram matrix `J^T J`
    /// instead; both equal the product of the singular values of `J`.
    pub fn manipulability(&self, pose: &Pose, chain: &str) -> Result<f64> {
        Ok(manipulability_of(&self.jacobian(pose, chain)?))
    }

    /// Jacobian of one keypoint with respect to every joint of the agent
    /// (zero columns for joints that do not move it).
    pub(crate) fn keypoint_jacobian_into(
        &self,
        frames: &Frames,
        link: usize,
        out: &mut [Vector3<f64>],
    ) {
        out.iter_mut().for_each(|c| *c = Vector3::zeros());
        let p = frames.link_ends[link];
        for &j in self.ancestors(link) {
            out[j] = column(&frames.axes[j], &frames.origins[j], &p);
        }
    }
}

pub(crate) fn chain_jacobian(frames: &Frames, joints: &[usize]) -> Matrix3xX<f64> {
    let tip = frames.link_ends[*joints.last().expect("chains are non-empty")];
    let columns: Vec<Vector3<f64>> = joints
        .iter()
        .map(|&j| column(&frames.axes[j], &frames.origins[j], &tip))
        .collect();
    Matrix3xX::from_columns(&columns)
}

fn column(axis: &Vector3<f64>, origin: &Vector3<f64>, point: &Vector3<f64>) -> Vector3<f64> {
    axis.cross(&(point - origin))
}

/// `sqrt(det(G))` for the smaller Gram matrix of `j`, clamped at zero.
pub fn manipulability_of(j: &Matrix3xX<f64>) -> f64 {
    let j = DMatrix::from_column_slice(3, j.ncols(), j.as_slice());
    let gram = if j.ncols() >= 3 {
        &j * j.transpose()
    } else {
        j.transpose() * &j
    };
    gram.determinant().max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn two_link_manipulability_values() {
        let arm = planar_arm("a", &[1.0, 1.0]).unwrap();
        let m = arm
            .manipulability(&Pose::new(vec![0.3, FRAC_PI_2]), "arm")
            .unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let m = arm
            .manipulability(&Pose::new(vec![0.3, 0.0]), "arm")
            .unwrap();
        assert!(m.abs() < 1e-12);

        let arm = planar_arm("b", &[2.0, 3.0]).unwrap();
        let m = arm
            .manipulability(&Pose::new(vec![-1.0, PI / 6.0]), "arm")
            .unwrap();
        assert!((m - 3.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_chain_is_rejected() {
        let arm = planar_arm("a", &[1.0, 1.0]).unwrap();
        let err = arm.jacobian(&Pose::zeros(2), "leg").unwrap_err();
        assert!(matches!(err, crate::Error::UnknownChain(_)));
    }

    #[test]
    fn jacobian_at_limits_is_finite() {
        let arm = serial_arm(
            "lim",
            &[
                [0.0, 0.0, 1.0],
                [0.0, 1.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            &[0.3, 0.25, 0.2, 0.1],
            &[[-1.0, 1.0], [-0.5, 2.0], [-3.0, 3.0], [0.0, 2.5]],
        )
        .unwrap();
        for pick in [0usize, 1] {
            let pose = Pose::new(arm.joints().iter().map(|j| j.limits[pick]).collect());
            let j = arm.jacobian(&pose, "arm").unwrap();
            assert!(j.iter().all(|v| v.is_finite()));
            assert!(arm.manipulability(&pose, "arm").unwrap().is_finite());
        }
    }

    #[test]
    fn planar_jacobian_closed_form() {
        let (l1, l2) = (0.7, 0.4);
        let arm = planar_arm("a", &[l1, l2]).unwrap();
        let (t1, t2) = (0.4_f64, -1.1_f64);
        let j = arm.jacobian(&Pose::new(vec![t1, t2]), "arm").unwrap();
        let expected = [
            [-l1 * t1.sin() - l2 * (t1 + t2).sin(), -l2 * (t1 + t2).sin()],
            [l1 * t1.cos() + l2 * (t1 + t2).cos(), l2 * (t1 + t2).cos()],
            [0.0, 0.0],
        ];
        for r in 0..3 {
            for c in 0..2 {
                assert!((j[(r, c)] - expected[r][c]).abs() < 1e-14);
            }
        }
    }
}
