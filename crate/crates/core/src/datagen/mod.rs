//! Paired motion datasets synthesized by mimicry: a leader agent follows a
//! random joint-space trajectory and a follower agent imitates its keypoints.

mod dataset;
mod mimic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use dataset::{AgentSide, MotionDataset, Provenance, Sample};
pub use mimic::{mimic, CorrespondenceMap, KeypointPair, MimicConfig, MimicOutcome};

use crate::error::{Error, Result};
use crate::kinematics::{AgentModel, Pose};

/// Piecewise-linear joint-space motion through `waypoints` random poses
/// drawn uniformly within the joint limits, sampled at `n` evenly spaced
/// points from the first waypoint to the last.
pub fn sample_source_motion(
    agent: &AgentModel,
    n: usize,
    seed: u64,
    waypoints: usize,
) -> Result<Vec<Pose>> {
    if n == 0 {
        return Err(Error::invalid("motion length must be > 0"));
    }
    if waypoints == 0 {
        return Err(Error::invalid("need at least one waypoint"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..waypoints)
        .map(|_| {
            agent
                .joints()
                .iter()
                .map(|j| rng.random_range(j.limits[0]..=j.limits[1]))
                .collect()
        })
        .collect();
    if waypoints == 1 || n == 1 {
        return Ok(vec![Pose::new(points[0].clone()); n]);
    }
    let segments = (waypoints - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64 * segments;
            let seg = (t.floor() as usize).min(waypoints - 2);
            let u = t - seg as f64;
            let (p, q) = (&points[seg], &points[seg + 1]);
            let mut angles: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + u * (b - a)).collect();
            // Rounding in `a + u (b - a)` can step past a limit by an ulp.
            agent.clamp(&mut angles);
            Pose::new(angles)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GenerationConfig {
    /// Number of random waypoints in the leader trajectory; `None` uses one
    /// waypoint per 20 frames.
    pub waypoints: Option<usize>,
    pub mimic: MimicConfig,
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub dataset: MotionDataset,
    /// Mimicry residual per frame (meters).
    pub residuals: Vec<f64>,
    /// Follower poses per frame.
    pub follower_poses: Vec<Pose>,
}

impl GeneratedDataset {
    pub fn mean_residual(&self) -> f64 {
        self.residuals.iter().sum::<f64>() / self.residuals.len() as f64
    }
}

/// Samples leader motion and has the follower mimic it frame by frame,
/// warm-starting each frame from the previous solution.
///
/// Side A of the dataset is the leader, side B the follower.
pub fn generate_paired_dataset(
    leader: &AgentModel,
    follower: &AgentModel,
    map: &CorrespondenceMap,
    n: usize,
    seed: u64,
    config: &GenerationConfig,
) -> Result<GeneratedDataset> {
    let resolved = map.resolve(leader, follower)?;
    let waypoints = config.waypoints.unwrap_or((n / 20).max(2));
    let motion = sample_source_motion(leader, n, seed, waypoints)?;

    let mut pose = follower.mid_pose();
    let mut samples = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut follower_poses = Vec::with_capacity(n);
    for (frame, leader_pose) in motion.iter().enumerate() {
        let leader_points = leader.forward_kinematics(leader_pose)?;
        let targets: Vec<mimic::Target> = resolved
            .iter()
            .map(|&(la, fb, weight)| mimic::Target {
                keypoint: fb,
                point: leader_points[la] * map.scale,
                weight,
            })
            .collect();
        let mut frame_config = config.mimic;
        if frame == 0 {
            // No warm start on the first frame.
            frame_config.max_iters *= 4;
        }
        let outcome = mimic::mimic_targets(follower, &targets, &pose, &frame_config)?;
        if !outcome.residual.is_finite() {
            return Err(Error::invalid(format!("mimic diverged at frame {frame}")));
        }
        pose = outcome.pose;
        samples.push(Sample {
            a: leader.encode_features(leader_pose)?,
            b: follower.encode_features(&pose)?,
        });
        residuals.push(outcome.residual);
        follower_poses.push(pose.clone());
    }

    let dataset = MotionDataset::new(
        AgentSide::of(leader),
        AgentSide::of(follower),
        samples,
        Provenance {
            seed,
            leader: leader.name().to_string(),
            scale: map.scale,
            waypoints,
            mimic: config.mimic,
            noise_a: 0.0,
            noise_b: 0.0,
            noise_seed: None,
        },
    )?;
    Ok(GeneratedDataset {
        dataset,
        residuals,
        follower_poses,
    })
}

/// Adds independent zero-mean Gaussian noise to every feature component.
///
/// Sigmas are in feature units (meters for keypoints, radians for joint
/// angles). A zero sigma leaves that side untouched.
pub fn add_sensor_noise(
    dataset: &MotionDataset,
    sigma_a: f64,
    sigma_b: f64,
    seed: u64,
) -> Result<MotionDataset> {
    if !(sigma_a >= 0.0 && sigma_b >= 0.0 && sigma_a.is_finite() && sigma_b.is_finite()) {
        return Err(Error::invalid("noise sigmas must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = dataset.clone();
    for s in &mut out.samples {
        for (values, sigma) in [(&mut s.a, sigma_a), (&mut s.b, sigma_b)] {
            for v in values.iter_mut() {
                let z: f64 = normal.sample(&mut rng);
                if sigma > 0.0 {
                    *v += sigma * z;
                }
            }
        }
    }
    out.provenance.noise_a = (dataset.provenance.noise_a.powi(2) + sigma_a.powi(2)).sqrt();
    out.provenance.noise_b = (dataset.provenance.noise_b.powi(2) + sigma_b.powi(2)).sqrt();
    out.provenance.noise_seed = Some(seed);
    Ok(out)
}

/// Capture-noise sigma for an agent in its own feature units. Joint angles
/// convert the positional sigma to radians over the agent's total length.
pub fn feature_noise_sigma(agent: &AgentModel) -> f64 {
    match agent.feature_encoding() {
        crate::kinematics::FeatureEncoding::CartesianKeypoints => agent.sensor_noise_sigma(),
        crate::kinematics::FeatureEncoding::JointAngles => {
            agent.sensor_noise_sigma() / agent.total_length()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::planar_arm;

    #[test]
    fn single_waypoint_is_constant() {
        let arm = planar_arm("a", &[0.5, 0.5]).unwrap();
        let m = sample_source_motion(&arm, 7, 3, 1).unwrap();
        assert_eq!(m.len(), 7);
        assert!(m.iter().all(|p| *p == m[0]));
    }

    #[test]
    fn motion_respects_limits_and_seed() {
        let arm = planar_arm("a", &[0.5, 0.5]).unwrap();
        let m = sample_source_motion(&arm, 200, 5, 9).unwrap();
        assert!(m.iter().all(|p| arm.within_limits(p)));
        assert_eq!(m, sample_source_motion(&arm, 200, 5, 9).unwrap());
        assert_ne!(m, sample_source_motion(&arm, 200, 6, 9).unwrap());
    }

    #[test]
    fn zero_noise_is_identity() {
        let arm = planar_arm("a", &[0.5, 0.5]).unwrap();
        let map = CorrespondenceMap::matching_names(&arm, &arm).unwrap();
        let g =
            generate_paired_dataset(&arm, &arm, &map, 30, 1, &GenerationConfig::default()).unwrap();
        let noisy = add_sensor_noise(&g.dataset, 0.0, 0.0, 4).unwrap();
        assert_eq!(noisy.samples, g.dataset.samples);
        assert!(add_sensor_noise(&g.dataset, -1.0, 0.0, 4).is_err());
    }

    #[test]
    fn dataset_size_and_residuals() {
        let a = planar_arm("a", &[0.5, 0.5]).unwrap();
        let b = planar_arm("b", &[0.4, 0.3]).unwrap();
        let map = CorrespondenceMap::matching_names(&a, &b).unwrap();
        assert!((map.scale - 0.7).abs() < 1e-15);
        let g = generate_paired_dataset(&a, &b, &map, 57, 2, &GenerationConfig::default()).unwrap();
        assert_eq!(g.dataset.len(), 57);
        assert_eq!(g.residuals.len(), 57);
        assert!(g.residuals.iter().all(|r| r.is_finite() && *r >= 0.0));
        assert!(g.follower_poses.iter().all(|p| b.within_limits(p)));
    }
}
