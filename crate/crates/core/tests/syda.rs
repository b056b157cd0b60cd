use chainmap::datagen::{AgentSide, MotionDataset, Provenance, Sample};
use chainmap::kinematics::{planar_arm, FeatureEncoding, Pose};
use chainmap::neuralnet::TrainConfig;
use chainmap::syda::{
    aggregate, avg_distance_error, chain_map, keypoint_distances, train_direct, train_syda,
    Architecture, Distances, FeatureMap,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn side(name: &str, width: usize) -> AgentSide {
    AgentSide {
        name: name.into(),
        encoding: FeatureEncoding::CartesianKeypoints,
        width,
    }
}

fn dataset(a: &str, b: &str, rows: Vec<(Vec<f64>, Vec<f64>)>) -> MotionDataset {
    let (wa, wb) = (rows[0].0.len(), rows[0].1.len());
    let samples = rows.into_iter().map(|(a, b)| Sample { a, b }).collect();
    MotionDataset::new(side(a, wa), side(b, wb), samples, Provenance::default()).unwrap()
}

fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, width: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Four features driven by three free coordinates, so a three-wide latent
/// can represent them exactly.
fn embedded_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    uniform_rows(rng, n, 3)
        .into_iter()
        .map(|x| vec![x[0], x[1], x[2], 0.5 * (x[0] - x[2])])
        .collect()
}

fn config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

fn arch(latent: usize) -> Architecture {
    Architecture {
        hidden_layers: 2,
        latent_width: Some(latent),
        hidden_widths: Some(vec![32, 16]),
    }
}

fn mean_abs(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    let n: usize = truth.iter().map(Vec::len).sum();
    pred.iter()
        .zip(truth)
        .flat_map(|(p, t)| p.iter().zip(t).map(|(x, y)| (x - y).abs()))
        .sum::<f64>()
        / n as f64
}

#[test]
fn identical_agents_map_almost_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows = embedded_rows(&mut rng, 400);
    let ds = dataset(
        "a",
        "b",
        rows.iter().map(|r| (r.clone(), r.clone())).collect(),
    );
    let (model, _) = train_syda(&ds, &arch(3), &config(300, 2)).unwrap();
    let test = embedded_rows(&mut rng, 200);
    let pred: Vec<Vec<f64>> = test.iter().map(|x| model.map_forward(x).unwrap()).collect();
    let back: Vec<Vec<f64>> = test
        .iter()
        .map(|x| model.map_backward(x).unwrap())
        .collect();
    // Uniform on [-1, 1] has std 1/sqrt(3).
    let std = 1.0 / 3f64.sqrt();
    let err = mean_abs(&pred, &test);
    assert!(err < 0.05 * std, "forward error {err}");
    assert!(mean_abs(&back, &test) < 0.05 * std);
}

/// Mean absolute test error of the least-squares affine map fit on `train`.
fn least_squares_error(train: &[(Vec<f64>, Vec<f64>)], test: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let design = |rows: &[(Vec<f64>, Vec<f64>)]| {
        let w = rows[0].0.len();
        DMatrix::from_fn(
            rows.len(),
            w + 1,
            |i, j| if j < w { rows[i].0[j] } else { 1.0 },
        )
    };
    let targets = |rows: &[(Vec<f64>, Vec<f64>)]| {
        DMatrix::from_fn(rows.len(), rows[0].1.len(), |i, j| rows[i].1[j])
    };
    let x = design(train);
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&targets(train), 1e-12)
        .unwrap();
    let pred = design(test) * coef;
    (pred - targets(test)).abs().mean()
}

#[test]
fn linear_relation_is_learned_close_to_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut make = |n: usize| -> Vec<(Vec<f64>, Vec<f64>)> {
        embedded_rows(&mut rng, n)
            .into_iter()
            .map(|a| {
                let b = a.iter().map(|v| 0.5 * v + noise.sample(&mut rng)).collect();
                (a, b)
            })
            .collect()
    };
    let train = make(600);
    let test = make(300);
    let oracle = least_squares_error(&train, &test);
    let ds = dataset("a", "b", train.clone());
    let truth: Vec<Vec<f64>> = test.iter().map(|r| r.1.clone()).collect();

    let slow = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 64,
        ..config(800, 4)
    };
    let (direct, _) = train_direct(&ds, &arch(3), &slow).unwrap();
    let pred: Vec<Vec<f64>> = test
        .iter()
        .map(|r| direct.map_forward(&r.0).unwrap())
        .collect();
    let direct_err = mean_abs(&pred, &truth);
    assert!(
        direct_err <= 1.1 * oracle + 1e-3,
        "direct {direct_err} vs oracle {oracle}"
    );

    let (syda, _) = train_syda(&ds, &arch(3), &slow).unwrap();
    let pred: Vec<Vec<f64>> = test
        .iter()
        .map(|r| syda.map_forward(&r.0).unwrap())
        .collect();
    let syda_err = mean_abs(&pred, &truth);
    assert!(
        syda_err <= 1.1 * oracle + 1e-3,
        "syda {syda_err} vs oracle {oracle}"
    );
}

#[test]
fn training_losses_decrease() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = uniform_rows(&mut rng, 300, 4)
        .into_iter()
        .map(|a| {
            let b = vec![
                a[0] * a[1],
                a[2].sin(),
                a[3] + a[0],
                a[1] - a[2],
                a[3] * 0.3,
            ];
            (a, b)
        })
        .collect();
    let ds = dataset("a", "b", rows);
    for seed in 0..5 {
        let (_, report) = train_syda(&ds, &arch(3), &config(60, seed)).unwrap();
        let first = &report.epochs[0];
        let last = report.epochs.last().unwrap();
        assert!(
            last.l_latent < first.l_latent,
            "seed {seed}: latent loss rose"
        );
        assert!(
            last.total < 0.5 * first.total,
            "seed {seed}: total loss barely fell"
        );
        let (_, direct) = train_direct(&ds, &arch(3), &config(60, seed)).unwrap();
        assert!(direct.epochs.last().unwrap().total < 0.5 * direct.epochs[0].total);
    }
}

#[test]
fn outputs_stay_finite_out_of_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows = uniform_rows(&mut rng, 200, 3);
    let ds = dataset(
        "a",
        "b",
        rows.iter()
            .map(|r| (r.clone(), r.iter().map(|v| 2.0 * v).collect()))
            .collect(),
    );
    let (model, _) = train_syda(&ds, &arch(2), &config(20, 7)).unwrap();
    // Three standard deviations beyond the training range on every axis.
    let far = vec![1.0 + 3.0 / 3f64.sqrt(); 3];
    assert!(model
        .map_forward(&far)
        .unwrap()
        .iter()
        .all(|v| v.is_finite()));
    let neg: Vec<f64> = far.iter().map(|v| -2.0 * v).collect();
    assert!(model
        .map_backward(&neg)
        .unwrap()
        .iter()
        .all(|v| v.is_finite()));
}

#[test]
fn constant_offset_gives_exact_distance_error() {
    let arm = planar_arm("arm", &[0.5, 0.4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let pose = Pose::new(vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            arm.encode_features(&pose).unwrap()
        })
        .collect();
    let shifted: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            t.chunks(3)
                .flat_map(|p| [p[0] + 0.03, p[1] + 0.04, p[2]])
                .collect()
        })
        .collect();
    let report = avg_distance_error(&arm, &shifted, &truth, &[]).unwrap();
    assert!((report.total_mean - 0.05).abs() < 1e-12);
    assert!(report.total_std < 1e-12);
    for k in &report.keypoints {
        assert!((k.mean - 0.05).abs() < 1e-12 && k.std < 1e-12);
    }
    assert!(avg_distance_error(&arm, &shifted[..3], &truth, &[]).is_err());
}

#[test]
fn distance_error_matches_brute_force_mean() {
    let arm = planar_arm("arm", &[0.5, 0.4, 0.2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pose = || Pose::new((0..3).map(|_| rng.random_range(-1.5..1.5)).collect());
    let truth: Vec<Vec<f64>> = (0..40)
        .map(|_| arm.encode_features(&pose()).unwrap())
        .collect();
    let pred: Vec<Vec<f64>> = (0..40)
        .map(|_| arm.encode_features(&pose()).unwrap())
        .collect();
    let mut all = Vec::new();
    for (p, t) in pred.iter().zip(&truth) {
        for (a, b) in p.chunks(3).zip(t.chunks(3)) {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            all.push(d);
        }
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let std = (all.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
    let report = avg_distance_error(&arm, &pred, &truth, &[]).unwrap();
    assert!((report.total_mean - mean).abs() < 1e-12);
    assert!((report.total_std - std).abs() < 1e-12);

    // Pooling folds equals evaluating everything at once.
    let d = keypoint_distances(&arm, &pred, &truth, &[]).unwrap();
    let split = |r: std::ops::Range<usize>| Distances {
        keypoints: d.keypoints.clone(),
        values: d.values.iter().map(|v| v[r.clone()].to_vec()).collect(),
    };
    let pooled = aggregate(&[split(0..15), split(15..40)]).unwrap();
    assert!((pooled.total_mean - mean).abs() < 1e-12);
    assert_eq!(pooled.folds.len(), 2);
}

#[test]
fn chain_exposes_intermediate_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let xs = embedded_rows(&mut rng, 300);
    let ab = dataset(
        "a",
        "b",
        xs.iter()
            .map(|x| (x.clone(), x.iter().map(|v| 2.0 * v).collect()))
            .collect(),
    );
    let bc = dataset(
        "b",
        "c",
        xs.iter()
            .map(|x| {
                let b: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
                let c = vec![b[0] + b[1], b[2], -b[0], b[3]];
                (b, c)
            })
            .collect(),
    );
    let (m1, _) = train_syda(&ab, &arch(3), &config(150, 11)).unwrap();
    let (m2, _) = train_syda(&bc, &arch(3), &config(150, 12)).unwrap();
    let stages = [m1.forward(), m2.forward()];
    let x = vec![0.2, -0.4, 0.6, -0.2];
    let out = chain_map(&stages, &x).unwrap();
    assert_eq!(out.intermediates.len(), 1);
    assert_eq!(out.intermediates[0], m1.map_forward(&x).unwrap());
    assert_eq!(out.output, m2.map_forward(&out.intermediates[0]).unwrap());
    let expected = [0.4 - 0.8, 1.2, -0.4, -0.4];
    let err = mean_abs(std::slice::from_ref(&out.output), &[expected.to_vec()]);
    assert!(err < 0.15, "chain error {err}");

    let back = [m2.backward(), m1.backward()];
    assert_eq!(back[0].target(), "b");
    assert!(chain_map(&back, &out.output).is_ok());
    let wrong = [m2.forward(), m1.forward()];
    assert!(chain_map(&wrong, &x).is_err());
}
