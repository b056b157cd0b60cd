use std::collections::BTreeMap;

use chainmap::fixture;
use chainmap::kinematics::{Aabb, CellIndex, WorkspaceGrid};
use chainmap::transferability::{
    alpha_for_pair, analyze_pair, chain_transferability, dissimilarity, dissimilarity_sum,
    length_ratio, report, sigmoid, sufficient_ratio, transferability, WorkspaceOptions,
    MANIPULABILITY_FLOOR,
};

fn grid(cells: &[(CellIndex, f64)]) -> WorkspaceGrid {
    WorkspaceGrid {
        cell_size: 0.1,
        bounds: Aabb::cube(1.0),
        cells: cells.iter().copied().collect::<BTreeMap<_, _>>(),
        samples_used: cells.len(),
        seed: 0,
    }
}

#[test]
fn transferability_matches_hand_computed_table() {
    // (alpha, L, S, D, expected T)
    let cases = [
        (1.0, 1.0, 1.0, 0.0, 1.0),
        (1.0, 1.0, 1.0, 1.0, 1.0),
        (0.76, 0.5, 1.0, 0.3, 0.38),
        (0.76, 0.5, 0.0, 0.3, 0.266),
        (0.5, 0.8, 0.0, 0.0, 0.4),
        (0.5, 0.8, 0.0, 1.0, 0.0),
        (0.9, 0.664, 0.25, 0.6, 0.9 * 0.664 * (0.25 + 0.4 * 0.75)),
        (0.2, 1.0, 0.5, 0.5, 0.15),
        (1.0, 0.25, 0.75, 0.2, 0.25 * (0.75 + 0.8 * 0.25)),
        (0.38, 1.0, 0.4, 1.0, 0.152),
        (0.38, 0.9, 1.0, 0.73, 0.342),
        (0.1, 0.1, 0.1, 0.1, 0.01 * (0.1 + 0.9 * 0.9)),
    ];
    for (alpha, l, s, d, expected) in cases {
        let t = transferability(alpha, l, s, d).unwrap();
        assert!(
            (t - expected).abs() < 1e-12,
            "T({alpha}, {l}, {s}, {d}) = {t}, expected {expected}"
        );
        if s == 1.0 {
            assert!((t - alpha * l).abs() < 1e-12);
        }
        if s == 0.0 {
            assert!((t - alpha * l * (1.0 - d)).abs() < 1e-12);
        }
    }
}

#[test]
fn transferability_rejects_out_of_range_inputs() {
    assert!(transferability(0.0, 1.0, 0.5, 0.5).is_err());
    assert!(transferability(1.2, 1.0, 0.5, 0.5).is_err());
    assert!(transferability(0.5, 0.0, 0.5, 0.5).is_err());
    assert!(transferability(0.5, 1.0, -0.1, 0.5).is_err());
    assert!(transferability(0.5, 1.0, 0.5, f64::NAN).is_err());
}

#[test]
fn sigmoid_values_and_monotonicity() {
    assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    assert!((sigmoid(0.5) - 0.622_459_331_201_854_6).abs() < 1e-12);
    let xs: Vec<f64> = (-50..=50).map(|i| i as f64 * 0.3).collect();
    for w in xs.windows(2) {
        assert!(sigmoid(w[1]) >= sigmoid(w[0]));
    }
    assert_eq!(sigmoid(800.0), 1.0);
}

#[test]
fn grid_ratios_match_cell_counts() {
    let a = grid(&[
        ([0, 0, 0], 0.4),
        ([1, 0, 0], 0.2),
        ([2, 0, 0], 0.1),
        ([3, 0, 0], 0.3),
    ]);
    let b = grid(&[
        ([0, 0, 0], 0.5),
        ([1, 0, 0], 0.2),
        ([2, 0, 0], 0.05),
        ([9, 9, 9], 1.0),
    ]);
    // Cells 0 and 1 are sufficient; cell 2 lacks; cell 3 is unreached by B.
    assert_eq!(sufficient_ratio(&a, &b).unwrap(), 0.5);
    let sum = 0.1 * (0.1f64 / 0.05).ln() + 0.3 * (0.3 / MANIPULABILITY_FLOOR).ln();
    let got = dissimilarity_sum(&a, &b).unwrap().unwrap();
    assert!((got - sum).abs() < 1e-12);
    assert!((dissimilarity(&a, &b).unwrap() - sigmoid(sum)).abs() < 1e-12);

    let r = report("a", "b", (1.750, 1.162), &a, &b, 0.76).unwrap();
    let expected = 0.76 * (1.162 / 1.750) * (0.5 + (1.0 - sigmoid(sum)) * 0.5);
    assert!((r.transferability - expected).abs() < 1e-12);
    assert!((r.recomputed().unwrap() - r.transferability).abs() < 1e-12);

    assert_eq!(sufficient_ratio(&a, &a).unwrap(), 1.0);
    assert_eq!(dissimilarity_sum(&a, &a).unwrap(), None);
    assert_eq!(dissimilarity(&a, &a).unwrap(), 0.0);

    let mut other = b.clone();
    other.cell_size = 0.2;
    assert!(sufficient_ratio(&a, &other).is_err());
    assert!(sufficient_ratio(&grid(&[]), &b).is_err());
}

#[test]
fn length_ratio_and_alpha() {
    assert!((length_ratio(1.750, 1.162).unwrap() - 1.162 / 1.750).abs() < 1e-15);
    assert_eq!(length_ratio(1.162, 1.750).unwrap(), 1.0);
    assert!(length_ratio(0.0, 1.0).is_err());
    assert!((alpha_for_pair(0.019, 0.025, 0.019).unwrap() - 0.76).abs() < 1e-12);
    assert_eq!(alpha_for_pair(0.019, 0.019, 0.019).unwrap(), 1.0);
    assert_eq!(alpha_for_pair(0.0, 0.0, 0.0).unwrap(), 1.0);
    assert!(alpha_for_pair(-0.1, 0.1, 0.1).is_err());
    let t = chain_transferability(&[0.5, 0.4, 0.25]).unwrap();
    assert!((t - 0.05).abs() < 1e-15);
    assert!(chain_transferability(&[0.5, 1.5]).is_err());
}

#[test]
fn agent_against_itself_transfers_alpha() {
    let opts = WorkspaceOptions {
        n_samples: 4000,
        cell_size: None,
        seed: 3,
        chain_a: "left_arm".into(),
        chain_b: "left_arm".into(),
    };
    for agent in [fixture::small_humanoid(), fixture::robot_arm()] {
        let [ab, ba] = analyze_pair(&agent, &agent, &opts, 0.42).unwrap();
        for r in [ab, ba] {
            assert!((r.transferability - 0.42).abs() < 1e-12);
            assert_eq!(r.sufficient_ratio, 1.0);
        }
    }
}

#[test]
fn larger_agent_is_the_better_target() {
    let opts = WorkspaceOptions {
        n_samples: 20_000,
        cell_size: None,
        seed: 5,
        chain_a: "left_arm".into(),
        chain_b: "left_arm".into(),
    };
    let (small, large) = (fixture::small_humanoid(), fixture::large_humanoid());
    let [s2l, l2s] = analyze_pair(&small, &large, &opts, 1.0).unwrap();
    assert!(s2l.transferability > l2s.transferability);
    assert_eq!(s2l.length_ratio, 1.0);
    assert!(l2s.length_ratio < 1.0);
    for r in [&s2l, &l2s] {
        assert!((r.recomputed().unwrap() - r.transferability).abs() < 1e-12);
    }
}
