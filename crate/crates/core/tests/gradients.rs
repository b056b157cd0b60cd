use chainmap::neuralnet::{init_network, l1_loss, stack_specs, NetworkParams};
use chainmap::syda::{direct_loss_and_grads, syda_loss_and_grads, DualNets};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
/// Minimum |pred - target| for a loss term to count as away from its kink.
const KINK_MARGIN: f64 = 1e-3;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A target at least 0.2 away from `pred` in every component, so no L1 term
/// sits near its kink.
fn far_target(rng: &mut ChaCha8Rng, pred: &[f64]) -> Vec<f64> {
    pred.iter()
        .map(|p| {
            let d = rng.random_range(0.2..0.8);
            if rng.random_bool(0.5) {
                p + d
            } else {
                p - d
            }
        })
        .collect()
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn set_param(net: &mut NetworkParams, i: usize, value: f64) {
    *net.params_mut().nth(i).unwrap() = value;
}

fn param(net: &NetworkParams, i: usize) -> f64 {
    *net.params().nth(i).unwrap()
}

/// Central difference of `loss` with respect to parameter `i` of `nets[k]`.
fn fd_param(
    nets: &mut [NetworkParams],
    k: usize,
    i: usize,
    loss: &dyn Fn(&[NetworkParams]) -> f64,
) -> f64 {
    let orig = param(&nets[k], i);
    set_param(&mut nets[k], i, orig + STEP);
    let plus = loss(nets);
    set_param(&mut nets[k], i, orig - STEP);
    let minus = loss(nets);
    set_param(&mut nets[k], i, orig);
    (plus - minus) / (2.0 * STEP)
}

fn check_single_net(widths: &[usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = init_network(&stack_specs(widths), seed).unwrap();
    let x = random_vec(&mut rng, widths[0]);
    let pred = net.predict(&x).unwrap();
    let target = far_target(&mut rng, &pred);
    let trace = net.forward(&x).unwrap();
    let (_, upstream) = chainmap::neuralnet::l1_loss_and_grad(trace.output(), &target).unwrap();
    let (grads, d_input) = net.backward(&trace, &upstream).unwrap();
    let analytic: Vec<f64> = grads.values().copied().collect();
    assert_eq!(analytic.len(), net.param_count());

    let loss = |nets: &[NetworkParams]| l1_loss(&nets[0].predict(&x).unwrap(), &target);
    let mut nets = vec![net.clone()];
    for (i, g) in analytic.iter().enumerate() {
        let fd = fd_param(&mut nets, 0, i, &loss);
        assert!(
            relative_error(*g, fd) < TOLERANCE,
            "widths {widths:?} param {i}: analytic {g} vs fd {fd}"
        );
    }
    for (i, g) in d_input.iter().enumerate() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += STEP;
        xm[i] -= STEP;
        let fd = (l1_loss(&net.predict(&xp).unwrap(), &target)
            - l1_loss(&net.predict(&xm).unwrap(), &target))
            / (2.0 * STEP);
        assert!(relative_error(*g, fd) < TOLERANCE, "input {i}: {g} vs {fd}");
    }
}

#[test]
fn encoder_gradients_match_finite_differences() {
    for seed in 0..5 {
        check_single_net(&[12, 9, 6, 3], seed);
    }
}

#[test]
fn decoder_gradients_match_finite_differences() {
    for seed in 0..5 {
        check_single_net(&[3, 6, 9, 12], 10 + seed);
    }
}

#[test]
fn direct_stack_gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = init_network(&stack_specs(&[10, 8, 4]), seed).unwrap();
        let dec = init_network(&stack_specs(&[4, 8, 16]), seed + 100).unwrap();
        let net = enc.then(&dec).unwrap();
        let x = random_vec(&mut rng, 10);
        let target = far_target(&mut rng, &net.predict(&x).unwrap());
        let mut grads = net.zero_gradients();
        let loss = direct_loss_and_grads(&net, &x, &target, &mut grads).unwrap();
        assert!((loss - l1_loss(&net.predict(&x).unwrap(), &target)).abs() < 1e-15);
        let f = |nets: &[NetworkParams]| l1_loss(&nets[0].predict(&x).unwrap(), &target);
        let mut nets = vec![net.clone()];
        for (i, g) in grads.values().enumerate() {
            let fd = fd_param(&mut nets, 0, i, &f);
            assert!(relative_error(*g, fd) < TOLERANCE, "param {i}: {g} vs {fd}");
        }
    }
}

fn syda_total(nets: &[NetworkParams], xa: &[f64], xb: &[f64], lambda: f64) -> f64 {
    let za = nets[0].predict(xa).unwrap();
    let zb = nets[2].predict(xb).unwrap();
    let ra = nets[1].predict(&za).unwrap();
    let rb = nets[3].predict(&zb).unwrap();
    l1_loss(&ra, xa) + l1_loss(&rb, xb) + lambda * l1_loss(&za, &zb)
}

fn away_from_kinks(nets: &[NetworkParams], xa: &[f64], xb: &[f64]) -> bool {
    let za = nets[0].predict(xa).unwrap();
    let zb = nets[2].predict(xb).unwrap();
    let ra = nets[1].predict(&za).unwrap();
    let rb = nets[3].predict(&zb).unwrap();
    let far = |p: &[f64], q: &[f64]| p.iter().zip(q).all(|(a, b)| (a - b).abs() > KINK_MARGIN);
    far(&ra, xa) && far(&rb, xb) && far(&za, &zb)
}

#[test]
fn composed_syda_loss_gradients_match_finite_differences() {
    let mut checked = 0;
    for seed in 0..20u64 {
        if checked == 5 {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nets: DualNets = [
            init_network(&stack_specs(&[8, 6, 3]), seed).unwrap(),
            init_network(&stack_specs(&[3, 6, 8]), seed + 1).unwrap(),
            init_network(&stack_specs(&[6, 5, 3]), seed + 2).unwrap(),
            init_network(&stack_specs(&[3, 5, 6]), seed + 3).unwrap(),
        ];
        let xa: Vec<f64> = random_vec(&mut rng, 8).iter().map(|v| 2.0 * v).collect();
        let xb: Vec<f64> = random_vec(&mut rng, 6).iter().map(|v| 2.0 * v).collect();
        if !away_from_kinks(&nets, &xa, &xb) {
            continue;
        }
        checked += 1;
        let lambda = 1.0;
        let mut grads = nets.clone().map(|n| n.zero_gradients());
        let l = syda_loss_and_grads(&nets, &xa, &xb, lambda, &mut grads).unwrap();
        assert!((l.total(lambda) - syda_total(&nets, &xa, &xb, lambda)).abs() < 1e-14);
        let f = |n: &[NetworkParams]| syda_total(n, &xa, &xb, lambda);
        let mut work = nets.to_vec();
        for (k, g) in grads.iter().enumerate() {
            for (i, value) in g.values().enumerate() {
                let fd = fd_param(&mut work, k, i, &f);
                assert!(
                    relative_error(*value, fd) < TOLERANCE,
                    "net {k} param {i}: {value} vs {fd}"
                );
            }
        }
    }
    assert_eq!(checked, 5, "too few kink-free draws");
}
