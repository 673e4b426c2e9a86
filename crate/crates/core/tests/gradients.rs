//! Analytic gradients against central finite differences.

use polyc_core::nn::{Activation, GaussianPolicy, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: u64 = 20;
const H: f64 = 1e-6;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()) + 1e-7
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
}

/// Loss `upstream . net(x)`, whose gradient is one backward pass.
fn check_network(widths: &[usize], activation: Activation) {
    for case in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 * widths.len() as u64 + case);
        let net = Mlp::new(widths, activation, &mut rng).unwrap();
        let x = random_vec(&mut rng, widths[0]);
        let upstream = random_vec(&mut rng, *widths.last().unwrap());
        let loss = |n: &Mlp, x: &[f64]| -> f64 {
            n.forward(x).unwrap().iter().zip(&upstream).map(|(y, u)| y * u).sum()
        };
        let grads = net.backward(&net.forward_trace(&x).unwrap(), &upstream).unwrap();
        for i in 0..net.num_params() {
            let (mut plus, mut minus) = (net.clone(), net.clone());
            plus.params_mut()[i] += H;
            minus.params_mut()[i] -= H;
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * H);
            assert!(close(grads.params[i], fd), "{widths:?} case {case} param {i}: {} vs {fd}", grads.params[i]);
        }
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += H;
            xm[i] -= H;
            let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * H);
            assert!(close(grads.input[i], fd), "{widths:?} case {case} input {i}: {} vs {fd}", grads.input[i]);
        }
    }
}

#[test]
fn tanh_networks_match_finite_differences() {
    for widths in [&[2, 8, 1][..], &[3, 16, 16, 2], &[4, 32, 32, 32, 3], &[12, 64, 64, 4]] {
        check_network(widths, Activation::Tanh);
    }
}

#[test]
fn relu_networks_match_finite_differences_away_from_kinks() {
    // A kink within H of a pre-activation is measure-zero for random draws.
    for widths in [&[2, 8, 1][..], &[3, 16, 16, 2]] {
        check_network(widths, Activation::Relu);
    }
}

#[test]
fn gaussian_log_prob_gradient_matches_finite_differences() {
    for case in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + case);
        let mut policy = GaussianPolicy::new(3, 2, &[16, 16], Activation::Tanh, &mut rng).unwrap();
        policy.log_std = random_vec(&mut rng, 2).iter().map(|v| 0.5 * v).collect();
        let s = random_vec(&mut rng, 3);
        let a = random_vec(&mut rng, 2);
        let mut grad_net = vec![0.0; policy.mean_net.num_params()];
        let mut grad_ls = vec![0.0; 2];
        let trace = policy.mean_net.forward_trace(&s).unwrap();
        policy.accumulate_log_prob_grad(&trace, &a, 1.0, &mut grad_net, &mut grad_ls).unwrap();
        for i in 0..grad_net.len() {
            let (mut plus, mut minus) = (policy.clone(), policy.clone());
            plus.mean_net.params_mut()[i] += H;
            minus.mean_net.params_mut()[i] -= H;
            let fd = (plus.log_prob(&s, &a).unwrap() - minus.log_prob(&s, &a).unwrap()) / (2.0 * H);
            assert!(close(grad_net[i], fd), "case {case} param {i}: {} vs {fd}", grad_net[i]);
        }
        for i in 0..2 {
            let (mut plus, mut minus) = (policy.clone(), policy.clone());
            plus.log_std[i] += H;
            minus.log_std[i] -= H;
            let fd = (plus.log_prob(&s, &a).unwrap() - minus.log_prob(&s, &a).unwrap()) / (2.0 * H);
            assert!(close(grad_ls[i], fd), "case {case} log_std {i}: {} vs {fd}", grad_ls[i]);
        }
    }
}
