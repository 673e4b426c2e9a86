use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use polyc_bench::{decay_batch, unit_box};
use polyc_core::envs::{ControlSystem, EpisodeClock, Pendulum, Quadrotor};
use polyc_core::lyapunov::LyapunovCritic;
use polyc_core::nn::{Activation, GaussianPolicy, Mlp};
use polyc_core::policy_opt::{collect_rollouts, compute_advantages};
use polyc_core::validator::{certify_band, CertifyConfig, FlowLoop};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Mlp::new(&[12, 64, 64, 4], Activation::Tanh, &mut rng).unwrap();
    let x = vec![0.1; 12];
    let upstream = vec![1.0; 4];
    c.bench_function("mlp_forward_12x64x64x4", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
    c.bench_function("mlp_forward_backward_12x64x64x4", |b| {
        b.iter(|| {
            let trace = net.forward_trace(black_box(&x)).unwrap();
            net.backward(&trace, &upstream).unwrap()
        })
    });
}

fn risk(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let critic = LyapunovCritic::new(vec![0.0; 2], &[64, 64], Activation::Tanh, &mut rng).unwrap();
    let batch = decay_batch(256, 2, 0.05, 2);
    c.bench_function("risk_gradient_batch256", |b| b.iter(|| critic.risk_gradient(black_box(&batch), 0.0).unwrap()));
}

fn envs(c: &mut Criterion) {
    let pendulum = Pendulum::default();
    let quad = Quadrotor::default();
    let clock = EpisodeClock::default();
    c.bench_function("pendulum_step", |b| {
        b.iter(|| pendulum.step(&clock, black_box(&[0.3, -0.2]), &[0.5]).unwrap())
    });
    let hover = quad.control(&[0.0; 4]);
    let mut s = vec![0.0; 12];
    s[0] = 0.2;
    s[6] = 0.05;
    c.bench_function("quadrotor_step", |b| b.iter(|| quad.step(&clock, black_box(&s), &hover).unwrap()));
}

fn rollouts(c: &mut Criterion) {
    let env = Pendulum::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let policy = GaussianPolicy::new(2, 1, &[64, 64], Activation::Tanh, &mut rng).unwrap();
    let value = Mlp::new(&[2, 64, 64, 1], Activation::Tanh, &mut rng).unwrap();
    c.bench_function("collect_rollouts_2048_with_gae", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(4),
            |mut rng| {
                let mut buf = collect_rollouts(&env, &policy, &value, 2048, &mut rng).unwrap();
                compute_advantages(&mut buf, 0.99, 0.95, true).unwrap();
                buf
            },
            BatchSize::SmallInput,
        )
    });
}

fn validator(c: &mut Criterion) {
    let flow = FlowLoop::new(2, 0.01, |x: &[f64]| x.iter().map(|v| -v).collect());
    let v = |x: &[f64]| x.iter().map(|t| t * t).sum::<f64>();
    let config = CertifyConfig {
        grid_budget: 10_000,
        ..Default::default()
    };
    let mut group = c.benchmark_group("validator");
    group.sample_size(10);
    group.bench_function("certify_band_2d_10k_cells", |b| {
        b.iter(|| certify_band(&v, &flow, &unit_box(2), &[0.0, 0.0], black_box(&config)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, mlp, risk, envs, rollouts, validator);
criterion_main!(benches);
