use polyc_core::envs::Interval;
use polyc_core::lyapunov::{lyapunov_risk, LyapunovCritic, RiskBatch};
use polyc_core::nn::Activation;
use polyc_core::policy_opt::{beta_lagrange_update, blended_advantage, ppo_clip_surrogate};
use polyc_core::validator::{connected_components, EpsNet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pairs(n: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (
        prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), n),
        prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_is_nonnegative(seed in 0u64..1000, (s, s2) in pairs(16), dt in 0.001..0.5f64, tau in 0.0..1.0f64) {
        let critic = LyapunovCritic::new(vec![0.0, 0.0], &[8], Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let batch = RiskBatch::new(s, s2, dt).unwrap();
        let risk = critic.risk(&batch, tau).unwrap();
        prop_assert!(risk >= 0.0);
        let via_candidate = lyapunov_risk(&critic, &[0.0, 0.0], &batch, tau).unwrap();
        prop_assert!((risk - via_candidate).abs() <= 1e-12 * risk.max(1.0));
    }

    #[test]
    fn risk_of_a_stable_quadratic_is_its_origin_term(xs in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 1..40), c in 0.0..0.99f64) {
        // Successors shrink toward the origin, so both hinges are inactive for |x|^2.
        let next: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|v| c * v).collect()).collect();
        let v = |x: &[f64]| x.iter().map(|u| u * u).sum::<f64>();
        let batch = RiskBatch::new(xs, next, 0.1).unwrap();
        prop_assert_eq!(lyapunov_risk(&v, &[0.0, 0.0], &batch, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn blended_advantage_never_rewards_lie_growth(adv in -10.0..10.0f64, lie in -10.0..10.0f64, beta in 0.0..=1.0f64) {
        let b = blended_advantage(adv, lie, beta);
        prop_assert!(b <= (1.0 - beta) * adv + 1e-12);
        if lie <= 0.0 {
            prop_assert_eq!(b, (1.0 - beta) * adv);
        }
        prop_assert_eq!(blended_advantage(adv, lie, 0.0), adv);
    }

    #[test]
    fn clip_surrogate_is_pessimistic(ratio in 0.01..5.0f64, adv in -5.0..5.0f64, eps in 0.01..0.5f64) {
        let s = ppo_clip_surrogate(ratio, adv, eps);
        prop_assert!(s <= ratio * adv + 1e-12);
        prop_assert!(s <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv + 1e-12);
        prop_assert_eq!(ppo_clip_surrogate(1.0, adv, eps), adv);
    }

    #[test]
    fn lagrange_beta_stays_in_unit_interval(beta in 0.0..=1.0f64, lie in -1e3..1e3f64, alpha in 0.0..1.0f64) {
        let b = beta_lagrange_update(beta, lie, alpha);
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn component_volumes_are_additive(nx in 1usize..30, ny in 1usize..30, nz in 1usize..4, bits in prop::collection::vec(any::<bool>(), 3600)) {
        let region = [Interval::new(-1.0, 2.0), Interval::symmetric(0.5), Interval::new(0.0, 0.3)];
        let net = EpsNet::from_counts(&region, &[nx, ny, nz]).unwrap();
        let mask = &bits[..net.total_cells()];
        let comps = connected_components(&net, mask);
        let marked = mask.iter().filter(|&&m| m).count();
        prop_assert_eq!(comps.iter().map(|c| c.cells).sum::<usize>(), marked);
        let volume: f64 = comps.iter().map(|c| c.volume).sum();
        prop_assert!((volume - marked as f64 * net.cell_volume()).abs() <= 1e-12 * volume.max(1.0));
        for c in &comps {
            for d in 0..3 {
                prop_assert!(c.bbox_lo[d] >= region[d].lo - 1e-12 && c.bbox_hi[d] <= region[d].hi + 1e-12);
            }
        }
    }
}
