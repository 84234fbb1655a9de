use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgmpc_sim::{ExperimentConfig, HeteroRule, NoiseFamily, NoiseSampler};

fn family() -> impl Strategy<Value = NoiseFamily> {
    prop_oneof![
        (1.0..10.0f64, 1e-4..1.0f64, 1.0..8.0f64)
            .prop_map(|(dof, scale, trunc)| NoiseFamily::TruncatedStudentT { dof, scale, trunc }),
        (1e-4..1.0f64, 1.0..8.0f64).prop_map(|(scale, trunc)| NoiseFamily::BoundedLaplace { scale, trunc }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn draws_stay_inside_the_scaled_support(f in family(), mult in 1.0..6.0f64, x0 in -1.0..1.0f64, seed in any::<u64>()) {
        let hetero = Some(HeteroRule { component: 0, threshold: 0.0, multiplier: mult });
        let s = NoiseSampler::new(f, hetero).unwrap();
        let state = nalgebra::DVector::from_vec(vec![x0, 0.0]);
        let factor = s.factor(&state);
        prop_assert!(factor <= s.worst_factor());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let w = s.draw(3, factor, &mut rng);
            prop_assert!(w.amax() <= f.radius() * factor * (1.0 + 1e-12));
        }
    }

    #[test]
    fn config_hash_is_stable_under_round_trip(seed in any::<u64>(), delta in 0.001..0.5f64, trials in 1usize..1000) {
        let mut cfg = ExperimentConfig::defaults(sgmpc_sim::EnvKind::Sp);
        cfg.seed = seed;
        cfg.delta = delta;
        cfg.trials = trials;
        let text = toml::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
