mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use valcast::data::{
    generate, load_csv, save_csv, NoiseModel, SynthConfig, ACTUALS_FILE, FEATURES_FILE,
};
use valcast::sysmodel::{load_instance, write_instance};

use common::random_three_node;

fn noise() -> impl Strategy<Value = NoiseModel> {
    prop_oneof![Just(NoiseModel::GaussianLogit), Just(NoiseModel::Beta)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn written_instances_load_back_identical(seed in any::<u64>(), horizon in 1usize..6) {
        let inst = random_three_node(&mut ChaCha8Rng::seed_from_u64(seed), horizon);
        let dir = tempfile::tempdir().unwrap();
        let path = write_instance(&inst, dir.path(), "case").unwrap();
        let back = load_instance(&path).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn saved_datasets_load_back_identical(
        seed in any::<u64>(),
        caps in prop::collection::vec(5.0f64..200.0, 1..4),
        horizon in 1usize..30,
        feature_dim in 1usize..6,
        noise in noise(),
        days in 1usize..5,
    ) {
        let cfg = SynthConfig { seed, caps: caps.clone(), horizon, feature_dim, noise, ..SynthConfig::default() };
        let (data, _) = generate(&cfg, days).unwrap();
        for d in &data.days {
            for hour in &d.actual {
                for (v, c) in hour.iter().zip(&caps) {
                    prop_assert!((0.0..=*c).contains(v));
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        save_csv(&data, dir.path(), None).unwrap();
        let back = load_csv(&dir.path().join(FEATURES_FILE), &dir.path().join(ACTUALS_FILE), &caps, horizon).unwrap();
        prop_assert_eq!(back, data);
    }
}
