use bagsched_cli::gen::{generate, GenParams, ScenarioDist, SizeDist};
use bagsched_cli::io::InstanceFile;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = GenParams> {
    (1usize..=12, 2usize..=6, any::<u64>(), 0usize..3, 0usize..3, 1usize..=6).prop_map(|(n, m, seed, s, q, point)| {
        GenParams {
            n,
            m,
            seed,
            sizes: [SizeDist::Uniform, SizeDist::Geometric, SizeDist::TwoTier][s],
            scenarios: [ScenarioDist::Uniform, ScenarioDist::Geometric, ScenarioDist::Point(1 + (point - 1) % m)][q],
        }
    })
}

proptest! {
    #[test]
    fn printed_instances_load_back(params in params()) {
        let file = InstanceFile { name: format!("seed-{}", params.seed), instance: generate(&params).unwrap() };
        let text = file.to_json();
        let back = InstanceFile::from_json(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn generation_is_a_function_of_the_seed(params in params()) {
        prop_assert_eq!(generate(&params).unwrap(), generate(&params).unwrap());
    }
}
