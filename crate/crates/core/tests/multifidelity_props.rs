mod common;

use proptest::prelude::*;

#[test]
fn one_correction_closes_polynomial_gap() {
    for seed in 0..10 {
        let dim = 2 + (seed as usize % 4);
        let worst = common::correction_gap(seed, dim, 3, 2, 2);
        assert!(worst <= 1e-8, "seed {seed}: {worst:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn correction_exact_for_any_degree_split(seed in 0u64..1000, dim in 1usize..5, n in 1usize..4, drop in 0usize..3) {
        let nc = n.saturating_sub(drop);
        prop_assert!(common::correction_gap(seed, dim, n, nc, 1) <= 1e-8);
    }
}
