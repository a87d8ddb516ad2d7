//! Structural invariants checked over randomized inputs.

use cubetype::catalog;
use cubetype::cube::{
    block_product, equal_blocks, expect, hamming_metric, Cube, CubePoint,
};
use cubetype::spaces::{map_from_json, map_to_json, LpSpace, MapPair};
use cubetype::type_stats::{b_statistic, e_statistic};

use proptest::prelude::*;

proptest! {
    #[test]
    fn map_json_round_trip_is_bit_exact(n in 1u32..=6, seed in any::<u64>()) {
        let f = catalog::random_lp_map(n, LpSpace::l2(3), -2.0, 2.0, seed).unwrap();
        let text = map_to_json(&f).unwrap();
        let back = map_from_json(&text).unwrap();
        prop_assert_eq!(back.dim(), f.dim());
        let cube = Cube::new(n).unwrap();
        for e in cube.points() {
            prop_assert_eq!(f.image_by_mask(e.mask()), back.image_by_mask(e.mask()));
        }
        prop_assert_eq!(map_to_json(&back).unwrap(), text);
    }

    #[test]
    fn hamming_metric_is_a_metric(n in 1u32..=16, a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let m = (1u64 << n) - 1;
        let (a, b, c) = (
            CubePoint::from_mask(n, a & m).unwrap(),
            CubePoint::from_mask(n, b & m).unwrap(),
            CubePoint::from_mask(n, c & m).unwrap(),
        );
        let d = |x: &CubePoint, y: &CubePoint| hamming_metric(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-15);
        prop_assert_eq!(d(&a, &a.antipode()), 1.0);
    }

    #[test]
    fn block_product_is_a_bijection_per_delta(
        n in prop::sample::select(vec![2u32, 3, 4, 6]),
        dm in any::<u64>(),
    ) {
        let l = n / 2;
        let blocks = equal_blocks(n, l).unwrap();
        let d = CubePoint::from_mask(l, dm & ((1 << l) - 1)).unwrap();
        let cube = Cube::new(n).unwrap();
        let mut seen = vec![false; 1 << n];
        for e in cube.points() {
            let g = block_product(&e, &d, &blocks).unwrap();
            prop_assert!(!seen[g.mask() as usize]);
            seen[g.mask() as usize] = true;
        }
        prop_assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn negated_delta_gives_the_antipodal_product(
        n in prop::sample::select(vec![2u32, 3, 4, 6]),
        em in any::<u64>(),
        dm in any::<u64>(),
    ) {
        // The equal blocks partition all of [1,n], so negating delta flips
        // every coordinate of the product.
        let l = n / 2;
        let blocks = equal_blocks(n, l).unwrap();
        let e = CubePoint::from_mask(n, em & ((1 << n) - 1)).unwrap();
        let d = CubePoint::from_mask(l, dm & ((1 << l) - 1)).unwrap();
        let lhs = block_product(&e, &d.antipode(), &blocks).unwrap();
        let rhs = block_product(&e, &d, &blocks).unwrap().antipode();
        prop_assert_eq!(lhs.mask(), rhs.mask());
    }

    #[test]
    fn b_and_e_statistics_share_their_core(n in 2u32..=6, seed in any::<u64>(), pi in 0usize..3) {
        let p = [1.5, 2.0, 3.0][pi];
        let f = catalog::random_lp_map(n, LpSpace::l1(2), -1.0, 1.0, seed).unwrap();
        let big_f = catalog::random_diagonal_map(2, 0.5, 2.0, seed ^ 0xfeed).unwrap();
        let pair = MapPair::new(f, &big_f).unwrap();
        let b = b_statistic(&pair, p).unwrap();
        let e = e_statistic(&pair, p).unwrap();
        prop_assert_eq!(b.lhs.to_bits(), e.lhs.to_bits());
        prop_assert_eq!(b.rhs.to_bits(), ((n as f64).powf(p - 1.0) * e.rhs).to_bits());
    }

    #[test]
    fn expectation_preserves_measure(n in 1u32..=10, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let cube = Cube::new(n).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let total = cube.vertex_count() as usize;
        let member: Vec<bool> = (0..total).map(|_| rng.gen_bool(0.5)).collect();
        let count = member.iter().filter(|&&x| x).count();
        let mass = expect(&cube, |e| if member[e.mask() as usize] { 1.0 } else { 0.0 });
        // 0/1 sums are exact integers and the normalizer is a power of two.
        prop_assert_eq!(mass, count as f64 / total as f64);
        prop_assert_eq!(cube.point_measure() * cube.vertex_count() as f64, 1.0);
    }

    #[test]
    fn expectation_is_deterministic(n in 1u32..=10, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let cube = Cube::new(n).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> =
            (0..cube.vertex_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = expect(&cube, |e| vals[e.mask() as usize]);
        let b = expect(&cube, |e| vals[e.mask() as usize]);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn statistic_json_round_trips(n in 2u32..=6, seed in any::<u64>()) {
        let f = catalog::random_lp_map(n, LpSpace::l2(2), -1.0, 1.0, seed).unwrap();
        let big_f = catalog::random_diagonal_map(2, 0.5, 2.0, seed ^ 0xf00).unwrap();
        let pair = MapPair::new(f, &big_f).unwrap();
        let stat = b_statistic(&pair, 2.0).unwrap();
        let text = serde_json::to_string(&stat).unwrap();
        let back: cubetype::type_stats::TypeStatistic = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.ratio.0.to_bits(), stat.ratio.0.to_bits());
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}
