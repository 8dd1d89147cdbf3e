use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use detgas::basis::{Realization, SectionBasis};
use detgas::detcore::{logdet, sigma, Configuration, DetState};
use detgas::domain::{Point, Weight, WeightedDomain};
use detgas::metrics::{dist_gamma, wasserstein1, EmpiricalMeasure, TestDictionary, W1Target};

fn domains() -> Vec<WeightedDomain> {
    vec![
        WeightedDomain::cube(1, -1.0, 1.0, Weight::Quadratic(0.3)).unwrap(),
        WeightedDomain::cube(2, 0.0, 1.0, Weight::Linear(vec![0.2, -0.4])).unwrap(),
        WeightedDomain::full_sphere(1, Weight::Zero).unwrap(),
        WeightedDomain::full_sphere(2, Weight::Zero).unwrap(),
    ]
}

fn random_points(d: &WeightedDomain, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| d.sample_uniform(&mut rng)).collect()
}

fn parity(perm: &[usize]) -> f64 {
    let mut seen = vec![false; perm.len()];
    let mut s = 1.0;
    for start in 0..perm.len() {
        let mut len = 0;
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            j = perm[j];
            len += 1;
        }
        if len > 0 && len % 2 == 0 {
            s = -s;
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn permutations_keep_modulus_and_flip_sign_by_parity(which in 0usize..4, p in 1usize..4, seed in any::<u64>()) {
        let d = &domains()[which];
        let b = SectionBasis::build_for(d, p, Realization::Orthogonal).unwrap();
        let pts = random_points(d, b.n_p(), seed);
        let (l0, s0) = logdet(&b, d, &Configuration::new(pts.clone(), p)).unwrap();
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let shuffled: Vec<Point> = perm.iter().map(|&k| pts[k].clone()).collect();
        let (l1, s1) = logdet(&b, d, &Configuration::new(shuffled, p)).unwrap();
        prop_assert!((l0 - l1).abs() <= 1e-9 * (1.0 + l0.abs()));
        prop_assert_eq!(s1, s0 * parity(&perm));
    }

    #[test]
    fn rank_one_updates_track_fresh_factorization(which in 0usize..4, p in 1usize..4, seed in any::<u64>(), moves in 1usize..150) {
        let d = &domains()[which];
        let b = SectionBasis::build_for(d, p, Realization::Orthogonal).unwrap();
        let c = Configuration::new(random_points(d, b.n_p(), seed), p);
        let mut st = DetState::new(&b, d, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let mut total = st.logabsdet();
        for k in 0..moves {
            total += st.update_point(&b, d, k % b.n_p(), d.sample_uniform(&mut rng)).unwrap();
        }
        let (fresh, sign) = logdet(&b, d, &st.config()).unwrap();
        prop_assert!((total - fresh).abs() <= 1e-7, "{} vs {}", total, fresh);
        prop_assert!((st.logabsdet() - fresh).abs() <= 1e-7);
        prop_assert_eq!(st.sign(), sign);
    }

    #[test]
    fn sigma_is_nonnegative_and_zero_on_the_reference(which in 0usize..4, p in 1usize..4, seed in any::<u64>()) {
        let d = &domains()[which];
        let b = SectionBasis::build_for(d, p, Realization::Orthogonal).unwrap();
        let x = Configuration::new(random_points(d, b.n_p(), seed), p);
        let r = Configuration::new(random_points(d, b.n_p(), seed ^ 3), p);
        prop_assert!(sigma(&b, d, &x, &r).unwrap() >= 0.0);
        prop_assert_eq!(sigma(&b, d, &r, &r).unwrap(), 0.0);
    }

    #[test]
    fn constant_phi_shifts_logdet_by_its_weight(c in -2.0f64..2.0, p in 1usize..5, seed in any::<u64>()) {
        let flat = WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap();
        let shifted = WeightedDomain::cube(1, -1.0, 1.0, Weight::Constant(c)).unwrap();
        let b = SectionBasis::build_for(&flat, p, Realization::Monomial).unwrap();
        let x = Configuration::new(random_points(&flat, b.n_p(), seed), p);
        let (l0, _) = logdet(&b, &flat, &x).unwrap();
        let (l1, _) = logdet(&b, &shifted, &x).unwrap();
        prop_assert!((l1 - (l0 - (p * b.n_p()) as f64 * c)).abs() <= 1e-9 * (1.0 + l0.abs()));
    }

    #[test]
    fn circle_logdet_is_rotation_invariant(p in 1usize..6, t in 0.0f64..6.3, seed in any::<u64>()) {
        let d = WeightedDomain::full_sphere(1, Weight::Zero).unwrap();
        let b = SectionBasis::build_for(&d, p, Realization::Orthogonal).unwrap();
        let pts = random_points(&d, b.n_p(), seed);
        let rotated: Vec<Point> = pts
            .iter()
            .map(|x| vec![x[0] * t.cos() - x[1] * t.sin(), x[0] * t.sin() + x[1] * t.cos()])
            .collect();
        let (l0, _) = logdet(&b, &d, &Configuration::new(pts, p)).unwrap();
        let (l1, _) = logdet(&b, &d, &Configuration::new(rotated, p)).unwrap();
        prop_assert!((l0 - l1).abs() <= 1e-8 * (1.0 + l0.abs()));
    }

    #[test]
    fn dist_gamma_is_a_pseudometric(which in 0usize..4, n in 1usize..20, seed in any::<u64>()) {
        let d = &domains()[which];
        let dict = TestDictionary::new(d, 1.0, 8, 4).unwrap();
        let m: Vec<EmpiricalMeasure> = (0..3)
            .map(|k| EmpiricalMeasure::new(random_points(d, n, seed.wrapping_add(k))).unwrap())
            .collect();
        let d01 = dist_gamma(&dict, &m[0], &m[1]);
        prop_assert!(d01 >= 0.0);
        prop_assert!((d01 - dist_gamma(&dict, &m[1], &m[0])).abs() <= 1e-14);
        prop_assert!(dist_gamma(&dict, &m[0], &m[0]) <= 1e-15);
        prop_assert!(d01 <= dist_gamma(&dict, &m[0], &m[2]) + dist_gamma(&dict, &m[2], &m[1]) + 1e-14);
    }

    #[test]
    fn circle_dist1_is_bounded_by_twice_w1(n in 1usize..30, m in 1usize..30, seed in any::<u64>()) {
        let d = WeightedDomain::full_sphere(1, Weight::Zero).unwrap();
        let dict = TestDictionary::new(&d, 1.0, 32, 8).unwrap();
        let a = EmpiricalMeasure::new(random_points(&d, n, seed)).unwrap();
        let b = EmpiricalMeasure::new(random_points(&d, m, seed ^ 5)).unwrap();
        let w1 = wasserstein1(&d, &a, W1Target::Empirical(&b)).unwrap();
        prop_assert!(dist_gamma(&dict, &a, &b) <= 2.0 * w1 + 1e-12);
    }

    #[test]
    fn w1_ignores_point_order(which in 0usize..3, n in 1usize..30, seed in any::<u64>()) {
        let d = [
            WeightedDomain::full_sphere(1, Weight::Zero).unwrap(),
            WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap(),
            WeightedDomain::cube(2, 0.0, 1.0, Weight::Zero).unwrap(),
        ][which].clone();
        let pts = random_points(&d, n, seed);
        let mut rev = pts.clone();
        rev.reverse();
        let a = EmpiricalMeasure::new(pts).unwrap();
        let b = EmpiricalMeasure::new(rev).unwrap();
        prop_assert!(wasserstein1(&d, &a, W1Target::Empirical(&b)).unwrap() <= 1e-12);
    }
}
