use blockspin_core::calculus::{d_adjoint, d_forward, inner_coarse, inner_fine, q_adjoint, q_average};
use blockspin_core::fields::{random_su2, sup_distance};
use blockspin_core::images::fold;
use blockspin_core::lattice::reflect;
use blockspin_core::randomwalk::{partition_weight, profile};
use blockspin_core::su2::weighted_sum;
use blockspin_core::{LatticeGeometry, Level, Vec3};
use nalgebra::Complex;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(rng: &mut ChaCha8Rng, len: usize) -> Vec<Vec3> {
    (0..len)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn geometry(m: usize) -> LatticeGeometry {
    LatticeGeometry::new(3, m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn derivative_adjointness(seed in any::<u64>(), m in 1usize..=2) {
        let geom = geometry(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = field(&mut rng, geom.num_sites());
        let g = field(&mut rng, geom.num_bonds());
        let lhs: f64 = d_forward(&geom, &f).iter().zip(&g).map(|(a, b)| a.dot(b)).sum();
        let rhs = inner_fine(&f, &d_adjoint(&geom, &g));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn averaging_adjointness_and_right_inverse(seed in any::<u64>(), m in 1usize..=2) {
        let geom = geometry(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = field(&mut rng, geom.num_sites());
        let h = field(&mut rng, geom.num_boxes());
        let lhs = inner_coarse(&geom, &q_average(&geom, &f), &h);
        let rhs = inner_fine(&f, &q_adjoint(&geom, &h));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        prop_assert!(sup_distance(&q_average(&geom, &q_adjoint(&geom, &h)), &h) <= 1e-15);
    }

    #[test]
    fn reflections_are_involutions(
        x0 in -60i64..60, x1 in -60i64..60, mu in 0usize..2, upper: bool, coarse: bool,
    ) {
        let (n, l) = (9, 3);
        let (x, level) = if coarse { ([x0 * 3, x1 * 3], Level::Coarse) } else { ([x0, x1], Level::Fine) };
        let once = reflect(x, mu, upper, level, n, l);
        prop_assert_eq!(reflect(once, mu, upper, level, n, l), x);
        prop_assert_eq!(once[1 - mu], x[1 - mu]);
    }

    #[test]
    fn fold_lands_in_the_lattice(x0 in -100i64..100, x1 in -100i64..100, n in 1usize..30) {
        let y = fold([x0, x1], n);
        prop_assert!(y.iter().all(|&c| (0..n as i64).contains(&c)));
        prop_assert_eq!(fold(y, n), y);
        // invariant under the lower reflection x → −1 − x
        prop_assert_eq!(fold([-1 - x0, x1], n), y);
    }

    #[test]
    fn weighted_sum_matches_matrix_sum(seed in any::<u64>(), k in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<_> = (0..k).map(|_| (rng.random_range(0.0..=1.0), random_su2(&mut rng))).collect();
        let sum = weighted_sum(&terms).unwrap();
        let mut m = sum.u.to_matrix() * Complex::new(-sum.c, 0.0);
        for (c, u) in &terms {
            m += u.to_matrix() * Complex::new(*c, 0.0);
        }
        prop_assert!(m.iter().map(|z| z.norm()).fold(0.0, f64::max) <= 1e-12);
        prop_assert!(sum.c >= 0.0);
    }

    #[test]
    fn partition_of_unity(x0 in -200i64..200, x1 in -200i64..200, half in 2i64..12) {
        let x = [x0, x1];
        let base = [x0.div_euclid(half), x1.div_euclid(half)];
        let mut total = 0.0;
        for j0 in base[0] - 2..=base[0] + 2 {
            for j1 in base[1] - 2..=base[1] + 2 {
                let w = partition_weight(x, [j0, j1], half, 2);
                if w > 0.0 {
                    // supported inside the closed cube of half-size M̃
                    prop_assert!((x0 - j0 * half).abs() <= half && (x1 - j1 * half).abs() <= half);
                }
                total += w * w;
            }
        }
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn profile_is_even_and_bounded(t in -2.0f64..2.0) {
        let h = profile(t);
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert_eq!(h, profile(-t));
        if t.abs() <= 1.0 / 3.0 { prop_assert_eq!(h, 1.0); }
        if t.abs() >= 2.0 / 3.0 { prop_assert_eq!(h, 0.0); }
    }
}
