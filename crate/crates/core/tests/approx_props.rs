mod common;

use common::*;
use num_traits::{One, Zero};
use pbh_core::approx::{free_part, project};
use pbh_core::parpoly::rat;
use pbh_core::{build_source_map, caloric_basis, solve_approximating, ParPoly, Rational};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn heat_is_linear(seed in any::<u64>(), n in 1usize..=3, a in -5i64..=5, b in 1i64..=5) {
        let mut r = rng(seed);
        let p = random_poly(&mut r, n, 0, 5);
        let q = random_poly(&mut r, n, 0, 5);
        let (a, b) = (rat(a, 1), rat(1, b));
        let lhs = (&p.scale(&a) + &q.scale(&b)).heat_apply();
        let rhs = &p.heat_apply().scale(&a) + &q.heat_apply().scale(&b);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn heat_drops_weighted_degree_by_two(seed in any::<u64>(), n in 1usize..=3) {
        let p = random_poly(&mut rng(seed), n, 0, 6);
        let h = p.heat_apply();
        if let (Some(dp), Some(dh)) = (p.wdeg(), h.wdeg()) {
            prop_assert!(dh + 2 <= dp);
        }
    }

    #[test]
    fn heat_leibniz(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let p = random_poly(&mut r, n, 0, 4);
        let q = random_poly(&mut r, n, 0, 4);
        let mut rhs = &p.multiply(&q.heat_apply()).unwrap() + &q.multiply(&p.heat_apply()).unwrap();
        for (gp, gq) in p.grad().iter().zip(q.grad()) {
            rhs = &rhs + &gp.multiply(&gq).unwrap().scale(&rat(2, 1));
        }
        prop_assert_eq!(p.multiply(&q).unwrap().heat_apply(), rhs);
    }

    #[test]
    fn heat_commutes_with_parabolic_scaling(seed in any::<u64>(), n in 1usize..=3, den in 1i64..=7) {
        let p = random_poly(&mut rng(seed), n, 0, 5);
        let r = rat(den + 1, den);
        let lhs = p.rescale(&r).unwrap().heat_apply();
        let rhs = p.heat_apply().rescale(&r).unwrap().scale(&(Rational::one() / (&r * &r)));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn norm_is_a_norm(seed in any::<u64>(), n in 1usize..=3, c in -4i64..=4) {
        let mut r = rng(seed);
        let p = random_poly(&mut r, n, 0, 4);
        let q = random_poly(&mut r, n, 0, 4);
        prop_assert!((&p + &q).norm() <= &p.norm() + &q.norm());
        prop_assert_eq!(p.scale(&rat(c, 1)).norm(), &p.norm() * rat(c.abs(), 1));
        prop_assert_eq!(p.norm().is_zero(), p.is_zero());
    }

    #[test]
    fn approximating_polynomial_annihilates(seed in any::<u64>(), n in 1usize..=3, k in 1u32..=5) {
        let mut r = rng(seed);
        let u = random_umodel(&mut r, n, k);
        let d = random_poly(&mut r, n, 0, k - 1);
        let free = random_free(&mut r, n, k);
        let map = build_source_map(&u, k).unwrap();
        let p = solve_approximating(&map, &d, &free, k).unwrap();
        let lhs = u.u_poly().multiply(&p).unwrap().heat_apply().truncate(k - 1);
        prop_assert_eq!(lhs, d.clone());
        prop_assert_eq!(project(&map, &d, &p, k).unwrap(), p.clone());
        let mut expect = free.clone();
        expect.retain(|_, v| !v.is_zero());
        prop_assert_eq!(free_part(&p), expect);
    }

    #[test]
    fn source_maps_are_triangular(seed in any::<u64>(), n in 1usize..=3, k in 1u32..=6) {
        let u = random_umodel(&mut rng(seed), n, k);
        let map = build_source_map(&u, k).unwrap();
        prop_assert!(map.check_triangular().is_ok());
        for (m, e) in map.entries() {
            for (q, _) in e.terms() {
                // an entry never feeds an equation that is solved before it
                prop_assert!(q.wdeg() + 1 >= m.wdeg());
                prop_assert!(q.wdeg() < k);
            }
        }
    }

    #[test]
    fn rescaling_commutes_with_solving(seed in any::<u64>(), n in 1usize..=2, k in 1u32..=4, den in 2i64..=5) {
        let mut r = rng(seed);
        let u = random_umodel(&mut r, n, k);
        let d = random_poly(&mut r, n, 0, k - 1);
        let free = random_free(&mut r, n, k);
        let map = build_source_map(&u, k).unwrap();
        let p = solve_approximating(&map, &d, &free, k).unwrap();
        // P̃(y, s) = P(ry, r²s) solves the system of ũ(y, s) = u(ry, r²s)/r
        // with source r·d(ry, r²s)
        let radius = rat(1, den);
        let inv = Rational::one() / &radius;
        let p_tilde = p.rescale(&inv).unwrap();
        let d_tilde = d.rescale(&inv).unwrap().scale(&radius);
        let solved = solve_approximating(&map.rescaled(&radius).unwrap(), &d_tilde, &free_part(&p_tilde), k).unwrap();
        prop_assert_eq!(solved, p_tilde);
    }
}

#[test]
fn basis_dimension_matches_rank_oracle() {
    for n in 1..=3 {
        for k in 0..=5 {
            let basis = caloric_basis(n, k).unwrap();
            assert_eq!(basis.len(), free_count(n, k), "n={n} k={k}");
            assert_eq!(basis.len(), kernel_dimension(n, k), "n={n} k={k}");
            assert_eq!(rational_rank(coefficient_matrix(&basis, n, k)), basis.len());
            for q in &basis {
                assert!(ParPoly::x_last(n).multiply(q).unwrap().heat_apply().is_zero());
            }
        }
    }
}
