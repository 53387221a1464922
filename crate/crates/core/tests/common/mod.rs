#![allow(dead_code)]

use num_traits::Zero;
use pbh_core::approx::{FreeAssignment, UModel};
use pbh_core::parpoly::rat;
use pbh_core::{ParIndex, ParPoly, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random small rational `p/q` with `|p/q| <= bound_num/bound_den`.
pub fn small_rational(r: &mut ChaCha8Rng, bound_num: i64, bound_den: i64) -> Rational {
    let den: i64 = r.gen_range(1..=12);
    let max = bound_num * den / bound_den;
    rat(r.gen_range(-max..=max), den)
}

/// Random polynomial with terms of weighted degree in `[lo, hi]`, about half
/// of the admissible monomials present.
pub fn random_poly(r: &mut ChaCha8Rng, n: usize, lo: u32, hi: u32) -> ParPoly {
    let mut p = ParPoly::zero(n);
    for idx in ParIndex::enumerate(n, hi) {
        if idx.wdeg() < lo || !r.gen_bool(0.5) {
            continue;
        }
        p.add_term(idx, small_rational(r, 3, 1));
    }
    p
}

/// `P₁` with terms of weighted degree in `[2, k]`, coefficients at most 1/4.
pub fn random_umodel(r: &mut ChaCha8Rng, n: usize, k: u32) -> UModel {
    let mut p1 = ParPoly::zero(n);
    for idx in ParIndex::enumerate(n, k.max(2)) {
        if idx.wdeg() >= 2 && r.gen_bool(0.4) {
            p1.add_term(idx, small_rational(r, 1, 4));
        }
    }
    let delta = p1.norm().max(rat(1, 1));
    UModel::new(p1, delta).unwrap()
}

pub fn random_free(r: &mut ChaCha8Rng, n: usize, k: u32) -> FreeAssignment {
    let mut out = FreeAssignment::new();
    for idx in pbh_core::approx::free_indices(n, k) {
        if r.gen_bool(0.6) {
            out.insert(idx, small_rational(r, 2, 1));
        }
    }
    out
}

/// Rank of a dense rational matrix by fraction-exact Gaussian elimination.
#[allow(clippy::needless_range_loop)]
pub fn rational_rank(mut m: Vec<Vec<Rational>>) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(rank, p);
        for i in 0..rows {
            if i != rank && !m[i][c].is_zero() {
                let f = &m[i][c] / &m[rank][c];
                for j in c..cols {
                    let v = &f * &m[rank][j];
                    m[i][j] -= v;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Coefficient vectors of `polys` over the monomials of weighted degree `<= k`.
pub fn coefficient_matrix(polys: &[ParPoly], n: usize, k: u32) -> Vec<Vec<Rational>> {
    let basis = ParIndex::enumerate(n, k);
    polys.iter().map(|p| basis.iter().map(|m| p.coeff(m)).collect()).collect()
}

/// Dimension of `{Q : wdeg Q <= k, (Δ − ∂_t)(x_n Q) = 0}` as the nullity of
/// the dense matrix of `Q ↦ (Δ − ∂_t)(x_n Q)`.
pub fn kernel_dimension(n: usize, k: u32) -> usize {
    let domain = ParIndex::enumerate(n, k);
    let images: Vec<ParPoly> = domain
        .iter()
        .map(|m| ParPoly::x_last(n).multiply(&ParPoly::monomial(m.clone(), rat(1, 1))).unwrap().heat_apply())
        .collect();
    domain.len() - rational_rank(coefficient_matrix(&images, n, k + 1))
}

/// `#{(m, ℓ) : m_n = 0, |m| + 2ℓ <= k}` in closed form: for each `ℓ` the
/// monomials of degree `<= k − 2ℓ` in `n − 1` variables.
pub fn free_count(n: usize, k: u32) -> usize {
    let binom = |a: u64, b: u64| (1..=b).fold(1u64, |acc, i| acc * (a + 1 - i) / i);
    (0..=k / 2).map(|l| binom((k - 2 * l) as u64 + n as u64 - 1, n as u64 - 1) as usize).sum()
}
