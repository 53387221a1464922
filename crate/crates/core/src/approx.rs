//! Approximating polynomials.
//!
//! For `u = x_n + P₁` (the Taylor polynomial of the denominator) and a
//! parabolic polynomial `P` of degree `k`, the low-order part `R` of
//! `(Δ − ∂_t)(uP)` is an affine function of the coefficients of `P`. Each
//! monomial `x^m t^ℓ` contributes a fixed principal part
//! `(Δ − ∂_t)(x_n x^m t^ℓ)` plus a correction polynomial stored in a
//! [`SourceMap`]. The correction only reaches monomials of weighted degree at
//! least `|m| + 2ℓ`, which makes the system for the coefficients triangular
//! once every coefficient with `m_n = 0` is fixed: each equation indexed by
//! `(q, κ)` determines `a_{q+n̄, κ}` from coefficients that are already known.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::parpoly::{pow_rat, ParIndex, ParPoly, ParPolyError, Rational};

/// Largest order accepted by the solvers.
pub const MAX_ORDER: u32 = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApproxError {
    #[error(transparent)]
    Poly(#[from] ParPolyError),
    #[error("order {0} exceeds the supported maximum {MAX_ORDER}")]
    OrderTooLarge(u32),
    #[error("{what} has weighted degree {found}, above the allowed {cap}")]
    DegreeCap { what: &'static str, cap: i64, found: u32 },
    #[error("free coefficients may only sit on indices with m_n = 0 and wdeg <= k, got {0}")]
    NotFree(String),
    #[error("source map entry for {entry} reaches lower-order monomial {term}; the system is not triangular")]
    NonTriangular { entry: String, term: String },
    #[error("coefficient {needed} was used before being determined while solving for {target}")]
    OrderViolation { target: String, needed: String },
    #[error("source map was built for (n={map_dim}, k={map_k}) but the solve asked for (n={dim}, k={k})")]
    ShapeMismatch { map_dim: usize, map_k: u32, dim: usize, k: u32 },
    #[error("invalid u-model: {0}")]
    InvalidUModel(String),
    #[error("invalid variable-coefficient model: {0}")]
    InvalidVcModel(String),
}

fn check_order(k: u32) -> Result<(), ApproxError> {
    if k > MAX_ORDER {
        return Err(ApproxError::OrderTooLarge(k));
    }
    Ok(())
}

/// Taylor data of the denominator: `u ≈ x_n + P₁` with `P₁` of weighted
/// degree at least two.
#[derive(Debug, Clone, PartialEq)]
pub struct UModel {
    p1: ParPoly,
    delta_bound: Rational,
}

impl UModel {
    pub fn new(p1: ParPoly, delta_bound: Rational) -> Result<Self, ApproxError> {
        if let Some(low) = p1.min_wdeg().filter(|&d| d < 2) {
            return Err(ApproxError::InvalidUModel(format!("P1 contains a term of weighted degree {low}")));
        }
        if p1.norm() > delta_bound {
            return Err(ApproxError::InvalidUModel(format!(
                "norm(P1) = {} exceeds delta = {}",
                p1.norm(),
                delta_bound
            )));
        }
        Ok(Self { p1, delta_bound })
    }

    /// `u = x_n` exactly.
    pub fn flat(dim: usize) -> Self {
        Self { p1: ParPoly::zero(dim), delta_bound: Rational::zero() }
    }

    pub fn dim(&self) -> usize {
        self.p1.dim()
    }

    pub fn p1(&self) -> &ParPoly {
        &self.p1
    }

    pub fn delta_bound(&self) -> &Rational {
        &self.delta_bound
    }

    /// `x_n + P₁`.
    pub fn u_poly(&self) -> ParPoly {
        &ParPoly::x_last(self.dim()) + &self.p1
    }
}

/// `(Δ − ∂_t)(x_n x^m t^ℓ)`, written out termwise:
/// `m_n(m_n+1) x^{m−n̄} t^ℓ + Σ_{i≠n} m_i(m_i−1) x^{m−2ī+n̄} t^ℓ − ℓ x^{m+n̄} t^{ℓ−1}`.
pub fn principal_part(idx: &ParIndex) -> ParPoly {
    let n = idx.dim();
    let last = n - 1;
    let mut out = ParPoly::zero(n);
    let mn = idx.m_last() as i64;
    if mn > 0 {
        out.add_term(idx.shift_spatial(last, -1).unwrap(), int(mn * (mn + 1)));
    }
    for i in 0..last {
        let mi = idx.m()[i] as i64;
        if mi >= 2 {
            let j = idx.shift_spatial(i, -2).unwrap().shift_spatial(last, 1).unwrap();
            out.add_term(j, int(mi * (mi - 1)));
        }
    }
    if idx.ell() > 0 {
        let j = idx.shift_time(-1).unwrap().shift_spatial(last, 1).unwrap();
        out.add_term(j, int(-(idx.ell() as i64)));
    }
    out
}

fn int(v: i64) -> Rational {
    Rational::from_integer(v.into())
}

/// Terms of weighted degree strictly below `k`.
fn below(p: &ParPoly, k: u32) -> ParPoly {
    if k == 0 {
        ParPoly::zero(p.dim())
    } else {
        p.truncate(k - 1)
    }
}

/// Splits `(Δ − ∂_t)((x_n + P₁) P)` into `R` (weighted degree `≤ k−1`) and
/// `W` (the rest).
pub fn expand_source(u: &UModel, p: &ParPoly, k: u32) -> Result<(ParPoly, ParPoly), ApproxError> {
    check_order(k)?;
    if let Some(found) = p.wdeg().filter(|&d| d > k) {
        return Err(ApproxError::DegreeCap { what: "P", cap: k as i64, found });
    }
    let full = u.u_poly().multiply(p)?.heat_apply();
    if k == 0 {
        return Ok((ParPoly::zero(p.dim()), full));
    }
    Ok(full.split_at(k - 1))
}

/// Per-monomial correction polynomials `Σ c^{m,ℓ}_{q,κ} x^q t^κ`, truncated to
/// weighted degree `≤ k−1`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(into = "SourceMapRepr", try_from = "SourceMapRepr")]
pub struct SourceMap {
    dim: usize,
    k: u32,
    entries: BTreeMap<ParIndex, ParPoly>,
}

/// Entries as a list so that the map serializes to formats with string keys.
#[derive(serde::Serialize, serde::Deserialize)]
struct SourceMapRepr {
    dim: usize,
    k: u32,
    entries: Vec<(ParIndex, ParPoly)>,
}

impl From<SourceMap> for SourceMapRepr {
    fn from(m: SourceMap) -> Self {
        Self { dim: m.dim, k: m.k, entries: m.entries.into_iter().collect() }
    }
}

impl TryFrom<SourceMapRepr> for SourceMap {
    type Error = ApproxError;

    fn try_from(r: SourceMapRepr) -> Result<Self, ApproxError> {
        SourceMap::new(r.dim, r.k, r.entries.into_iter().collect())
    }
}

impl SourceMap {
    /// Assembles a map from explicit entries. Entries above the order cap or
    /// with terms of weighted degree `≥ k` are rejected; triangularity is
    /// checked by [`SourceMap::check_triangular`] and by the solver.
    pub fn new(dim: usize, k: u32, entries: BTreeMap<ParIndex, ParPoly>) -> Result<Self, ApproxError> {
        check_order(k)?;
        for (idx, e) in &entries {
            if idx.dim() != dim || e.dim() != dim {
                return Err(ParPolyError::DimensionMismatch { left: dim, right: e.dim() }.into());
            }
            if idx.wdeg() > k {
                return Err(ApproxError::DegreeCap { what: "source map index", cap: k as i64, found: idx.wdeg() });
            }
            if let Some(found) = e.wdeg().filter(|&d| d + 1 > k) {
                return Err(ApproxError::DegreeCap { what: "source map entry", cap: k as i64 - 1, found });
            }
        }
        let entries = entries.into_iter().filter(|(_, e)| !e.is_zero()).collect();
        Ok(Self { dim, k, entries })
    }

    pub fn zero(dim: usize, k: u32) -> Self {
        Self { dim, k, entries: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.k
    }

    pub fn entry(&self, idx: &ParIndex) -> Option<&ParPoly> {
        self.entries.get(idx)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ParIndex, &ParPoly)> {
        self.entries.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every contribution of `(m, ℓ)` must sit at weighted degree `≥ |m| + 2ℓ`.
    pub fn check_triangular(&self) -> Result<(), ApproxError> {
        for (idx, e) in &self.entries {
            if let Some((q, _)) = e.terms().find(|(q, _)| q.wdeg() < idx.wdeg()) {
                return Err(ApproxError::NonTriangular { entry: idx.to_string(), term: q.to_string() });
            }
        }
        Ok(())
    }

    /// Coefficients for the correction `Q̃` in rescaled variables:
    /// `c̃^{m,ℓ}_{q,κ} = r^{|q|+2κ+1−(|m|+2ℓ)} c^{m,ℓ}_{q,κ}`.
    pub fn rescaled(&self, r: &Rational) -> Result<Self, ApproxError> {
        if *r <= Rational::zero() {
            return Err(ParPolyError::NonPositiveScale.into());
        }
        self.check_triangular()?;
        let entries = self
            .entries
            .iter()
            .map(|(idx, e)| {
                let scaled = ParPoly::from_terms(
                    self.dim,
                    e.terms().map(|(q, c)| (q.clone(), c * pow_rat(r, q.wdeg() + 1 - idx.wdeg()))),
                );
                (idx.clone(), scaled)
            })
            .collect();
        Ok(Self { dim: self.dim, k: self.k, entries })
    }

    /// The low-order part `R` predicted by the linearization:
    /// `Σ a_{m,ℓ} (principal(m,ℓ) + entry(m,ℓ))`, truncated to `≤ k−1`.
    pub fn apply(&self, p: &ParPoly) -> Result<ParPoly, ApproxError> {
        if p.dim() != self.dim {
            return Err(ParPolyError::DimensionMismatch { left: self.dim, right: p.dim() }.into());
        }
        let mut out = ParPoly::zero(self.dim);
        for (idx, a) in p.terms() {
            let mut contrib = principal_part(idx);
            if let Some(e) = self.entries.get(idx) {
                contrib = &contrib + e;
            }
            for (q, c) in contrib.terms() {
                out.add_term(q.clone(), c * a);
            }
        }
        Ok(below(&out, self.k))
    }
}

/// Linearizes `(Δ − ∂_t)((x_n + P₁)·x^m t^ℓ)` around the principal part for
/// every monomial of weighted degree `≤ k`. The entry for `(m, ℓ)` is
/// `2⟨DP₁, D(x^m t^ℓ)⟩ + P₁ (Δ − ∂_t)(x^m t^ℓ) + x^m t^ℓ (Δ − ∂_t)P₁`,
/// truncated to weighted degree `≤ k−1`.
pub fn build_source_map(u: &UModel, k: u32) -> Result<SourceMap, ApproxError> {
    check_order(k)?;
    let n = u.dim();
    let p1 = u.p1();
    if p1.is_zero() {
        return Ok(SourceMap::zero(n, k));
    }
    let dp1 = p1.grad();
    let heat_p1 = p1.heat_apply();
    let mut entries = BTreeMap::new();
    for idx in ParIndex::enumerate(n, k) {
        let mono = ParPoly::monomial(idx.clone(), Rational::one());
        let mut e = mono.multiply(&heat_p1)?;
        e = &e + &p1.multiply(&mono.heat_apply())?;
        for (i, dm) in mono.grad().iter().enumerate() {
            if !dm.is_zero() {
                e = &e + &dp1[i].multiply(dm)?.scale(&int(2));
            }
        }
        let e = below(&e, k);
        if !e.is_zero() {
            entries.insert(idx, e);
        }
    }
    SourceMap::new(n, k, entries)
}

/// Free coefficients: indices with `m_n = 0`.
pub type FreeAssignment = BTreeMap<ParIndex, Rational>;

/// Reads the free part (coefficients with `m_n = 0`) of a polynomial.
pub fn free_part(p: &ParPoly) -> FreeAssignment {
    p.terms().filter(|(idx, _)| idx.m_last() == 0).map(|(idx, c)| (idx.clone(), c.clone())).collect()
}

/// Indices whose coefficients are assigned freely, in solve order.
pub fn free_indices(dim: usize, k: u32) -> Vec<ParIndex> {
    ParIndex::enumerate(dim, k).into_iter().filter(|i| i.m_last() == 0).collect()
}

/// Solves for the approximating polynomial of order `k`: the unique `P` of
/// weighted degree `≤ k` whose free coefficients match `free` (missing ones
/// are zero) and whose low-order source `source.apply(P)` equals `d`.
///
/// Coefficients are determined in index order: by weighted degree, then by
/// the exponent of `x_n`. The equation for `(q, κ)` reads
/// `(q_n+1)(q_n+2) a_{q+n̄,κ} + Σ_{i≠n} (q_i+1)(q_i+2) a_{q+2ī−n̄,κ}
///  − (κ+1) a_{q−n̄,κ+1} + Σ c^{m,ℓ}_{q,κ} a_{m,ℓ} = d_{q,κ}`.
pub fn solve_approximating(
    source: &SourceMap,
    d: &ParPoly,
    free: &FreeAssignment,
    k: u32,
) -> Result<ParPoly, ApproxError> {
    check_order(k)?;
    let n = source.dim;
    if source.k != k || d.dim() != n {
        return Err(ApproxError::ShapeMismatch { map_dim: n, map_k: source.k, dim: d.dim(), k });
    }
    if let Some(found) = d.wdeg().filter(|&w| w + 1 > k) {
        return Err(ApproxError::DegreeCap { what: "d", cap: k as i64 - 1, found });
    }
    for idx in free.keys() {
        if idx.dim() != n || idx.m_last() != 0 || idx.wdeg() > k {
            return Err(ApproxError::NotFree(idx.to_string()));
        }
    }
    source.check_triangular()?;

    // Transpose: equation (q, κ) -> [(m, ℓ), c^{m,ℓ}_{q,κ}].
    let mut by_equation: BTreeMap<&ParIndex, Vec<(&ParIndex, &Rational)>> = BTreeMap::new();
    for (m, e) in source.entries() {
        for (q, c) in e.terms() {
            by_equation.entry(q).or_default().push((m, c));
        }
    }

    let last = n - 1;
    let mut known: BTreeMap<ParIndex, Rational> = BTreeMap::new();
    for idx in ParIndex::enumerate(n, k) {
        if idx.m_last() == 0 {
            let v = free.get(&idx).cloned().unwrap_or_else(Rational::zero);
            known.insert(idx, v);
            continue;
        }
        let q = idx.shift_spatial(last, -1).unwrap();
        let qn = q.m_last() as i64;
        let lookup = |j: &ParIndex| -> Result<Rational, ApproxError> {
            if j.wdeg() > k {
                return Ok(Rational::zero());
            }
            known
                .get(j)
                .cloned()
                .ok_or_else(|| ApproxError::OrderViolation { target: idx.to_string(), needed: j.to_string() })
        };
        let mut rhs = d.coeff(&q);
        if qn >= 1 {
            for i in 0..last {
                let qi = q.m()[i] as i64;
                let j = q.shift_spatial(i, 2).unwrap().shift_spatial(last, -1).unwrap();
                rhs -= int((qi + 1) * (qi + 2)) * lookup(&j)?;
            }
            let j = q.shift_spatial(last, -1).unwrap().shift_time(1).unwrap();
            rhs += int(q.ell() as i64 + 1) * lookup(&j)?;
        }
        if let Some(list) = by_equation.get(&q) {
            for (m, c) in list {
                rhs -= *c * lookup(m)?;
            }
        }
        let v = rhs / int((qn + 1) * (qn + 2));
        known.insert(idx, v);
    }
    Ok(ParPoly::from_terms(n, known).with_cap(k)?)
}

/// Projects `p` onto the approximating affine space by keeping its free part
/// and re-solving the determined coefficients.
pub fn project(source: &SourceMap, d: &ParPoly, p: &ParPoly, k: u32) -> Result<ParPoly, ApproxError> {
    let free: FreeAssignment = free_part(&p.truncate(k));
    solve_approximating(source, d, &free, k)
}

/// One basis polynomial per free index: `Q` with `x_n Q` caloric.
pub fn caloric_basis(dim: usize, k: u32) -> Result<Vec<ParPoly>, ApproxError> {
    check_order(k)?;
    let source = SourceMap::zero(dim, k);
    let d = ParPoly::zero(dim);
    free_indices(dim, k)
        .into_iter()
        .map(|idx| {
            let free = FreeAssignment::from([(idx, Rational::one())]);
            solve_approximating(&source, &d, &free, k)
        })
        .collect()
}

/// Taylor data of a variable-coefficient operator
/// `L w = Tr(A D²w) + ⟨b, Dw⟩ + c w − ∂_t w` together with the denominator
/// model and the right-hand side `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct VcModel {
    a: Vec<Vec<ParPoly>>,
    b: Vec<ParPoly>,
    c: ParPoly,
    u: UModel,
    g: ParPoly,
}

impl VcModel {
    pub fn new(a: Vec<Vec<ParPoly>>, b: Vec<ParPoly>, c: ParPoly, u: UModel, g: ParPoly) -> Result<Self, ApproxError> {
        let n = u.dim();
        let bad = |msg: String| Err(ApproxError::InvalidVcModel(msg));
        if a.len() != n || a.iter().any(|row| row.len() != n) || b.len() != n {
            return bad(format!("A must be {n}x{n} and b must have {n} components"));
        }
        let polys = a.iter().flatten().chain(b.iter()).chain([&c, &g]);
        if polys.into_iter().any(|p| p.dim() != n) {
            return bad("field dimension differs from the u-model".into());
        }
        let origin = ParIndex::constant(n);
        for (i, row) in a.iter().enumerate() {
            for (j, aij) in row.iter().enumerate() {
                let expect = if i == j { Rational::one() } else { Rational::zero() };
                if aij.coeff(&origin) != expect {
                    return bad(format!("A({i},{j}) at the origin must be {expect}"));
                }
            }
        }
        Ok(Self { a, b, c, u, g })
    }

    /// `A = I`, `b = 0`, `c = 0` with the given source.
    pub fn heat(u: UModel, g: ParPoly) -> Result<Self, ApproxError> {
        let n = u.dim();
        let a =
            (0..n).map(|i| (0..n).map(|j| if i == j { ParPoly::one(n) } else { ParPoly::zero(n) }).collect()).collect();
        Self::new(a, vec![ParPoly::zero(n); n], ParPoly::zero(n), u, g)
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn u_model(&self) -> &UModel {
        &self.u
    }

    pub fn g(&self) -> &ParPoly {
        &self.g
    }

    /// Degree caps for order `k`: `A − I` and `g` up to `k−1`, `b` and `c` up
    /// to `k−2` (identically zero when `k = 1`), `P₁` up to `k`.
    pub fn check_caps(&self, k: u32) -> Result<(), ApproxError> {
        let k = k as i64;
        let check = |what: &'static str, p: &ParPoly, cap: i64| match p.wdeg() {
            Some(found) if found as i64 > cap => Err(ApproxError::DegreeCap { what, cap, found }),
            _ => Ok(()),
        };
        let n = self.dim();
        for (i, row) in self.a.iter().enumerate() {
            for (j, aij) in row.iter().enumerate() {
                let shifted = if i == j { aij - &ParPoly::one(n) } else { aij.clone() };
                check("A - I", &shifted, k - 1)?;
            }
        }
        for bi in &self.b {
            check("b", bi, k - 2)?;
        }
        check("c", &self.c, k - 2)?;
        check("g", &self.g, k - 1)?;
        check("P1", self.u.p1(), k)
    }

    /// `L w` with every field replaced by its Taylor polynomial.
    pub fn apply(&self, w: &ParPoly) -> Result<ParPoly, ApproxError> {
        let n = self.dim();
        let grad = w.grad();
        let mut out = (&self.c.multiply(w)? - &w.dt()).clone();
        for i in 0..n {
            out = &out + &self.b[i].multiply(&grad[i])?;
            let second = grad[i].grad();
            for j in 0..n {
                if !self.a[i][j].is_zero() && !second[j].is_zero() {
                    out = &out + &self.a[i][j].multiply(&second[j])?;
                }
            }
        }
        Ok(out)
    }
}

/// Variable-coefficient analogue of [`build_source_map`]. The returned map
/// holds the full correction `L(u·x^m t^ℓ) − principal(m,ℓ)` truncated to
/// `≤ k−1`; the second value holds, per monomial, the part of that correction
/// due to `A − I`, `b` and `c` alone.
pub fn build_vc_source_map(model: &VcModel, k: u32) -> Result<(SourceMap, BTreeMap<ParIndex, ParPoly>), ApproxError> {
    check_order(k)?;
    model.check_caps(k)?;
    let n = model.dim();
    let heat_map = build_source_map(model.u_model(), k)?;
    let u_poly = model.u_model().u_poly();
    let mut entries = BTreeMap::new();
    let mut corrections = BTreeMap::new();
    for idx in ParIndex::enumerate(n, k) {
        let mono = ParPoly::monomial(idx.clone(), Rational::one());
        let full = below(&model.apply(&u_poly.multiply(&mono)?)?, k);
        let entry = &full - &principal_part(&idx);
        let entry = below(&entry, k);
        let heat_entry = heat_map.entry(&idx).cloned().unwrap_or_else(|| ParPoly::zero(n));
        let correction = &entry - &heat_entry;
        if !correction.is_zero() {
            corrections.insert(idx.clone(), correction);
        }
        if !entry.is_zero() {
            entries.insert(idx, entry);
        }
    }
    Ok((SourceMap::new(n, k, entries)?, corrections))
}

/// The approximating polynomial for `L` and `g`: the low-order part of
/// `L(uP)` matches the Taylor polynomial of `g`.
pub fn solve_vc_approximating(model: &VcModel, free: &FreeAssignment, k: u32) -> Result<ParPoly, ApproxError> {
    let (source, _) = build_vc_source_map(model, k)?;
    solve_approximating(&source, &below(model.g(), k), free, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parpoly::rat;

    fn mono(m: &[u32], ell: u32, c: Rational) -> ParPoly {
        ParPoly::monomial(ParIndex::new(m.to_vec(), ell), c)
    }

    #[test]
    fn principal_part_matches_heat_of_xn_times_monomial() {
        for n in 1..=3 {
            for idx in ParIndex::enumerate(n, 6) {
                let m = ParPoly::monomial(idx.clone(), Rational::one());
                let direct = ParPoly::x_last(n).multiply(&m).unwrap().heat_apply();
                assert_eq!(principal_part(&idx), direct, "{idx}");
            }
        }
    }

    #[test]
    fn source_map_json_round_trip() {
        let u = UModel::new(mono(&[2, 0], 0, rat(1, 4)), rat(1, 1)).unwrap();
        let map = build_source_map(&u, 4).unwrap();
        let text = serde_json::to_string(&map).unwrap();
        let back: SourceMap = serde_json::from_str(&text).unwrap();
        assert_eq!(back, map);
        // entries above the cap are rejected on the way in
        let bad = text.replacen("\"k\":4", "\"k\":1", 1);
        assert!(serde_json::from_str::<SourceMap>(&bad).is_err());
    }

    #[test]
    fn expand_source_examples() {
        let u = UModel::flat(2);
        let (r, w) = expand_source(&u, &ParPoly::one(2), 2).unwrap();
        assert!(r.is_zero() && w.is_zero());
        let (r, w) = expand_source(&u, &ParPoly::x_last(2), 2).unwrap();
        assert_eq!(r, ParPoly::constant(2, rat(2, 1)));
        assert!(w.is_zero());

        // P1 = x1^2 is not caloric, so the P·(Δ−∂t)P1 term shows up: R = 6 x1.
        let u = UModel::new(mono(&[2, 0], 0, rat(1, 1)), rat(1, 1)).unwrap();
        let p = ParPoly::var(2, 0);
        let (r, w) = expand_source(&u, &p, 3).unwrap();
        let oracle = u.u_poly().multiply(&p).unwrap().heat_apply();
        assert_eq!(&r + &w, oracle);
        assert_eq!(r, mono(&[1, 0], 0, rat(6, 1)));
    }

    #[test]
    fn expand_source_rejects_high_degree() {
        let u = UModel::flat(1);
        assert!(matches!(expand_source(&u, &ParPoly::time(1), 1), Err(ApproxError::DegreeCap { .. })));
    }

    #[test]
    fn source_map_example_entry() {
        let u = UModel::new(mono(&[1, 1], 0, rat(1, 1)), rat(1, 1)).unwrap();
        let map = build_source_map(&u, 3).unwrap();
        let e = map.entry(&ParIndex::new(vec![1, 0], 0)).unwrap();
        assert_eq!(*e, mono(&[0, 1], 0, rat(2, 1)));
        assert!(build_source_map(&UModel::flat(3), 4).unwrap().is_zero());
    }

    #[test]
    fn k1_approximating_affine_has_zero_normal_slope() {
        let source = SourceMap::zero(3, 1);
        let free = FreeAssignment::from([(ParIndex::constant(3), rat(1, 1))]);
        let p = solve_approximating(&source, &ParPoly::zero(3), &free, 1).unwrap();
        assert_eq!(p, ParPoly::one(3));
    }

    #[test]
    fn k2_time_basis_element() {
        let source = SourceMap::zero(1, 2);
        let free = FreeAssignment::from([(ParIndex::new(vec![0], 1), rat(1, 1))]);
        let p = solve_approximating(&source, &ParPoly::zero(1), &free, 2).unwrap();
        assert_eq!(p, &ParPoly::time(1) + &mono(&[2], 0, rat(1, 6)));
        assert!(ParPoly::x_last(1).multiply(&p).unwrap().heat_apply().is_zero());
    }

    #[test]
    fn constant_source_fixes_normal_slope() {
        let source = SourceMap::zero(2, 1);
        let d = ParPoly::constant(2, rat(2, 1));
        let p = solve_approximating(&source, &d, &FreeAssignment::new(), 1).unwrap();
        assert_eq!(p.coeff(&ParIndex::new(vec![0, 1], 0)), rat(1, 1));
    }

    #[test]
    fn rejects_non_free_assignment_and_non_triangular_maps() {
        let source = SourceMap::zero(2, 2);
        let free = FreeAssignment::from([(ParIndex::new(vec![0, 1], 0), rat(1, 1))]);
        assert!(matches!(solve_approximating(&source, &ParPoly::zero(2), &free, 2), Err(ApproxError::NotFree(_))));

        // entry for x1 reaching the constant monomial
        let entries = BTreeMap::from([(ParIndex::new(vec![1, 0], 0), ParPoly::one(2))]);
        let bad = SourceMap::new(2, 2, entries).unwrap();
        assert!(matches!(
            solve_approximating(&bad, &ParPoly::zero(2), &FreeAssignment::new(), 2),
            Err(ApproxError::NonTriangular { .. })
        ));
    }

    #[test]
    fn basis_small_cases() {
        let b = caloric_basis(1, 2).unwrap();
        assert_eq!(b, vec![ParPoly::one(1), &ParPoly::time(1) + &mono(&[2], 0, rat(1, 6))]);
        assert_eq!(caloric_basis(2, 1).unwrap(), vec![ParPoly::one(2), ParPoly::var(2, 0)]);
        for n in 1..=4 {
            assert_eq!(caloric_basis(n, 0).unwrap(), vec![ParPoly::one(n)]);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let u = UModel::new(&mono(&[1, 1], 0, rat(1, 8)) + &mono(&[0, 0], 1, rat(-1, 5)), rat(1, 4)).unwrap();
        let map = build_source_map(&u, 4).unwrap();
        let d = &ParPoly::one(2) + &mono(&[1, 1], 0, rat(3, 2));
        let free = FreeAssignment::from([
            (ParIndex::new(vec![2, 0], 0), rat(5, 7)),
            (ParIndex::new(vec![0, 0], 1), rat(-1, 3)),
        ]);
        let p = solve_approximating(&map, &d, &free, 4).unwrap();
        assert_eq!(project(&map, &d, &p, 4).unwrap(), p);
    }

    #[test]
    fn vc_reduces_to_heat_and_matches_normal_slope_condition() {
        let u = UModel::new(mono(&[1, 1], 0, rat(1, 5)), rat(1, 4)).unwrap();
        let vc = VcModel::heat(u.clone(), ParPoly::zero(2)).unwrap();
        let (map, corr) = build_vc_source_map(&vc, 3).unwrap();
        assert_eq!(map, build_source_map(&u, 3).unwrap());
        assert!(corr.is_empty());

        let vc = VcModel::heat(UModel::flat(2), ParPoly::constant(2, rat(2, 1))).unwrap();
        let p = solve_vc_approximating(&vc, &FreeAssignment::new(), 1).unwrap();
        assert_eq!(p.coeff(&ParIndex::new(vec![0, 1], 0)), rat(1, 1));
    }

    #[test]
    fn vc_model_validation() {
        let u = UModel::flat(1);
        let bad_a = vec![vec![ParPoly::constant(1, rat(2, 1))]];
        assert!(VcModel::new(bad_a, vec![ParPoly::zero(1)], ParPoly::zero(1), u.clone(), ParPoly::zero(1)).is_err());
        // b must vanish when k = 1
        let a = vec![vec![ParPoly::one(1)]];
        let vc = VcModel::new(a, vec![ParPoly::one(1)], ParPoly::zero(1), u, ParPoly::zero(1)).unwrap();
        assert!(matches!(vc.check_caps(1), Err(ApproxError::DegreeCap { .. })));
        assert!(vc.check_caps(2).is_ok());
    }

    #[test]
    fn umodel_validation() {
        assert!(UModel::new(ParPoly::var(2, 0), rat(1, 1)).is_err());
        assert!(UModel::new(mono(&[2, 0], 0, rat(1, 2)), rat(1, 4)).is_err());
        assert!(UModel::new(mono(&[2, 0], 0, rat(1, 4)), rat(1, 4)).is_ok());
    }
}
