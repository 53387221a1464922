//! Exact algebra of parabolic polynomials.
//!
//! A parabolic polynomial in `n` space variables and one time variable is a
//! finite sum `Σ a_{m,ℓ} x^m t^ℓ`. Time carries weight two, so the monomial
//! `x^m t^ℓ` has weighted degree `|m| + 2ℓ`. Coefficients are exact rationals;
//! [`FloatPoly`] is the floating shadow used for grid evaluation and fitting.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Rational = BigRational;

/// Largest spatial dimension supported by the polynomial layer.
pub const MAX_DIM: usize = 4;

/// Shorthand for the rational `num / den`.
///
/// Panics if `den == 0`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational value of a finite float.
pub fn rat_from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn rat_to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParPolyError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("dimension {0} outside the supported range 1..={MAX_DIM}")]
    InvalidDimension(usize),
    #[error("scale factor must be positive")]
    NonPositiveScale,
    #[error("term of weighted degree {found} exceeds the degree cap {cap}")]
    DegreeCapExceeded { cap: u32, found: u32 },
    #[error("zero denominator in coefficient record")]
    ZeroDenominator,
    #[error("malformed integer literal {0:?}")]
    BadInteger(String),
}

/// Spatial multi-index `m` together with a time exponent `ℓ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParIndex {
    m: Vec<u32>,
    ell: u32,
}

impl ParIndex {
    pub fn new(m: Vec<u32>, ell: u32) -> Self {
        assert!(!m.is_empty(), "a parabolic index needs at least one spatial slot");
        Self { m, ell }
    }

    pub fn constant(dim: usize) -> Self {
        Self::new(vec![0; dim], 0)
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &[u32] {
        &self.m
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn spatial_degree(&self) -> u32 {
        self.m.iter().sum()
    }

    /// `|m| + 2ℓ`.
    pub fn wdeg(&self) -> u32 {
        self.spatial_degree() + 2 * self.ell
    }

    /// Exponent of the last spatial variable `x_n`.
    pub fn m_last(&self) -> u32 {
        *self.m.last().expect("non-empty multi-index")
    }

    /// Index with the exponent of variable `i` shifted by `by`, or `None` if it
    /// would become negative.
    pub fn shift_spatial(&self, i: usize, by: i64) -> Option<Self> {
        let e = self.m[i] as i64 + by;
        if e < 0 {
            return None;
        }
        let mut m = self.m.clone();
        m[i] = e as u32;
        Some(Self { m, ell: self.ell })
    }

    pub fn shift_time(&self, by: i64) -> Option<Self> {
        let e = self.ell as i64 + by;
        if e < 0 {
            return None;
        }
        Some(Self { m: self.m.clone(), ell: e as u32 })
    }

    /// Componentwise sum (the index of a product of monomials).
    pub fn combine(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self { m: self.m.iter().zip(&other.m).map(|(a, b)| a + b).collect(), ell: self.ell + other.ell }
    }

    /// All indices of dimension `dim` with weighted degree at most `max_wdeg`,
    /// in ascending order.
    pub fn enumerate(dim: usize, max_wdeg: u32) -> Vec<Self> {
        let mut out = Vec::new();
        let mut m = vec![0u32; dim];
        fn rec(slot: usize, budget: u32, m: &mut Vec<u32>, out: &mut Vec<ParIndex>) {
            if slot == m.len() {
                for ell in 0..=budget / 2 {
                    out.push(ParIndex { m: m.clone(), ell });
                }
                return;
            }
            for e in 0..=budget {
                m[slot] = e;
                rec(slot + 1, budget - e, m, out);
            }
            m[slot] = 0;
        }
        rec(0, max_wdeg, &mut m, &mut out);
        out.sort();
        out
    }

    /// Monomial value `x^m t^ℓ` in floating point.
    pub fn eval_f64(&self, x: &[f64], t: f64) -> f64 {
        let mut v = t.powi(self.ell as i32);
        for (xi, &e) in x.iter().zip(&self.m) {
            v *= xi.powi(e as i32);
        }
        v
    }
}

/// Graded by weighted degree, then by the exponent of `x_n` ascending, then
/// reverse-lexicographically on the spatial exponents. Two distinct indices
/// never compare equal because `ℓ` is fixed by `wdeg` and `m`.
impl Ord for ParIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.wdeg()
            .cmp(&other.wdeg())
            .then_with(|| self.m.len().cmp(&other.m.len()))
            .then_with(|| self.m_last().cmp(&other.m_last()))
            .then_with(|| other.m.cmp(&self.m))
            .then_with(|| self.ell.cmp(&other.ell))
    }
}

impl PartialOrd for ParIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ParIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &e) in self.m.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            write!(f, "x{}", i + 1)?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        if self.ell > 0 {
            if !first {
                f.write_str("*")?;
            }
            first = false;
            f.write_str("t")?;
            if self.ell > 1 {
                write!(f, "^{}", self.ell)?;
            }
        }
        if first {
            f.write_str("1")?;
        }
        Ok(())
    }
}

/// A parabolic polynomial with exact rational coefficients.
///
/// The coefficient map never stores zeros, so two polynomials are equal iff
/// their maps are equal. The optional degree cap is bookkeeping and does not
/// take part in equality.
#[derive(Debug, Clone)]
pub struct ParPoly {
    dim: usize,
    coeffs: BTreeMap<ParIndex, Rational>,
    degree_cap: Option<u32>,
}

impl PartialEq for ParPoly {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.coeffs == other.coeffs
    }
}

impl Eq for ParPoly {}

impl ParPoly {
    pub fn zero(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} outside 1..={MAX_DIM}");
        Self { dim, coeffs: BTreeMap::new(), degree_cap: None }
    }

    pub fn constant(dim: usize, c: Rational) -> Self {
        Self::monomial(ParIndex::constant(dim), c)
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, Rational::one())
    }

    pub fn monomial(idx: ParIndex, c: Rational) -> Self {
        let mut p = Self::zero(idx.dim());
        p.add_term(idx, c);
        p
    }

    /// The coordinate `x_{i+1}` (zero-based `i`).
    pub fn var(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let mut m = vec![0; dim];
        m[i] = 1;
        Self::monomial(ParIndex::new(m, 0), Rational::one())
    }

    /// The last spatial coordinate `x_n`.
    pub fn x_last(dim: usize) -> Self {
        Self::var(dim, dim - 1)
    }

    pub fn time(dim: usize) -> Self {
        Self::monomial(ParIndex::new(vec![0; dim], 1), Rational::one())
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (ParIndex, Rational)>,
    {
        let mut p = Self::zero(dim);
        for (idx, c) in terms {
            assert_eq!(idx.dim(), dim, "term dimension mismatch");
            p.add_term(idx, c);
        }
        p
    }

    /// Adds `c·x^m t^ℓ` in place, keeping the map zero-free.
    pub fn add_term(&mut self, idx: ParIndex, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.coeffs.entry(idx) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree_cap(&self) -> Option<u32> {
        self.degree_cap
    }

    /// Attaches a degree cap, failing if a stored term exceeds it.
    pub fn with_cap(mut self, cap: u32) -> Result<Self, ParPolyError> {
        if let Some(found) = self.wdeg().filter(|&d| d > cap) {
            return Err(ParPolyError::DegreeCapExceeded { cap, found });
        }
        self.degree_cap = Some(cap);
        Ok(self)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, idx: &ParIndex) -> Rational {
        self.coeffs.get(idx).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ParIndex, &Rational)> {
        self.coeffs.iter()
    }

    /// Highest weighted degree present, `None` for the zero polynomial.
    pub fn wdeg(&self) -> Option<u32> {
        self.coeffs.keys().map(ParIndex::wdeg).max()
    }

    /// Lowest weighted degree present, `None` for the zero polynomial.
    pub fn min_wdeg(&self) -> Option<u32> {
        self.coeffs.keys().map(ParIndex::wdeg).min()
    }

    /// `max |a_{m,ℓ}|`, zero for the zero polynomial.
    pub fn norm(&self) -> Rational {
        self.coeffs.values().map(|c| c.abs()).max().unwrap_or_else(Rational::zero)
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero(self.dim);
        }
        Self {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
            degree_cap: self.degree_cap,
        }
    }

    fn check_dim(&self, other: &Self) -> Result<(), ParPolyError> {
        if self.dim != other.dim {
            return Err(ParPolyError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, ParPolyError> {
        self.check_dim(other)?;
        let mut out = self.clone();
        out.degree_cap = None;
        for (k, v) in &other.coeffs {
            out.add_term(k.clone(), v.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, ParPolyError> {
        self.check_dim(other)?;
        let mut out = self.clone();
        out.degree_cap = None;
        for (k, v) in &other.coeffs {
            out.add_term(k.clone(), -v.clone());
        }
        Ok(out)
    }

    /// Exact product of two polynomials.
    pub fn multiply(&self, other: &Self) -> Result<Self, ParPolyError> {
        self.check_dim(other)?;
        let mut out = Self::zero(self.dim);
        for (ka, va) in &self.coeffs {
            for (kb, vb) in &other.coeffs {
                out.add_term(ka.combine(kb), va * vb);
            }
        }
        Ok(out)
    }

    /// `∂/∂x_{i+1}`.
    pub fn partial(&self, i: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (k, v) in &self.coeffs {
            let e = k.m[i];
            if e > 0 {
                out.add_term(k.shift_spatial(i, -1).unwrap(), v * Rational::from_integer(e.into()));
            }
        }
        out
    }

    pub fn grad(&self) -> Vec<Self> {
        (0..self.dim).map(|i| self.partial(i)).collect()
    }

    pub fn dt(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for (k, v) in &self.coeffs {
            if k.ell > 0 {
                out.add_term(k.shift_time(-1).unwrap(), v * Rational::from_integer(k.ell.into()));
            }
        }
        out
    }

    pub fn laplacian(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for (k, v) in &self.coeffs {
            for i in 0..self.dim {
                let e = k.m[i];
                if e >= 2 {
                    let f = Rational::from_integer((e * (e - 1)).into());
                    out.add_term(k.shift_spatial(i, -2).unwrap(), v * f);
                }
            }
        }
        out
    }

    /// `ΔP − ∂_t P`.
    pub fn heat_apply(&self) -> Self {
        let mut out = self.laplacian();
        for (k, v) in self.dt().coeffs {
            out.add_term(k, -v);
        }
        out
    }

    /// `Q(x, t) ↦ Q(x/r, t/r²)`: the coefficient of `x^q t^κ` is multiplied by
    /// `r^{-(|q|+2κ)}`.
    pub fn rescale(&self, r: &Rational) -> Result<Self, ParPolyError> {
        if !r.is_positive() {
            return Err(ParPolyError::NonPositiveScale);
        }
        let inv = r.recip();
        let coeffs = self.coeffs.iter().map(|(k, v)| (k.clone(), v * pow_rat(&inv, k.wdeg()))).collect();
        Ok(Self { dim: self.dim, coeffs, degree_cap: self.degree_cap })
    }

    /// Terms of weighted degree `≤ max_wdeg`.
    pub fn truncate(&self, max_wdeg: u32) -> Self {
        Self {
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| k.wdeg() <= max_wdeg)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            degree_cap: Some(max_wdeg),
        }
    }

    /// Splits into `(terms with wdeg ≤ max_wdeg, remaining terms)`.
    pub fn split_at(&self, max_wdeg: u32) -> (Self, Self) {
        let mut low = Self::zero(self.dim);
        let mut high = Self::zero(self.dim);
        for (k, v) in &self.coeffs {
            if k.wdeg() <= max_wdeg {
                low.coeffs.insert(k.clone(), v.clone());
            } else {
                high.coeffs.insert(k.clone(), v.clone());
            }
        }
        (low, high)
    }

    /// Exact evaluation at `(x, t)`.
    pub fn eval(&self, x: &[Rational], t: &Rational) -> Result<Rational, ParPolyError> {
        if x.len() != self.dim {
            return Err(ParPolyError::DimensionMismatch { left: self.dim, right: x.len() });
        }
        // Power tables shared by all terms.
        let max_e = self.coeffs.keys().flat_map(|k| k.m.iter().copied()).max().unwrap_or(0);
        let max_l = self.coeffs.keys().map(|k| k.ell).max().unwrap_or(0);
        let powers: Vec<Vec<Rational>> = x.iter().map(|xi| power_table(xi, max_e)).collect();
        let tpow = power_table(t, max_l);
        let mut acc = Rational::zero();
        for (k, v) in &self.coeffs {
            let mut term = v * &tpow[k.ell as usize];
            for (i, &e) in k.m.iter().enumerate() {
                term *= &powers[i][e as usize];
            }
            acc += term;
        }
        Ok(acc)
    }

    pub fn eval_f64(&self, x: &[f64], t: f64) -> Result<f64, ParPolyError> {
        if x.len() != self.dim {
            return Err(ParPolyError::DimensionMismatch { left: self.dim, right: x.len() });
        }
        Ok(self.coeffs.iter().map(|(k, v)| rat_to_f64(v) * k.eval_f64(x, t)).sum())
    }

    pub fn to_float(&self) -> FloatPoly {
        FloatPoly { dim: self.dim, coeffs: self.coeffs.iter().map(|(k, v)| (k.clone(), rat_to_f64(v))).collect() }
    }

    pub fn records(&self) -> Vec<CoeffRecord> {
        self.coeffs
            .iter()
            .map(|(k, v)| CoeffRecord {
                m: k.m.clone(),
                ell: k.ell,
                num: IntLiteral::from(v.numer()),
                den: IntLiteral::from(v.denom()),
            })
            .collect()
    }

    pub fn from_records(dim: usize, records: &[CoeffRecord]) -> Result<Self, ParPolyError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(ParPolyError::InvalidDimension(dim));
        }
        let mut p = Self::zero(dim);
        for r in records {
            if r.m.len() != dim {
                return Err(ParPolyError::DimensionMismatch { left: dim, right: r.m.len() });
            }
            let num = r.num.to_bigint()?;
            let den = r.den.to_bigint()?;
            if den.is_zero() {
                return Err(ParPolyError::ZeroDenominator);
            }
            p.add_term(ParIndex::new(r.m.clone(), r.ell), Rational::new(num, den));
        }
        Ok(p)
    }
}

fn power_table(x: &Rational, max_e: u32) -> Vec<Rational> {
    let mut v = Vec::with_capacity(max_e as usize + 1);
    v.push(Rational::one());
    for i in 0..max_e as usize {
        let next = &v[i] * x;
        v.push(next);
    }
    v
}

pub(crate) fn pow_rat(x: &Rational, e: u32) -> Rational {
    num_traits::pow(x.clone(), e as usize)
}

impl Add for &ParPoly {
    type Output = ParPoly;
    fn add(self, rhs: &ParPoly) -> ParPoly {
        self.checked_add(rhs).expect("polynomial addition")
    }
}

impl Sub for &ParPoly {
    type Output = ParPoly;
    fn sub(self, rhs: &ParPoly) -> ParPoly {
        self.checked_sub(rhs).expect("polynomial subtraction")
    }
}

impl Mul for &ParPoly {
    type Output = ParPoly;
    fn mul(self, rhs: &ParPoly) -> ParPoly {
        self.multiply(rhs).expect("polynomial product")
    }
}

impl Neg for &ParPoly {
    type Output = ParPoly;
    fn neg(self) -> ParPoly {
        self.scale(&-Rational::one())
    }
}

impl fmt::Display for ParPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (i, (k, v)) in self.coeffs.iter().enumerate() {
            let neg = v.is_negative();
            let a = v.abs();
            if i == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            let is_const = k.wdeg() == 0;
            if a.is_one() && !is_const {
                write!(f, "{k}")?;
            } else if is_const {
                write!(f, "{a}")?;
            } else {
                write!(f, "{a}*{k}")?;
            }
        }
        Ok(())
    }
}

/// Integer literal that stays a JSON/TOML number when it fits in `i64` and
/// falls back to a decimal string otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntLiteral {
    Small(i64),
    Big(String),
}

impl From<&BigInt> for IntLiteral {
    fn from(v: &BigInt) -> Self {
        match v.to_i64() {
            Some(s) => Self::Small(s),
            None => Self::Big(v.to_string()),
        }
    }
}

impl IntLiteral {
    pub fn to_bigint(&self) -> Result<BigInt, ParPolyError> {
        match self {
            Self::Small(v) => Ok(BigInt::from(*v)),
            Self::Big(s) => s.parse().map_err(|_| ParPolyError::BadInteger(s.clone())),
        }
    }
}

/// One serialized coefficient `num/den · x^m t^ℓ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoeffRecord {
    pub m: Vec<u32>,
    pub ell: u32,
    pub num: IntLiteral,
    pub den: IntLiteral,
}

#[derive(Serialize, Deserialize)]
struct ParPolyRepr {
    dim: usize,
    terms: Vec<CoeffRecord>,
}

impl Serialize for ParPoly {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ParPolyRepr { dim: self.dim, terms: self.records() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = ParPolyRepr::deserialize(d)?;
        ParPoly::from_records(repr.dim, &repr.terms).map_err(serde::de::Error::custom)
    }
}

/// Floating-point parabolic polynomial, used for fitted witnesses.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatPoly {
    dim: usize,
    coeffs: BTreeMap<ParIndex, f64>,
}

impl FloatPoly {
    pub fn zero(dim: usize) -> Self {
        Self { dim, coeffs: BTreeMap::new() }
    }

    pub fn from_terms<I: IntoIterator<Item = (ParIndex, f64)>>(dim: usize, terms: I) -> Self {
        let mut p = Self::zero(dim);
        for (k, v) in terms {
            *p.coeffs.entry(k).or_insert(0.0) += v;
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeff(&self, idx: &ParIndex) -> f64 {
        self.coeffs.get(idx).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ParIndex, &f64)> {
        self.coeffs.iter()
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        self.coeffs.iter().map(|(k, v)| v * k.eval_f64(x, t)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.values().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Exact rational copy; non-finite coefficients are rejected.
    pub fn to_exact(&self) -> Option<ParPoly> {
        let mut p = ParPoly::zero(self.dim);
        for (k, v) in &self.coeffs {
            p.add_term(k.clone(), rat_from_f64(*v)?);
        }
        Some(p)
    }
}

#[derive(Serialize, Deserialize)]
struct FloatTerm {
    m: Vec<u32>,
    ell: u32,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct FloatPolyRepr {
    dim: usize,
    terms: Vec<FloatTerm>,
}

impl Serialize for FloatPoly {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let terms = self.coeffs.iter().map(|(k, v)| FloatTerm { m: k.m.clone(), ell: k.ell, value: *v }).collect();
        FloatPolyRepr { dim: self.dim, terms }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FloatPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = FloatPolyRepr::deserialize(d)?;
        if let Some(t) = repr.terms.iter().find(|t| t.m.len() != repr.dim) {
            return Err(serde::de::Error::custom(format!("term has {} exponents, expected {}", t.m.len(), repr.dim)));
        }
        Ok(FloatPoly::from_terms(repr.dim, repr.terms.into_iter().map(|t| (ParIndex::new(t.m, t.ell), t.value))))
    }
}
