//! Sparse multivariate polynomial arithmetic over a fixed variable ordering.
//!
//! Polynomials are exponent-map sparse: a `BTreeMap` from a multi-index α to
//! a nonzero `f64` coefficient, keyed in graded-lexicographic order (ascending
//! total degree, descending lexicographic within a degree). The graded-lex
//! ordering is also the canonical ordering of `vec(p)` wherever coefficient
//! vectors or moment vectors are serialized.
//!
//! Everything here is immutable after construction and safe to share across
//! threads.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("variable spaces differ: {0} vs {1}")]
    SpaceMismatch(String, String),
    #[error("point has dimension {got}, space has {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("affine substitution with zero scale on variable {0}")]
    ZeroScale(String),
    #[error("box interval [{lo}, {hi}] on variable {var} is empty")]
    EmptyInterval { var: String, lo: f64, hi: f64 },
    #[error("variable {0} not present in space")]
    UnknownVariable(String),
}

/// An ordered set of variable names; the ambient coordinates every polynomial
/// is expressed in. The ordering is fixed for the lifetime of any polynomial
/// built over it.
#[derive(Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariableSpace {
    names: Arc<Vec<String>>,
}

impl VariableSpace {
    pub fn new<S: Into<String>>(names: Vec<S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut unique = names.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), names.len(), "variable names must be unique");
        assert!(!names.is_empty(), "variable space must be non-empty");
        Self { names: Arc::new(names) }
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl PartialEq for VariableSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.names, &other.names) || self.names == other.names
    }
}
impl Eq for VariableSpace {}

impl fmt::Debug for VariableSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.names.join(", "))
    }
}

/// Exponent multi-index α; one entry per variable of the owning space.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u8>);

impl MultiIndex {
    pub fn zeros(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, var: usize) -> Self {
        let mut e = vec![0u8; n];
        e[var] = 1;
        MultiIndex(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Graded-lexicographic: ascending total degree, then descending
/// lexicographic comparison of the exponent vectors. Yields 1, x, y, x²,
/// xy, y², ... for two variables.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials of total degree ≤ `d` over `n` variables, in graded-lex order.
pub fn monomials_up_to(n: usize, d: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; n];
    fn rec(out: &mut Vec<MultiIndex>, cur: &mut Vec<u8>, var: usize, rem: u32) {
        if var == cur.len() {
            out.push(MultiIndex(cur.clone()));
            return;
        }
        for e in 0..=rem {
            cur[var] = e as u8;
            rec(out, cur, var + 1, rem - e);
        }
        cur[var] = 0;
    }
    rec(&mut out, &mut cur, 0, d);
    out.sort();
    out
}

/// Sparse multivariate polynomial with real coefficients. Zero coefficients
/// are never stored.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    space: VariableSpace,
    terms: BTreeMap<MultiIndex, f64>,
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(a, c)| {
                let mono: Vec<String> = a
                    .0
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| {
                        if e == 1 {
                            self.space.names()[i].clone()
                        } else {
                            format!("{}^{}", self.space.names()[i], e)
                        }
                    })
                    .collect();
                if mono.is_empty() {
                    format!("{c}")
                } else {
                    format!("{c}*{}", mono.join("*"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl Polynomial {
    pub fn zero(space: &VariableSpace) -> Self {
        Polynomial { space: space.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(space: &VariableSpace, c: f64) -> Self {
        let mut p = Self::zero(space);
        if c != 0.0 {
            p.terms.insert(MultiIndex::zeros(space.count()), c);
        }
        p
    }

    /// The monomial `x_var`.
    pub fn var(space: &VariableSpace, var: usize) -> Self {
        assert!(var < space.count());
        let mut p = Self::zero(space);
        p.terms.insert(MultiIndex::unit(space.count(), var), 1.0);
        p
    }

    pub fn var_named(space: &VariableSpace, name: &str) -> Result<Self, PolyError> {
        let idx = space
            .index_of(name)
            .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
        Ok(Self::var(space, idx))
    }

    pub fn from_terms(
        space: &VariableSpace,
        terms: impl IntoIterator<Item = (MultiIndex, f64)>,
    ) -> Self {
        let mut map = BTreeMap::new();
        for (a, c) in terms {
            assert_eq!(a.0.len(), space.count(), "multi-index arity mismatch");
            let entry = map.entry(a).or_insert(0.0);
            *entry += c;
        }
        map.retain(|_, c| *c != 0.0);
        Polynomial { space: space.clone(), terms: map }
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(a, &c)| (a, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    fn check_space(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.space != other.space {
            return Err(PolyError::SpaceMismatch(
                format!("{:?}", self.space),
                format!("{:?}", other.space),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.space.count() {
            return Err(PolyError::DimensionMismatch {
                got: point.len(),
                want: self.space.count(),
            });
        }
        let mut acc = 0.0;
        for (alpha, c) in &self.terms {
            let mut m = c * 1.0;
            for (i, &e) in alpha.0.iter().enumerate() {
                if e > 0 {
                    m *= point[i].powi(e as i32);
                }
            }
            acc += m;
        }
        Ok(acc)
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(other)?;
        let mut terms = self.terms.clone();
        for (a, c) in &other.terms {
            let e = terms.entry(a.clone()).or_insert(0.0);
            *e += c;
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial { space: self.space.clone(), terms })
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        if factor == 0.0 {
            return Polynomial::zero(&self.space);
        }
        let terms = self.terms.iter().map(|(a, c)| (a.clone(), c * factor)).collect();
        Polynomial { space: self.space.clone(), terms }
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(other)?;
        let mut terms: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let e = terms.entry(a.add(b)).or_insert(0.0);
                *e += ca * cb;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial { space: self.space.clone(), terms })
    }

    pub fn partial_derivative(&self, var: usize) -> Polynomial {
        assert!(var < self.space.count());
        let mut terms = BTreeMap::new();
        for (a, c) in &self.terms {
            let e = a.0[var];
            if e > 0 {
                let mut d = a.clone();
                d.0[var] = e - 1;
                terms.insert(d, c * e as f64);
            }
        }
        Polynomial { space: self.space.clone(), terms }
    }

    /// Substitute an exact value for one variable, keeping the space.
    pub fn substitute_value(&self, var: usize, value: f64) -> Polynomial {
        let mut terms: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (a, c) in &self.terms {
            let e = a.0[var];
            let factor = if e == 0 { 1.0 } else { value.powi(e as i32) };
            if factor == 0.0 {
                continue;
            }
            let mut d = a.clone();
            d.0[var] = 0;
            *terms.entry(d).or_insert(0.0) += c * factor;
        }
        terms.retain(|_, c| *c != 0.0);
        Polynomial { space: self.space.clone(), terms }
    }

    /// Per-variable affine substitution x_i ← a_i·z_i + b_i (exact, degree
    /// preserving). Entries of `maps` align with the variable ordering.
    pub fn affine_substitute(&self, maps: &[AffineMap1]) -> Result<Polynomial, PolyError> {
        assert_eq!(maps.len(), self.space.count());
        for (i, m) in maps.iter().enumerate() {
            if m.scale == 0.0 {
                return Err(PolyError::ZeroScale(self.space.names()[i].clone()));
            }
        }
        let n = self.space.count();
        let mut terms: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        // Expand each monomial Π (a_i z_i + b_i)^{e_i} by binomial products.
        for (alpha, c) in &self.terms {
            let mut partial: Vec<(MultiIndex, f64)> =
                vec![(MultiIndex::zeros(n), *c)];
            for (i, &e) in alpha.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let m = &maps[i];
                let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
                // (a z + b)^e = Σ_j C(e,j) a^j b^(e-j) z^j
                let mut binom = vec![0f64; e as usize + 1];
                binom[0] = 1.0;
                for j in 1..=e as usize {
                    binom[j] = binom[j - 1] * (e as usize - j + 1) as f64 / j as f64;
                }
                for (idx, coef) in &partial {
                    for j in 0..=e as usize {
                        let w = coef
                            * binom[j]
                            * m.scale.powi(j as i32)
                            * m.offset.powi(e as i32 - j as i32);
                        if w == 0.0 {
                            continue;
                        }
                        let mut d = idx.clone();
                        d.0[i] = j as u8;
                        next.push((d, w));
                    }
                }
                partial = next;
            }
            for (idx, w) in partial {
                *terms.entry(idx).or_insert(0.0) += w;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial { space: self.space.clone(), terms })
    }

    /// Re-express this polynomial over `target`, matching variables by name.
    /// Every variable carrying a nonzero exponent must exist in `target`.
    pub fn embed(&self, target: &VariableSpace) -> Result<Polynomial, PolyError> {
        let mut map = Vec::with_capacity(self.space.count());
        for name in self.space.names() {
            map.push(target.index_of(name));
        }
        let mut terms = BTreeMap::new();
        for (a, c) in &self.terms {
            let mut d = vec![0u8; target.count()];
            for (i, &e) in a.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                match map[i] {
                    Some(j) => d[j] = e,
                    None => {
                        return Err(PolyError::UnknownVariable(
                            self.space.names()[i].clone(),
                        ))
                    }
                }
            }
            *terms.entry(MultiIndex(d)).or_insert(0.0) += c;
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial { space: target.clone(), terms })
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// One-variable affine map x ← scale·z + offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap1 {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap1 {
    pub fn identity() -> Self {
        AffineMap1 { scale: 1.0, offset: 0.0 }
    }

    /// Map sending z ∈ [−1,1] onto [lo, hi].
    pub fn unit_to_interval(lo: f64, hi: f64) -> Self {
        AffineMap1 { scale: (hi - lo) / 2.0, offset: (hi + lo) / 2.0 }
    }

    pub fn inverse(&self) -> Self {
        AffineMap1 { scale: 1.0 / self.scale, offset: -self.offset / self.scale }
    }

    pub fn apply(&self, z: f64) -> f64 {
        self.scale * z + self.offset
    }
}

/// Axis-aligned closed box, one interval per variable of `space`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    space: VariableSpace,
    lows: Vec<f64>,
    highs: Vec<f64>,
}

impl BoxDomain {
    pub fn new(space: &VariableSpace, intervals: &[(f64, f64)]) -> Result<Self, PolyError> {
        assert_eq!(intervals.len(), space.count());
        for (i, &(lo, hi)) in intervals.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(PolyError::EmptyInterval {
                    var: space.names()[i].clone(),
                    lo,
                    hi,
                });
            }
        }
        Ok(BoxDomain {
            space: space.clone(),
            lows: intervals.iter().map(|&(l, _)| l).collect(),
            highs: intervals.iter().map(|&(_, h)| h).collect(),
        })
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn low(&self, i: usize) -> f64 {
        self.lows[i]
    }

    pub fn high(&self, i: usize) -> f64 {
        self.highs[i]
    }

    pub fn dim(&self) -> usize {
        self.lows.len()
    }

    pub fn volume(&self) -> f64 {
        self.lows.iter().zip(&self.highs).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lows.iter().zip(&self.highs))
                .all(|(&x, (&l, &h))| x >= l && x <= h)
    }

    /// Affine maps sending the unit box [−1,1]^n onto this box, per variable.
    pub fn scaling_from_unit(&self) -> Vec<AffineMap1> {
        self.lows
            .iter()
            .zip(&self.highs)
            .map(|(&l, &h)| AffineMap1::unit_to_interval(l, h))
            .collect()
    }

    /// Midpoint + half-width sampling helper.
    pub fn sample_uniform(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        self.lows
            .iter()
            .zip(&self.highs)
            .map(|(&l, &h)| rng.gen_range(l..=h))
            .collect()
    }
}

/// Lebesgue moments y_α = ∫_box x^α dλ for all |α| ≤ degree, graded-lex order.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub space: VariableSpace,
    pub degree: u32,
    entries: BTreeMap<MultiIndex, f64>,
}

impl MomentVector {
    pub fn get(&self, alpha: &MultiIndex) -> f64 {
        self.entries.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.entries.iter().map(|(a, &y)| (a, y))
    }

    /// The moment functional applied to a polynomial: Σ_α c_α y_α.
    pub fn pair(&self, p: &Polynomial) -> f64 {
        p.terms().map(|(a, c)| c * self.get(a)).sum()
    }
}

/// Exact monomial moments of the Lebesgue measure over a box:
/// y_α = Π_i (hi_i^{α_i+1} − lo_i^{α_i+1}) / (α_i+1).
pub fn box_moments(domain: &BoxDomain, degree: u32) -> MomentVector {
    let n = domain.dim();
    let mut entries = BTreeMap::new();
    for alpha in monomials_up_to(n, degree) {
        let mut y = 1.0;
        for i in 0..n {
            let e = alpha.0[i] as i32;
            y *= (domain.high(i).powi(e + 1) - domain.low(i).powi(e + 1)) / (e + 1) as f64;
        }
        entries.insert(alpha, y);
    }
    MomentVector { space: domain.space().clone(), degree, entries }
}

// --- serialization ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TermRepr {
    exp: Vec<u8>,
    coef: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    variables: Vec<String>,
    terms: Vec<TermRepr>,
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = PolyRepr {
            variables: self.space.names().to_vec(),
            terms: self
                .terms
                .iter()
                .map(|(a, &c)| TermRepr { exp: a.0.clone(), coef: c })
                .collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PolyRepr::deserialize(deserializer)?;
        let space = VariableSpace::new(repr.variables);
        let mut terms = BTreeMap::new();
        for t in repr.terms {
            if t.exp.len() != space.count() {
                return Err(serde::de::Error::custom("term arity mismatch"));
            }
            terms.insert(MultiIndex(t.exp), t.coef);
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial { space, terms })
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_poly(n_vars: usize, degree: u32) -> impl Strategy<Value = Polynomial> {
        let monos = monomials_up_to(n_vars, degree);
        let len = monos.len();
        proptest::collection::vec(-2.0f64..2.0, len).prop_map(move |coefs| {
            let space = VariableSpace::new(
                (0..n_vars).map(|i| format!("v{i}")).collect::<Vec<_>>(),
            );
            Polynomial::from_terms(
                &space,
                monos.iter().cloned().zip(coefs).filter(|(_, c)| c.abs() > 1e-3),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eval_is_ring_homomorphism(
            p in arb_poly(3, 4),
            q in arb_poly(3, 4),
            z in proptest::collection::vec(-1.5f64..1.5, 3),
        ) {
            let sum = p.add(&q).unwrap();
            let prod = p.mul(&q).unwrap();
            let (pe, qe) = (p.eval(&z).unwrap(), q.eval(&z).unwrap());
            let scale = 1.0 + pe.abs() + qe.abs() + (pe * qe).abs();
            prop_assert!((sum.eval(&z).unwrap() - (pe + qe)).abs() <= 1e-10 * scale);
            prop_assert!((prod.eval(&z).unwrap() - pe * qe).abs() <= 1e-10 * scale * scale);
        }

        #[test]
        fn mul_degree_adds(p in arb_poly(2, 3), q in arb_poly(2, 3)) {
            prop_assume!(!p.is_zero() && !q.is_zero());
            let prod = p.mul(&q).unwrap();
            prop_assert!(prod.is_zero() || prod.total_degree() <= p.total_degree() + q.total_degree());
        }
    }
}
