//! The graded-commutative series algebra the whole crate computes in.
//!
//! Generators: even variables `x1, x2, …`, a formal even parameter `ħ`, and
//! odd variables `ξ1, ξ2, …`.  Odd variables anticommute and square to zero;
//! everything else commutes.  Elements are finite rational linear combinations
//! of monomials `x^α · ξ_S · ħ^j` with `S` a strictly increasing index set.
//!
//! Monomials are dimension-agnostic: exponent vectors carry no trailing
//! zeros, so `x1^2` means the same element whether the ambient model has one
//! variable or ten.  Sign bookkeeping follows the Koszul convention: odd
//! factors are kept in increasing index order, and reordering picks up one
//! sign per transposition.
//!
//! An element may carry a [`TruncationPolicy`].  The policy with cutoff `K`
//! retains a monomial with `ħ`-power `j` and total x-degree `d` iff
//! `j + ceil(d/2) <= K`; this is closed under the operations used by the
//! expectation engines, because every x-pair consumes at least a half power
//! of `ħ` on its way to a constant.
//!
//! ```
//! use bvcalc::algebra::GradedElement;
//! use bvcalc::rational::rat;
//!
//! let x = GradedElement::x(0);
//! let xi = GradedElement::xi(0);
//! assert_eq!(&xi * &xi, GradedElement::zero());
//! assert_eq!((&x * &xi).partial_xi(0), x);
//! ```

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};

use crate::error::BvError;
use crate::rational::{format_rational, Rat};
use crate::series::HbarSeries;

/// A monomial `x^α · ξ_S · ħ^j` (coefficient excluded).
#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub struct Monomial {
    /// Exponents of `x1, x2, …`; never ends in zero.
    x_exp: Vec<u32>,
    /// Strictly increasing 0-based indices of the odd factors.
    xi: Vec<u8>,
    /// Power of `ħ`.
    hbar: u32,
}

impl Monomial {
    /// Builds a monomial, normalizing the exponent vector.  Panics unless the
    /// odd index set is strictly increasing.
    pub fn new(mut x_exp: Vec<u32>, xi: Vec<u8>, hbar: u32) -> Self {
        while x_exp.last() == Some(&0) {
            x_exp.pop();
        }
        assert!(
            xi.windows(2).all(|w| w[0] < w[1]),
            "odd index set must be strictly increasing"
        );
        Monomial { x_exp, xi, hbar }
    }

    pub fn one() -> Self {
        Monomial::new(vec![], vec![], 0)
    }

    pub fn x(index: usize) -> Self {
        Self::x_pow(index, 1)
    }

    pub fn x_pow(index: usize, exp: u32) -> Self {
        let mut x_exp = vec![0; index + 1];
        x_exp[index] = exp;
        Monomial::new(x_exp, vec![], 0)
    }

    pub fn xi(index: usize) -> Self {
        Monomial::new(vec![], vec![index as u8], 0)
    }

    pub fn hbar(power: u32) -> Self {
        Monomial::new(vec![], vec![], power)
    }

    pub fn x_exponents(&self) -> &[u32] {
        &self.x_exp
    }

    pub fn x_exponent(&self, index: usize) -> u32 {
        self.x_exp.get(index).copied().unwrap_or(0)
    }

    pub fn xi_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.xi.iter().map(|&i| i as usize)
    }

    pub fn hbar_power(&self) -> u32 {
        self.hbar
    }

    /// Total degree in the even variables.
    pub fn x_degree(&self) -> u32 {
        self.x_exp.iter().sum()
    }

    /// Number of odd factors (the homological degree).
    pub fn xi_degree(&self) -> usize {
        self.xi.len()
    }

    pub fn is_constant(&self) -> bool {
        self.x_exp.is_empty() && self.xi.is_empty()
    }

    /// Largest 0-based variable index appearing (even or odd), if any.
    pub fn max_index(&self) -> Option<usize> {
        let x_max = self.x_exp.len().checked_sub(1);
        let xi_max = self.xi.last().map(|&i| i as usize);
        x_max.into_iter().chain(xi_max).max()
    }

    /// Product with Koszul sign; `None` when an odd factor repeats.
    fn mul(&self, other: &Self) -> Option<(Self, bool)> {
        let mut x_exp = self.x_exp.clone();
        if other.x_exp.len() > x_exp.len() {
            x_exp.resize(other.x_exp.len(), 0);
        }
        for (i, e) in other.x_exp.iter().enumerate() {
            x_exp[i] += e;
        }
        // Merge the odd index lists; each pair (s, t) with s from the left
        // factor, t from the right, s > t costs one transposition.
        let mut xi = Vec::with_capacity(self.xi.len() + other.xi.len());
        let mut inversions = 0usize;
        let (mut a, mut b) = (self.xi.iter().peekable(), other.xi.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&s), Some(&&t)) => match s.cmp(&t) {
                    Ordering::Equal => return None,
                    Ordering::Less => {
                        xi.push(s);
                        a.next();
                    }
                    Ordering::Greater => {
                        inversions += a.len();
                        xi.push(t);
                        b.next();
                    }
                },
                (Some(_), None) => {
                    xi.extend(a.by_ref().copied());
                }
                (None, Some(_)) => {
                    xi.extend(b.by_ref().copied());
                }
                (None, None) => break,
            }
        }
        Some((
            Monomial::new(x_exp, xi, self.hbar + other.hbar),
            inversions % 2 == 1,
        ))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.hbar, self.x_degree(), &self.x_exp, &self.xi).cmp(&(
            other.hbar,
            other.x_degree(),
            &other.x_exp,
            &other.xi,
        ))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        for (i, &e) in self.x_exp.iter().enumerate() {
            match e {
                0 => {}
                1 => parts.push(format!("x{}", i + 1)),
                _ => parts.push(format!("x{}^{}", i + 1, e)),
            }
        }
        for &i in &self.xi {
            parts.push(format!("ξ{}", i as usize + 1));
        }
        match self.hbar {
            0 => {}
            1 => parts.push("ħ".into()),
            j => parts.push(format!("ħ^{j}")),
        }
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join(" "))
        }
    }
}

/// Truncation rule: keep `x^α ħ^j` monomials with `j + ceil(deg α / 2) <= K`.
///
/// Odd factors do not count toward the cutoff; they disappear under the
/// differential before contributing any `ħ`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TruncationPolicy {
    max_hbar_order: u32,
}

impl TruncationPolicy {
    pub fn new(max_hbar_order: u32) -> Self {
        TruncationPolicy { max_hbar_order }
    }

    pub fn max_hbar_order(&self) -> u32 {
        self.max_hbar_order
    }

    pub fn retains(&self, m: &Monomial) -> bool {
        m.hbar_power() + m.x_degree().div_ceil(2) <= self.max_hbar_order
    }
}

fn merge_policies(
    a: Option<TruncationPolicy>,
    b: Option<TruncationPolicy>,
) -> Result<Option<TruncationPolicy>, BvError> {
    match (a, b) {
        (None, p) | (p, None) => Ok(p),
        (Some(p), Some(q)) if p == q => Ok(Some(p)),
        (Some(p), Some(q)) => Err(BvError::MismatchedTruncation(
            p.max_hbar_order,
            q.max_hbar_order,
        )),
    }
}

/// A finite sum of monomials with nonzero rational coefficients, optionally
/// truncated.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct GradedElement {
    terms: BTreeMap<Monomial, Rat>,
    truncation: Option<TruncationPolicy>,
}

impl GradedElement {
    pub fn zero() -> Self {
        GradedElement::default()
    }

    pub fn scalar(c: Rat) -> Self {
        Self::term(c, Monomial::one())
    }

    pub fn one() -> Self {
        Self::scalar(Rat::one())
    }

    pub fn x(index: usize) -> Self {
        Self::term(Rat::one(), Monomial::x(index))
    }

    pub fn xi(index: usize) -> Self {
        Self::term(Rat::one(), Monomial::xi(index))
    }

    pub fn hbar(power: u32) -> Self {
        Self::term(Rat::one(), Monomial::hbar(power))
    }

    /// Single-term element `c · m`.
    pub fn term(c: Rat, m: Monomial) -> Self {
        let mut el = Self::zero();
        if !c.is_zero() {
            el.terms.insert(m, c);
        }
        el
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, Rat)>>(iter: I) -> Self {
        let mut el = Self::zero();
        for (m, c) in iter {
            el.accumulate(m, c);
        }
        el
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rat)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> Rat {
        self.terms.get(m).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn truncation(&self) -> Option<TruncationPolicy> {
        self.truncation
    }

    /// Applies a truncation policy; the result remembers it.
    pub fn truncate(&self, policy: TruncationPolicy) -> Self {
        GradedElement {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| policy.retains(m))
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
            truncation: Some(policy),
        }
    }

    /// Forgets the truncation policy without changing the terms.
    pub fn exact(&self) -> Self {
        GradedElement {
            terms: self.terms.clone(),
            truncation: None,
        }
    }

    fn accumulate(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        if let Some(p) = self.truncation {
            if !p.retains(&m) {
                return;
            }
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, BvError> {
        let truncation = merge_policies(self.truncation, other.truncation)?;
        let mut out = GradedElement {
            terms: BTreeMap::new(),
            truncation,
        };
        for (m, c) in self.terms.iter().chain(other.terms.iter()) {
            out.accumulate(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, BvError> {
        let truncation = merge_policies(self.truncation, other.truncation)?;
        let mut out = GradedElement {
            terms: BTreeMap::new(),
            truncation,
        };
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                if let Some((m, negate)) = ma.mul(mb) {
                    let c = ca * cb;
                    out.accumulate(m, if negate { -c } else { c });
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &Rat) -> Self {
        if c.is_zero() {
            return GradedElement {
                terms: BTreeMap::new(),
                truncation: self.truncation,
            };
        }
        GradedElement {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
            truncation: self.truncation,
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = GradedElement {
            terms: GradedElement::one().terms,
            truncation: self.truncation,
        };
        for _ in 0..n {
            acc = acc.checked_mul(self).expect("same policy");
        }
        acc
    }

    /// Derivative in the even variable `x_{index+1}`.
    pub fn partial_x(&self, index: usize) -> Self {
        let mut out = GradedElement {
            terms: BTreeMap::new(),
            truncation: self.truncation,
        };
        for (m, c) in &self.terms {
            let e = m.x_exponent(index);
            if e == 0 {
                continue;
            }
            let mut x_exp = m.x_exp.clone();
            x_exp[index] -= 1;
            out.accumulate(
                Monomial::new(x_exp, m.xi.clone(), m.hbar),
                c * Rat::from_integer(e.into()),
            );
        }
        out
    }

    /// Odd derivative in `ξ_{index+1}`: kills terms without the factor and
    /// removes it from the rest, with one sign per odd factor standing in
    /// front of it.
    pub fn partial_xi(&self, index: usize) -> Self {
        let idx = u8::try_from(index).expect("odd index fits in u8");
        let mut out = GradedElement {
            terms: BTreeMap::new(),
            truncation: self.truncation,
        };
        for (m, c) in &self.terms {
            let Ok(pos) = m.xi.binary_search(&idx) else {
                continue;
            };
            let mut xi = m.xi.clone();
            xi.remove(pos);
            let c = if pos % 2 == 1 { -c.clone() } else { c.clone() };
            out.accumulate(Monomial::new(m.x_exp.clone(), xi, m.hbar), c);
        }
        out
    }

    /// Splits into homogeneous pieces keyed by the number of odd factors.
    pub fn homogeneous_components(&self) -> BTreeMap<usize, GradedElement> {
        let mut out: BTreeMap<usize, GradedElement> = BTreeMap::new();
        for (m, c) in &self.terms {
            out.entry(m.xi_degree())
                .or_insert_with(|| GradedElement {
                    terms: BTreeMap::new(),
                    truncation: self.truncation,
                })
                .accumulate(m.clone(), c.clone());
        }
        out.retain(|_, v| !v.is_zero());
        out
    }

    /// The common number of odd factors, when there is one (zero counts as
    /// homogeneous of any degree, reported as 0).
    pub fn xi_degree(&self) -> Option<usize> {
        let mut degrees = self.terms.keys().map(Monomial::xi_degree);
        let Some(first) = degrees.next() else {
            return Some(0);
        };
        degrees.all(|d| d == first).then_some(first)
    }

    pub fn x_degree_max(&self) -> u32 {
        self.terms.keys().map(Monomial::x_degree).max().unwrap_or(0)
    }

    /// Largest 0-based variable index appearing in any term.
    pub fn max_index(&self) -> Option<usize> {
        self.terms.keys().filter_map(Monomial::max_index).max()
    }

    /// Reads off a pure `ħ`-series; `None` if any term involves `x` or `ξ`.
    /// Powers beyond `order` are dropped, matching the truncated semantics.
    pub fn as_hbar_series(&self, order: usize) -> Option<HbarSeries> {
        let mut s = HbarSeries::zero(order);
        for (m, c) in &self.terms {
            if !m.x_exp.is_empty() || !m.xi.is_empty() {
                return None;
            }
            let k = m.hbar as usize;
            if k <= order {
                s = s.add(&HbarSeries::term(order, k, c.clone()));
            }
        }
        Some(s)
    }

    /// Embeds an `ħ`-series back into the algebra.
    pub fn from_hbar_series(s: &HbarSeries) -> Self {
        Self::from_terms(
            s.coeffs()
                .iter()
                .enumerate()
                .map(|(k, c)| (Monomial::hbar(k as u32), c.clone())),
        )
    }
}

impl Add for &GradedElement {
    type Output = GradedElement;
    fn add(self, rhs: &GradedElement) -> GradedElement {
        self.checked_add(rhs)
            .expect("mismatched truncation policies (use checked_add)")
    }
}

impl Sub for &GradedElement {
    type Output = GradedElement;
    fn sub(self, rhs: &GradedElement) -> GradedElement {
        self + &(-rhs)
    }
}

impl Mul for &GradedElement {
    type Output = GradedElement;
    fn mul(self, rhs: &GradedElement) -> GradedElement {
        self.checked_mul(rhs)
            .expect("mismatched truncation policies (use checked_mul)")
    }
}

impl Neg for &GradedElement {
    type Output = GradedElement;
    fn neg(self) -> GradedElement {
        self.scale(&-Rat::one())
    }
}

macro_rules! forward_owned_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for GradedElement {
            type Output = GradedElement;
            fn $method(self, rhs: GradedElement) -> GradedElement {
                $trait::$method(&self, &rhs)
            }
        }
    };
}
forward_owned_binop!(Add, add);
forward_owned_binop!(Sub, sub);
forward_owned_binop!(Mul, mul);

impl Neg for GradedElement {
    type Output = GradedElement;
    fn neg(self) -> GradedElement {
        -&self
    }
}

impl fmt::Display for GradedElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (m, c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if n == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if mag.is_one() && !m.is_constant() {
                write!(f, "{m}")?;
            } else if m.is_constant() {
                write!(f, "{}", format_rational(&mag))?;
            } else {
                write!(f, "{} {m}", format_rational(&mag))?;
            }
        }
        Ok(())
    }
}
