//! Truncated power series in `ħ` with exact rational coefficients.
//!
//! A series of order `K` is an element of `Q[[ħ]] / (ħ^{K+1})`, stored as the
//! dense coefficient vector `[c_0, …, c_K]`.  Binary operations truncate to the
//! smaller of the two orders, so mixing precisions silently keeps only the
//! digits both sides know.

use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::error::BvError;
use crate::rational::{format_rational, Rat};

/// Truncated `ħ`-power series with exact coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HbarSeries {
    coeffs: Vec<Rat>,
}

impl HbarSeries {
    /// The zero series of the given order.
    pub fn zero(order: usize) -> Self {
        HbarSeries {
            coeffs: vec![Rat::zero(); order + 1],
        }
    }

    /// The constant series `1` of the given order.
    pub fn one(order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = Rat::one();
        s
    }

    /// A single term `c ħ^k`.  Panics if `k > order`.
    pub fn term(order: usize, k: usize, c: Rat) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[k] = c;
        s
    }

    /// Builds a series from its coefficient vector (lowest power first).
    pub fn from_coeffs(coeffs: Vec<Rat>) -> Self {
        assert!(!coeffs.is_empty(), "series needs at least the constant term");
        HbarSeries { coeffs }
    }

    /// Highest retained power of `ħ`.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of `ħ^k`; zero beyond the truncation order.
    pub fn coeff(&self, k: usize) -> Rat {
        self.coeffs.get(k).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Rat::is_zero)
    }

    pub fn add(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        HbarSeries {
            coeffs: (0..=order)
                .map(|k| &self.coeffs[k] + &other.coeffs[k])
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        HbarSeries {
            coeffs: (0..=order)
                .map(|k| &self.coeffs[k] - &other.coeffs[k])
                .collect(),
        }
    }

    pub fn scale(&self, c: &Rat) -> Self {
        HbarSeries {
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        let mut coeffs = vec![Rat::zero(); order + 1];
        for (i, a) in self.coeffs.iter().enumerate().take(order + 1) {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate().take(order + 1 - i) {
                if !b.is_zero() {
                    coeffs[i + j] += a * b;
                }
            }
        }
        HbarSeries { coeffs }
    }

    /// Divides by a series with constant term `1` (the normalization every
    /// expectation denominator satisfies).
    pub fn div(&self, den: &Self) -> Result<Self, BvError> {
        if !den.coeffs[0].is_one() {
            return Err(BvError::NonUnitDenominator(format_rational(&den.coeffs[0])));
        }
        let order = self.order().min(den.order());
        let mut q = vec![Rat::zero(); order + 1];
        for k in 0..=order {
            let mut s = self.coeffs[k].clone();
            for i in 1..=k {
                s -= &den.coeffs[i] * &q[k - i];
            }
            q[k] = s;
        }
        Ok(HbarSeries { coeffs: q })
    }

    /// Formal derivative `d/dħ`; the order drops by one.
    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::zero(0);
        }
        HbarSeries {
            coeffs: (1..self.coeffs.len())
                .map(|k| &self.coeffs[k] * Rat::from_integer(k.into()))
                .collect(),
        }
    }

    /// Multiplication by `ħ`: shifts coefficients up, dropping the top one.
    pub fn times_hbar(&self) -> Self {
        let mut coeffs = vec![Rat::zero(); self.coeffs.len()];
        for k in 1..self.coeffs.len() {
            coeffs[k] = self.coeffs[k - 1].clone();
        }
        HbarSeries { coeffs }
    }

    /// Coefficientwise agreement through `ħ^k` (both series must know that
    /// many digits).
    pub fn agree_through(&self, other: &Self, k: usize) -> bool {
        k <= self.order()
            && k <= other.order()
            && (0..=k).all(|i| self.coeffs[i] == other.coeffs[i])
    }

    /// First order at which the two series disagree, if any, up to the shared
    /// order.
    pub fn first_mismatch(&self, other: &Self) -> Option<usize> {
        let order = self.order().min(other.order());
        (0..=order).find(|&k| self.coeffs[k] != other.coeffs[k])
    }
}

impl fmt::Display for HbarSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            if first {
                if c < &Rat::zero() {
                    write!(f, "-")?;
                }
                first = false;
            } else if c < &Rat::zero() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let unit_coeff = mag.is_one() && k > 0;
            if !unit_coeff {
                write!(f, "{}", format_rational(&mag))?;
            }
            match k {
                0 => {}
                _ if unit_coeff => write!(f, "{}", power_str(k))?,
                _ => write!(f, " {}", power_str(k))?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

fn power_str(k: usize) -> String {
    if k == 1 {
        "ħ".to_string()
    } else {
        format!("ħ^{k}")
    }
}
