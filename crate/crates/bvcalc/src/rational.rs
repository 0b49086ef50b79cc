//! Exact rational scalars and the few pieces of integer/matrix arithmetic the
//! engines need.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

/// Scalar type used everywhere: arbitrary-precision rationals.
pub type Rat = num_rational::BigRational;

/// Shorthand for an integer-valued rational.
pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Shorthand for `p/q`.  Panics on `q == 0`.
pub fn ratio(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `p`, `-p`, or `p/q` with a nonzero denominator.  The result is
/// reduced with a positive denominator (the `Display` of [`Rat`] round-trips).
pub fn parse_rational(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    let (num_str, den_str) = match s.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (s, None),
    };
    let numer: BigInt = num_str
        .parse()
        .map_err(|_| format!("invalid rational {s:?}"))?;
    let denom: BigInt = match den_str {
        Some(d) => d.parse().map_err(|_| format!("invalid rational {s:?}"))?,
        None => BigInt::one(),
    };
    if denom.is_zero() {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(Rat::new(numer, denom))
}

pub(crate) fn factorial(n: usize) -> BigInt {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    acc
}

/// `n!!` for odd or even `n`, with `(-1)!! = 1`.
pub(crate) fn double_factorial(n: i64) -> BigInt {
    let mut acc = BigInt::one();
    let mut k = n;
    while k > 1 {
        acc *= BigInt::from(k);
        k -= 2;
    }
    acc
}

/// Exact inverse of a square rational matrix by Gauss-Jordan elimination.
/// Returns `None` when the matrix is singular.
pub fn invert_matrix(m: &[Vec<Rat>]) -> Option<Vec<Vec<Rat>>> {
    let n = m.len();
    debug_assert!(m.iter().all(|row| row.len() == n));
    let mut a = m.to_vec();
    let mut inv: Vec<Vec<Rat>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Rat::one() } else { Rat::zero() }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] /= &p;
            inv[col][j] /= &p;
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for j in 0..n {
                let t = &a[col][j] * &f;
                a[r][j] -= t;
                let t = &inv[col][j] * &f;
                inv[r][j] -= t;
            }
        }
    }
    Some(inv)
}

/// Renders a rational for reports: reduced `p/q` with positive denominator,
/// or a bare integer.
pub fn format_rational(r: &Rat) -> String {
    debug_assert!(r.denom().is_positive());
    r.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/2").unwrap(), ratio(3, 2));
        assert_eq!(parse_rational("-7").unwrap(), rat(-7));
        assert_eq!(parse_rational(" 6/4 ").unwrap(), ratio(3, 2));
        assert_eq!(parse_rational("3/-2").unwrap(), ratio(-3, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("1/2/3").is_err());
    }

    #[test]
    fn display_normalizes() {
        assert_eq!(format_rational(&ratio(-6, 4)), "-3/2");
        assert_eq!(format_rational(&ratio(8, 2)), "4");
    }

    #[test]
    fn invert_2x2() {
        // [[2,1],[1,1]]^-1 = [[1,-1],[-1,2]]
        let m = vec![vec![rat(2), rat(1)], vec![rat(1), rat(1)]];
        let inv = invert_matrix(&m).unwrap();
        assert_eq!(inv, vec![vec![rat(1), rat(-1)], vec![rat(-1), rat(2)]]);
    }

    #[test]
    fn invert_rejects_singular() {
        let m = vec![vec![rat(1), rat(2)], vec![rat(2), rat(4)]];
        assert!(invert_matrix(&m).is_none());
    }

    #[test]
    fn invert_needs_row_swap() {
        let m = vec![vec![rat(0), rat(1)], vec![rat(1), rat(0)]];
        let inv = invert_matrix(&m).unwrap();
        assert_eq!(inv, m);
    }

    #[test]
    fn factorials() {
        assert_eq!(factorial(0), BigInt::from(1));
        assert_eq!(factorial(6), BigInt::from(720));
        assert_eq!(double_factorial(-1), BigInt::from(1));
        assert_eq!(double_factorial(7), BigInt::from(105));
        assert_eq!(double_factorial(8), BigInt::from(384));
    }
}
