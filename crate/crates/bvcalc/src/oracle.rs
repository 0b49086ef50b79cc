//! Independent ground truth: Gaussian moments, the perturbed-Gaussian
//! expectation computed by series expansion, and closed-form series for the
//! one-variable cubic model.
//!
//! Nothing here shares code with the reduction or diagram engines; the test
//! suites lean on that independence when the engines are compared.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::algebra::GradedElement;
use crate::complex::check_index_range;
use crate::error::BvError;
use crate::model::ValidatedModel;
use crate::rational::{double_factorial, Rat};
use crate::series::HbarSeries;

/// Largest index-tuple length [`wick_multivariate`] will enumerate matchings
/// for; `15!! = 2,027,025` products is the most a test should pay for.
pub const MOMENT_DEGREE_CAP: usize = 16;

/// Free-field moment of one variable: `<x^p>_0 = (p-1)!! (ħ/a)^{p/2}` for
/// even `p`, zero for odd `p`.  Panics on `a = 0`.
pub fn wick_univariate(power: usize, a: &Rat, order: usize) -> HbarSeries {
    assert!(!a.is_zero(), "quadratic coefficient must be nonzero");
    if power % 2 == 1 {
        return HbarSeries::zero(order);
    }
    let s = power / 2;
    if s > order {
        return HbarSeries::zero(order);
    }
    let mut denom = Rat::one();
    for _ in 0..s {
        denom *= a;
    }
    let coeff = Rat::from_integer(double_factorial(power as i64 - 1)) / denom;
    HbarSeries::term(order, s, coeff)
}

/// Free-field moment `<x_{i_1} … x_{i_p}>_0`, as the sum over perfect
/// matchings of products of inverse-form entries (the `ħ^{p/2}` prefactor is
/// left to the caller).  Odd `p` gives zero; `p` beyond
/// [`MOMENT_DEGREE_CAP`] is refused.
pub fn wick_multivariate(indices: &[usize], a_inverse: &[Vec<Rat>]) -> Result<Rat, BvError> {
    if indices.len() > MOMENT_DEGREE_CAP {
        return Err(BvError::TooLarge {
            what: "Gaussian moment degree",
            size: indices.len(),
            cap: MOMENT_DEGREE_CAP,
        });
    }
    if indices.len() % 2 == 1 {
        return Ok(Rat::zero());
    }
    Ok(matching_sum(indices, a_inverse))
}

fn matching_sum(indices: &[usize], a_inverse: &[Vec<Rat>]) -> Rat {
    let Some((&first, rest)) = indices.split_first() else {
        return Rat::one();
    };
    let mut total = Rat::zero();
    for p in 0..rest.len() {
        let weight = &a_inverse[first][rest[p]];
        if weight.is_zero() {
            continue;
        }
        let remaining: Vec<usize> = rest
            .iter()
            .enumerate()
            .filter(|&(q, _)| q != p)
            .map(|(_, &i)| i)
            .collect();
        total += weight * matching_sum(&remaining, a_inverse);
    }
    total
}

/// Expectation of an even observable in the perturbed Gaussian sense: the
/// formal series `<f exp(b/ħ)>_0 / <exp(b/ħ)>_0`, expanded term by term in
/// powers of the interaction and evaluated through free-field moments.
///
/// One-variable models use the closed-form moment, so any truncation order is
/// fine; multivariate models enumerate matchings and refuse moments beyond
/// [`MOMENT_DEGREE_CAP`].
pub fn gaussian_perturbation_expectation(
    model: &ValidatedModel,
    f: &GradedElement,
    order: u32,
) -> Result<HbarSeries, BvError> {
    if f.xi_degree() != Some(0) {
        return Err(BvError::NonScalarInput);
    }
    check_index_range(f, model.dimension())?;
    let order = order as usize;
    if model.dimension() == 1 {
        gaussian_univariate(model, f, order)
    } else {
        gaussian_multivariate(model, f, order)
    }
}

/// Exchanging a factor of the interaction for free moments trades `ħ^{-t}`
/// from the exponential against `ħ^s` from a degree-`2s` moment, so terms
/// with `s - t` beyond the requested order never matter; with every
/// interaction term of degree at least three, `t` beyond `2 * order` cannot
/// contribute either.
fn interaction_power_limit(order: usize) -> usize {
    2 * order
}

fn gaussian_univariate(
    model: &ValidatedModel,
    f: &GradedElement,
    order: usize,
) -> Result<HbarSeries, BvError> {
    let a = model.a(0, 0);
    // Dense coefficient list of b by degree; empty for a free model.
    let bp = model.b_polynomial();
    let mut b_dense = vec![Rat::zero(); (bp.x_degree_max() as usize) + 1];
    for (m, c) in bp.terms() {
        b_dense[m.x_degree() as usize] = c.clone();
    }
    if bp.is_zero() {
        b_dense.clear();
    }

    // Targets: each observable term feeds the numerator; the unit feeds the
    // denominator.
    let mut num = HbarSeries::zero(order);
    let mut den = HbarSeries::zero(order);
    let mut targets: Vec<(usize, usize, Rat, bool)> = f
        .terms()
        .map(|(m, c)| {
            (
                m.x_degree() as usize,
                m.hbar_power() as usize,
                c.clone(),
                true,
            )
        })
        .collect();
    targets.push((0, 0, Rat::one(), false));

    let mut power = vec![Rat::one()]; // b^t, dense by degree
    let mut t_factorial = BigInt::one();
    for t in 0..=interaction_power_limit(order) {
        if t > 0 {
            power = convolve(&power, &b_dense);
            t_factorial *= t;
            if power.is_empty() {
                break;
            }
        }
        for (deg, c) in power.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            for (fdeg, shift, fc, is_num) in &targets {
                let total = deg + fdeg;
                if total % 2 == 1 {
                    continue;
                }
                let s = total / 2;
                let Some(k) = (s + shift).checked_sub(t) else {
                    continue;
                };
                if k > order {
                    continue;
                }
                let mut a_pow = Rat::one();
                for _ in 0..s {
                    a_pow *= a;
                }
                let value = c * fc * Rat::from_integer(double_factorial(total as i64 - 1))
                    / (a_pow * Rat::from_integer(t_factorial.clone()));
                let term = HbarSeries::term(order, k, value);
                if *is_num {
                    num = num.add(&term);
                } else {
                    den = den.add(&term);
                }
            }
        }
    }
    num.div(&den)
}

fn gaussian_multivariate(
    model: &ValidatedModel,
    f: &GradedElement,
    order: usize,
) -> Result<HbarSeries, BvError> {
    let b = model.b_polynomial();
    let mut num = HbarSeries::zero(order);
    let mut den = HbarSeries::zero(order);
    let mut targets: Vec<(Vec<u32>, usize, Rat, bool)> = f
        .terms()
        .map(|(m, c)| {
            (
                m.x_exponents().to_vec(),
                m.hbar_power() as usize,
                c.clone(),
                true,
            )
        })
        .collect();
    targets.push((vec![], 0, Rat::one(), false));

    let mut power = GradedElement::one(); // b^t
    let mut t_factorial = BigInt::one();
    for t in 0..=interaction_power_limit(order) {
        if t > 0 {
            power = power.checked_mul(&b)?;
            t_factorial *= t;
            if power.is_zero() {
                break;
            }
        }
        for (m, c) in power.terms() {
            for (alpha, shift, fc, is_num) in &targets {
                let total = (m.x_degree() as usize) + alpha.iter().sum::<u32>() as usize;
                if total % 2 == 1 {
                    continue;
                }
                let s = total / 2;
                let Some(k) = (s + shift).checked_sub(t) else {
                    continue;
                };
                if k > order {
                    continue;
                }
                let mut indices: Vec<usize> = Vec::with_capacity(total);
                for (i, &e) in m.x_exponents().iter().enumerate() {
                    indices.extend(std::iter::repeat(i).take(e as usize));
                }
                for (i, &e) in alpha.iter().enumerate() {
                    indices.extend(std::iter::repeat(i).take(e as usize));
                }
                let moment = wick_multivariate(&indices, model.a_inverse_matrix())?;
                let value = c * fc * moment / Rat::from_integer(t_factorial.clone());
                let term = HbarSeries::term(order, k, value);
                if *is_num {
                    num = num.add(&term);
                } else {
                    den = den.add(&term);
                }
            }
        }
    }
    num.div(&den)
}

fn convolve(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Rat::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if !y.is_zero() {
                out[i + j] += x * y;
            }
        }
    }
    out
}

/// Closed-form unnormalized moment series of the one-variable cubic model
/// (`a = 1`, `b = x^3/6`):
///
/// ```text
/// d_n(ħ) = 12^n sum_{k >= ceil(n/2)} (ħ/288)^k (6k-2n)! / ((3k-n)! (2k-n)!)
/// ```
pub fn d_series(n: usize, order: usize) -> HbarSeries {
    let mut out = HbarSeries::zero(order);
    let twelve_n = BigInt::from(12).pow(n as u32);
    for k in n.div_ceil(2)..=order {
        if 3 * k < n {
            continue;
        }
        let num = &twelve_n * factorial_big(6 * k - 2 * n);
        let den = BigInt::from(288).pow(k as u32) * factorial_big(3 * k - n) * factorial_big(2 * k - n);
        out = out.add(&HbarSeries::term(order, k, Rat::new(num, den)));
    }
    out
}

fn factorial_big(n: usize) -> BigInt {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    acc
}

/// Normalized cubic-model moments `c_n = d_n / d_0`, the closed-form value of
/// `<x^n>` in that model.
pub fn c_from_d(n: usize, order: usize) -> Result<HbarSeries, BvError> {
    d_series(n, order).div(&d_series(0, order))
}

/// Defect of the three-term moment recursion
/// `d_{n+1} = d_{n+2}/2 + ħ n d_{n-1}` (`n >= 1`); identically zero.
pub fn d_recursion_defect(n: usize, order: usize) -> HbarSeries {
    assert!(n >= 1, "recursion needs n >= 1");
    let lhs = d_series(n + 1, order);
    let half = d_series(n + 2, order).scale(&Rat::new(BigInt::one(), BigInt::from(2)));
    let tail = d_series(n - 1, order)
        .times_hbar()
        .scale(&Rat::from_integer(BigInt::from(n)));
    lhs.sub(&half.add(&tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::reduce_expectation;
    use crate::model::{ModelSpec, Tensor, ValidatedModel};
    use crate::rational::{rat, ratio};

    #[test]
    fn univariate_moments() {
        assert_eq!(
            wick_univariate(8, &rat(1), 4),
            HbarSeries::term(4, 4, rat(105))
        );
        assert_eq!(
            wick_univariate(4, &ratio(-3, 2), 4),
            HbarSeries::term(4, 2, ratio(4, 3))
        );
        assert!(wick_univariate(3, &rat(1), 4).is_zero());
        assert!(wick_univariate(12, &rat(1), 4).is_zero());
    }

    #[test]
    fn multivariate_reduces_to_univariate_on_equal_indices() {
        let a = ratio(-3, 2);
        let ainv = vec![vec![rat(1) / &a]];
        for p in [2usize, 4, 6, 8] {
            let sum = wick_multivariate(&vec![0; p], &ainv).unwrap();
            let closed = wick_univariate(p, &a, p);
            assert_eq!(sum, closed.coeff(p / 2), "degree {p}");
        }
        assert_eq!(wick_multivariate(&[0, 0, 0], &ainv).unwrap(), rat(0));
    }

    #[test]
    fn multivariate_pair_values() {
        let m = ValidatedModel::coupled_pair_example();
        let ainv = m.a_inverse_matrix();
        assert_eq!(wick_multivariate(&[0, 1], ainv).unwrap(), rat(-1));
        assert_eq!(wick_multivariate(&[0, 0, 1, 1], ainv).unwrap(), rat(4));
        assert_eq!(
            wick_multivariate(&[0, 0, 0, 0, 1, 1], ainv).unwrap(),
            rat(18)
        );
        assert_eq!(
            wick_multivariate(&vec![0; 18], ainv),
            Err(BvError::TooLarge {
                what: "Gaussian moment degree",
                size: 18,
                cap: 16
            })
        );
    }

    #[test]
    fn d_series_leading_coefficients() {
        let d0 = d_series(0, 3);
        assert_eq!(d0.coeff(0), rat(1));
        assert_eq!(d0.coeff(1), ratio(5, 24));
        assert_eq!(d0.coeff(2), ratio(385, 1152));
        assert_eq!(d0.coeff(3), ratio(85085, 82944));
        let d1 = d_series(1, 3);
        assert_eq!(d1.coeff(0), rat(0));
        assert_eq!(d1.coeff(1), ratio(1, 2));
        assert_eq!(d1.coeff(2), ratio(35, 48));
        assert_eq!(d1.coeff(3), ratio(5005, 2304));
    }

    #[test]
    fn normalized_moments_match_the_reduction_engine() {
        let cubic = ValidatedModel::cubic_example();
        for n in 0..=6 {
            let closed = c_from_d(n, 4).unwrap();
            let reduced =
                reduce_expectation(&cubic, &GradedElement::x(0).pow(n as u32), 4).unwrap();
            assert_eq!(closed, reduced, "n = {n}");
        }
    }

    #[test]
    fn recursion_defect_vanishes() {
        for n in 1..=5 {
            assert!(d_recursion_defect(n, 8).is_zero(), "n = {n}");
        }
    }

    #[test]
    fn d1_needs_the_measure_term() {
        // The bare relation d1 = 3 d0' fails already at order zero; the
        // correct identity carries the ħ-dependence of the Gaussian weight:
        // d1 = 3 ħ^2 d0' + (ħ/2) d0.
        let d0 = d_series(0, 9);
        let d1 = d_series(1, 8);
        let bare = d0.derivative().scale(&rat(3));
        assert_eq!(d1.first_mismatch(&bare), Some(0));

        let with_measure = d0
            .derivative()
            .times_hbar()
            .times_hbar()
            .scale(&rat(3))
            .add(&d_series(0, 8).times_hbar().scale(&ratio(1, 2)));
        assert_eq!(d1, with_measure);
    }

    #[test]
    fn perturbed_expectation_matches_frozen_values() {
        let cubic = ValidatedModel::cubic_example();
        let x2 = GradedElement::x(0).pow(2);
        assert_eq!(
            gaussian_perturbation_expectation(&cubic, &x2, 4).unwrap(),
            HbarSeries::from_coeffs(vec![
                rat(0),
                rat(1),
                ratio(5, 4),
                ratio(15, 4),
                ratio(1105, 64)
            ])
        );
        let quartic = ValidatedModel::quartic_example();
        assert_eq!(
            gaussian_perturbation_expectation(&quartic, &x2, 3).unwrap(),
            HbarSeries::from_coeffs(vec![rat(0), rat(1), ratio(1, 2), ratio(2, 3)])
        );
        let mixed = ValidatedModel::mixed_example();
        assert_eq!(
            gaussian_perturbation_expectation(&mixed, &x2, 3).unwrap(),
            HbarSeries::from_coeffs(vec![rat(0), rat(1), ratio(7, 4), ratio(77, 8)])
        );
        assert_eq!(
            gaussian_perturbation_expectation(&mixed, &GradedElement::x(0).pow(4), 3).unwrap(),
            HbarSeries::from_coeffs(vec![rat(0), rat(0), rat(3), ratio(33, 2)])
        );
    }

    #[test]
    fn perturbed_expectation_agrees_with_reduction_in_two_variables() {
        // a = [[2,1],[1,1]] with b = x1^2 x2 / 2.
        let mut spec = ModelSpec::new(2, vec![vec![rat(2), rat(1)], vec![rat(1), rat(1)]]);
        spec.add_interaction(Tensor::from_entries(3, [(vec![0, 0, 1], rat(1))]).unwrap())
            .unwrap();
        let model = spec.validate().unwrap();
        let obs = &GradedElement::x(0) * &GradedElement::x(1);
        let via_moments = gaussian_perturbation_expectation(&model, &obs, 2).unwrap();
        let via_reduction = reduce_expectation(&model, &obs, 2).unwrap();
        assert_eq!(via_moments, via_reduction);
        assert!(!via_moments.is_zero());

        // Deeper truncations need moments beyond the cap.
        assert!(matches!(
            gaussian_perturbation_expectation(&model, &obs, 4),
            Err(BvError::TooLarge { .. })
        ));
    }

    #[test]
    fn free_multivariate_expectation() {
        let pair = ValidatedModel::coupled_pair_example();
        let obs = &GradedElement::x(0) * &GradedElement::x(1);
        assert_eq!(
            gaussian_perturbation_expectation(&pair, &obs, 3).unwrap(),
            HbarSeries::term(3, 1, rat(-1))
        );
    }

    #[test]
    fn rejects_odd_inputs() {
        let cubic = ValidatedModel::cubic_example();
        assert_eq!(
            gaussian_perturbation_expectation(&cubic, &GradedElement::xi(0), 3),
            Err(BvError::NonScalarInput)
        );
    }
}
