//! The odd differential and the homological expectation engine.
//!
//! For a validated model the differential acts on the graded algebra as
//!
//! ```text
//! Q = sum_i (sum_j a_{ij} x_j - db/dx_i) d/dxi_i  -  ħ sum_i d^2/(dx_i dxi_i)
//! ```
//!
//! It squares to zero, and every even polynomial is cohomologous to a series
//! in `ħ` alone; that series is the expectation.  [`reduce_expectation`]
//! finds it by rewriting: one power of `x_i` at a time is traded for
//! interaction terms and an `ħ`-correction, using the exact exchange
//!
//! ```text
//! x^alpha  ->  (sum_j (a^{-1})_{ij} db/dx_j) x^{alpha - e_i}
//!              + ħ sum_v (alpha - e_i)_v (a^{-1})_{iv} x^{alpha - e_i - e_v}
//! ```
//!
//! with `i` the smallest index present in `alpha`.  Each step replaces a
//! monomial by monomials of strictly larger (ħ-power, x-degree) rank, so the
//! process terminates, and dropping terms outside the truncation policy is
//! exact for the retained orders.  Which monomial is processed next is
//! irrelevant to the result; [`Strategy`] exists so the tests can check that.

use std::collections::BTreeMap;

use num_traits::Zero;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::algebra::{GradedElement, Monomial, TruncationPolicy};
use crate::error::BvError;
use crate::model::ValidatedModel;
use crate::rational::Rat;
use crate::series::HbarSeries;

/// Hard cap on rewrite steps; hitting it indicates runaway input, not a
/// plausible workload.
const STEP_BUDGET: u64 = 100_000_000;

/// `sum_i d^2 f / (dx_i dxi_i)` over the first `dimension` generator pairs.
///
/// Panics if `f` mentions a generator index at or beyond `dimension`.
pub fn delta(f: &GradedElement, dimension: usize) -> GradedElement {
    assert_index_range(f, dimension);
    let mut out = GradedElement::zero();
    for i in 0..dimension {
        out = out
            .checked_add(&f.partial_xi(i).partial_x(i))
            .expect("policy preserved by derivatives");
    }
    out
}

/// The odd bracket measuring how far [`delta`] is from being a derivation:
/// `{f, g} = delta(fg) - delta(f) g - (-1)^{|f|} f delta(g)`, extended
/// bilinearly from homogeneous `f`.
///
/// Panics if either argument mentions a generator index at or beyond
/// `dimension`.
pub fn bracket(f: &GradedElement, g: &GradedElement, dimension: usize) -> GradedElement {
    assert_index_range(f, dimension);
    assert_index_range(g, dimension);
    let mut out = GradedElement::zero();
    for (degree, part) in f.homogeneous_components() {
        let mixed = delta(&(&part * g), dimension);
        let left = &delta(&part, dimension) * g;
        let right = &part * &delta(g, dimension);
        let signed_right = if degree % 2 == 1 { -&right } else { right };
        out = &out + &(&(&mixed - &left) - &signed_right);
    }
    out
}

fn assert_index_range(f: &GradedElement, dimension: usize) {
    if let Some(max) = f.max_index() {
        assert!(
            max < dimension,
            "generator index {} out of range for dimension {}",
            max + 1,
            dimension
        );
    }
}

pub(crate) fn check_index_range(f: &GradedElement, dimension: usize) -> Result<(), BvError> {
    match f.max_index() {
        Some(max) if max >= dimension => Err(BvError::IndexOutOfRange {
            index: max,
            dimension,
        }),
        _ => Ok(()),
    }
}

/// Applies the model's differential to `f`.
pub fn apply_q(model: &ValidatedModel, f: &GradedElement) -> Result<GradedElement, BvError> {
    let (first_order, laplace) = decompose_q(model, f)?;
    let hbar = GradedElement::hbar(1);
    first_order.checked_add(&-&(&hbar * &laplace))
}

/// The two pieces of the differential: `Q f = A f - ħ delta f`, where `A`
/// multiplies each odd derivative by the derivative of the action.
pub fn decompose_q(
    model: &ValidatedModel,
    f: &GradedElement,
) -> Result<(GradedElement, GradedElement), BvError> {
    let n = model.dimension();
    check_index_range(f, n)?;
    let mut first_order = GradedElement::zero();
    for i in 0..n {
        let df = f.partial_xi(i);
        if df.is_zero() {
            continue;
        }
        let mut coeff = GradedElement::zero();
        for j in 0..n {
            coeff = coeff
                .checked_add(&GradedElement::x(j).scale(model.a(i, j)))
                .expect("untruncated");
        }
        coeff = coeff.checked_add(&-model.db_dx(i))?;
        first_order = first_order.checked_add(&coeff.checked_mul(&df)?)?;
    }
    Ok((first_order, delta(f, n)))
}

/// Order in which the rewrite engine consumes pending monomials.  All
/// variants produce the same series; see the module notes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Smallest x-degree first (ties by monomial order).  The default.
    LowestDegreeFirst,
    /// Largest x-degree first.
    HighestDegreeFirst,
    /// Uniformly random among pending monomials, from a seeded generator.
    Random(u64),
}

/// Expectation of an even observable as a series in `ħ`, truncated after
/// `ħ^order`, by homological reduction.
pub fn reduce_expectation(
    model: &ValidatedModel,
    f: &GradedElement,
    order: u32,
) -> Result<HbarSeries, BvError> {
    reduce_expectation_with(model, f, order, Strategy::LowestDegreeFirst)
}

/// [`reduce_expectation`] with an explicit processing strategy.
pub fn reduce_expectation_with(
    model: &ValidatedModel,
    f: &GradedElement,
    order: u32,
    strategy: Strategy,
) -> Result<HbarSeries, BvError> {
    if f.xi_degree() != Some(0) {
        return Err(BvError::NonScalarInput);
    }
    check_index_range(f, model.dimension())?;
    let policy = TruncationPolicy::new(order);
    let mut work: BTreeMap<Monomial, Rat> = f
        .truncate(policy)
        .terms()
        .map(|(m, c)| (m.clone(), c.clone()))
        .collect();
    let mut rng = match strategy {
        Strategy::Random(seed) => Some(StdRng::seed_from_u64(seed)),
        _ => None,
    };

    let mut steps: u64 = 0;
    loop {
        let Some(target) = pick(&work, strategy, rng.as_mut()) else {
            break;
        };
        steps += 1;
        if steps > STEP_BUDGET {
            return Err(BvError::TooLarge {
                what: "reduction step count",
                size: steps as usize,
                cap: STEP_BUDGET as usize,
            });
        }
        let coeff = work.remove(&target).expect("picked from the map");
        let i = target
            .x_exponents()
            .iter()
            .position(|&e| e > 0)
            .expect("picked monomial has positive x-degree");
        let mut rest = target.x_exponents().to_vec();
        rest[i] -= 1;

        // Interaction branch: coeff * rewrite_i(x) * x^rest.
        let carrier = GradedElement::term(
            coeff.clone(),
            Monomial::new(rest.clone(), vec![], target.hbar_power()),
        )
        .truncate(policy);
        for (m, c) in model.rewrite_polynomial(i).checked_mul(&carrier)?.terms() {
            accumulate(&mut work, &policy, m.clone(), c.clone());
        }

        // Pairing branch: ħ * sum_v rest_v * (a^{-1})_{iv} * x^{rest - e_v}.
        for (v, &mult) in rest.iter().enumerate() {
            if mult == 0 {
                continue;
            }
            let scale = model.a_inverse(i, v);
            if scale.is_zero() {
                continue;
            }
            let mut reduced = rest.clone();
            reduced[v] -= 1;
            accumulate(
                &mut work,
                &policy,
                Monomial::new(reduced, vec![], target.hbar_power() + 1),
                &coeff * scale * Rat::from_integer(mult.into()),
            );
        }
    }

    let mut out = HbarSeries::zero(order as usize);
    for (m, c) in work {
        debug_assert_eq!(m.x_degree(), 0);
        out = out.add(&HbarSeries::term(
            order as usize,
            m.hbar_power() as usize,
            c,
        ));
    }
    Ok(out)
}

/// Expectation of the differential of an odd element; always the zero series,
/// which the acceptance suite verifies on random inputs.
pub fn boundary_expectation(
    model: &ValidatedModel,
    g: &GradedElement,
    order: u32,
) -> Result<HbarSeries, BvError> {
    let qg = apply_q(model, g)?;
    reduce_expectation(model, &qg, order)
}

fn accumulate(
    work: &mut BTreeMap<Monomial, Rat>,
    policy: &TruncationPolicy,
    m: Monomial,
    c: Rat,
) {
    if c.is_zero() || !policy.retains(&m) {
        return;
    }
    use std::collections::btree_map::Entry;
    match work.entry(m) {
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

fn pick(
    work: &BTreeMap<Monomial, Rat>,
    strategy: Strategy,
    rng: Option<&mut StdRng>,
) -> Option<Monomial> {
    let pending = work.keys().filter(|m| m.x_degree() > 0);
    match strategy {
        Strategy::LowestDegreeFirst => pending.min_by_key(|m| (m.x_degree(), (*m).clone())),
        Strategy::HighestDegreeFirst => pending.max_by_key(|m| (m.x_degree(), (*m).clone())),
        Strategy::Random(_) => {
            let cands: Vec<&Monomial> = pending.collect();
            if cands.is_empty() {
                None
            } else {
                let rng = rng.expect("random strategy carries a generator");
                Some(cands[rng.gen_range(0..cands.len())])
            }
        }
    }
    .cloned()
}
