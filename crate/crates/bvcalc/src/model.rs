//! Model data: a nondegenerate quadratic form on the even variables, a
//! polynomial interaction given by symmetric coefficient tensors, and the
//! derived arrays every engine shares.
//!
//! A tensor entry of order `m` holds the value of the m-th partial derivative
//! of the interaction at the origin, so `b^{(3)}` with entry `1` at `(0,0,0)`
//! means `b(x) = x1^3/6`, not `x1^3`.  One value is stored per index multiset
//! and symmetry is enforced on insertion.
//!
//! [`ModelSpec::validate`] checks the inputs once (symmetry, invertibility,
//! index ranges, interaction order at least three) and precomputes what the
//! engines need: the inverse form, the partials of the interaction, and the
//! rewrite polynomials `sum_j (a^{-1})_{ij} db/dx_j`.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::algebra::{GradedElement, Monomial};
use crate::error::BvError;
use crate::rational::{factorial, Rat};

/// Symmetric coefficient tensor of fixed order; one stored value per index
/// multiset, zero elsewhere.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Tensor {
    order: usize,
    entries: BTreeMap<Vec<usize>, Rat>,
}

impl Tensor {
    pub fn new(order: usize) -> Self {
        Tensor {
            order,
            entries: BTreeMap::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Records one entry.  Index order is irrelevant; re-setting the same
    /// multiset is allowed only with the same value, otherwise the data would
    /// not describe a symmetric tensor.
    pub fn set(&mut self, indices: &[usize], value: Rat) -> Result<(), BvError> {
        if indices.len() != self.order {
            return Err(BvError::ArityMismatch {
                expected: self.order,
                got: indices.len(),
            });
        }
        let mut key = indices.to_vec();
        key.sort_unstable();
        if let Some(existing) = self.entries.get(&key) {
            if *existing != value {
                return Err(BvError::AsymmetricTensor {
                    order: self.order,
                    indices: indices.to_vec(),
                });
            }
        }
        self.entries.insert(key, value);
        Ok(())
    }

    pub fn from_entries<I>(order: usize, entries: I) -> Result<Self, BvError>
    where
        I: IntoIterator<Item = (Vec<usize>, Rat)>,
    {
        let mut t = Self::new(order);
        for (idx, v) in entries {
            t.set(&idx, v)?;
        }
        Ok(t)
    }

    /// Value at an index tuple, in any order; zero when unset.
    pub fn get(&self, indices: &[usize]) -> Rat {
        let mut key = indices.to_vec();
        key.sort_unstable();
        self.entries.get(&key).cloned().unwrap_or_else(Rat::zero)
    }

    /// Nonzero entries as (sorted index multiset, value).
    pub fn entries(&self) -> impl Iterator<Item = (&[usize], &Rat)> {
        self.entries
            .iter()
            .filter(|(_, v)| !v.is_zero())
            .map(|(k, v)| (k.as_slice(), v))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(Zero::is_zero)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries()
            .filter_map(|(k, _)| k.last().copied())
            .max()
    }
}

/// Coefficients of an observable written as a sum over ordered index tuples,
/// `f = sum_I f_I x_{I_1} … x_{I_n}`.  Unlike [`Tensor`] the tuples are
/// ordered and no symmetry is imposed; a monomial observable is the indicator
/// of one tuple.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MarkedTensor {
    arity: usize,
    entries: BTreeMap<Vec<usize>, Rat>,
}

impl MarkedTensor {
    pub fn new(arity: usize) -> Self {
        MarkedTensor {
            arity,
            entries: BTreeMap::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Sets the coefficient of one ordered tuple, replacing any previous
    /// value; a zero value clears the entry.
    pub fn set(&mut self, indices: &[usize], value: Rat) -> Result<(), BvError> {
        if indices.len() != self.arity {
            return Err(BvError::ArityMismatch {
                expected: self.arity,
                got: indices.len(),
            });
        }
        if value.is_zero() {
            self.entries.remove(indices);
        } else {
            self.entries.insert(indices.to_vec(), value);
        }
        Ok(())
    }

    pub fn get(&self, indices: &[usize]) -> Rat {
        self.entries.get(indices).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[usize], &Rat)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries
            .keys()
            .filter_map(|k| k.iter().max().copied())
            .max()
    }

    /// The tensor of the monomial `x^alpha`: a single unit entry at the
    /// weakly increasing tuple listing each index with its multiplicity.
    pub fn from_monomial_exponents(alpha: &[u32]) -> Self {
        let tuple: Vec<usize> = alpha
            .iter()
            .enumerate()
            .flat_map(|(i, &e)| std::iter::repeat(i).take(e as usize))
            .collect();
        let mut t = MarkedTensor::new(tuple.len());
        t.set(&tuple, Rat::one()).expect("arity matches by construction");
        t
    }

    /// Expands back into the polynomial `sum_I f_I x_I`.
    pub fn as_element(&self) -> GradedElement {
        GradedElement::from_terms(self.entries.iter().map(|(tuple, v)| {
            let mut exp: Vec<u32> = Vec::new();
            for &i in tuple {
                if exp.len() <= i {
                    exp.resize(i + 1, 0);
                }
                exp[i] += 1;
            }
            (Monomial::new(exp, vec![], 0), v.clone())
        }))
    }
}

/// Raw model description, prior to validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    dimension: usize,
    quadratic: Vec<Vec<Rat>>,
    interactions: BTreeMap<usize, Tensor>,
    label: Option<String>,
}

impl ModelSpec {
    pub fn new(dimension: usize, quadratic: Vec<Vec<Rat>>) -> Self {
        ModelSpec {
            dimension,
            quadratic,
            interactions: BTreeMap::new(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Adds one interaction tensor.  Orders below three are rejected here
    /// (they belong to the quadratic form); one tensor per order.
    pub fn add_interaction(&mut self, tensor: Tensor) -> Result<(), BvError> {
        if tensor.order() < 3 {
            return Err(BvError::QuadraticInteraction(tensor.order()));
        }
        if self.interactions.contains_key(&tensor.order()) {
            return Err(BvError::Internal("duplicate interaction order"));
        }
        self.interactions.insert(tensor.order(), tensor);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn quadratic(&self) -> &[Vec<Rat>] {
        &self.quadratic
    }

    pub fn interactions(&self) -> impl Iterator<Item = &Tensor> {
        self.interactions.values()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Checks the description and precomputes the derived data.
    pub fn validate(self) -> Result<ValidatedModel, BvError> {
        let n = self.dimension;
        if self.quadratic.len() != n || self.quadratic.iter().any(|row| row.len() != n) {
            return Err(BvError::ArityMismatch {
                expected: n,
                got: self
                    .quadratic
                    .iter()
                    .map(Vec::len)
                    .chain([self.quadratic.len()])
                    .find(|&l| l != n)
                    .unwrap_or(0),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if self.quadratic[i][j] != self.quadratic[j][i] {
                    return Err(BvError::AsymmetricTensor {
                        order: 2,
                        indices: vec![i, j],
                    });
                }
            }
        }
        for tensor in self.interactions.values() {
            if tensor.order() < 3 {
                return Err(BvError::QuadraticInteraction(tensor.order()));
            }
            if let Some(max) = tensor.max_index() {
                if max >= n {
                    return Err(BvError::IndexOutOfRange {
                        index: max,
                        dimension: n,
                    });
                }
            }
        }
        let a_inverse =
            crate::rational::invert_matrix(&self.quadratic).ok_or(BvError::SingularMatrix)?;

        // db/dx_i = sum over entries v at multiset gamma containing i of
        //           v * x^{gamma - e_i} / prod (gamma - e_i)_k!
        let mut db_dx = vec![GradedElement::zero(); n];
        for tensor in self.interactions.values() {
            for (key, v) in tensor.entries() {
                let mut gamma = vec![0u32; n];
                for &i in key {
                    gamma[i] += 1;
                }
                let mut seen = key.to_vec();
                seen.dedup();
                for i in seen {
                    let mut reduced = gamma.clone();
                    reduced[i] -= 1;
                    let denom: Rat = Rat::from_integer(
                        reduced
                            .iter()
                            .map(|&e| factorial(e as usize))
                            .product::<num_bigint::BigInt>(),
                    );
                    let contribution =
                        GradedElement::term(v / &denom, Monomial::new(reduced, vec![], 0));
                    db_dx[i] = db_dx[i].checked_add(&contribution)?;
                }
            }
        }

        let mut rewrite = vec![GradedElement::zero(); n];
        for (i, slot) in rewrite.iter_mut().enumerate() {
            for (j, d) in db_dx.iter().enumerate() {
                *slot = slot.checked_add(&d.scale(&a_inverse[i][j]))?;
            }
        }

        Ok(ValidatedModel {
            spec: self,
            a_inverse,
            db_dx,
            rewrite,
        })
    }
}

/// A checked model plus the precomputed arrays the engines consume.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatedModel {
    spec: ModelSpec,
    a_inverse: Vec<Vec<Rat>>,
    db_dx: Vec<GradedElement>,
    rewrite: Vec<GradedElement>,
}

impl ValidatedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn label(&self) -> Option<&str> {
        self.spec.label()
    }

    pub fn a(&self, i: usize, j: usize) -> &Rat {
        &self.spec.quadratic[i][j]
    }

    pub fn a_matrix(&self) -> &[Vec<Rat>] {
        &self.spec.quadratic
    }

    pub fn a_inverse(&self, i: usize, j: usize) -> &Rat {
        &self.a_inverse[i][j]
    }

    pub fn a_inverse_matrix(&self) -> &[Vec<Rat>] {
        &self.a_inverse
    }

    pub fn interaction_orders(&self) -> impl Iterator<Item = usize> + '_ {
        self.spec
            .interactions
            .iter()
            .filter(|(_, t)| !t.is_zero())
            .map(|(&m, _)| m)
    }

    pub fn interaction(&self, order: usize) -> Option<&Tensor> {
        self.spec.interactions.get(&order)
    }

    /// Interaction tensor entry for an index tuple of any order; zero when the
    /// model has no tensor of that order.
    pub fn b_entry(&self, indices: &[usize]) -> Rat {
        self.spec
            .interactions
            .get(&indices.len())
            .map(|t| t.get(indices))
            .unwrap_or_else(Rat::zero)
    }

    pub fn is_free(&self) -> bool {
        self.spec.interactions.values().all(Tensor::is_zero)
    }

    /// The interaction as a polynomial, `sum_gamma b_gamma x^gamma / gamma!`.
    pub fn b_polynomial(&self) -> GradedElement {
        let n = self.dimension();
        let mut out = GradedElement::zero();
        for tensor in self.spec.interactions.values() {
            for (key, v) in tensor.entries() {
                let mut gamma = vec![0u32; n];
                for &i in key {
                    gamma[i] += 1;
                }
                let denom: Rat = Rat::from_integer(
                    gamma
                        .iter()
                        .map(|&e| factorial(e as usize))
                        .product::<num_bigint::BigInt>(),
                );
                out = out
                    .checked_add(&GradedElement::term(
                        v / &denom,
                        Monomial::new(gamma, vec![], 0),
                    ))
                    .expect("untruncated");
            }
        }
        out
    }

    pub fn db_dx(&self, i: usize) -> &GradedElement {
        &self.db_dx[i]
    }

    /// `sum_j (a^{-1})_{ij} db/dx_j`, the polynomial substituted for one power
    /// of `x_i` by the reduction engine.
    pub fn rewrite_polynomial(&self, i: usize) -> &GradedElement {
        &self.rewrite[i]
    }

    /// The action `1/2 sum a_{ij} x_i x_j - b(x)`.
    pub fn action(&self) -> GradedElement {
        let n = self.dimension();
        let mut quad = GradedElement::zero();
        for i in 0..n {
            for j in 0..n {
                let c = self.a(i, j) / Rat::from_integer(2.into());
                let m = &GradedElement::x(i) * &GradedElement::x(j);
                quad = quad.checked_add(&m.scale(&c)).expect("untruncated");
            }
        }
        &quad - &self.b_polynomial()
    }

    // Canned models used across the test suites and docs.

    /// One variable, `a = 1`, `b = x^3/6`.
    pub fn cubic_example() -> Self {
        let mut spec = ModelSpec::new(1, vec![vec![Rat::one()]]).with_label("cubic");
        let t = Tensor::from_entries(3, [(vec![0, 0, 0], Rat::one())]).unwrap();
        spec.add_interaction(t).unwrap();
        spec.validate().unwrap()
    }

    /// One variable, `a = 1`, `b = x^4/24`.
    pub fn quartic_example() -> Self {
        let mut spec = ModelSpec::new(1, vec![vec![Rat::one()]]).with_label("quartic");
        let t = Tensor::from_entries(4, [(vec![0, 0, 0, 0], Rat::one())]).unwrap();
        spec.add_interaction(t).unwrap();
        spec.validate().unwrap()
    }

    /// One variable, `a = 1`, `b = x^3/6 + x^4/24`.
    pub fn mixed_example() -> Self {
        let mut spec = ModelSpec::new(1, vec![vec![Rat::one()]]).with_label("mixed");
        spec.add_interaction(Tensor::from_entries(3, [(vec![0, 0, 0], Rat::one())]).unwrap())
            .unwrap();
        spec.add_interaction(Tensor::from_entries(4, [(vec![0, 0, 0, 0], Rat::one())]).unwrap())
            .unwrap();
        spec.validate().unwrap()
    }

    /// One variable, arbitrary nonzero `a`, no interaction.
    pub fn free_example(a: Rat) -> Self {
        ModelSpec::new(1, vec![vec![a]])
            .with_label("free")
            .validate()
            .unwrap()
    }

    /// Two variables, `a = [[2,1],[1,1]]`, no interaction; the inverse has a
    /// negative off-diagonal entry, which exercises sign handling.
    pub fn coupled_pair_example() -> Self {
        let a = vec![
            vec![Rat::from_integer(2.into()), Rat::one()],
            vec![Rat::one(), Rat::one()],
        ];
        ModelSpec::new(2, a).with_label("coupled-pair").validate().unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    #[test]
    fn tensor_symmetry_is_enforced() {
        let mut t = Tensor::new(3);
        t.set(&[0, 0, 1], rat(5)).unwrap();
        t.set(&[1, 0, 0], rat(5)).unwrap();
        assert_eq!(
            t.set(&[0, 1, 0], rat(7)),
            Err(BvError::AsymmetricTensor {
                order: 3,
                indices: vec![0, 1, 0]
            })
        );
        assert_eq!(t.get(&[1, 0, 0]), rat(5));
        assert_eq!(t.get(&[1, 1, 1]), rat(0));
        assert_eq!(
            t.set(&[0, 0], rat(1)),
            Err(BvError::ArityMismatch {
                expected: 3,
                got: 2
            })
        );
    }

    #[test]
    fn cubic_derived_data() {
        let m = ValidatedModel::cubic_example();
        // b = x^3/6, so db/dx = x^2/2 and the rewrite polynomial equals it.
        let expect = GradedElement::x(0).pow(2).scale(&ratio(1, 2));
        assert_eq!(m.db_dx(0), &expect);
        assert_eq!(m.rewrite_polynomial(0), &expect);
        assert_eq!(
            m.b_polynomial(),
            GradedElement::x(0).pow(3).scale(&ratio(1, 6))
        );
        let action = m.action();
        assert_eq!(
            action,
            &GradedElement::x(0).pow(2).scale(&ratio(1, 2))
                - &GradedElement::x(0).pow(3).scale(&ratio(1, 6))
        );
        assert!(!m.is_free());
    }

    #[test]
    fn mixed_derivative_sums_orders() {
        let m = ValidatedModel::mixed_example();
        let expect = &GradedElement::x(0).pow(2).scale(&ratio(1, 2))
            + &GradedElement::x(0).pow(3).scale(&ratio(1, 6));
        assert_eq!(m.db_dx(0), &expect);
    }

    #[test]
    fn multivariate_partials() {
        // b with entry 1 at (0,0,1) is x1^2 x2 / 2.
        let mut spec = ModelSpec::new(2, vec![vec![rat(1), rat(0)], vec![rat(0), rat(1)]]);
        spec.add_interaction(Tensor::from_entries(3, [(vec![0, 0, 1], rat(1))]).unwrap())
            .unwrap();
        let m = spec.validate().unwrap();
        assert_eq!(
            m.b_polynomial(),
            (&GradedElement::x(0).pow(2) * &GradedElement::x(1)).scale(&ratio(1, 2))
        );
        assert_eq!(
            m.db_dx(0),
            &(&GradedElement::x(0) * &GradedElement::x(1))
        );
        assert_eq!(m.db_dx(1), &GradedElement::x(0).pow(2).scale(&ratio(1, 2)));
    }

    #[test]
    fn validation_rejects_bad_models() {
        let singular = ModelSpec::new(2, vec![vec![rat(1), rat(2)], vec![rat(2), rat(4)]]);
        assert_eq!(singular.validate().unwrap_err(), BvError::SingularMatrix);

        let lopsided = ModelSpec::new(2, vec![vec![rat(1), rat(2)], vec![rat(3), rat(1)]]);
        assert_eq!(
            lopsided.validate().unwrap_err(),
            BvError::AsymmetricTensor {
                order: 2,
                indices: vec![0, 1]
            }
        );

        let mut quad = ModelSpec::new(1, vec![vec![rat(1)]]);
        assert_eq!(
            quad.add_interaction(Tensor::new(2)),
            Err(BvError::QuadraticInteraction(2))
        );

        let mut oor = ModelSpec::new(1, vec![vec![rat(1)]]);
        oor.add_interaction(Tensor::from_entries(3, [(vec![0, 0, 1], rat(1))]).unwrap())
            .unwrap();
        assert_eq!(
            oor.validate().unwrap_err(),
            BvError::IndexOutOfRange {
                index: 1,
                dimension: 1
            }
        );

        let ragged = ModelSpec::new(2, vec![vec![rat(1)], vec![rat(0), rat(1)]]);
        assert!(matches!(
            ragged.validate().unwrap_err(),
            BvError::ArityMismatch { .. }
        ));
    }

    #[test]
    fn coupled_pair_inverse() {
        let m = ValidatedModel::coupled_pair_example();
        assert_eq!(m.a_inverse(0, 0), &rat(1));
        assert_eq!(m.a_inverse(0, 1), &rat(-1));
        assert_eq!(m.a_inverse(1, 1), &rat(2));
        assert!(m.is_free());
        assert_eq!(m.rewrite_polynomial(0), &GradedElement::zero());
    }

    #[test]
    fn marked_tensor_round_trip() {
        let t = MarkedTensor::from_monomial_exponents(&[2, 0, 1]);
        assert_eq!(t.arity(), 3);
        assert_eq!(t.get(&[0, 0, 2]), rat(1));
        assert_eq!(t.get(&[0, 2, 0]), rat(0));
        let el = t.as_element();
        let expect = &GradedElement::x(0).pow(2) * &GradedElement::x(2);
        assert_eq!(el, expect);
        assert_eq!(t.max_index(), Some(2));
    }
}
