//! Library-wide error type.
//!
//! Data-driven failures (bad model input, size caps, reduction budget) are
//! reported through [`BvError`].  Programmer-contract violations such as an
//! out-of-range generator index panic instead, like slice indexing.

use thiserror::Error;

/// Errors surfaced by model validation, reduction, and the combinatorial
/// engines.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BvError {
    /// The quadratic form is not invertible over the rationals.
    #[error("quadratic form is singular")]
    SingularMatrix,

    /// A coefficient tensor is not symmetric under index permutation.
    #[error("tensor of order {order} is not symmetric at index {indices:?}")]
    AsymmetricTensor { order: usize, indices: Vec<usize> },

    /// An interaction tensor of order below three was supplied; quadratic and
    /// lower terms belong to the quadratic form.
    #[error("interaction tensor of order {0} (must be at least 3)")]
    QuadraticInteraction(usize),

    /// A tensor entry used a generator index outside `1..=dimension`.
    #[error("tensor index {index} out of range for dimension {dimension}")]
    IndexOutOfRange { index: usize, dimension: usize },

    /// Two elements with distinct truncation policies were combined.
    #[error("mismatched truncation orders {0} and {1}")]
    MismatchedTruncation(u32, u32),

    /// Reduction expects an even input free of odd generators.
    #[error("input to expectation reduction contains odd generators")]
    NonScalarInput,

    /// A half-edge structure that is not a valid diagram.
    #[error("malformed diagram: {0}")]
    MalformedDiagram(&'static str),

    /// A combinatorial search exceeded its hard size cap.
    #[error("{what} exceeds brute-force cap ({size} > {cap})")]
    TooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    /// Tensor arity disagrees with the number of indices supplied.
    #[error("expected {expected} indices, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    /// Series division needs a denominator with constant term one.
    #[error("series denominator has constant term {0}, expected 1")]
    NonUnitDenominator(String),

    /// Internal invariant breached; reported rather than silently looping.
    #[error("internal error: {0}")]
    Internal(&'static str),
}
