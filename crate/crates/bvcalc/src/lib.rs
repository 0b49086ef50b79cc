//! Exact expectation values for a family of odd-symplectic perturbative
//! models.
//!
//! A model is a nondegenerate symmetric quadratic form `a` on even variables
//! `x1..xN` together with a polynomial interaction `b` whose terms all have
//! degree three or more.  The crate computes the formal-series expectation
//! `<f>` of a polynomial observable `f` in three independent ways:
//!
//! * [`complex`]: a homological reduction engine.  The differential of the
//!   underlying complex rewrites any observable, step by step, into a series
//!   in the formal parameter `ħ` alone; the multiple of the unit left over is
//!   the expectation.
//! * [`diagram`]: a sum over isomorphism classes of closed connected
//!   graphs (Feynman diagrams) weighted by inverse automorphism counts.
//! * [`oracle`]: direct Gaussian-moment computations, plus closed-form
//!   series for the one-variable cubic model, used as ground truth by the
//!   test suites.
//!
//! All three agree coefficient by coefficient; the integration tests pin the
//! values.  Arithmetic is exact big-rational throughout, and results are
//! reported truncated at a caller-chosen order in `ħ`.
//!
//! ```
//! use bvcalc::algebra::GradedElement;
//! use bvcalc::complex::reduce_expectation;
//! use bvcalc::model::ValidatedModel;
//! use bvcalc::rational::{rat, ratio};
//!
//! // One variable, a = 1, b = x^3/6.
//! let model = ValidatedModel::cubic_example();
//! let x2 = GradedElement::x(0).pow(2);
//! let series = reduce_expectation(&model, &x2, 4).unwrap();
//! assert_eq!(series.coeff(1), rat(1));
//! assert_eq!(series.coeff(2), ratio(5, 4));
//! ```

pub mod algebra;
pub mod complex;
pub mod diagram;
pub mod error;
pub mod model;
pub mod oracle;
pub mod rational;
pub mod sampling;
pub mod series;

pub use algebra::{GradedElement, Monomial, TruncationPolicy};
pub use error::BvError;
pub use model::{MarkedTensor, ModelSpec, Tensor, ValidatedModel};
pub use rational::Rat;
pub use series::HbarSeries;
