//! Parsing observable specifications from the command line.
//!
//! Two grammars, told apart by shape:
//!
//! * monomial shorthand: whitespace-separated factors `xI` or `xI^E` with
//!   1-based variable indices, so `x1^2 x3` is the monomial `x1^2 x3`; the
//!   bare spec `1` is the unit observable.
//! * tensor entries: whitespace-separated records `I1,..,In=value` giving
//!   the coefficients of one order-n tensor at ordered 1-based index
//!   tuples, so `1,2=1/2 2,1=1/2` is `x1 x2` split symmetrically.
//!
//! Mixing the two forms in one spec is an error, as is repeating a tuple.

use std::collections::BTreeSet;

use bvcalc::algebra::GradedElement;
use bvcalc::model::MarkedTensor;
use bvcalc::rational::Rat;

use crate::modelfile::parse_rational;

/// A parsed observable: a marked tensor plus the polynomial it expands to.
#[derive(Debug)]
pub struct Observable {
    tensor: MarkedTensor,
}

impl Observable {
    pub fn tensor(&self) -> &MarkedTensor {
        &self.tensor
    }

    pub fn element(&self) -> GradedElement {
        self.tensor.as_element()
    }
}

pub fn parse_observable(spec: &str, dimension: usize) -> Result<Observable, String> {
    let tokens: Vec<&str> = spec.split_whitespace().collect();
    if tokens.is_empty() {
        return Err("empty observable".into());
    }
    let records = tokens.iter().filter(|t| t.contains('=')).count();
    if records == tokens.len() {
        return parse_records(&tokens, dimension);
    }
    if records > 0 {
        return Err("cannot mix monomial factors and tensor entries".into());
    }
    if tokens == ["1"] {
        return Ok(Observable {
            tensor: MarkedTensor::from_monomial_exponents(&[]),
        });
    }
    let mut exponents = vec![0u32; dimension];
    for t in &tokens {
        let body = t
            .strip_prefix('x')
            .ok_or_else(|| format!("bad factor '{t}' (expected xI or xI^E)"))?;
        let (index_text, power_text) = match body.split_once('^') {
            Some((i, p)) => (i, p),
            None => (body, "1"),
        };
        let i: usize = index_text
            .parse()
            .map_err(|_| format!("bad variable index in '{t}'"))?;
        if i == 0 || i > dimension {
            return Err(format!("index {i} outside 1..={dimension}"));
        }
        let p: u32 = power_text
            .parse()
            .map_err(|_| format!("bad exponent in '{t}'"))?;
        exponents[i - 1] += p;
    }
    Ok(Observable {
        tensor: MarkedTensor::from_monomial_exponents(&exponents),
    })
}

fn parse_records(tokens: &[&str], dimension: usize) -> Result<Observable, String> {
    let mut tensor: Option<MarkedTensor> = None;
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    for t in tokens {
        let (tuple_text, value_text) = t.split_once('=').expect("records contain '='");
        let value: Rat = parse_rational(value_text)?;
        if tuple_text.is_empty() {
            return Err(format!("missing indices in '{t}'"));
        }
        let mut tuple = Vec::new();
        for part in tuple_text.split(',') {
            let i: usize = part
                .parse()
                .map_err(|_| format!("bad index '{part}' in '{t}'"))?;
            if i == 0 || i > dimension {
                return Err(format!("index {i} outside 1..={dimension}"));
            }
            tuple.push(i - 1);
        }
        let slot = tensor.get_or_insert_with(|| MarkedTensor::new(tuple.len()));
        if tuple.len() != slot.arity() {
            return Err(format!(
                "mixed arities: '{t}' has {} indices, earlier entries have {}",
                tuple.len(),
                slot.arity()
            ));
        }
        if !seen.insert(tuple.clone()) {
            return Err(format!("duplicate entry in '{t}'"));
        }
        slot.set(&tuple, value).expect("arity checked above");
    }
    Ok(Observable {
        tensor: tensor.expect("at least one record"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use bvcalc::rational::{rat, ratio};

    #[test]
    fn monomials_parse_into_single_tuples() {
        let obs = parse_observable("x1^2 x3", 3).unwrap();
        assert_eq!(obs.tensor().arity(), 3);
        assert_eq!(obs.tensor().get(&[0, 0, 2]), rat(1));
        assert_eq!(obs.tensor().entries().count(), 1);

        let repeated = parse_observable("x2 x2", 2).unwrap();
        assert_eq!(repeated.tensor().get(&[1, 1]), rat(1));
    }

    #[test]
    fn the_unit_observable_is_the_empty_tuple() {
        let obs = parse_observable("1", 2).unwrap();
        assert_eq!(obs.tensor().arity(), 0);
        assert_eq!(obs.tensor().get(&[]), rat(1));
        assert_eq!(obs.element(), GradedElement::one());
    }

    #[test]
    fn records_keep_tuple_order() {
        let obs = parse_observable("1,2=1/2 2,1=1/3", 2).unwrap();
        assert_eq!(obs.tensor().get(&[0, 1]), ratio(1, 2));
        assert_eq!(obs.tensor().get(&[1, 0]), ratio(1, 3));
    }

    #[test]
    fn bad_specs_are_rejected() {
        for (spec, needle) in [
            ("", "empty"),
            ("x1 1,2=1", "mix"),
            ("y1", "bad factor"),
            ("x0", "outside"),
            ("x3", "outside"),
            ("x1^z", "exponent"),
            ("1,2=1 1=2", "mixed arities"),
            ("1,1=1 1,1=2", "duplicate"),
            ("1,3=1", "outside"),
            ("=5", "missing indices"),
            ("1,2=1/0", "denominator"),
        ] {
            let e = parse_observable(spec, 2).unwrap_err();
            assert!(e.contains(needle), "{spec:?}: {e}");
        }
    }

    #[test]
    fn zero_valued_records_cancel() {
        let obs = parse_observable("1,1=0", 1).unwrap();
        assert_eq!(obs.tensor().arity(), 2);
        assert!(obs.tensor().is_zero());
    }
}
