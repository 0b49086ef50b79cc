//! Reading and writing the textual model format.
//!
//! ```text
//! # Comments and blank lines are skipped.
//! dim 2
//! label coupled-pair
//! a 2 1
//! a 1 1
//! b 3 1 1 2 1/2
//! ```
//!
//! `dim` comes first; `a` rows give the symmetric quadratic form, one row of
//! `dim` rationals each; each `b` line records one entry of the symmetric
//! interaction tensor of the stated order at the stated 1-based indices.
//! Index order within a `b` line is irrelevant, and naming the same index
//! multiset twice is an error even with equal values.  Rationals are written
//! `p/q` or as bare integers and parsed exactly.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::Zero;

use bvcalc::model::{ModelSpec, Tensor};
use bvcalc::rational::Rat;

/// A rejected model file: what went wrong and on which 1-based line, when
/// one line is to blame.
#[derive(Debug)]
pub struct ParseError {
    pub line: Option<usize>,
    pub message: String,
}

impl ParseError {
    /// Renders as `path: message` or `path:line: message`.
    pub fn display(&self, path: &str) -> String {
        match self.line {
            Some(n) => format!("{path}:{n}: {}", self.message),
            None => format!("{path}: {}", self.message),
        }
    }
}

fn at(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line: Some(line),
        message: message.into(),
    }
}

fn whole_file(message: impl Into<String>) -> ParseError {
    ParseError {
        line: None,
        message: message.into(),
    }
}

/// Exact rational from `p/q` or a bare integer.
pub fn parse_rational(text: &str) -> Result<Rat, String> {
    let (num_text, den_text) = match text.split_once('/') {
        Some((n, d)) => (n, d),
        None => (text, "1"),
    };
    let parse = |t: &str| {
        BigInt::from_str(t).map_err(|_| format!("expected a rational like 5, -3, or 5/4, got '{text}'"))
    };
    let num = parse(num_text)?;
    let den = parse(den_text)?;
    if den.is_zero() {
        return Err(format!("zero denominator in '{text}'"));
    }
    Ok(Rat::new(num, den))
}

pub fn parse_model(text: &str) -> Result<ModelSpec, ParseError> {
    let mut dimension: Option<usize> = None;
    let mut label: Option<String> = None;
    let mut rows: Vec<Vec<Rat>> = Vec::new();
    // Entries per tensor order, in file order, with the first line per order.
    let mut tensors: BTreeMap<usize, (usize, Vec<(Vec<usize>, Rat)>)> = BTreeMap::new();
    let mut seen: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();

    for (index, raw) in text.lines().enumerate() {
        let lineno = index + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next().unwrap() {
            "dim" => {
                if dimension.is_some() {
                    return Err(at(lineno, "dim given twice"));
                }
                let value: usize = tokens
                    .next()
                    .ok_or_else(|| at(lineno, "dim needs a value"))?
                    .parse()
                    .map_err(|_| at(lineno, "dim must be a positive integer"))?;
                if value == 0 {
                    return Err(at(lineno, "dim must be at least 1"));
                }
                if tokens.next().is_some() {
                    return Err(at(lineno, "trailing tokens after dim"));
                }
                dimension = Some(value);
            }
            "label" => {
                if label.is_some() {
                    return Err(at(lineno, "label given twice"));
                }
                let rest = line["label".len()..].trim();
                if rest.is_empty() {
                    return Err(at(lineno, "label needs a value"));
                }
                label = Some(rest.to_string());
            }
            "a" => {
                let n = dimension.ok_or_else(|| at(lineno, "dim must come before a rows"))?;
                if rows.len() == n {
                    return Err(at(lineno, format!("more than {n} a rows")));
                }
                let row: Vec<Rat> = tokens
                    .map(parse_rational)
                    .collect::<Result<_, _>>()
                    .map_err(|m| at(lineno, m))?;
                if row.len() != n {
                    return Err(at(
                        lineno,
                        format!("an a row needs {n} entries, got {}", row.len()),
                    ));
                }
                rows.push(row);
            }
            "b" => {
                let n = dimension.ok_or_else(|| at(lineno, "dim must come before b entries"))?;
                let order: usize = tokens
                    .next()
                    .ok_or_else(|| at(lineno, "b needs an order"))?
                    .parse()
                    .map_err(|_| at(lineno, "the order must be a positive integer"))?;
                let rest: Vec<&str> = tokens.collect();
                if rest.len() != order + 1 {
                    return Err(at(
                        lineno,
                        format!("b with order {order} needs {order} indices and one value"),
                    ));
                }
                let mut indices = Vec::with_capacity(order);
                for t in &rest[..order] {
                    let i: usize = t
                        .parse()
                        .map_err(|_| at(lineno, format!("bad index '{t}'")))?;
                    if i == 0 || i > n {
                        return Err(at(lineno, format!("index {i} outside 1..={n}")));
                    }
                    indices.push(i - 1);
                }
                let value = parse_rational(rest[order]).map_err(|m| at(lineno, m))?;
                let mut key = indices.clone();
                key.sort_unstable();
                if let Some(&first) = seen.get(&(order, key.clone())) {
                    return Err(at(
                        lineno,
                        format!("duplicate b entry (same index multiset as line {first})"),
                    ));
                }
                seen.insert((order, key), lineno);
                tensors
                    .entry(order)
                    .or_insert_with(|| (lineno, Vec::new()))
                    .1
                    .push((indices, value));
            }
            other => {
                return Err(at(
                    lineno,
                    format!("unknown directive '{other}' (expected dim, label, a, or b)"),
                ))
            }
        }
    }

    let n = dimension.ok_or_else(|| whole_file("missing dim line"))?;
    if rows.len() != n {
        return Err(whole_file(format!("expected {n} a rows, found {}", rows.len())));
    }
    let mut spec = ModelSpec::new(n, rows);
    if let Some(l) = label {
        spec = spec.with_label(l);
    }
    for (order, (first_line, entries)) in tensors {
        let tensor = Tensor::from_entries(order, entries).map_err(|e| at(first_line, e.to_string()))?;
        spec.add_interaction(tensor).map_err(|e| at(first_line, e.to_string()))?;
    }
    Ok(spec)
}

/// Renders a model in the same format [`parse_model`] reads; parsing the
/// result reproduces the spec exactly.
#[cfg(test)]
pub fn write_model(spec: &ModelSpec) -> String {
    use std::fmt::Write as _;

    let mut out = String::new();
    writeln!(out, "dim {}", spec.dimension()).unwrap();
    if let Some(label) = spec.label() {
        writeln!(out, "label {label}").unwrap();
    }
    for row in spec.quadratic() {
        let rendered: Vec<String> = row.iter().map(|r| r.to_string()).collect();
        writeln!(out, "a {}", rendered.join(" ")).unwrap();
    }
    for tensor in spec.interactions() {
        for (key, value) in tensor.entries() {
            let indices: Vec<String> = key.iter().map(|i| (i + 1).to_string()).collect();
            writeln!(out, "b {} {} {value}", tensor.order(), indices.join(" ")).unwrap();
        }
    }
    out
}
