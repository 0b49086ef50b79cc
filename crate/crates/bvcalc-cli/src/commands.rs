//! The expect and list-diagrams commands.
//!
//! Both come in a human-readable table form and a records form that emits
//! one JSON object per line with exact rational coefficients as strings.

use std::fmt::Write as _;

use bvcalc::complex::reduce_expectation;
use bvcalc::diagram::{diagram_expectation, enumerate_closed_diagrams, VertexKind};
use bvcalc::model::ValidatedModel;
use bvcalc::oracle::gaussian_perturbation_expectation;
use bvcalc::rational::rat;
use bvcalc::series::HbarSeries;
use serde_json::json;

use crate::observable::Observable;

/// Which expectation engines an `expect` run compares.
pub struct MethodSet {
    pub reduce: bool,
    pub diagrams: bool,
    pub oracle: bool,
}

fn coeff_strings(series: &HbarSeries) -> Vec<String> {
    series.coeffs().iter().map(|c| c.to_string()).collect()
}

pub fn expect(
    model: &ValidatedModel,
    observable: &Observable,
    order: u32,
    methods: &MethodSet,
    records: bool,
) -> Result<(String, bool), String> {
    let element = observable.element();
    let mut results: Vec<(&'static str, HbarSeries)> = Vec::new();
    if methods.reduce {
        let s = reduce_expectation(model, &element, order).map_err(|e| e.to_string())?;
        results.push(("reduce", s));
    }
    if methods.diagrams {
        let s = diagram_expectation(model, observable.tensor(), order).map_err(|e| e.to_string())?;
        results.push(("diagrams", s));
    }
    if methods.oracle {
        let s = gaussian_perturbation_expectation(model, &element, order).map_err(|e| e.to_string())?;
        results.push(("oracle", s));
    }
    let agree = results.windows(2).all(|w| w[0].1 == w[1].1);
    let mismatch = results
        .windows(2)
        .find_map(|w| w[0].1.first_mismatch(&w[1].1));

    let mut out = String::new();
    if records {
        for (name, series) in &results {
            let line = json!({
                "method": name,
                "order": series.order(),
                "coeffs": coeff_strings(series),
            });
            writeln!(out, "{line}").unwrap();
        }
        let summary = json!({ "agree": agree, "first_mismatch": mismatch });
        writeln!(out, "{summary}").unwrap();
    } else if agree {
        writeln!(out, "<{element}> = {}", results[0].1).unwrap();
        if results.len() == 1 {
            writeln!(out, "method: {}", results[0].0).unwrap();
        } else {
            let names: Vec<&str> = results.iter().map(|(n, _)| *n).collect();
            writeln!(out, "methods agree: {}", names.join(", ")).unwrap();
        }
    } else {
        let width = results.iter().map(|(n, _)| n.len()).max().unwrap();
        for (name, series) in &results {
            writeln!(out, "{name:>width$}: {series}").unwrap();
        }
        let k = mismatch.expect("disagreeing series mismatch somewhere");
        let shown: Vec<String> = results
            .iter()
            .map(|(n, s)| format!("{n} {}", s.coeff(k)))
            .collect();
        writeln!(out, "first mismatch at ħ^{k}: {}", shown.join(", ")).unwrap();
    }
    Ok((out, agree))
}

fn kind_name(kind: VertexKind) -> &'static str {
    match kind {
        VertexKind::Marked => "marked",
        VertexKind::Internal => "internal",
        VertexKind::External => "external",
    }
}

pub fn list_diagrams(
    model: &ValidatedModel,
    observable: &Observable,
    order: u32,
    records: bool,
) -> Result<(String, bool), String> {
    let classes =
        enumerate_closed_diagrams(model, observable.tensor(), order).map_err(|e| e.to_string())?;
    let mut sum = HbarSeries::zero(order as usize);
    let mut rows = Vec::new();
    for class in &classes {
        let weight = &class.value / rat(class.aut_order as i64);
        let contribution = HbarSeries::term(order as usize, class.betti as usize, weight);
        sum = sum.add(&contribution);
        rows.push((class, contribution));
    }

    let mut out = String::new();
    if records {
        for (class, contribution) in &rows {
            let d = &class.diagram;
            let kinds: Vec<&str> = (0..d.vertex_count()).map(|v| kind_name(d.kind(v))).collect();
            let vertex_of: Vec<usize> = (0..d.half_edge_count()).map(|h| d.vertex_of(h)).collect();
            let pairing: Vec<[usize; 2]> = (0..d.half_edge_count())
                .filter(|&h| h < d.partner(h))
                .map(|h| [h, d.partner(h)])
                .collect();
            let line = json!({
                "half_edges": d.half_edge_count(),
                "betti": class.betti,
                "aut": class.aut_order,
                "marked_legs": d.marked_legs().to_vec(),
                "kinds": kinds,
                "vertex_of": vertex_of,
                "pairing": pairing,
                "value": class.value.to_string(),
                "contribution": coeff_strings(contribution),
            });
            writeln!(out, "{line}").unwrap();
        }
        writeln!(out, "{}", json!({ "sum": coeff_strings(&sum) })).unwrap();
    } else {
        let header = ["betti", "aut", "value"];
        let mut cells: Vec<[String; 3]> = Vec::new();
        for (class, _) in &rows {
            cells.push([
                class.betti.to_string(),
                class.aut_order.to_string(),
                class.value.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..3)
            .map(|i| {
                cells
                    .iter()
                    .map(|row| row[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap()
            })
            .collect();
        writeln!(
            out,
            "{:>w0$}  {:>w1$}  {:>w2$}  contribution",
            header[0],
            header[1],
            header[2],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
        )
        .unwrap();
        for (row, (_, contribution)) in cells.iter().zip(&rows) {
            writeln!(
                out,
                "{:>w0$}  {:>w1$}  {:>w2$}  {contribution}",
                row[0],
                row[1],
                row[2],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
            )
            .unwrap();
        }
        writeln!(out, "sum: {sum}").unwrap();
    }
    Ok((out, true))
}
