//! Feynman diagrams as half-edge structures, and the diagrammatic
//! expectation sum.
//!
//! A diagram has one marked vertex whose legs are ordered and pinned (they
//! carry the observable's index tuple), internal vertices of valence at
//! least three (they carry interaction tensors), and optional univalent
//! external vertices (free variables).  A fixed-point-free involution pairs
//! the half-edges.  Diagrams here are connected by definition.
//!
//! The expectation of an observable with coefficient tensor `f` is
//!
//! ```text
//! <f> = sum over closed connected diagrams of ev(D) ħ^betti(D) / |Aut(D)|
//! ```
//!
//! where `ev` contracts inverse-form entries over internal edges, interaction
//! entries over internal vertices, and `f` over the marked legs; `betti` is
//! the first Betti number (edges minus non-marked vertices); and `Aut` is the
//! group of half-edge relabelings fixing every marked leg pointwise.
//!
//! Rather than enumerating perfect matchings (their number is doubly
//! factorial in the half-edge count), the sum is organized by shapes: the
//! explicit wiring of the marked legs plus the multiplicity matrix and loop
//! counts of the internal vertices.  A shape with internal valences `val(u)`,
//! edge multiplicities `mu`, and loop counts `lam` is realized by
//!
//! ```text
//! M = prod_u val(u)! / (prod_{u<w} mu_{uw}! * prod_u 2^{lam_u} lam_u!)
//! ```
//!
//! distinct matchings, which gives both the streaming sum
//! ([`diagram_expectation`] weighs each labeled shape by
//! `M / (prod_m v_m! * prod_u val(u)!)`) and the per-class automorphism
//! count `|Aut| = |stab| * prod_u val(u)! / M` used by
//! [`enumerate_closed_diagrams`].  The two routes, the brute-force matching
//! enumeration, and [`FeynmanDiagram::aut_order_brute_force`] cross-check
//! one another in the test suites.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::algebra::{GradedElement, Monomial};
use crate::error::BvError;
use crate::model::{MarkedTensor, ValidatedModel};
use crate::rational::{factorial, Rat};
use crate::series::HbarSeries;

/// Labeled shapes the streaming expectation may visit before refusing.
const STREAM_SHAPE_BUDGET: u64 = 5_000_000;
/// Labeled shapes the class enumeration may visit before refusing.
const CLASS_SHAPE_BUDGET: u64 = 200_000;
/// Vertex relabelings tried per shape during canonicalization.
const CELL_PERM_BUDGET: u64 = 100_000;
/// Half-edge relabelings tried by the leg-level canonical form.
const CANONICAL_FORM_BUDGET: u64 = 1_000_000;
/// Half-edge cap for the brute-force matching and automorphism searches.
const BRUTE_HALF_EDGE_CAP: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexKind {
    /// Carries the observable; its legs are ordered and fixed pointwise.
    Marked,
    /// Carries an interaction tensor; valence at least three.
    Internal,
    /// Carries a free variable; always univalent.
    External,
}

/// A connected half-edge diagram with exactly one marked vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeynmanDiagram {
    kinds: Vec<VertexKind>,
    vertex_legs: Vec<Vec<usize>>,
    pairing: Vec<usize>,
    leg_owner: Vec<usize>,
    marked: usize,
}

impl FeynmanDiagram {
    /// Validates and builds a diagram.  `pairing` must be a fixed-point-free
    /// involution of the half-edges, `vertex_legs` must partition them, there
    /// must be exactly one marked vertex, internal vertices need valence at
    /// least three, external vertices exactly one leg, and the whole thing
    /// must be connected.
    pub fn new(
        kinds: Vec<VertexKind>,
        vertex_legs: Vec<Vec<usize>>,
        pairing: Vec<usize>,
    ) -> Result<Self, BvError> {
        use BvError::MalformedDiagram as Bad;
        if kinds.len() != vertex_legs.len() {
            return Err(Bad("vertex kind and leg lists differ in length"));
        }
        let h = pairing.len();
        let mut leg_owner = vec![usize::MAX; h];
        for (v, legs) in vertex_legs.iter().enumerate() {
            for &leg in legs {
                if leg >= h {
                    return Err(Bad("leg id out of range"));
                }
                if leg_owner[leg] != usize::MAX {
                    return Err(Bad("leg owned by two vertices"));
                }
                leg_owner[leg] = v;
            }
        }
        if leg_owner.contains(&usize::MAX) {
            return Err(Bad("leg owned by no vertex"));
        }
        for (a, &b) in pairing.iter().enumerate() {
            if b >= h {
                return Err(Bad("partner out of range"));
            }
            if b == a {
                return Err(Bad("pairing has a fixed point"));
            }
            if pairing[b] != a {
                return Err(Bad("pairing is not an involution"));
            }
        }
        let marked_vertices: Vec<usize> = kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, VertexKind::Marked))
            .map(|(v, _)| v)
            .collect();
        let [marked] = marked_vertices[..] else {
            return Err(Bad("exactly one marked vertex required"));
        };
        for (v, kind) in kinds.iter().enumerate() {
            match kind {
                VertexKind::Internal if vertex_legs[v].len() < 3 => {
                    return Err(Bad("internal vertex of valence below three"));
                }
                VertexKind::External if vertex_legs[v].len() != 1 => {
                    return Err(Bad("external vertex must have exactly one leg"));
                }
                _ => {}
            }
        }
        let d = FeynmanDiagram {
            kinds,
            vertex_legs,
            pairing,
            leg_owner,
            marked,
        };
        if !d.is_connected() {
            return Err(Bad("diagram is not connected"));
        }
        Ok(d)
    }

    fn is_connected(&self) -> bool {
        let v = self.kinds.len();
        let mut seen = vec![false; v];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &leg in &self.vertex_legs[u] {
                let w = self.leg_owner[self.pairing[leg]];
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn vertex_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn half_edge_count(&self) -> usize {
        self.pairing.len()
    }

    pub fn edge_count(&self) -> usize {
        self.pairing.len() / 2
    }

    pub fn kind(&self, vertex: usize) -> VertexKind {
        self.kinds[vertex]
    }

    pub fn legs(&self, vertex: usize) -> &[usize] {
        &self.vertex_legs[vertex]
    }

    pub fn partner(&self, half_edge: usize) -> usize {
        self.pairing[half_edge]
    }

    pub fn vertex_of(&self, half_edge: usize) -> usize {
        self.leg_owner[half_edge]
    }

    pub fn marked_vertex(&self) -> usize {
        self.marked
    }

    /// The ordered legs of the marked vertex.
    pub fn marked_legs(&self) -> &[usize] {
        &self.vertex_legs[self.marked]
    }

    /// No external vertices: the contraction is a scalar.
    pub fn is_closed(&self) -> bool {
        !self.kinds.contains(&VertexKind::External)
    }

    /// First Betti number: edges minus non-marked vertices.
    pub fn betti(&self) -> u32 {
        (self.edge_count() + 1 - self.vertex_count()) as u32
    }

    /// Counts pairs (vertex bijection, leg bijection) preserving kind,
    /// ownership, and the pairing, with every marked leg fixed.  Exhaustive
    /// search; refuses more than 16 half-edges.
    pub fn aut_order_brute_force(&self) -> Result<u64, BvError> {
        let h = self.half_edge_count();
        if h > BRUTE_HALF_EDGE_CAP {
            return Err(BvError::TooLarge {
                what: "automorphism search half-edges",
                size: h,
                cap: BRUTE_HALF_EDGE_CAP,
            });
        }
        // Vertex bijections decompose into blocks: internals of equal
        // valence, and the externals.
        let mut blocks: BTreeMap<(bool, usize), Vec<usize>> = BTreeMap::new();
        for (v, kind) in self.kinds.iter().enumerate() {
            match kind {
                VertexKind::Marked => {}
                VertexKind::Internal => blocks
                    .entry((false, self.vertex_legs[v].len()))
                    .or_default()
                    .push(v),
                VertexKind::External => blocks.entry((true, 1)).or_default().push(v),
            }
        }
        let blocks: Vec<Vec<usize>> = blocks.into_values().collect();
        let mut sigma: Vec<usize> = (0..self.vertex_count()).collect();
        let mut total = 0u64;
        self.sigma_search(&blocks, 0, &mut sigma, &mut total);
        Ok(total)
    }

    fn sigma_search(
        &self,
        blocks: &[Vec<usize>],
        block: usize,
        sigma: &mut Vec<usize>,
        total: &mut u64,
    ) {
        if block == blocks.len() {
            let mut tau = vec![usize::MAX; self.half_edge_count()];
            let mut used = vec![false; self.half_edge_count()];
            *total += self.tau_search(sigma, 0, &mut tau, &mut used);
            return;
        }
        let members = &blocks[block];
        let mut perm: Vec<usize> = members.clone();
        permute_all(&mut perm, 0, &mut |p| {
            for (&slot, &image) in members.iter().zip(p.iter()) {
                sigma[slot] = image;
            }
            self.sigma_search(blocks, block + 1, sigma, total);
        });
    }

    fn tau_search(&self, sigma: &[usize], h: usize, tau: &mut Vec<usize>, used: &mut Vec<bool>) -> u64 {
        if h == self.half_edge_count() {
            return 1;
        }
        let owner = self.leg_owner[h];
        let targets: Vec<usize> = if owner == self.marked {
            vec![h]
        } else {
            self.vertex_legs[sigma[owner]].to_vec()
        };
        let mut count = 0;
        for &img in &targets {
            if used[img] {
                continue;
            }
            let p = self.pairing[h];
            if p < h && tau[p] != usize::MAX && self.pairing[img] != tau[p] {
                continue;
            }
            tau[h] = img;
            used[img] = true;
            count += self.tau_search(sigma, h + 1, tau, used);
            tau[h] = usize::MAX;
            used[img] = false;
        }
        count
    }

    /// A relabeling-invariant encoding: minimal (header, partner array) over
    /// internal-vertex orders within equal valence, per-vertex leg orders,
    /// and external orders, with the marked legs pinned first.  Two diagrams
    /// are isomorphic (marked legs fixed) iff their encodings agree.
    pub fn canonical_form(&self) -> Result<Vec<usize>, BvError> {
        let mut internals: Vec<usize> = Vec::new();
        let mut externals: Vec<usize> = Vec::new();
        for (v, kind) in self.kinds.iter().enumerate() {
            match kind {
                VertexKind::Marked => {}
                VertexKind::Internal => internals.push(v),
                VertexKind::External => externals.push(v),
            }
        }
        internals.sort_by_key(|&v| self.vertex_legs[v].len());
        let mut work: u64 = 1;
        let mut by_valence: Vec<Vec<usize>> = Vec::new();
        for &v in &internals {
            match by_valence.last_mut() {
                Some(group) if self.vertex_legs[group[0]].len() == self.vertex_legs[v].len() => {
                    group.push(v)
                }
                _ => by_valence.push(vec![v]),
            }
        }
        for group in &by_valence {
            work = work.saturating_mul(factorial_u64(group.len()));
        }
        for &v in &internals {
            work = work.saturating_mul(factorial_u64(self.vertex_legs[v].len()));
        }
        work = work.saturating_mul(factorial_u64(externals.len()));
        if work > CANONICAL_FORM_BUDGET {
            return Err(BvError::TooLarge {
                what: "canonical form search",
                size: work as usize,
                cap: CANONICAL_FORM_BUDGET as usize,
            });
        }

        let n = self.marked_legs().len();
        let mut best: Option<Vec<usize>> = None;
        let mut vertex_order: Vec<usize> = Vec::new();
        self.canonical_vertex_orders(&by_valence, 0, &mut vertex_order, &externals, &mut |order, exts| {
            let mut leg_orders: Vec<Vec<usize>> = order
                .iter()
                .map(|&v| self.vertex_legs[v].clone())
                .collect();
            self.canonical_leg_orders(order, exts, &mut leg_orders, 0, &mut |orders| {
                let mut position = vec![usize::MAX; self.half_edge_count()];
                let mut slots: Vec<usize> = Vec::with_capacity(self.half_edge_count());
                for (i, &leg) in self.marked_legs().iter().enumerate() {
                    position[leg] = i;
                    slots.push(leg);
                }
                for legs in orders.iter() {
                    for &leg in legs {
                        position[leg] = slots.len();
                        slots.push(leg);
                    }
                }
                for &v in exts {
                    let leg = self.vertex_legs[v][0];
                    position[leg] = slots.len();
                    slots.push(leg);
                }
                let mut enc = Vec::with_capacity(3 + order.len() + slots.len());
                enc.push(n);
                enc.push(order.len());
                enc.push(exts.len());
                enc.extend(order.iter().map(|&v| self.vertex_legs[v].len()));
                enc.extend(slots.iter().map(|&leg| position[self.pairing[leg]]));
                if best.as_ref().map_or(true, |b| enc < *b) {
                    best = Some(enc);
                }
            });
        });
        Ok(best.expect("at least one labeling"))
    }

    fn canonical_vertex_orders(
        &self,
        by_valence: &[Vec<usize>],
        group: usize,
        order: &mut Vec<usize>,
        externals: &[usize],
        emit: &mut dyn FnMut(&[usize], &[usize]),
    ) {
        if group == by_valence.len() {
            let mut exts = externals.to_vec();
            permute_all(&mut exts, 0, &mut |e| emit(order, e));
            return;
        }
        let mut members = by_valence[group].clone();
        permute_all(&mut members, 0, &mut |p| {
            let len = order.len();
            order.extend_from_slice(p);
            self.canonical_vertex_orders(by_valence, group + 1, order, externals, emit);
            order.truncate(len);
        });
    }

    fn canonical_leg_orders(
        &self,
        order: &[usize],
        exts: &[usize],
        leg_orders: &mut Vec<Vec<usize>>,
        at: usize,
        emit: &mut dyn FnMut(&[Vec<usize>]),
    ) {
        if at == leg_orders.len() {
            emit(leg_orders);
            return;
        }
        let mut legs = leg_orders[at].clone();
        permute_all(&mut legs, 0, &mut |p| {
            leg_orders[at] = p.to_vec();
            self.canonical_leg_orders(order, exts, leg_orders, at + 1, emit);
        });
    }
}

fn permute_all(items: &mut Vec<usize>, at: usize, emit: &mut dyn FnMut(&[usize])) {
    if at == items.len() {
        emit(items);
        return;
    }
    for i in at..items.len() {
        items.swap(at, i);
        permute_all(items, at + 1, emit);
        items.swap(at, i);
    }
}

fn factorial_u64(n: usize) -> u64 {
    (2..=n as u64).product::<u64>().max(1)
}

impl fmt::Display for FeynmanDiagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Endpoint names: m<k> marked leg, i<j> internal, e<j> external.
        let mut internal_ordinal = vec![usize::MAX; self.kinds.len()];
        let mut external_ordinal = vec![usize::MAX; self.kinds.len()];
        let (mut ni, mut ne) = (0, 0);
        for (v, kind) in self.kinds.iter().enumerate() {
            match kind {
                VertexKind::Internal => {
                    internal_ordinal[v] = ni;
                    ni += 1;
                }
                VertexKind::External => {
                    external_ordinal[v] = ne;
                    ne += 1;
                }
                VertexKind::Marked => {}
            }
        }
        let name = |leg: usize| -> String {
            let v = self.leg_owner[leg];
            match self.kinds[v] {
                VertexKind::Marked => {
                    let pos = self.marked_legs().iter().position(|&l| l == leg).unwrap();
                    format!("m{pos}")
                }
                VertexKind::Internal => format!("i{}", internal_ordinal[v]),
                VertexKind::External => format!("e{}", external_ordinal[v]),
            }
        };
        write!(f, "marked:{}", self.marked_legs().len())?;
        let valences: Vec<String> = self
            .kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, VertexKind::Internal))
            .map(|(v, _)| self.vertex_legs[v].len().to_string())
            .collect();
        if !valences.is_empty() {
            write!(f, " internal:[{}]", valences.join(","))?;
        }
        if ne > 0 {
            write!(f, " external:{ne}")?;
        }
        let mut edges: Vec<String> = Vec::new();
        for leg in 0..self.half_edge_count() {
            let p = self.pairing[leg];
            if leg < p {
                let (a, b) = (name(leg), name(p));
                edges.push(if a <= b {
                    format!("{a}-{b}")
                } else {
                    format!("{b}-{a}")
                });
            }
        }
        edges.sort();
        if !edges.is_empty() {
            write!(f, " | {}", edges.join(" "))?;
        }
        Ok(())
    }
}

/// Contracts a diagram against a model and an observable tensor: inverse-form
/// entries over internal edges, interaction entries over internal vertices,
/// `f` over the marked legs, and a free variable per external vertex.  The
/// `ħ^betti` prefactor is not included.
pub fn evaluate_diagram(
    model: &ValidatedModel,
    diagram: &FeynmanDiagram,
    f: &MarkedTensor,
) -> Result<GradedElement, BvError> {
    if f.arity() != diagram.marked_legs().len() {
        return Err(BvError::ArityMismatch {
            expected: diagram.marked_legs().len(),
            got: f.arity(),
        });
    }
    if let Some(max) = f.max_index() {
        if max >= model.dimension() {
            return Err(BvError::IndexOutOfRange {
                index: max,
                dimension: model.dimension(),
            });
        }
    }
    let h = diagram.half_edge_count();
    let mut completes = vec![usize::MAX; h];
    for v in 0..diagram.vertex_count() {
        if let Some(&last) = diagram.legs(v).iter().max() {
            completes[last] = v;
        }
    }
    let delta_edge: Vec<bool> = (0..h)
        .map(|leg| {
            matches!(diagram.kind(diagram.vertex_of(leg)), VertexKind::External)
                || matches!(
                    diagram.kind(diagram.vertex_of(diagram.partner(leg))),
                    VertexKind::External
                )
        })
        .collect();
    let start = if diagram.marked_legs().is_empty() {
        f.get(&[])
    } else {
        Rat::one()
    };
    let mut ctx = Contraction {
        diagram,
        model,
        f,
        completes,
        delta_edge,
        assignment: vec![usize::MAX; h],
        terms: BTreeMap::new(),
    };
    if !start.is_zero() {
        let mut ext = vec![0u32; model.dimension()];
        ctx.run(0, start, &mut ext);
    }
    Ok(GradedElement::from_terms(ctx.terms))
}

struct Contraction<'a> {
    diagram: &'a FeynmanDiagram,
    model: &'a ValidatedModel,
    f: &'a MarkedTensor,
    completes: Vec<usize>,
    delta_edge: Vec<bool>,
    assignment: Vec<usize>,
    terms: BTreeMap<Monomial, Rat>,
}

impl Contraction<'_> {
    fn run(&mut self, h: usize, coeff: Rat, ext: &mut Vec<u32>) {
        if h == self.diagram.half_edge_count() {
            let m = Monomial::new(ext.clone(), vec![], 0);
            let entry = self.terms.entry(m.clone()).or_insert_with(Rat::zero);
            *entry += coeff;
            if entry.is_zero() {
                self.terms.remove(&m);
            }
            return;
        }
        let p = self.diagram.partner(h);
        let n = self.model.dimension();
        let forced = (p < h && self.delta_edge[h]).then(|| self.assignment[p]);
        let candidates: Vec<usize> = match forced {
            Some(i) => vec![i],
            None => (0..n).collect(),
        };
        for i in candidates {
            let mut c = coeff.clone();
            if p < h && !self.delta_edge[h] {
                c *= self.model.a_inverse(self.assignment[p], i);
                if c.is_zero() {
                    continue;
                }
            }
            self.assignment[h] = i;
            let v = self.completes[h];
            let mut bumped_ext = false;
            if v != usize::MAX {
                match self.diagram.kind(v) {
                    VertexKind::Marked => {
                        let idx: Vec<usize> = self
                            .diagram
                            .marked_legs()
                            .iter()
                            .map(|&l| self.assignment[l])
                            .collect();
                        c *= self.f.get(&idx);
                    }
                    VertexKind::Internal => {
                        let idx: Vec<usize> = self
                            .diagram
                            .legs(v)
                            .iter()
                            .map(|&l| self.assignment[l])
                            .collect();
                        c *= self.model.b_entry(&idx);
                    }
                    VertexKind::External => {
                        ext[i] += 1;
                        bumped_ext = true;
                    }
                }
                if c.is_zero() {
                    if bumped_ext {
                        ext[i] -= 1;
                    }
                    continue;
                }
            }
            self.run(h + 1, c, ext);
            if bumped_ext {
                ext[i] -= 1;
            }
        }
        self.assignment[h] = usize::MAX;
    }
}

/// One isomorphism class of closed connected diagrams.
#[derive(Clone, Debug)]
pub struct EnumeratedDiagram {
    pub diagram: FeynmanDiagram,
    pub betti: u32,
    pub aut_order: u64,
    /// The contraction against the observable tensor (no `ħ` factor).
    pub value: Rat,
}

// A labeled shape: wiring of the marked legs plus internal multiplicities.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MarkedTarget {
    /// Paired with another marked leg.
    Leg(usize),
    /// Attached to an internal vertex.
    Vertex(usize),
}

struct ShapeView<'a> {
    vals: &'a [usize],
    wiring: &'a [MarkedTarget],
    t: &'a [usize],
    mu: &'a [Vec<usize>],
    lambda: &'a [usize],
}

#[derive(Clone)]
struct OwnedShape {
    vals: Vec<usize>,
    wiring: Vec<MarkedTarget>,
    mu: Vec<Vec<usize>>,
    lambda: Vec<usize>,
}

impl ShapeView<'_> {
    fn to_owned(&self) -> OwnedShape {
        OwnedShape {
            vals: self.vals.to_vec(),
            wiring: self.wiring.to_vec(),
            mu: self.mu.to_vec(),
            lambda: self.lambda.to_vec(),
        }
    }

    fn edge_count(&self) -> usize {
        let pairs = self
            .wiring
            .iter()
            .filter(|w| matches!(w, MarkedTarget::Leg(_)))
            .count()
            / 2;
        let marked_edges: usize = self.t.iter().sum();
        let internal: usize = (0..self.vals.len())
            .map(|u| ((u + 1)..self.vals.len()).map(|w| self.mu[u][w]).sum::<usize>())
            .sum();
        let loops: usize = self.lambda.iter().sum();
        pairs + marked_edges + internal + loops
    }

    fn betti(&self) -> u32 {
        (self.edge_count() - self.vals.len()) as u32
    }

    /// Number of perfect matchings on labeled half-edges realizing this
    /// labeled shape.
    fn matching_count(&self) -> BigInt {
        let mut num = BigInt::one();
        for &val in self.vals {
            num *= factorial(val);
        }
        let mut den = BigInt::one();
        for u in 0..self.vals.len() {
            for w in (u + 1)..self.vals.len() {
                den *= factorial(self.mu[u][w]);
            }
            den *= BigInt::from(2u32).pow(self.lambda[u] as u32) * factorial(self.lambda[u]);
        }
        debug_assert!((&num % &den).is_zero());
        num / den
    }
}

struct ShapeSearch<'a> {
    vals: &'a [usize],
    n: usize,
    wiring: Vec<Option<MarkedTarget>>,
    t: Vec<usize>,
    mu: Vec<Vec<usize>>,
    lambda: Vec<usize>,
    rem: Vec<usize>,
    budget: &'a mut u64,
    visit: &'a mut dyn FnMut(&ShapeView) -> Result<(), BvError>,
}

impl ShapeSearch<'_> {
    fn wire(&mut self, k: usize) -> Result<(), BvError> {
        if k == self.n {
            for u in 0..self.vals.len() {
                self.rem[u] = self.vals[u] - self.t[u];
            }
            return self.fill(0);
        }
        if self.wiring[k].is_some() {
            return self.wire(k + 1);
        }
        for j in (k + 1)..self.n {
            if self.wiring[j].is_some() {
                continue;
            }
            self.wiring[k] = Some(MarkedTarget::Leg(j));
            self.wiring[j] = Some(MarkedTarget::Leg(k));
            self.wire(k + 1)?;
            self.wiring[k] = None;
            self.wiring[j] = None;
        }
        for u in 0..self.vals.len() {
            if self.t[u] < self.vals[u] {
                self.wiring[k] = Some(MarkedTarget::Vertex(u));
                self.t[u] += 1;
                self.wire(k + 1)?;
                self.t[u] -= 1;
                self.wiring[k] = None;
            }
        }
        Ok(())
    }

    fn fill(&mut self, u: usize) -> Result<(), BvError> {
        if u == self.vals.len() {
            return self.finish();
        }
        self.distribute(u, u + 1, self.rem[u])
    }

    fn distribute(&mut self, u: usize, w: usize, left: usize) -> Result<(), BvError> {
        if w == self.vals.len() {
            if left % 2 != 0 {
                return Ok(());
            }
            self.lambda[u] = left / 2;
            self.fill(u + 1)?;
            self.lambda[u] = 0;
            return Ok(());
        }
        let cap = left.min(self.rem[w]);
        for m in 0..=cap {
            self.mu[u][w] = m;
            self.mu[w][u] = m;
            self.rem[w] -= m;
            self.distribute(u, w + 1, left - m)?;
            self.rem[w] += m;
            self.mu[u][w] = 0;
            self.mu[w][u] = 0;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<(), BvError> {
        *self.budget = self.budget.saturating_sub(1);
        if *self.budget == 0 {
            return Err(BvError::TooLarge {
                what: "diagram shape enumeration",
                size: 0,
                cap: 0,
            });
        }
        // Connectivity: every internal vertex must reach the marked one.
        let v = self.vals.len();
        if v > 0 {
            let mut seen = vec![false; v];
            let mut stack: Vec<usize> = (0..v).filter(|&u| self.t[u] > 0).collect();
            for &u in &stack {
                seen[u] = true;
            }
            while let Some(u) = stack.pop() {
                for w in 0..v {
                    if !seen[w] && self.mu[u][w] > 0 {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            if !seen.into_iter().all(|s| s) {
                return Ok(());
            }
        }
        let wiring: Vec<MarkedTarget> = self.wiring.iter().map(|w| w.unwrap()).collect();
        let view = ShapeView {
            vals: self.vals,
            wiring: &wiring,
            t: &self.t,
            mu: &self.mu,
            lambda: &self.lambda,
        };
        (self.visit)(&view)
    }
}

fn for_each_valence_multiset(
    orders: &[usize],
    slack: usize,
    visit: &mut dyn FnMut(&[usize]) -> Result<(), BvError>,
) -> Result<(), BvError> {
    fn rec(
        orders: &[usize],
        idx: usize,
        slack: usize,
        vals: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]) -> Result<(), BvError>,
    ) -> Result<(), BvError> {
        if idx == orders.len() {
            return visit(vals);
        }
        let m = orders[idx];
        // Each extra vertex of order m costs m - 2 against the slack.
        let step = m - 2;
        let mut pushed = 0;
        loop {
            rec(orders, idx + 1, slack - pushed * step, vals, visit)?;
            if (pushed + 1) * step > slack {
                break;
            }
            vals.push(m);
            pushed += 1;
        }
        vals.truncate(vals.len() - pushed);
        Ok(())
    }
    let mut vals = Vec::new();
    rec(orders, 0, slack, &mut vals, visit)
}

fn for_each_labeled_shape(
    orders: &[usize],
    n: usize,
    max_betti: u32,
    budget: &mut u64,
    visit: &mut dyn FnMut(&ShapeView) -> Result<(), BvError>,
) -> Result<(), BvError> {
    let Some(slack) = (2 * max_betti as usize).checked_sub(n) else {
        return Ok(());
    };
    for_each_valence_multiset(orders, slack, &mut |vals| {
        if (n + vals.iter().sum::<usize>()) % 2 != 0 {
            return Ok(());
        }
        let v = vals.len();
        let mut search = ShapeSearch {
            vals,
            n,
            wiring: vec![None; n],
            t: vec![0; v],
            mu: vec![vec![0; v]; v],
            lambda: vec![0; v],
            rem: vec![0; v],
            budget,
            visit,
        };
        search.wire(0)
    })
}

fn realize_shape(shape: &OwnedShape, n: usize) -> FeynmanDiagram {
    let v = shape.vals.len();
    let mut kinds = vec![VertexKind::Marked];
    kinds.extend(std::iter::repeat(VertexKind::Internal).take(v));
    let mut vertex_legs: Vec<Vec<usize>> = Vec::with_capacity(v + 1);
    vertex_legs.push((0..n).collect());
    let mut next = n;
    for &val in &shape.vals {
        vertex_legs.push((next..next + val).collect());
        next += val;
    }
    let h = next;
    let mut cursor: Vec<usize> = (0..v).map(|u| vertex_legs[u + 1][0]).collect();
    let take = |u: usize, cursor: &mut Vec<usize>| -> usize {
        let leg = cursor[u];
        cursor[u] += 1;
        leg
    };
    let mut pairing = vec![usize::MAX; h];
    let join = |a: usize, b: usize, pairing: &mut Vec<usize>| {
        pairing[a] = b;
        pairing[b] = a;
    };
    for (k, target) in shape.wiring.iter().enumerate() {
        match *target {
            MarkedTarget::Leg(j) => {
                if j > k {
                    join(k, j, &mut pairing);
                }
            }
            MarkedTarget::Vertex(u) => {
                let leg = take(u, &mut cursor);
                join(k, leg, &mut pairing);
            }
        }
    }
    for u in 0..v {
        for w in (u + 1)..v {
            for _ in 0..shape.mu[u][w] {
                let a = take(u, &mut cursor);
                let b = take(w, &mut cursor);
                join(a, b, &mut pairing);
            }
        }
    }
    for u in 0..v {
        for _ in 0..shape.lambda[u] {
            let a = take(u, &mut cursor);
            let b = take(u, &mut cursor);
            join(a, b, &mut pairing);
        }
    }
    FeynmanDiagram::new(kinds, vertex_legs, pairing).expect("realized shape is a valid diagram")
}

/// Canonical encoding of a labeled shape under valence-preserving internal
/// relabelings, plus the stabilizer order.  Marked legs stay pinned.
fn shape_canonical(shape: &ShapeView) -> Result<(Vec<usize>, u64), BvError> {
    let v = shape.vals.len();
    // Iterated invariant refinement; colors start from (valence, loops,
    // exact marked-arrival set) and absorb neighbor colors until stable.
    let mut colors: Vec<usize> = vec![0; v];
    let mut distinct = 1usize.min(v);
    if v > 0 {
        let mut keys: Vec<Vec<usize>> = (0..v)
            .map(|u| {
                let mut key = vec![shape.vals[u], shape.lambda[u]];
                for (k, target) in shape.wiring.iter().enumerate() {
                    if *target == MarkedTarget::Vertex(u) {
                        key.push(k);
                    }
                }
                key
            })
            .collect();
        loop {
            // Ranks assigned in sorted key order; each round's keys start
            // with the previous color, so a stable partition keeps its
            // numbering and the loop always terminates.
            let mut sorted: Vec<&[usize]> = keys.iter().map(|k| k.as_slice()).collect();
            sorted.sort();
            sorted.dedup();
            let rank: BTreeMap<&[usize], usize> =
                sorted.into_iter().enumerate().map(|(r, k)| (k, r)).collect();
            let new_colors: Vec<usize> = keys.iter().map(|k| rank[k.as_slice()]).collect();
            let new_distinct = rank.len();
            let stable = new_distinct == distinct && new_colors == colors;
            colors = new_colors;
            distinct = new_distinct;
            if stable || distinct == v {
                break;
            }
            keys = (0..v)
                .map(|u| {
                    let mut neighbors: Vec<(usize, usize)> = (0..v)
                        .filter(|&w| w != u && shape.mu[u][w] > 0)
                        .map(|w| (colors[w], shape.mu[u][w]))
                        .collect();
                    neighbors.sort();
                    let mut key = vec![colors[u]];
                    for (c, m) in neighbors {
                        key.push(c);
                        key.push(m);
                    }
                    key
                })
                .collect();
        }
    }
    let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for u in 0..v {
        cells.entry(colors[u]).or_default().push(u);
    }
    let cells: Vec<Vec<usize>> = cells.into_values().collect();
    let mut perm_count: u64 = 1;
    for cell in &cells {
        perm_count = perm_count.saturating_mul(factorial_u64(cell.len()));
    }
    if perm_count > CELL_PERM_BUDGET {
        return Err(BvError::TooLarge {
            what: "shape canonicalization",
            size: perm_count as usize,
            cap: CELL_PERM_BUDGET as usize,
        });
    }

    let mut best: Option<Vec<usize>> = None;
    let mut stab: u64 = 0;
    let mut order: Vec<usize> = Vec::with_capacity(v);
    enumerate_cell_orders(&cells, 0, &mut order, &mut |order| {
        let mut pos = vec![usize::MAX; v];
        for (p, &u) in order.iter().enumerate() {
            pos[u] = p;
        }
        let mut enc = Vec::with_capacity(2 + v * (v + 3) / 2 + 2 * shape.wiring.len());
        enc.push(v);
        enc.extend(order.iter().map(|&u| shape.vals[u]));
        for target in shape.wiring {
            match *target {
                MarkedTarget::Leg(j) => {
                    enc.push(0);
                    enc.push(j);
                }
                MarkedTarget::Vertex(u) => {
                    enc.push(1);
                    enc.push(pos[u]);
                }
            }
        }
        for p in 0..v {
            for q in (p + 1)..v {
                enc.push(shape.mu[order[p]][order[q]]);
            }
        }
        enc.extend(order.iter().map(|&u| shape.lambda[u]));
        match &best {
            Some(b) if enc > *b => {}
            Some(b) if enc == *b => stab += 1,
            _ => {
                best = Some(enc);
                stab = 1;
            }
        }
    });
    Ok((best.unwrap_or_else(|| vec![0]), stab.max(1)))
}

fn enumerate_cell_orders(
    cells: &[Vec<usize>],
    at: usize,
    order: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    if at == cells.len() {
        emit(order);
        return;
    }
    let mut members = cells[at].clone();
    permute_all(&mut members, 0, &mut |p| {
        let len = order.len();
        order.extend_from_slice(p);
        enumerate_cell_orders(cells, at + 1, order, emit);
        order.truncate(len);
    });
}

fn multiset_symmetry(vals: &[usize]) -> BigInt {
    // prod over distinct valences of (count!)
    let mut out = BigInt::one();
    let mut run = 1usize;
    for i in 1..=vals.len() {
        if i < vals.len() && vals[i] == vals[i - 1] {
            run += 1;
        } else {
            out *= factorial(run);
            run = 1;
        }
    }
    out
}

fn valence_factorials(vals: &[usize]) -> BigInt {
    let mut out = BigInt::one();
    for &val in vals {
        out *= factorial(val);
    }
    out
}

fn interaction_orders(model: &ValidatedModel) -> Vec<usize> {
    model.interaction_orders().collect()
}

/// Expectation of a tensor observable as a diagram sum, truncated after
/// `ħ^order`.  Streams over labeled shapes without building isomorphism
/// classes, which keeps moderate orders tractable.
pub fn diagram_expectation(
    model: &ValidatedModel,
    f: &MarkedTensor,
    order: u32,
) -> Result<HbarSeries, BvError> {
    if let Some(max) = f.max_index() {
        if max >= model.dimension() {
            return Err(BvError::IndexOutOfRange {
                index: max,
                dimension: model.dimension(),
            });
        }
    }
    let orders = interaction_orders(model);
    let mut acc = vec![Rat::zero(); order as usize + 1];
    let mut budget = STREAM_SHAPE_BUDGET;
    for_each_labeled_shape(&orders, f.arity(), order, &mut budget, &mut |shape| {
        let beta = shape.betti() as usize;
        debug_assert!(beta <= order as usize);
        let diagram = realize_shape(&shape.to_owned(), f.arity());
        let value = evaluate_diagram(model, &diagram, f)?;
        let scalar = value.coeff(&Monomial::one());
        if scalar.is_zero() {
            return Ok(());
        }
        let weight = Rat::new(
            shape.matching_count(),
            multiset_symmetry(shape.vals) * valence_factorials(shape.vals),
        );
        acc[beta] += scalar * weight;
        Ok(())
    })?;
    Ok(HbarSeries::from_coeffs(acc))
}

/// Expectation of a polynomial observable as a diagram sum: each monomial
/// contributes through its indicator tensor.
pub fn diagram_expectation_of_element(
    model: &ValidatedModel,
    f: &GradedElement,
    order: u32,
) -> Result<HbarSeries, BvError> {
    if f.xi_degree() != Some(0) {
        return Err(BvError::NonScalarInput);
    }
    crate::complex::check_index_range(f, model.dimension())?;
    let mut out = HbarSeries::zero(order as usize);
    for (m, c) in f.terms() {
        let shift = m.hbar_power();
        if shift > order {
            continue;
        }
        let tensor = MarkedTensor::from_monomial_exponents(m.x_exponents());
        let sub = diagram_expectation(model, &tensor, order - shift)?;
        for (k, coeff) in sub.coeffs().iter().enumerate() {
            if !coeff.is_zero() {
                out = out.add(&HbarSeries::term(
                    order as usize,
                    k + shift as usize,
                    coeff * c,
                ));
            }
        }
    }
    Ok(out)
}

/// Isomorphism classes of closed connected diagrams with first Betti number
/// at most `max_betti`, each with its automorphism order and contraction
/// value, in a deterministic order.
pub fn enumerate_closed_diagrams(
    model: &ValidatedModel,
    f: &MarkedTensor,
    max_betti: u32,
) -> Result<Vec<EnumeratedDiagram>, BvError> {
    if let Some(max) = f.max_index() {
        if max >= model.dimension() {
            return Err(BvError::IndexOutOfRange {
                index: max,
                dimension: model.dimension(),
            });
        }
    }
    let orders = interaction_orders(model);
    let mut classes: BTreeMap<Vec<usize>, (OwnedShape, u64)> = BTreeMap::new();
    let mut budget = CLASS_SHAPE_BUDGET;
    for_each_labeled_shape(&orders, f.arity(), max_betti, &mut budget, &mut |shape| {
        let (enc, stab) = shape_canonical(shape)?;
        classes.entry(enc).or_insert_with(|| (shape.to_owned(), stab));
        Ok(())
    })?;
    let mut out: Vec<(u32, Vec<usize>, EnumeratedDiagram)> = Vec::with_capacity(classes.len());
    for (enc, (shape, stab)) in classes {
        let diagram = realize_shape(&shape, f.arity());
        let betti = diagram.betti();
        let t: Vec<usize> = (0..shape.vals.len())
            .map(|u| {
                shape
                    .wiring
                    .iter()
                    .filter(|w| **w == MarkedTarget::Vertex(u))
                    .count()
            })
            .collect();
        let view = ShapeView {
            vals: &shape.vals,
            wiring: &shape.wiring,
            t: &t,
            mu: &shape.mu,
            lambda: &shape.lambda,
        };
        let m_count = view.matching_count();
        let aut_big = BigInt::from(stab) * valence_factorials(&shape.vals) / &m_count;
        debug_assert!(
            (BigInt::from(stab) * valence_factorials(&shape.vals)) % &m_count == BigInt::zero()
        );
        let aut_order = aut_big.to_u64().ok_or(BvError::Internal(
            "automorphism order exceeds u64",
        ))?;
        let value = evaluate_diagram(model, &diagram, f)?.coeff(&Monomial::one());
        out.push((
            betti,
            enc,
            EnumeratedDiagram {
                diagram,
                betti,
                aut_order,
                value,
            },
        ));
    }
    out.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    Ok(out.into_iter().map(|(_, _, d)| d).collect())
}

/// Brute-force cross-check of [`enumerate_closed_diagrams`]: enumerate all
/// perfect matchings on labeled half-edges, keep the connected ones, and
/// bucket them by leg-level canonical form.  The automorphism order falls
/// out of the class sizes.  Only feasible for small diagrams; refuses more
/// than 16 half-edges.
pub fn closed_diagram_classes_by_matchings(
    model: &ValidatedModel,
    f: &MarkedTensor,
    max_betti: u32,
) -> Result<Vec<EnumeratedDiagram>, BvError> {
    let n = f.arity();
    let orders = interaction_orders(model);
    let Some(slack) = (2 * max_betti as usize).checked_sub(n) else {
        return Ok(Vec::new());
    };
    let mut classes: BTreeMap<Vec<usize>, (FeynmanDiagram, u64, BigInt)> = BTreeMap::new();
    for_each_valence_multiset(&orders, slack, &mut |vals| {
        let total: usize = vals.iter().sum();
        if (n + total) % 2 != 0 {
            return Ok(());
        }
        let h = n + total;
        if h > BRUTE_HALF_EDGE_CAP {
            return Err(BvError::TooLarge {
                what: "matching enumeration half-edges",
                size: h,
                cap: BRUTE_HALF_EDGE_CAP,
            });
        }
        let v = vals.len();
        let mut kinds = vec![VertexKind::Marked];
        kinds.extend(std::iter::repeat(VertexKind::Internal).take(v));
        let mut vertex_legs: Vec<Vec<usize>> = vec![(0..n).collect()];
        let mut next = n;
        for &val in vals {
            vertex_legs.push((next..next + val).collect());
            next += val;
        }
        let label_count = valence_factorials(vals) * multiset_symmetry(vals);
        let mut pairing = vec![usize::MAX; h];
        let mut available: Vec<usize> = (0..h).collect();
        enumerate_matchings(&mut available, &mut pairing, &mut |pairing| {
            let Ok(d) = FeynmanDiagram::new(kinds.clone(), vertex_legs.clone(), pairing.to_vec())
            else {
                return Ok(()); // disconnected
            };
            if d.betti() > max_betti {
                return Ok(());
            }
            let key = d.canonical_form()?;
            let entry = classes
                .entry(key)
                .or_insert_with(|| (d, 0, label_count.clone()));
            entry.1 += 1;
            Ok(())
        })
    })?;
    let mut out: Vec<(u32, Vec<usize>, EnumeratedDiagram)> = Vec::with_capacity(classes.len());
    for (key, (diagram, count, label_count)) in classes {
        let aut_big = &label_count / BigInt::from(count);
        debug_assert!(&label_count % BigInt::from(count) == BigInt::zero());
        let aut_order = aut_big
            .to_u64()
            .ok_or(BvError::Internal("automorphism order exceeds u64"))?;
        let betti = diagram.betti();
        let value = evaluate_diagram(model, &diagram, f)?.coeff(&Monomial::one());
        out.push((
            betti,
            key,
            EnumeratedDiagram {
                diagram,
                betti,
                aut_order,
                value,
            },
        ));
    }
    out.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    Ok(out.into_iter().map(|(_, _, d)| d).collect())
}

fn enumerate_matchings(
    available: &mut Vec<usize>,
    pairing: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]) -> Result<(), BvError>,
) -> Result<(), BvError> {
    if available.is_empty() {
        return emit(pairing);
    }
    let first = available[0];
    for i in 1..available.len() {
        let partner = available[i];
        let mut rest: Vec<usize> = available[1..].to_vec();
        rest.remove(i - 1);
        pairing[first] = partner;
        pairing[partner] = first;
        enumerate_matchings(&mut rest, pairing, emit)?;
        pairing[first] = usize::MAX;
        pairing[partner] = usize::MAX;
    }
    Ok(())
}
