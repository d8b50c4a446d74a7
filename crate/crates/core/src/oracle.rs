//! Brute-force references for the test suites.
//!
//! Nothing here reuses the projection, scoring or ranking routines it checks:
//! losses are recomputed from the projection formula with local helpers,
//! ranks come from a full sort, and gradients from central differences of
//! [`crate::trainer::objective`] treated as a black box.

use std::collections::BTreeSet;

use crate::dataset::{TemporalGraph, Triple};
use crate::model::{HyperParams, ModelState, Norm};
use crate::sampler::{ConstraintPair, NegFilter};
use crate::trainer::{self, Gradient};

fn inner(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn projected(x: &[f64], w: &[f64]) -> Vec<f64> {
    let c = inner(w, x);
    (0..x.len()).map(|i| x[i] - c * w[i]).collect()
}

/// Projects the three vectors separately, then takes the norm of
/// `Q(h) + Q(ℓ) − Q(ζ)`.
pub fn brute_triple_loss(h: &[f64], l: &[f64], z: &[f64], w: &[f64], norm: Norm) -> f64 {
    let (ph, pl, pz) = (projected(h, w), projected(l, w), projected(z, w));
    let mut acc = 0.0;
    for i in 0..w.len() {
        let r = ph[i] + pl[i] - pz[i];
        acc += match norm {
            Norm::L2 => r * r,
            Norm::L1 => r.abs(),
        };
    }
    match norm {
        Norm::L2 => acc.sqrt(),
        Norm::L1 => acc,
    }
}

fn unit(w: &[f64]) -> Vec<f64> {
    let n = inner(w, w).sqrt();
    if n > 0.0 {
        w.iter().map(|v| v / n).collect()
    } else {
        vec![0.0; w.len()]
    }
}

/// Losses of `(head, relation, tail)` candidates under the normalized
/// hyperplane of `bin`.
pub fn brute_scores(state: &ModelState, triples: &[Triple], bin: usize, norm: Norm) -> Vec<f64> {
    let w = unit(state.hyperplanes.row(bin));
    triples
        .iter()
        .map(|t| {
            brute_triple_loss(
                state.entities.row(t.head),
                state.relations.row(t.relation),
                state.entities.row(t.tail),
                &w,
                norm,
            )
        })
        .collect()
}

/// The objective written out term by term.
pub fn brute_objective(state: &ModelState, pairs: &[ConstraintPair], hp: &HyperParams) -> f64 {
    let loss = |t: &Triple, bin: usize| {
        brute_triple_loss(
            state.entities.row(t.head),
            state.relations.row(t.relation),
            state.entities.row(t.tail),
            state.hyperplanes.row(bin),
            hp.norm,
        )
    };
    let mut smooth = 0.0;
    for t in 0..state.num_bins().saturating_sub(1) {
        let (a, b) = (state.hyperplanes.row(t), state.hyperplanes.row(t + 1));
        let diff: Vec<f64> = (0..a.len()).map(|i| b[i] - a[i]).collect();
        smooth += inner(&diff, &diff).sqrt();
    }
    let mut task = 0.0;
    for p in pairs {
        let rel = match p.relation_negative {
            Some(neg) if hp.beta != 0.0 => hp.beta * loss(&neg, p.bin),
            _ => 0.0,
        };
        let m = 2.0 * loss(&p.positive, p.bin) + hp.gamma - loss(&p.entity_negative, p.bin) - rel;
        if m > 0.0 {
            task += m;
        }
    }
    let mut penalty = 0.0;
    for table in [&state.hyperplanes, &state.entities, &state.relations] {
        for i in 0..table.rows() {
            let n = inner(table.row(i), table.row(i)).sqrt();
            penalty += (n - 1.0) * (n - 1.0);
        }
    }
    hp.alpha * smooth + task + hp.xi * penalty
}

/// Finite-difference settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSpec {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for FdSpec {
    fn default() -> Self {
        FdSpec { step: 1e-6, tolerance: 1e-4 }
    }
}

/// Central-difference gradient plus, per coordinate (entities, relations,
/// hyperplanes flattened in that order), whether a hinge changes activity
/// within `10·step` of the current point.
#[derive(Clone, Debug)]
pub struct FdGradient {
    pub gradient: Gradient,
    pub near_boundary: Vec<bool>,
}

fn num_coords(state: &ModelState) -> usize {
    state.entities.as_slice().len() + state.relations.as_slice().len() + state.hyperplanes.as_slice().len()
}

fn coord_mut(state: &mut ModelState, mut idx: usize) -> &mut f64 {
    for table in [&mut state.entities, &mut state.relations, &mut state.hyperplanes] {
        let len = table.as_slice().len();
        if idx < len {
            return &mut table.as_mut_slice()[idx];
        }
        idx -= len;
    }
    panic!("coordinate out of range")
}

/// Flattens a gradient in the same coordinate order as [`FdGradient`].
pub fn flatten(g: &Gradient) -> Vec<f64> {
    [&g.entities, &g.relations, &g.hyperplanes]
        .iter()
        .flat_map(|t| t.as_slice().iter().copied())
        .collect()
}

fn active_set(state: &ModelState, pairs: &[ConstraintPair], hp: &HyperParams) -> Vec<bool> {
    pairs.iter().map(|p| trainer::hinge_term(p, state, hp) > 0.0).collect()
}

pub fn fd_gradient(state: &ModelState, pairs: &[ConstraintPair], hp: &HyperParams, spec: FdSpec) -> FdGradient {
    let mut work = state.clone();
    let mut gradient = ModelState {
        entities: crate::model::Table::zeros(state.num_entities(), state.dim()),
        relations: crate::model::Table::zeros(state.num_relations(), state.dim()),
        hyperplanes: crate::model::Table::zeros(state.num_bins(), state.dim()),
    };
    let base_active = active_set(state, pairs, hp);
    let n = num_coords(state);
    let mut near_boundary = vec![false; n];
    for idx in 0..n {
        let x = *coord_mut(&mut work, idx);
        let eval_at = |v: f64, work: &mut ModelState| {
            *coord_mut(work, idx) = v;
            trainer::objective(work, pairs, hp).total
        };
        let plus = eval_at(x + spec.step, &mut work);
        let minus = eval_at(x - spec.step, &mut work);
        for v in [x + 10.0 * spec.step, x - 10.0 * spec.step] {
            *coord_mut(&mut work, idx) = v;
            if active_set(&work, pairs, hp) != base_active {
                near_boundary[idx] = true;
            }
        }
        *coord_mut(&mut work, idx) = x;
        *coord_mut(&mut gradient, idx) = (plus - minus) / (2.0 * spec.step);
    }
    FdGradient { gradient, near_boundary }
}

/// `|a − b| / max(|a|, |b|, 1)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Largest relative error between an analytic gradient and the finite
/// differences, skipping coordinates near hinge boundaries. Returns the error
/// and the number of coordinates compared.
pub fn max_relative_error(analytic: &Gradient, fd: &FdGradient) -> (f64, usize) {
    let a = flatten(analytic);
    let f = flatten(&fd.gradient);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for i in 0..a.len() {
        if !fd.near_boundary[i] {
            worst = worst.max(relative_error(a[i], f[i]));
            compared += 1;
        }
    }
    (worst, compared)
}

/// Rank by full stable sort: gold's 1-based position among its tie block,
/// moved to the block's middle (rounded half up).
pub fn brute_rank(losses: &[f64], gold: usize) -> usize {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].partial_cmp(&losses[b]).unwrap_or(std::cmp::Ordering::Equal));
    let g = losses[gold];
    let first = order.iter().position(|&i| losses[i] == g).expect("gold present");
    let block = order[first..].iter().take_while(|&&i| losses[i] == g).count();
    // block occupies 1-based positions first+1 ..= first+block
    let others = block - 1;
    first + 1 + others / 2 + others % 2
}

/// Every triple obtainable by replacing exactly one entity slot of
/// `positive` that is not observed under `filter`.
pub fn entity_negative_set(
    graph: &TemporalGraph,
    positive: Triple,
    bin: usize,
    filter: NegFilter,
) -> BTreeSet<Triple> {
    let observed = |t: &Triple| match filter {
        NegFilter::Bin => graph.contains(bin, t),
        NegFilter::Global => graph.contains_anywhere(t),
    };
    let mut out = BTreeSet::new();
    for e in 0..graph.num_entities() {
        for cand in [Triple { head: e, ..positive }, Triple { tail: e, ..positive }] {
            if cand != positive && !observed(&cand) {
                out.insert(cand);
            }
        }
    }
    out
}

/// Same for the relation slot.
pub fn relation_negative_set(
    graph: &TemporalGraph,
    positive: Triple,
    bin: usize,
    filter: NegFilter,
) -> BTreeSet<Triple> {
    (0..graph.num_relations())
        .map(|r| Triple { relation: r, ..positive })
        .filter(|c| {
            *c != positive
                && !match filter {
                    NegFilter::Bin => graph.contains(bin, c),
                    NegFilter::Global => graph.contains_anywhere(c),
                }
        })
        .collect()
}
