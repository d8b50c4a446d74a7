#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tkge::dataset::{compute_binning, TemporalGraph};
use tkge::eval::{generate_synthetic, SyntheticData, SyntheticSpec};
use tkge::model::Table;
use tkge::sampler::ConstraintPair;
use tkge::{HyperParams, ModelState, Triple};

pub struct Synthetic {
    pub data: SyntheticData,
    pub graph: TemporalGraph,
}

/// Generates a synthetic corpus and materializes its training split with
/// one bin per year.
pub fn synthetic(spec: &SyntheticSpec) -> Synthetic {
    let data = generate_synthetic(spec).expect("valid synthetic spec");
    let binning = compute_binning(&data.train, 1).expect("bounded years");
    assert_eq!(binning.num_bins(), spec.bins, "every year should be its own bin");
    let graph = TemporalGraph::materialize(&data.train, binning, spec.entities, spec.relations)
        .expect("materialize");
    Synthetic { data, graph }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_table<R: Rng>(rng: &mut R, rows: usize, dim: usize, scale: f64) -> Table {
    let data = (0..rows * dim).map(|_| rng.gen_range(-scale..scale)).collect();
    Table::from_vec(rows, dim, data).unwrap()
}

/// A state with unnormalized random rows.
pub fn random_state<R: Rng>(rng: &mut R, ne: usize, nr: usize, bins: usize, d: usize) -> ModelState {
    ModelState::new(
        random_table(rng, ne, d, 1.0),
        random_table(rng, nr, d, 1.0),
        random_table(rng, bins, d, 1.0),
    )
    .unwrap()
}

/// Random constraint pairs honouring the slot-difference invariants.
pub fn random_pairs<R: Rng>(
    rng: &mut R,
    count: usize,
    ne: usize,
    nr: usize,
    bins: usize,
    with_relations: bool,
) -> Vec<ConstraintPair> {
    (0..count)
        .map(|_| {
            let positive = Triple::new(rng.gen_range(0..ne), rng.gen_range(0..nr), rng.gen_range(0..ne));
            let other = |rng: &mut R, size: usize, not: usize| loop {
                let c = rng.gen_range(0..size);
                if c != not {
                    break c;
                }
            };
            let entity_negative = if rng.gen_bool(0.5) {
                Triple { head: other(rng, ne, positive.head), ..positive }
            } else {
                Triple { tail: other(rng, ne, positive.tail), ..positive }
            };
            let relation_negative =
                with_relations.then(|| Triple { relation: other(rng, nr, positive.relation), ..positive });
            ConstraintPair { bin: rng.gen_range(0..bins), positive, entity_negative, relation_negative }
        })
        .collect()
}

pub fn small_hp(d: usize) -> HyperParams {
    HyperParams { d, ..Default::default() }
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - (intercept + slope * a)).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
