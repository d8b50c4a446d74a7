//! Corrupted negatives and constraint pairs.
//!
//! Each positive triple of bin `t` is paired with entity-corrupted negatives
//! (head or tail replaced) and relation-corrupted negatives. A corruption is
//! redrawn while it is an observed triple; after `max_retries` failed draws
//! the filter is dropped and any differing replacement is accepted (counted as
//! a relaxation).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{TemporalGraph, Triple};
use crate::error::{Error, Result};

/// Which triples count as "observed" when rejecting a corruption.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NegFilter {
    /// Not in the positive's own bin.
    #[default]
    Bin,
    /// Not in any bin.
    Global,
}

impl std::str::FromStr for NegFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bin" => Ok(NegFilter::Bin),
            "global" => Ok(NegFilter::Global),
            other => Err(Error::InvalidHyperParam(format!("unknown neg_filter `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub filter: NegFilter,
    pub max_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { filter: NegFilter::Bin, max_retries: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Head,
    Tail,
}

/// One positive with the negatives it is contrasted against in a single
/// hinge term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstraintPair {
    pub bin: usize,
    pub positive: Triple,
    pub entity_negative: Triple,
    /// `None` when relation negatives are switched off.
    pub relation_negative: Option<Triple>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Constraints {
    /// Bin-major, then positive order, then `2m` pairs per positive.
    pub pairs: Vec<ConstraintPair>,
    /// Draws that exhausted the retry budget and fell back to any
    /// differing replacement.
    pub relaxations: usize,
}

impl Constraints {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Negative sampler over one graph.
#[derive(Clone, Debug)]
pub struct Sampler<'g> {
    graph: &'g TemporalGraph,
    config: SamplerConfig,
    relaxations: usize,
}

impl<'g> Sampler<'g> {
    pub fn new(graph: &'g TemporalGraph, config: SamplerConfig) -> Self {
        Sampler { graph, config, relaxations: 0 }
    }

    pub fn relaxations(&self) -> usize {
        self.relaxations
    }

    fn observed(&self, triple: &Triple, bin: usize) -> bool {
        match self.config.filter {
            NegFilter::Bin => self.graph.contains(bin, triple),
            NegFilter::Global => self.graph.contains_anywhere(triple),
        }
    }

    /// Draws ids in `0..size` different from `original` whose substitution
    /// (via `build`) is unobserved; relaxes after the retry budget.
    fn draw<R, F>(&mut self, size: usize, original: usize, bin: usize, rng: &mut R, build: F) -> Triple
    where
        R: Rng + ?Sized,
        F: Fn(usize) -> Triple,
    {
        for _ in 0..self.config.max_retries {
            let id = rng.gen_range(0..size);
            if id == original {
                continue;
            }
            let candidate = build(id);
            if !self.observed(&candidate, bin) {
                return candidate;
            }
        }
        self.relaxations += 1;
        let mut id = rng.gen_range(0..size - 1);
        if id >= original {
            id += 1;
        }
        build(id)
    }

    /// Replaces the given entity slot.
    pub fn corrupt_entity<R: Rng + ?Sized>(
        &mut self,
        positive: Triple,
        slot: Slot,
        bin: usize,
        rng: &mut R,
    ) -> Result<Triple> {
        let n = self.graph.num_entities();
        if n < 2 {
            return Err(Error::InvalidHyperParam("entity negatives need >= 2 entities".into()));
        }
        Ok(match slot {
            Slot::Head => self.draw(n, positive.head, bin, rng, |e| Triple { head: e, ..positive }),
            Slot::Tail => self.draw(n, positive.tail, bin, rng, |e| Triple { tail: e, ..positive }),
        })
    }

    /// Fair coin for head vs tail, then [`Sampler::corrupt_entity`].
    pub fn sample_entity_negative<R: Rng + ?Sized>(
        &mut self,
        positive: Triple,
        bin: usize,
        rng: &mut R,
    ) -> Result<Triple> {
        let slot = if rng.gen_bool(0.5) { Slot::Head } else { Slot::Tail };
        self.corrupt_entity(positive, slot, bin, rng)
    }

    pub fn sample_relation_negative<R: Rng + ?Sized>(
        &mut self,
        positive: Triple,
        bin: usize,
        rng: &mut R,
    ) -> Result<Triple> {
        let n = self.graph.num_relations();
        if n < 2 {
            return Err(Error::SamplerUnavailable);
        }
        Ok(self.draw(n, positive.relation, bin, rng, |r| Triple { relation: r, ..positive }))
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Entity = 0,
    Relation = 1,
}

/// Independent ChaCha stream per (bin, negative kind), so switching relation
/// negatives off leaves the entity negatives unchanged.
fn stream_rng(seed: u64, bin: usize, kind: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((bin as u64) << 1) | kind as u64);
    rng
}

/// Draws `m` head- and `m` tail-corrupted negatives per positive and, when
/// `with_relations`, `m` relation negatives; forms `2m` pairs per positive,
/// cycling the relation negatives twice.
pub fn build_constraints(
    graph: &TemporalGraph,
    m: usize,
    with_relations: bool,
    config: SamplerConfig,
    seed: u64,
) -> Result<Constraints> {
    if m == 0 {
        return Err(Error::InvalidHyperParam("m must be >= 1".into()));
    }
    if with_relations && graph.num_relations() < 2 {
        return Err(Error::SamplerUnavailable);
    }
    let mut sampler = Sampler::new(graph, config);
    let total: usize = graph.bins().iter().map(Vec::len).sum();
    let mut pairs = Vec::with_capacity(total * 2 * m);
    let mut entity_negs = Vec::with_capacity(2 * m);
    let mut relation_negs = Vec::with_capacity(m);
    for (bin, triples) in graph.bins().iter().enumerate() {
        let mut ent_rng = stream_rng(seed, bin, Stream::Entity);
        let mut rel_rng = stream_rng(seed, bin, Stream::Relation);
        for &positive in triples {
            entity_negs.clear();
            relation_negs.clear();
            for slot in [Slot::Head, Slot::Tail] {
                for _ in 0..m {
                    entity_negs.push(sampler.corrupt_entity(positive, slot, bin, &mut ent_rng)?);
                }
            }
            if with_relations {
                for _ in 0..m {
                    relation_negs.push(sampler.sample_relation_negative(positive, bin, &mut rel_rng)?);
                }
            }
            for (j, &entity_negative) in entity_negs.iter().enumerate() {
                pairs.push(ConstraintPair {
                    bin,
                    positive,
                    entity_negative,
                    relation_negative: relation_negs.get(j % m).copied(),
                });
            }
        }
    }
    Ok(Constraints { pairs, relaxations: sampler.relaxations() })
}
