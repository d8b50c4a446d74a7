//! Rank-based evaluation of head, tail, relation and temporal-scoping
//! prediction.
//!
//! For every test fact the missing slot is filled with each candidate, the
//! candidates are scored with normalized hyperplanes, and the gold answer's
//! rank among them is recorded. Ties use the mid-rank:
//! `1 + #strictly smaller + ⌈#equal others / 2⌉`.

mod synthetic;

use std::io::Write;

use rayon::prelude::*;

use crate::dataset::{Fact, TemporalGraph, Triple};
use crate::error::{Error, Result};
use crate::model::{ModelState, Norm, Query};

pub use synthetic::{generate_synthetic, write_split, SyntheticData, SyntheticSpec, BASE_YEAR};

/// Largest `K` reported for Hits@K.
pub const MAX_HITS_K: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Head,
    Tail,
    Relation,
    Time,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Head, Task::Tail, Task::Relation, Task::Time];

    pub fn name(self) -> &'static str {
        match self {
            Task::Head => "head",
            Task::Tail => "tail",
            Task::Relation => "relation",
            Task::Time => "time",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidHyperParam(format!("unknown task `{s}`")))
    }
}

/// Mid-rank of `losses[gold]`: one plus the number of strictly smaller
/// losses plus half the number of other equal losses, rounded half up.
pub fn mid_rank(losses: &[f64], gold: usize) -> usize {
    let g = losses[gold];
    let mut less = 0;
    let mut equal = 0usize;
    for (i, &l) in losses.iter().enumerate() {
        if l < g {
            less += 1;
        } else if l == g && i != gold {
            equal += 1;
        }
    }
    1 + less + equal.div_ceil(2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub task: Task,
    pub ranks: Vec<usize>,
    pub mean_rank: f64,
    /// `hits[k - 1]` is the fraction of ranks `≤ k`, for `k = 1..=MAX_HITS_K`.
    pub hits: Vec<f64>,
    pub filtered: bool,
}

impl RankReport {
    pub fn from_ranks(task: Task, ranks: Vec<usize>, filtered: bool) -> Self {
        let n = ranks.len().max(1) as f64;
        // integer sums keep the mean independent of aggregation order
        let total: u64 = ranks.iter().map(|&r| r as u64).sum();
        let hits = (1..=MAX_HITS_K)
            .map(|k| ranks.iter().filter(|&&r| r <= k).count() as f64 / n)
            .collect();
        RankReport { task, mean_rank: total as f64 / n, ranks, hits, filtered }
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        match k {
            0 => 0.0,
            k if k <= MAX_HITS_K => self.hits[k - 1],
            k => self.ranks.iter().filter(|&&r| r <= k).count() as f64 / self.ranks.len().max(1) as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    /// Drop candidates that form another known fact in the same bin.
    pub filtered: bool,
    pub norm: Norm,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { filtered: false, norm: Norm::L2, threads: 1 }
    }
}

/// Maps a graph bin onto the state's hyperplanes (a single-hyperplane model
/// serves every bin).
fn model_bin(state: &ModelState, bin: usize) -> usize {
    if state.num_bins() == 1 {
        0
    } else {
        bin
    }
}

fn check_shapes(state: &ModelState, graph: &TemporalGraph) -> Result<()> {
    if state.num_entities() != graph.num_entities() || state.num_relations() != graph.num_relations() {
        return Err(Error::ShapeMismatch(format!(
            "model has {} entities / {} relations, graph has {} / {}",
            state.num_entities(),
            state.num_relations(),
            graph.num_entities(),
            graph.num_relations()
        )));
    }
    if state.num_bins() != 1 && state.num_bins() != graph.num_bins() {
        return Err(Error::ShapeMismatch(format!(
            "model has {} hyperplanes, graph has {} bins",
            state.num_bins(),
            graph.num_bins()
        )));
    }
    Ok(())
}

/// Rank of the gold answer for one test fact.
///
/// Entity and relation queries use the first bin of the fact's span. Time
/// queries rank bins; each gold bin is ranked against the non-gold bins and
/// the best of those ranks is returned.
/// `graph` supplies the binning and, when filtering, the known facts.
pub fn rank_query(
    state: &ModelState,
    graph: &TemporalGraph,
    fact: &Fact,
    task: Task,
    options: &EvalOptions,
) -> Result<usize> {
    let ne = state.num_entities();
    let nr = state.num_relations();
    for (kind, id, size) in [
        ("entity", fact.head, ne),
        ("entity", fact.tail, ne),
        ("relation", fact.relation, nr),
    ] {
        if id >= size {
            return Err(Error::IdOutOfRange { kind, id, size });
        }
    }
    let span = graph.binning().span(fact.start, fact.end);
    let bin = *span.start();
    let gold = fact.triple();
    let keep = |t: usize, triple: &Triple| !options.filtered || !graph.contains(t, triple);

    let rank_among = |query: Query, ids: Vec<usize>, gold_id: usize| -> Result<usize> {
        let losses = state.score_candidates(query, &ids, options.norm)?;
        let at = ids.iter().position(|&c| c == gold_id).expect("gold candidate retained");
        Ok(mid_rank(&losses, at))
    };

    match task {
        Task::Head => {
            let ids = (0..ne)
                .filter(|&c| c == fact.head || keep(bin, &Triple { head: c, ..gold }))
                .collect();
            let q = Query::Head { relation: fact.relation, tail: fact.tail, bin: model_bin(state, bin) };
            rank_among(q, ids, fact.head)
        }
        Task::Tail => {
            let ids = (0..ne)
                .filter(|&c| c == fact.tail || keep(bin, &Triple { tail: c, ..gold }))
                .collect();
            let q = Query::Tail { head: fact.head, relation: fact.relation, bin: model_bin(state, bin) };
            rank_among(q, ids, fact.tail)
        }
        Task::Relation => {
            let ids = (0..nr)
                .filter(|&c| c == fact.relation || keep(bin, &Triple { relation: c, ..gold }))
                .collect();
            let q = Query::Relation { head: fact.head, tail: fact.tail, bin: model_bin(state, bin) };
            rank_among(q, ids, fact.relation)
        }
        Task::Time => {
            if state.num_bins() == 1 {
                return Ok(1);
            }
            // Each gold bin competes only against the non-gold bins.
            let others: Vec<usize> = (0..state.num_bins())
                .filter(|&t| !span.contains(&t) && keep(t, &gold))
                .collect();
            let golds: Vec<usize> = span.collect();
            let q = Query::Time { head: fact.head, relation: fact.relation, tail: fact.tail };
            let mut best = None;
            for g in golds {
                let mut ids = others.clone();
                ids.push(g);
                let losses = state.score_candidates(q, &ids, options.norm)?;
                let r = mid_rank(&losses, ids.len() - 1);
                best = Some(best.map_or(r, |b: usize| b.min(r)));
            }
            best.ok_or_else(|| Error::InvalidHyperParam("time query with empty gold span".into()))
        }
    }
}

/// Ranks every fact for every requested task.
pub fn evaluate(
    state: &ModelState,
    graph: &TemporalGraph,
    facts: &[Fact],
    tasks: &[Task],
    options: &EvalOptions,
) -> Result<Vec<RankReport>> {
    if facts.is_empty() {
        return Err(Error::InvalidHyperParam("evaluation needs at least one fact".into()));
    }
    check_shapes(state, graph)?;
    let run = || {
        tasks
            .iter()
            .map(|&task| {
                let ranks = facts
                    .par_iter()
                    .map(|f| rank_query(state, graph, f, task, options))
                    .collect::<Result<Vec<_>>>()?;
                Ok(RankReport::from_ranks(task, ranks, options.filtered))
            })
            .collect()
    };
    if options.threads == 0 {
        return run();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| Error::InvalidHyperParam(format!("thread pool: {e}")))?;
    pool.install(run)
}

/// `task,metric,value` rows: mean rank then Hits@1..10 per task.
pub fn write_metrics_csv<W: Write>(mut out: W, reports: &[RankReport]) -> Result<()> {
    writeln!(out, "task,metric,value")?;
    for r in reports {
        writeln!(out, "{},mean_rank,{}", r.task, r.mean_rank)?;
        for (k, h) in r.hits.iter().enumerate() {
            writeln!(out, "{},hits@{},{}", r.task, k + 1, h)?;
        }
    }
    Ok(())
}

/// `kind,id,v1..vd` rows for every entity, relation and hyperplane.
pub fn write_embeddings_csv<W: Write>(mut out: W, state: &ModelState) -> Result<()> {
    let header: Vec<String> = (1..=state.dim()).map(|i| format!("v{i}")).collect();
    writeln!(out, "kind,id,{}", header.join(","))?;
    for (kind, table) in [
        ("entity", &state.entities),
        ("relation", &state.relations),
        ("hyperplane", &state.hyperplanes),
    ] {
        for (id, row) in table.iter_rows().enumerate() {
            let values: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{kind},{id},{}", values.join(","))?;
        }
    }
    Ok(())
}
