mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use common::{rng, synthetic};
use tkge::dataset::{compute_binning, parse_facts, write_facts, Fact, TemporalGraph, Vocab};
use tkge::eval::{evaluate, rank_query, EvalOptions, SyntheticSpec, Task};
use tkge::model::{init, Query};
use tkge::oracle::{entity_negative_set, relation_negative_set};
use tkge::sampler::{build_constraints, NegFilter, Sampler, SamplerConfig, Slot};
use tkge::{HyperParams, Norm};

fn toy_graph(seed: u64) -> TemporalGraph {
    let mut rng = rng(seed);
    let facts: Vec<Fact> = (0..60)
        .map(|_| {
            let start = 2000 + rng.gen_range(0..4);
            Fact {
                head: rng.gen_range(0..7),
                relation: rng.gen_range(0..3),
                tail: rng.gen_range(0..7),
                start: Some(start),
                end: Some(start + rng.gen_range(0..2)),
            }
        })
        .collect();
    let binning = compute_binning(&facts, 10).unwrap();
    TemporalGraph::materialize(&facts, binning, 7, 3).unwrap()
}

#[test]
fn constraint_pairs_satisfy_invariants() {
    for seed in 0..5 {
        let graph = toy_graph(seed);
        for filter in [NegFilter::Bin, NegFilter::Global] {
            let config = SamplerConfig { filter, ..Default::default() };
            let constraints = build_constraints(&graph, 3, true, config, seed).unwrap();
            assert_eq!(constraints.len(), 6 * graph.total_placements());
            let mut heads = 0;
            for p in &constraints.pairs {
                assert!(graph.contains(p.bin, &p.positive));
                let allowed = entity_negative_set(&graph, p.positive, p.bin, filter);
                let ent = p.entity_negative;
                let slots_changed = usize::from(ent.head != p.positive.head)
                    + usize::from(ent.tail != p.positive.tail);
                assert_eq!(slots_changed, 1);
                assert_eq!(ent.relation, p.positive.relation);
                if ent.head != p.positive.head {
                    heads += 1;
                }
                if constraints.relaxations == 0 {
                    assert!(allowed.contains(&ent), "{ent:?} is observed");
                }
                let rel = p.relation_negative.expect("relation negatives requested");
                assert_ne!(rel.relation, p.positive.relation);
                assert_eq!((rel.head, rel.tail), (p.positive.head, p.positive.tail));
                if constraints.relaxations == 0 {
                    assert!(relation_negative_set(&graph, p.positive, p.bin, filter).contains(&rel));
                }
            }
            // exactly m head and m tail corruptions per positive
            assert_eq!(heads * 2, constraints.len());
        }
    }
}

#[test]
fn sampled_negatives_cover_the_enumerated_set() {
    let graph = toy_graph(3);
    let positive = graph.bin(0)[0];
    let allowed = entity_negative_set(&graph, positive, 0, NegFilter::Bin);
    let mut sampler = Sampler::new(&graph, SamplerConfig::default());
    let mut r = rng(4);
    let mut seen = BTreeSet::new();
    for _ in 0..5000 {
        let neg = sampler.sample_entity_negative(positive, 0, &mut r).unwrap();
        assert!(allowed.contains(&neg));
        seen.insert(neg);
    }
    assert_eq!(seen, allowed);
    assert_eq!(sampler.relaxations(), 0);
}

#[test]
fn head_tail_corruption_is_balanced() {
    let graph = toy_graph(5);
    let positive = graph.bin(0)[0];
    let mut sampler = Sampler::new(&graph, SamplerConfig::default());
    let mut r = rng(6);
    let n = 20_000;
    let mut heads = 0usize;
    for _ in 0..n {
        let neg = sampler.sample_entity_negative(positive, 0, &mut r).unwrap();
        if neg.head != positive.head {
            heads += 1;
        }
    }
    let sigma = (n as f64 * 0.25).sqrt();
    assert!((heads as f64 - n as f64 / 2.0).abs() <= 3.0 * sigma, "{heads} heads of {n}");
}

#[test]
fn corrupt_entity_respects_slot() {
    let graph = toy_graph(7);
    let positive = graph.bin(1)[0];
    let mut sampler = Sampler::new(&graph, SamplerConfig::default());
    let mut r = rng(8);
    for _ in 0..200 {
        let h = sampler.corrupt_entity(positive, Slot::Head, 1, &mut r).unwrap();
        assert_eq!((h.relation, h.tail), (positive.relation, positive.tail));
        let t = sampler.corrupt_entity(positive, Slot::Tail, 1, &mut r).unwrap();
        assert_eq!((t.head, t.relation), (positive.head, positive.relation));
    }
}

#[test]
fn filtered_rank_never_exceeds_raw_rank() {
    let graph = toy_graph(9);
    let hp = HyperParams { d: 8, ..Default::default() };
    let state = init(7, 3, graph.num_bins(), &hp, 1).unwrap();
    let facts: Vec<Fact> = graph
        .bins()
        .iter()
        .enumerate()
        .flat_map(|(t, triples)| {
            let year = graph.binning().boundaries()[t];
            triples.iter().map(move |tr| Fact {
                head: tr.head,
                relation: tr.relation,
                tail: tr.tail,
                start: Some(year),
                end: Some(year),
            })
        })
        .collect();
    let raw = EvalOptions::default();
    let filtered = EvalOptions { filtered: true, ..raw };
    for fact in &facts {
        for task in [Task::Head, Task::Tail, Task::Relation, Task::Time] {
            let r = rank_query(&state, &graph, fact, task, &raw).unwrap();
            let f = rank_query(&state, &graph, fact, task, &filtered).unwrap();
            assert!(f <= r, "{task:?} {fact:?}: filtered {f} > raw {r}");
        }
    }
}

#[test]
fn positive_scaling_preserves_candidate_order() {
    let mut r = rng(10);
    let hp = HyperParams { d: 6, ..Default::default() };
    for seed in 0..50 {
        let state = init(9, 4, 3, &hp, seed).unwrap();
        let factor = r.gen_range(0.1..10.0);
        let mut scaled = state.clone();
        for table in [&mut scaled.entities, &mut scaled.relations, &mut scaled.hyperplanes] {
            table.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
        let query = Query::Tail { head: r.gen_range(0..9), relation: r.gen_range(0..4), bin: r.gen_range(0..3) };
        let ids: Vec<usize> = (0..9).collect();
        let order = |s: &tkge::ModelState| {
            let losses = s.score_candidates(query, &ids, Norm::L2).unwrap();
            let mut idx = ids.clone();
            idx.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));
            idx
        };
        assert_eq!(order(&state), order(&scaled));
    }
}

#[test]
fn untrained_model_ranks_tails_near_uniformly() {
    let syn = synthetic(&SyntheticSpec::new(50, 5, 8, 21));
    let expected = (50.0 + 1.0) / 2.0;
    let mut ranks = Vec::new();
    for seed in 0..5 {
        let hp = HyperParams { d: 32, ..Default::default() };
        let state = init(50, 5, 8, &hp, seed).unwrap();
        let report = evaluate(&state, &syn.graph, &syn.data.test, &[Task::Tail], &EvalOptions::default()).unwrap();
        ranks.push(report[0].mean_rank);
    }
    let mean = common::mean(&ranks);
    assert!((mean - expected).abs() <= 0.2 * expected, "mean rank {mean}, expected about {expected}");
}

#[test]
fn evaluation_is_thread_count_independent() {
    let syn = synthetic(&SyntheticSpec::new(20, 3, 4, 2));
    let hp = HyperParams { d: 8, ..Default::default() };
    let state = init(20, 3, 4, &hp, 3).unwrap();
    let tasks = [Task::Head, Task::Tail, Task::Relation, Task::Time];
    let one = evaluate(&state, &syn.graph, &syn.data.test, &tasks, &EvalOptions::default()).unwrap();
    let many = evaluate(&state, &syn.graph, &syn.data.test, &tasks, &EvalOptions { threads: 3, ..Default::default() })
        .unwrap();
    assert_eq!(one, many);
}

fn label() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_:.]{1,8}"
}

fn year() -> impl Strategy<Value = Option<i32>> {
    prop_oneof![1 => Just(None), 4 => (0i32..=9999).prop_map(Some)]
}

prop_compose! {
    fn fact_line()(h in label(), r in label(), t in label(), a in year(), b in year()) -> (String, String, String, Option<i32>, Option<i32>) {
        let (a, b) = match (a, b) {
            (Some(x), Some(y)) if x > y => (Some(y), Some(x)),
            other => other,
        };
        (h, r, t, a, b)
    }
}

proptest! {
    #[test]
    fn parse_write_parse_round_trip(lines in prop::collection::vec(fact_line(), 1..30)) {
        let fmt = |y: Option<i32>| y.map_or("-".to_string(), |y| y.to_string());
        let text: String = lines
            .iter()
            .map(|(h, r, t, a, b)| format!("{h}\t{r}\t{t}\t{}\t{}\n", fmt(*a), fmt(*b)))
            .collect();
        let first = parse_facts(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_facts(&mut out, &first.facts, &first.entities, &first.relations).unwrap();
        let second = parse_facts(out.as_slice()).unwrap();
        prop_assert_eq!(&first.facts, &second.facts);
        prop_assert_eq!(first.entities.labels(), second.entities.labels());
        prop_assert_eq!(first.relations.labels(), second.relations.labels());
    }

    #[test]
    fn placements_cover_every_fact(
        spans in prop::collection::vec((0i32..12, 0i32..4), 1..40),
        min_triples in 1usize..6,
    ) {
        // distinct heads keep every fact a distinct triple
        let n = spans.len();
        let facts: Vec<Fact> = spans
            .iter()
            .enumerate()
            .map(|(i, &(s, len))| Fact { head: i, relation: 0, tail: 0, start: Some(1990 + s), end: Some(1990 + s + len) })
            .collect();
        let binning = compute_binning(&facts, min_triples).unwrap();
        let graph = TemporalGraph::materialize(&facts, binning, n, 1).unwrap();
        let one_bin_each = facts.iter().all(|f| graph.binning().span(f.start, f.end).count() == 1);
        prop_assert!(graph.total_placements() >= facts.len());
        prop_assert_eq!(graph.total_placements() == facts.len(), one_bin_each);
        prop_assert_eq!(graph.global_len(), facts.len());
        for f in &facts {
            for t in graph.binning().span(f.start, f.end) {
                prop_assert!(graph.contains(t, &f.triple()));
            }
        }
    }

    #[test]
    fn binning_is_deterministic_and_thresholded(
        counts in prop::collection::btree_map(1900i32..2020, 1usize..50, 1..30),
        min_triples in 1usize..80,
    ) {
        let a = tkge::TimeBinning::from_counts(&counts, min_triples).unwrap();
        let b = tkge::TimeBinning::from_counts(&counts, min_triples).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.boundaries().windows(2).all(|w| w[0] < w[1]));
        let per_bin = a.mention_counts();
        let last = per_bin.len() - 1;
        for (i, &c) in per_bin.iter().enumerate() {
            if i != last && c < min_triples {
                // only a run cut short by a high-frequency year may be undersized
                let next_year = a.boundaries()[i + 1];
                prop_assert!(counts[&next_year] >= min_triples, "bin {} has {} mentions", i, c);
            }
        }
        prop_assert_eq!(per_bin.iter().sum::<usize>(), counts.values().sum::<usize>());
    }
}

#[test]
fn vocab_ids_follow_first_appearance() {
    let v = Vocab::from_labels(["b", "a", "b", "c"]);
    assert_eq!(v.labels(), ["b", "a", "c"]);
}
