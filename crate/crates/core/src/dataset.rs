//! Temporally scoped facts, year binning and per-bin static subgraphs.
//!
//! Input files are UTF-8, one fact per line with five tab-separated fields:
//!
//! ```text
//! head<TAB>relation<TAB>tail<TAB>start<TAB>end
//! ```
//!
//! `start`/`end` are 1–4 digit years or `-` for an open bound. Lines starting
//! with `#` and blank lines are skipped. Month/day suffixes are rejected; dates
//! must already be reduced to years.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use crate::error::{Error, Result};

/// Token used for an open (unbounded) interval end.
pub const OPEN_TOKEN: &str = "-";

/// A `(head, relation, tail)` triple of dense ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub const fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple { head, relation, tail }
    }
}

/// One temporally scoped triple. `None` marks an open bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fact {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub start: Option<i32>,
    pub end: Option<i32>,
}

impl Fact {
    pub fn triple(&self) -> Triple {
        Triple::new(self.head, self.relation, self.tail)
    }
}

/// Label table with ids assigned in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab::new();
        for label in labels {
            vocab.intern(&label.into());
        }
        vocab
    }

    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Facts plus the entity and relation tables they were interned into.
#[derive(Clone, Debug, Default)]
pub struct ParsedFacts {
    pub facts: Vec<Fact>,
    pub entities: Vocab,
    pub relations: Vocab,
}

fn parse_year(field: &str, line: usize) -> Result<Option<i32>> {
    if field == OPEN_TOKEN {
        return Ok(None);
    }
    if field.is_empty() || field.len() > 4 || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Parse {
            line,
            message: format!("invalid year `{field}` (expected 1-4 digits or `-`)"),
        });
    }
    Ok(Some(field.parse().expect("validated digits")))
}

/// Parses a fact stream into fresh vocabularies.
pub fn parse_facts<R: BufRead>(reader: R) -> Result<ParsedFacts> {
    let mut parsed = ParsedFacts::default();
    parsed.facts = parse_facts_into(reader, &mut parsed.entities, &mut parsed.relations)?;
    Ok(parsed)
}

/// Parses a fact stream, interning labels into existing vocabularies so that
/// several splits share one id space.
pub fn parse_facts_into<R: BufRead>(
    reader: R,
    entities: &mut Vocab,
    relations: &mut Vocab,
) -> Result<Vec<Fact>> {
    let mut facts = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 5 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[..3].iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                message: "empty head, relation or tail label".into(),
            });
        }
        let start = parse_year(fields[3], line_no)?;
        let end = parse_year(fields[4], line_no)?;
        if let (Some(s), Some(e)) = (start, end) {
            if s > e {
                return Err(Error::InvertedInterval { line: line_no, start: s, end: e });
            }
        }
        facts.push(Fact {
            head: entities.intern(fields[0]),
            relation: relations.intern(fields[1]),
            tail: entities.intern(fields[2]),
            start,
            end,
        });
    }
    Ok(facts)
}

/// Writes facts back in the line format accepted by [`parse_facts`].
pub fn write_facts<W: Write>(
    mut out: W,
    facts: &[Fact],
    entities: &Vocab,
    relations: &Vocab,
) -> Result<()> {
    let year = |y: Option<i32>| y.map_or_else(|| OPEN_TOKEN.to_owned(), |y| y.to_string());
    fn label<'v>(vocab: &'v Vocab, id: usize, kind: &'static str) -> Result<&'v str> {
        vocab.label(id).ok_or(Error::IdOutOfRange { kind, id, size: vocab.len() })
    }
    for fact in facts {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            label(entities, fact.head, "entity")?,
            label(relations, fact.relation, "relation")?,
            label(entities, fact.tail, "entity")?,
            year(fact.start),
            year(fact.end),
        )?;
    }
    Ok(())
}

/// Year-mention counts: each bounded endpoint of a fact is one mention; a
/// single-year fact (`start == end`) mentions its year once.
pub fn year_mentions(facts: &[Fact]) -> BTreeMap<i32, usize> {
    let mut counts = BTreeMap::new();
    for fact in facts {
        if let Some(s) = fact.start {
            *counts.entry(s).or_insert(0) += 1;
        }
        if let Some(e) = fact.end {
            if fact.start != Some(e) {
                *counts.entry(e).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Year cut-points defining `T` half-open intervals `[b_i, b_{i+1})`; the last
/// interval is unbounded above and years before `b_0` fall into bin 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeBinning {
    boundaries: Vec<i32>,
    counts: Vec<usize>,
    min_triples: usize,
}

impl TimeBinning {
    /// Greedy left-to-right clubbing of year counts.
    ///
    /// Years accumulate until the running count reaches `min_triples`. A year
    /// that alone reaches the threshold closes any open accumulation and
    /// becomes its own interval. An undersized tail merges into its
    /// predecessor.
    pub fn from_counts(counts: &BTreeMap<i32, usize>, min_triples: usize) -> Result<Self> {
        if min_triples == 0 {
            return Err(Error::InvalidHyperParam("min_triples must be >= 1".into()));
        }
        let mut intervals: Vec<(i32, usize)> = Vec::new();
        let mut open: Option<(i32, usize)> = None;
        for (&year, &count) in counts.iter().filter(|(_, &c)| c > 0) {
            if count >= min_triples {
                intervals.extend(open.take());
                intervals.push((year, count));
                continue;
            }
            let acc = match open {
                Some((start, n)) => (start, n + count),
                None => (year, count),
            };
            if acc.1 >= min_triples {
                intervals.push(acc);
                open = None;
            } else {
                open = Some(acc);
            }
        }
        if let Some((start, n)) = open {
            match intervals.last_mut() {
                Some(last) => last.1 += n,
                None => intervals.push((start, n)),
            }
        }
        if intervals.is_empty() {
            return Err(Error::EmptyTimeDomain);
        }
        let (boundaries, counts) = intervals.into_iter().unzip();
        Ok(TimeBinning { boundaries, counts, min_triples })
    }

    /// Rebuilds a binning from stored cut-points (e.g. a cache file).
    pub fn from_boundaries(boundaries: Vec<i32>, min_triples: usize) -> Result<Self> {
        if boundaries.is_empty() || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidHyperParam(
                "bin boundaries must be nonempty and strictly ascending".into(),
            ));
        }
        let counts = vec![0; boundaries.len()];
        Ok(TimeBinning { boundaries, counts, min_triples })
    }

    /// A single bin covering all time.
    pub fn single() -> Self {
        TimeBinning { boundaries: vec![i32::MIN], counts: vec![0], min_triples: 1 }
    }

    pub fn num_bins(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[i32] {
        &self.boundaries
    }

    /// Year-mention count that went into each interval during construction.
    pub fn mention_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn min_triples(&self) -> usize {
        self.min_triples
    }

    pub fn bin_of_year(&self, year: i32) -> usize {
        self.boundaries.partition_point(|&b| b <= year).saturating_sub(1)
    }

    /// Bins intersecting the fact's validity span. Open bounds extend to the
    /// first/last bin.
    pub fn span(&self, start: Option<i32>, end: Option<i32>) -> RangeInclusive<usize> {
        let first = start.map_or(0, |y| self.bin_of_year(y));
        let last = end.map_or(self.num_bins() - 1, |y| self.bin_of_year(y));
        first..=last.max(first)
    }
}

/// Bins the year mentions of `facts` with the given per-interval threshold.
pub fn compute_binning(facts: &[Fact], min_triples: usize) -> Result<TimeBinning> {
    TimeBinning::from_counts(&year_mentions(facts), min_triples)
}

/// Vocabulary sizes, the binning and one static subgraph per bin.
///
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalGraph {
    num_entities: usize,
    num_relations: usize,
    binning: TimeBinning,
    bins: Vec<Vec<Triple>>,
    bin_sets: Vec<HashSet<Triple>>,
    global: HashSet<Triple>,
}

impl TemporalGraph {
    /// Places every fact into each bin its span intersects.
    pub fn materialize(
        facts: &[Fact],
        binning: TimeBinning,
        num_entities: usize,
        num_relations: usize,
    ) -> Result<Self> {
        let t = binning.num_bins();
        let mut bins = vec![Vec::new(); t];
        let mut bin_sets = vec![HashSet::new(); t];
        let mut global = HashSet::new();
        for fact in facts {
            check_id("entity", fact.head, num_entities)?;
            check_id("entity", fact.tail, num_entities)?;
            check_id("relation", fact.relation, num_relations)?;
            let triple = fact.triple();
            for bin in binning.span(fact.start, fact.end) {
                if bin_sets[bin].insert(triple) {
                    bins[bin].push(triple);
                }
            }
            global.insert(triple);
        }
        Ok(TemporalGraph { num_entities, num_relations, binning, bins, bin_sets, global })
    }

    /// Builds a graph directly from per-bin triple lists.
    pub fn from_bins(
        bins: Vec<Vec<Triple>>,
        binning: TimeBinning,
        num_entities: usize,
        num_relations: usize,
    ) -> Result<Self> {
        if bins.len() != binning.num_bins() {
            return Err(Error::ShapeMismatch(format!(
                "{} bin lists for {} bins",
                bins.len(),
                binning.num_bins()
            )));
        }
        let mut out = TemporalGraph {
            num_entities,
            num_relations,
            binning,
            bins: vec![Vec::new(); bins.len()],
            bin_sets: vec![HashSet::new(); bins.len()],
            global: HashSet::new(),
        };
        for (bin, triples) in bins.into_iter().enumerate() {
            for triple in triples {
                check_id("entity", triple.head, num_entities)?;
                check_id("entity", triple.tail, num_entities)?;
                check_id("relation", triple.relation, num_relations)?;
                if out.bin_sets[bin].insert(triple) {
                    out.bins[bin].push(triple);
                }
                out.global.insert(triple);
            }
        }
        Ok(out)
    }

    /// Collapses every bin into one (static view of the same facts).
    pub fn collapsed(&self) -> Self {
        let mut all = Vec::new();
        let mut seen = HashSet::new();
        for triple in self.bins.iter().flatten() {
            if seen.insert(*triple) {
                all.push(*triple);
            }
        }
        TemporalGraph {
            num_entities: self.num_entities,
            num_relations: self.num_relations,
            binning: TimeBinning::single(),
            bins: vec![all],
            bin_sets: vec![seen],
            global: self.global.clone(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn binning(&self) -> &TimeBinning {
        &self.binning
    }

    /// Triples of bin `t` in first-insertion order.
    pub fn bin(&self, t: usize) -> &[Triple] {
        &self.bins[t]
    }

    pub fn bins(&self) -> &[Vec<Triple>] {
        &self.bins
    }

    pub fn contains(&self, t: usize, triple: &Triple) -> bool {
        self.bin_sets.get(t).is_some_and(|s| s.contains(triple))
    }

    pub fn contains_anywhere(&self, triple: &Triple) -> bool {
        self.global.contains(triple)
    }

    pub fn global_len(&self) -> usize {
        self.global.len()
    }

    /// Σ_t |G_t|.
    pub fn total_placements(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }
}

fn check_id(kind: &'static str, id: usize, size: usize) -> Result<()> {
    if id < size {
        Ok(())
    } else {
        Err(Error::IdOutOfRange { kind, id, size })
    }
}

/// Train/valid/test splits sharing one vocabulary, with a training graph
/// binned from the training split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<Fact>,
    pub valid: Vec<Fact>,
    pub test: Vec<Fact>,
    pub graph: TemporalGraph,
}

impl Dataset {
    /// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`. Missing
    /// valid/test files are treated as empty.
    pub fn load(dir: &Path, min_triples: usize) -> Result<Self> {
        let train_path = dir.join("train.txt");
        if !train_path.is_file() {
            return Err(Error::DatasetNotFound(train_path));
        }
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let mut read = |name: &str| -> Result<Vec<Fact>> {
            let path = dir.join(name);
            if !path.is_file() {
                return Ok(Vec::new());
            }
            let reader = BufReader::new(fs::File::open(&path)?);
            parse_facts_into(reader, &mut entities, &mut relations)
        };
        let train = read("train.txt")?;
        let valid = read("valid.txt")?;
        let test = read("test.txt")?;
        let binning = compute_binning(&train, min_triples)?;
        let graph = TemporalGraph::materialize(&train, binning, entities.len(), relations.len())?;
        Ok(Dataset { entities, relations, train, valid, test, graph })
    }

    /// Graph over every split, using the training binning. Used as the
    /// known-facts set for filtered ranking.
    pub fn all_facts_graph(&self) -> Result<TemporalGraph> {
        let facts: Vec<Fact> =
            self.train.iter().chain(&self.valid).chain(&self.test).copied().collect();
        TemporalGraph::materialize(
            &facts,
            self.graph.binning().clone(),
            self.entities.len(),
            self.relations.len(),
        )
    }
}

const CACHE_HEADER: &str = "TKGE-GRAPH v1";

/// Writes a materialized graph with its vocabularies to a text cache.
pub fn write_graph_cache<W: Write>(
    mut out: W,
    graph: &TemporalGraph,
    entities: &Vocab,
    relations: &Vocab,
) -> Result<()> {
    writeln!(out, "{CACHE_HEADER}")?;
    writeln!(
        out,
        "meta ne={} nr={} T={} min_triples={}",
        graph.num_entities(),
        graph.num_relations(),
        graph.num_bins(),
        graph.binning().min_triples()
    )?;
    let bounds: Vec<String> = graph.binning().boundaries().iter().map(i32::to_string).collect();
    writeln!(out, "B {}", bounds.join(" "))?;
    let counts: Vec<String> = graph.binning().mention_counts().iter().map(usize::to_string).collect();
    writeln!(out, "C {}", counts.join(" "))?;
    for (id, label) in entities.labels().iter().enumerate() {
        writeln!(out, "E {id} {label}")?;
    }
    for (id, label) in relations.labels().iter().enumerate() {
        writeln!(out, "R {id} {label}")?;
    }
    for (bin, triples) in graph.bins().iter().enumerate() {
        for t in triples {
            writeln!(out, "G {bin} {} {} {}", t.head, t.relation, t.tail)?;
        }
    }
    Ok(())
}

/// Reads a cache written by [`write_graph_cache`].
pub fn read_graph_cache<R: BufRead>(reader: R) -> Result<(TemporalGraph, Vocab, Vocab)> {
    let malformed = |line: usize, message: &str| Error::Parse { line, message: message.into() };
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h == CACHE_HEADER => {}
        _ => return Err(malformed(1, "missing graph cache header")),
    }
    let (mut ne, mut nr, mut t, mut min_triples) = (None, None, None, 1);
    let mut boundaries = Vec::new();
    let mut counts: Option<Vec<usize>> = None;
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let mut placed: Vec<(usize, Triple)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let (tag, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        let bad = || malformed(line_no, "malformed cache line");
        match tag {
            "meta" => {
                for kv in rest.split_whitespace() {
                    let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                    let v: usize = v.parse().map_err(|_| bad())?;
                    match k {
                        "ne" => ne = Some(v),
                        "nr" => nr = Some(v),
                        "T" => t = Some(v),
                        "min_triples" => min_triples = v,
                        _ => return Err(bad()),
                    }
                }
            }
            "B" => {
                boundaries = rest
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
            }
            "C" => {
                counts = Some(
                    rest.split_whitespace()
                        .map(|s| s.parse().map_err(|_| bad()))
                        .collect::<Result<_>>()?,
                );
            }
            "E" | "R" => {
                let (id, label) = rest.split_once(' ').ok_or_else(bad)?;
                let id: usize = id.parse().map_err(|_| bad())?;
                let vocab = if tag == "E" { &mut entities } else { &mut relations };
                if vocab.intern(label) != id {
                    return Err(malformed(line_no, "vocabulary ids out of order"));
                }
            }
            "G" => {
                let nums: Vec<usize> = rest
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                if nums.len() != 4 {
                    return Err(bad());
                }
                placed.push((nums[0], Triple::new(nums[1], nums[2], nums[3])));
            }
            "" => {}
            _ => return Err(bad()),
        }
    }
    let missing = || malformed(2, "missing meta line");
    let (ne, nr, t) = (ne.ok_or_else(missing)?, nr.ok_or_else(missing)?, t.ok_or_else(missing)?);
    let mut binning = TimeBinning::from_boundaries(boundaries, min_triples)?;
    if let Some(counts) = counts {
        if counts.len() != binning.num_bins() {
            return Err(Error::ShapeMismatch("graph cache count line disagrees with boundaries".into()));
        }
        binning.counts = counts;
    }
    if binning.num_bins() != t || entities.len() != ne || relations.len() != nr {
        return Err(Error::ShapeMismatch("graph cache header disagrees with body".into()));
    }
    let mut bins = vec![Vec::new(); t];
    for (bin, triple) in placed {
        bins.get_mut(bin).ok_or(Error::BinOutOfRange { bin, bins: t })?.push(triple);
    }
    let graph = TemporalGraph::from_bins(bins, binning, ne, nr)?;
    Ok((graph, entities, relations))
}
