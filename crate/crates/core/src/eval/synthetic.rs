//! Synthetic temporal graphs with a planted, time-dependent pattern.
//!
//! Entities are split into communities. In bin `t`, relation `r` sends a head
//! from community `c` to community `(c + offset(r) + step·t) mod K`, landing
//! on the member with the same position inside the community. The gold tail
//! of an `(h, r)` pair therefore moves as the bins advance.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{write_facts, Fact, Vocab};
use crate::error::{Error, Result};

/// First year of bin 0; bin `t` is the single year `BASE_YEAR + t`.
pub const BASE_YEAR: i32 = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub relations: usize,
    pub bins: usize,
    pub communities: usize,
    /// Community shift per bin; 0 gives a static graph.
    pub rotation_step: usize,
    /// Relations sharing `r mod groups` share a community offset and differ
    /// only in the landing member; `None` gives every relation its own offset.
    pub confusable_groups: Option<usize>,
    /// Probability that an `(h, r)` pair is emitted in a bin beyond the two
    /// consecutive bins every pair gets.
    pub density: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(entities: usize, relations: usize, bins: usize, seed: u64) -> Self {
        SyntheticSpec {
            entities,
            relations,
            bins,
            communities: (entities / 5).clamp(2, 10),
            rotation_step: 1,
            confusable_groups: None,
            density: 0.25,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<Fact>,
    pub valid: Vec<Fact>,
    pub test: Vec<Fact>,
}

impl SyntheticData {
    pub fn all_facts(&self) -> impl Iterator<Item = &Fact> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// Writes `train.txt`, `valid.txt` and `test.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, facts) in [("train.txt", &self.train), ("valid.txt", &self.valid), ("test.txt", &self.test)] {
            let mut file = std::io::BufWriter::new(fs::File::create(dir.join(name))?);
            write_split(&mut file, facts, &self.entities, &self.relations)?;
            file.flush()?;
        }
        Ok(())
    }
}

pub fn write_split<W: Write>(out: W, facts: &[Fact], entities: &Vocab, relations: &Vocab) -> Result<()> {
    write_facts(out, facts, entities, relations)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.entities < 10 || spec.bins < 2 {
        return Err(Error::InvalidHyperParam("synthetic graphs need >= 10 entities and >= 2 bins".into()));
    }
    if spec.relations == 0 || spec.communities < 2 || spec.communities > spec.entities {
        return Err(Error::InvalidHyperParam("need >= 1 relation and 2..=entities communities".into()));
    }
    if !(0.0..=1.0).contains(&spec.density) {
        return Err(Error::InvalidHyperParam("density must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.communities;

    let mut order: Vec<usize> = (0..spec.entities).collect();
    order.shuffle(&mut rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut community = vec![0; spec.entities];
    let mut position = vec![0; spec.entities];
    for (i, &e) in order.iter().enumerate() {
        let c = i % k;
        community[e] = c;
        position[e] = members[c].len();
        members[c].push(e);
    }

    let groups = spec.confusable_groups.unwrap_or(spec.relations).max(1);
    let tail_of = |h: usize, r: usize, t: usize| {
        let target = (community[h] + 1 + r % groups + spec.rotation_step * t) % k;
        let shift = r / groups;
        let m = &members[target];
        m[(position[h] + shift) % m.len()]
    };

    let mut facts = Vec::new();
    let mut seen = HashSet::new();
    for h in 0..spec.entities {
        for r in 0..spec.relations {
            let first = rng.gen_range(0..spec.bins);
            for t in 0..spec.bins {
                let forced = t == first || t == (first + 1) % spec.bins;
                if forced || rng.gen_bool(spec.density) {
                    let tail = tail_of(h, r, t);
                    let year = BASE_YEAR + t as i32;
                    if seen.insert((h, r, tail, t)) {
                        facts.push(Fact { head: h, relation: r, tail, start: Some(year), end: Some(year) });
                    }
                }
            }
        }
    }
    facts.shuffle(&mut rng);
    let n_test = facts.len() / 10;
    let n_valid = facts.len() / 10;
    let test = facts.split_off(facts.len() - n_test);
    let valid = facts.split_off(facts.len() - n_valid);
    let train = facts;

    Ok(SyntheticData {
        entities: Vocab::from_labels((0..spec.entities).map(|i| format!("e{i}"))),
        relations: Vocab::from_labels((0..spec.relations).map(|i| format!("r{i}"))),
        train,
        valid,
        test,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn every_pair_moves_over_time() {
        let data = generate_synthetic(&SyntheticSpec::new(50, 5, 8, 1)).unwrap();
        let mut tails: HashMap<(usize, usize), HashSet<(usize, i32)>> = HashMap::new();
        for f in data.all_facts() {
            tails.entry((f.head, f.relation)).or_default().insert((f.tail, f.start.unwrap()));
        }
        assert_eq!(tails.len(), 50 * 5);
        for ((h, r), seen) in &tails {
            let distinct: HashSet<usize> = seen.iter().map(|(t, _)| *t).collect();
            let years: HashSet<i32> = seen.iter().map(|(_, y)| *y).collect();
            assert!(distinct.len() >= 2 && years.len() >= 2, "pair ({h},{r}) is static: {seen:?}");
        }
    }

    #[test]
    fn deterministic_and_split() {
        let spec = SyntheticSpec::new(20, 3, 4, 7);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!((a.train.clone(), a.valid.clone(), a.test.clone()), (b.train, b.valid, b.test));
        let total = a.all_facts().count();
        assert_eq!(a.test.len(), total / 10);
        assert_eq!(a.valid.len(), total / 10);
    }

    #[test]
    fn static_when_step_zero() {
        let spec = SyntheticSpec { rotation_step: 0, ..SyntheticSpec::new(20, 3, 2, 7) };
        let data = generate_synthetic(&spec).unwrap();
        let mut tail: HashMap<(usize, usize), usize> = HashMap::new();
        for f in data.all_facts() {
            assert_eq!(*tail.entry((f.head, f.relation)).or_insert(f.tail), f.tail);
        }
    }

    #[test]
    fn rejects_tiny_specs() {
        assert!(generate_synthetic(&SyntheticSpec::new(9, 2, 4, 0)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(10, 2, 1, 0)).is_err());
    }
}
