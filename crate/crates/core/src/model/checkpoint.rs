//! Text checkpoints.
//!
//! ```text
//! RTGE-CKPT v1
//! meta d=<d> T=<T> ne=<N_e> nr=<N_r>
//! E <id> <d values>
//! R <id> <d values>
//! W <bin> <d values>
//! ```
//!
//! Values are written with 17 significant digits, which round-trips binary64
//! exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ModelState, Table};
use crate::error::{Error, Result};

const MAGIC: &str = "RTGE-CKPT";
const VERSION: &str = "v1";

pub fn write_checkpoint<W: Write>(mut out: W, state: &ModelState) -> Result<()> {
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(
        out,
        "meta d={} T={} ne={} nr={}",
        state.dim(),
        state.num_bins(),
        state.num_entities(),
        state.num_relations()
    )?;
    for (tag, table) in [("E", &state.entities), ("R", &state.relations), ("W", &state.hyperplanes)] {
        for (id, row) in table.iter_rows().enumerate() {
            write!(out, "{tag} {id}")?;
            for v in row {
                write!(out, " {v:.16e}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut out, state)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

struct Meta {
    d: usize,
    bins: usize,
    ne: usize,
    nr: usize,
}

fn parse_meta(line: &str) -> Result<Meta> {
    let bad = || Error::CheckpointMalformed { line: 2, message: format!("bad meta line `{line}`") };
    let mut fields = line.split_whitespace();
    if fields.next() != Some("meta") {
        return Err(bad());
    }
    let mut meta = Meta { d: 0, bins: 0, ne: 0, nr: 0 };
    let mut seen = 0;
    for kv in fields {
        let (k, v) = kv.split_once('=').ok_or_else(bad)?;
        let v: usize = v.parse().map_err(|_| bad())?;
        match k {
            "d" => meta.d = v,
            "T" => meta.bins = v,
            "ne" => meta.ne = v,
            "nr" => meta.nr = v,
            _ => return Err(bad()),
        }
        seen += 1;
    }
    if seen != 4 || meta.d == 0 {
        return Err(bad());
    }
    Ok(meta)
}

pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<ModelState> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::CheckpointTruncated("empty file".into())),
    };
    match header.split_once(' ') {
        Some((MAGIC, VERSION)) => {}
        Some((MAGIC, _)) => return Err(Error::CheckpointVersion(header)),
        _ => {
            return Err(Error::CheckpointMalformed {
                line: 1,
                message: format!("not a checkpoint header: `{header}`"),
            })
        }
    }
    let meta = match lines.next() {
        Some(line) => parse_meta(&line?)?,
        None => return Err(Error::CheckpointTruncated("missing meta line".into())),
    };

    let sections = [("E", meta.ne), ("R", meta.nr), ("W", meta.bins)];
    let mut tables = Vec::with_capacity(3);
    let mut line_no = 2;
    for (tag, rows) in sections {
        let mut data = Vec::with_capacity(rows * meta.d);
        for id in 0..rows {
            line_no += 1;
            let line = match lines.next() {
                Some(line) => line?,
                None => {
                    return Err(Error::CheckpointTruncated(format!(
                        "expected {tag} row {id} of {rows} at line {line_no}"
                    )))
                }
            };
            let mut fields = line.split_whitespace();
            let malformed = |message: String| Error::CheckpointMalformed { line: line_no, message };
            if fields.next() != Some(tag) {
                return Err(malformed(format!("expected a `{tag}` row")));
            }
            match fields.next().map(str::parse::<usize>) {
                Some(Ok(got)) if got == id => {}
                _ => return Err(malformed(format!("expected {tag} id {id}"))),
            }
            let before = data.len();
            for field in fields {
                let v: f64 = field
                    .parse()
                    .map_err(|_| malformed(format!("invalid number `{field}`")))?;
                data.push(v);
            }
            let got = data.len() - before;
            if got != meta.d {
                return Err(Error::CheckpointDimension(format!(
                    "line {line_no}: {tag} row {id} has {got} values, expected d={}",
                    meta.d
                )));
            }
        }
        tables.push(Table::from_vec(rows, meta.d, data)?);
    }
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            return Err(Error::CheckpointMalformed {
                line: line_no + 1,
                message: "trailing data after last row".into(),
            });
        }
    }
    let hyperplanes = tables.pop().expect("three tables");
    let relations = tables.pop().expect("three tables");
    let entities = tables.pop().expect("three tables");
    ModelState::new(entities, relations, hyperplanes)
}
