//! Line-delimited sequence datasets (`.seqs`).
//!
//! The first line is a JSON header `{"n": .., "arities": [..], "name": ..}`;
//! every further non-blank line is one sequence `[[v, ..], [v, ..], ..]`,
//! one inner array per slice, with `-1` marking a missing value.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use dspn_core::data::SequenceDataset;
use dspn_core::spn::Evidence;
use serde::{Deserialize, Serialize};

use crate::IoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub n: usize,
    pub arities: Vec<usize>,
    #[serde(default)]
    pub name: String,
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

pub fn read_dataset(reader: impl Read) -> Result<SequenceDataset, IoError> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let header: Header = loop {
        let Some((i, line)) = lines.next() else {
            return Err(parse_err(1, "missing header line"));
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        break serde_json::from_str(&line).map_err(|e| parse_err(i + 1, format!("bad header: {e}")))?;
    };
    if header.n != header.arities.len() {
        return Err(parse_err(1, format!("header says n = {} but lists {} arities", header.n, header.arities.len())));
    }
    let mut sequences = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Vec<Vec<i64>> =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, format!("bad sequence: {e}")))?;
        if raw.is_empty() {
            return Err(parse_err(lineno, "empty sequence (at least one slice is required)"));
        }
        let seq_index = sequences.len();
        let mut seq = Vec::with_capacity(raw.len());
        for (t, slice) in raw.into_iter().enumerate() {
            if slice.len() != header.n {
                return Err(parse_err(lineno, format!("slice {t} has {} values, expected {}", slice.len(), header.n)));
            }
            let mut ev = Vec::with_capacity(header.n);
            for (v, x) in slice.into_iter().enumerate() {
                ev.push(match x {
                    -1 => None,
                    x if x >= 0 && (x as u64) < header.arities[v] as u64 => Some(x as u32),
                    x => {
                        return Err(IoError::Arity { line: lineno, sequence: seq_index, slice: t, var: v, value: x })
                    }
                });
            }
            seq.push(Evidence(ev));
        }
        sequences.push(seq);
    }
    Ok(SequenceDataset { name: header.name, arities: header.arities, sequences })
}

pub fn write_dataset(ds: &SequenceDataset, writer: impl Write) -> Result<(), IoError> {
    let mut w = BufWriter::new(writer);
    let header = Header { n: ds.n_vars(), arities: ds.arities.clone(), name: ds.name.clone() };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    writeln!(w)?;
    for seq in &ds.sequences {
        let raw: Vec<Vec<i64>> =
            seq.iter().map(|ev| ev.0.iter().map(|x| x.map_or(-1, i64::from)).collect()).collect();
        serde_json::to_writer(&mut w, &raw).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<SequenceDataset, IoError> {
    read_dataset(File::open(path)?)
}

pub fn save_dataset(ds: &SequenceDataset, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_dataset(ds, File::create(path)?)
}
