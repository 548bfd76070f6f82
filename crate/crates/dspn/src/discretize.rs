//! Equal-frequency discretization of real-valued sequences.

use std::fs;
use std::path::Path;

use dspn_core::data::SequenceDataset;
use dspn_core::spn::Evidence;
use serde::{Deserialize, Serialize};

use crate::IoError;

/// Real-valued sequences: `raw[sequence][slice][var]`; NaN marks a missing
/// value.
pub type RawSequences = Vec<Vec<Vec<f64>>>;

/// Per-variable cut points. A value falls in bin `i` when exactly `i`
/// thresholds lie strictly below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub thresholds: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub discretizer: Discretizer,
    pub warnings: Vec<String>,
}

impl Discretizer {
    /// Learns `bins[v]` equal-frequency bins for every variable `v`.
    /// Constant columns fall back to a single bin with a warning.
    pub fn fit(raw: &RawSequences, bins: &[usize]) -> Result<Fitted, IoError> {
        if bins.iter().any(|&b| b < 2) {
            return Err(IoError::Format("every variable needs at least 2 bins".into()));
        }
        let mut thresholds = Vec::with_capacity(bins.len());
        let mut warnings = Vec::new();
        for (v, &b) in bins.iter().enumerate() {
            let mut col: Vec<f64> = Vec::new();
            for slice in raw.iter().flatten() {
                let x = *slice
                    .get(v)
                    .ok_or_else(|| IoError::Format(format!("slice has {} values, expected {}", slice.len(), bins.len())))?;
                if !x.is_nan() {
                    col.push(x);
                }
            }
            col.sort_by(f64::total_cmp);
            let n = col.len();
            let mut cuts: Vec<f64> = Vec::with_capacity(b - 1);
            for i in 1..b {
                let c = i * n / b;
                if c == 0 || c >= n || col[c - 1] == col[c] {
                    continue;
                }
                let t = col[c - 1] + (col[c] - col[c - 1]) / 2.0;
                if cuts.last() != Some(&t) {
                    cuts.push(t);
                }
            }
            if cuts.is_empty() {
                warnings.push(format!("variable {v} is constant; using a single bin"));
            }
            thresholds.push(cuts);
        }
        Ok(Fitted { discretizer: Discretizer { thresholds }, warnings })
    }

    pub fn arities(&self) -> Vec<usize> {
        self.thresholds.iter().map(|t| t.len() + 1).collect()
    }

    pub fn bin(&self, var: usize, x: f64) -> Option<u32> {
        (!x.is_nan()).then(|| self.thresholds[var].partition_point(|&t| t < x) as u32)
    }

    pub fn apply(&self, raw: &RawSequences, name: &str) -> Result<SequenceDataset, IoError> {
        let n = self.thresholds.len();
        let mut sequences = Vec::with_capacity(raw.len());
        for seq in raw {
            let mut out = Vec::with_capacity(seq.len());
            for slice in seq {
                if slice.len() != n {
                    return Err(IoError::Format(format!("slice has {} values, expected {n}", slice.len())));
                }
                out.push(Evidence(slice.iter().enumerate().map(|(v, &x)| self.bin(v, x)).collect()));
            }
            sequences.push(out);
        }
        Ok(SequenceDataset::new(name, self.arities(), sequences)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IoError> {
        fs::write(path, serde_json::to_string_pretty(self).expect("thresholds serialize") + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| IoError::Parse { line: e.line(), message: e.to_string() })
    }
}
