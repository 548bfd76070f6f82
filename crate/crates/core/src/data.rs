//! In-memory sequence datasets.

use alloc::string::String;
use alloc::vec::Vec;

use crate::spn::Evidence;
use crate::{Error, Result};

/// One slice per time step; each slice is an assignment to the `n` slice
/// variables (missing values are marginalized).
pub type Sequence = Vec<Evidence>;

/// Variable-length sequences over a fixed slice signature.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceDataset {
    pub name: String,
    pub arities: Vec<usize>,
    pub sequences: Vec<Sequence>,
}

impl SequenceDataset {
    pub fn new(name: impl Into<String>, arities: Vec<usize>, sequences: Vec<Sequence>) -> Result<Self> {
        let ds = SequenceDataset { name: name.into(), arities, sequences };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_vars(&self) -> usize {
        self.arities.len()
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_slices(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for seq in &self.sequences {
            if seq.is_empty() {
                return Err(Error::EmptySequence);
            }
            for slice in seq {
                slice.validate(&self.arities)?;
            }
        }
        Ok(())
    }

    /// Deterministic suffix split: the last `ceil(fraction * len)` sequences
    /// (at least one, at most `len - 1`) form the second part.
    pub fn split(&self, validation_fraction: f64) -> Result<(SequenceDataset, SequenceDataset)> {
        if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
            return Err(Error::Config("validation fraction must lie in (0, 1)"));
        }
        let n = self.len();
        if n < 2 {
            return Err(Error::DegenerateData("need at least two sequences to split"));
        }
        let n_val = libm::ceil(validation_fraction * n as f64) as usize;
        let n_val = n_val.clamp(1, n - 1);
        let cut = n - n_val;
        Ok((self.subset(0..cut), self.subset(cut..n)))
    }

    pub fn subset(&self, range: core::ops::Range<usize>) -> SequenceDataset {
        self.select(range)
    }

    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> SequenceDataset {
        SequenceDataset {
            name: self.name.clone(),
            arities: self.arities.clone(),
            sequences: indices.into_iter().map(|i| self.sequences[i].clone()).collect(),
        }
    }

    /// Fold `fold` of `k` contiguous folds: `(train, test)`.
    pub fn fold(&self, k: usize, fold: usize) -> (SequenceDataset, SequenceDataset) {
        let n = self.len();
        let lo = fold * n / k;
        let hi = (fold + 1) * n / k;
        let train = self.select((0..lo).chain(hi..n));
        let test = self.select(lo..hi);
        (train, test)
    }
}
