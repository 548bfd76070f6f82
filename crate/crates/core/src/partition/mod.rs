//! Set partitions of product-node scopes.

mod independence;
mod rgs;

pub use independence::{chi2_sf, g_statistic, independent_components, IndependenceOracle};
pub use rgs::{random_partition, Partition, RgsCursor};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;

use crate::Result;

/// Element of an effective product scope: a slice variable, or the single
/// pseudo-element standing for everything reachable through interface
/// inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScopeElem {
    Var(usize),
    Interface,
}

/// Lexicographic cursors keyed by (product node key, scope), kept across
/// search iterations.
#[derive(Debug, Clone, Default)]
pub struct CursorStore {
    cursors: BTreeMap<(usize, Vec<ScopeElem>), RgsCursor<ScopeElem>>,
}

impl CursorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.cursors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cursors.is_empty()
    }

    /// Next partition in RGS order for this key, restarting from the
    /// one-block partition after the last one.
    pub fn next(&mut self, key: usize, scope: &[ScopeElem]) -> Partition<ScopeElem> {
        let cursor = self
            .cursors
            .entry((key, scope.to_vec()))
            .or_insert_with(|| RgsCursor::new(scope.to_vec()));
        match cursor.next_partition() {
            Some(p) => p,
            None => {
                cursor.reset();
                cursor.next_partition().expect("non-empty ground set")
            }
        }
    }
}

/// Partition proposal for a product node's scope.
///
/// Scopes larger than `threshold` are first split into mutually independent
/// groups of variables; with more than one group each group is partitioned
/// recursively and the blocks are pooled, otherwise a uniformly random
/// partition is drawn. Smaller scopes step through the lexicographic RGS
/// order. The interface pseudo-element has no data column; it joins the
/// largest independent group.
pub fn get_partition<R: Rng + ?Sized>(
    scope: &[ScopeElem],
    key: usize,
    cursors: &mut CursorStore,
    oracle: &IndependenceOracle,
    threshold: usize,
    rng: &mut R,
) -> Result<Partition<ScopeElem>> {
    let mut scope = scope.to_vec();
    scope.sort();
    scope.dedup();
    if scope.len() <= threshold {
        return Ok(cursors.next(key, &scope));
    }
    let vars: Vec<usize> = scope
        .iter()
        .filter_map(|e| match e {
            ScopeElem::Var(v) => Some(*v),
            ScopeElem::Interface => None,
        })
        .collect();
    let groups = if vars.len() >= 2 {
        independent_components(&vars, oracle)?
    } else {
        Partition::from_blocks(alloc::vec![vars.clone()])
    };
    if groups.len() <= 1 {
        return Ok(random_partition(&scope, rng));
    }
    let mut blocks: Vec<Vec<ScopeElem>> = groups
        .blocks()
        .iter()
        .map(|b| b.iter().map(|&v| ScopeElem::Var(v)).collect())
        .collect();
    if scope.contains(&ScopeElem::Interface) {
        let largest = (0..blocks.len()).max_by_key(|&i| (blocks[i].len(), usize::MAX - i)).unwrap();
        blocks[largest].push(ScopeElem::Interface);
    }
    let mut out = Vec::new();
    for block in blocks {
        let p = get_partition(&block, key, cursors, oracle, threshold, rng)?;
        out.extend(p.into_blocks());
    }
    Ok(Partition::from_blocks(out))
}
