use alloc::vec;
use alloc::vec::Vec;

use super::{Node, SpnGraph};
use crate::{Error, Result};

/// Growable bitset. Trailing zero words are trimmed so that equality is
/// structural.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(i: usize) -> Self {
        let mut s = Self::new();
        s.insert(i);
        s
    }

    pub fn insert(&mut self, i: usize) {
        let w = i / 64;
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words.get(i / 64).is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &BitSet) {
        if self.words.len() < other.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersects(&self, other: &BitSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w & (1 << b) != 0).map(move |b| wi * 64 + b)
        })
    }
}

impl FromIterator<usize> for BitSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = BitSet::new();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

/// Set of concrete slice variables plus abstract atoms standing for the
/// (unknown) scopes fed through interface inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scope {
    pub vars: BitSet,
    pub atoms: BitSet,
}

impl Scope {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn var(v: usize) -> Self {
        Scope { vars: BitSet::singleton(v), atoms: BitSet::new() }
    }

    pub fn atom(a: usize) -> Self {
        Scope { vars: BitSet::new(), atoms: BitSet::singleton(a) }
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty() && self.atoms.is_empty()
    }

    pub fn union_with(&mut self, other: &Scope) {
        self.vars.union_with(&other.vars);
        self.atoms.union_with(&other.atoms);
    }

    pub fn union(&self, other: &Scope) -> Scope {
        let mut s = self.clone();
        s.union_with(other);
        s
    }

    pub fn intersects(&self, other: &Scope) -> bool {
        self.vars.intersects(&other.vars) || self.atoms.intersects(&other.atoms)
    }

    pub fn is_disjoint(&self, other: &Scope) -> bool {
        !self.intersects(other)
    }
}

/// Scope of every node: indicators contribute their variable, interface
/// inputs the scope assigned to their slot, internal nodes the union of their
/// children.
pub fn compute_scopes(g: &SpnGraph, input_scopes: &[Scope]) -> Result<Vec<Scope>> {
    let mut scopes = vec![Scope::empty(); g.len()];
    for &id in g.order() {
        let s = match g.node(id) {
            Node::Indicator { var, .. } => Scope::var(*var),
            Node::InterfaceInput { slot } => {
                input_scopes.get(*slot).cloned().ok_or(Error::MissingInputScope(*slot))?
            }
            node => {
                let mut s = Scope::empty();
                for c in node.children() {
                    s.union_with(&scopes[c.0]);
                }
                s
            }
        };
        scopes[id.0] = s;
    }
    Ok(scopes)
}
