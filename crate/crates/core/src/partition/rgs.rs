use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

/// Set partition in canonical form: blocks sorted internally and ordered by
/// their smallest element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition<T> {
    blocks: Vec<Vec<T>>,
}

impl<T: Ord + Clone> Partition<T> {
    pub fn from_blocks(mut blocks: Vec<Vec<T>>) -> Self {
        blocks.retain(|b| !b.is_empty());
        for b in &mut blocks {
            b.sort();
        }
        blocks.sort();
        Partition { blocks }
    }

    /// Decodes a restricted growth string over `ground`.
    pub fn from_rgs(ground: &[T], rgs: &[usize]) -> Self {
        let n_blocks = rgs.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); n_blocks];
        for (e, &b) in ground.iter().zip(rgs) {
            blocks[b].push(e.clone());
        }
        Self::from_blocks(blocks)
    }

    /// Restricted growth string of this partition with respect to the
    /// element order of `ground`; `None` if the partition does not cover
    /// exactly `ground`.
    pub fn to_rgs(&self, ground: &[T]) -> Option<Vec<usize>> {
        if !self.covers(ground) {
            return None;
        }
        let mut label: Vec<Option<usize>> = vec![None; self.blocks.len()];
        let mut next = 0;
        let mut rgs = Vec::with_capacity(ground.len());
        for e in ground {
            let b = self.blocks.iter().position(|blk| blk.binary_search(e).is_ok())?;
            let l = *label[b].get_or_insert_with(|| {
                next += 1;
                next - 1
            });
            rgs.push(l);
        }
        Some(rgs)
    }

    pub fn blocks(&self) -> &[Vec<T>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Vec<T>> {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Blocks are disjoint and their union is exactly `ground`.
    pub fn covers(&self, ground: &[T]) -> bool {
        let mut all: Vec<&T> = self.blocks.iter().flatten().collect();
        let total = all.len();
        all.sort();
        all.dedup();
        let mut g: Vec<&T> = ground.iter().collect();
        g.sort();
        g.dedup();
        all.len() == total && all == g
    }
}

/// Lexicographic walk over all partitions of a ground set in restricted
/// growth string order: `0..0` first, `0 1 .. n-1` last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgsCursor<T> {
    ground: Vec<T>,
    rgs: Vec<usize>,
    started: bool,
    done: bool,
}

impl<T: Ord + Clone> RgsCursor<T> {
    pub fn new(ground: Vec<T>) -> Self {
        let n = ground.len();
        RgsCursor { ground, rgs: vec![0; n], started: false, done: n == 0 }
    }

    pub fn ground(&self) -> &[T] {
        &self.ground
    }

    /// Current string (all zeros before the first call).
    pub fn rgs(&self) -> &[usize] {
        &self.rgs
    }

    pub fn reset(&mut self) {
        self.rgs.iter_mut().for_each(|a| *a = 0);
        self.started = false;
        self.done = self.ground.is_empty();
    }

    /// Advances to the successor string; `None` once the all-singletons
    /// partition has been returned.
    pub fn next_partition(&mut self) -> Option<Partition<T>> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(Partition::from_rgs(&self.ground, &self.rgs));
        }
        // Rightmost position that can still grow: a[i] <= max(a[..i]).
        let mut prefix_max = vec![0; self.rgs.len()];
        for i in 1..self.rgs.len() {
            prefix_max[i] = prefix_max[i - 1].max(self.rgs[i - 1]);
        }
        let pos = (1..self.rgs.len()).rev().find(|&i| self.rgs[i] <= prefix_max[i]);
        match pos {
            None => {
                self.done = true;
                None
            }
            Some(i) => {
                self.rgs[i] += 1;
                self.rgs[i + 1..].iter_mut().for_each(|a| *a = 0);
                Some(Partition::from_rgs(&self.ground, &self.rgs))
            }
        }
    }
}

impl<T: Ord + Clone> Iterator for RgsCursor<T> {
    type Item = Partition<T>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_partition()
    }
}

/// Uniformly random partition of `ground`, drawn as a restricted growth
/// string weighted by the number of completions of each prefix.
pub fn random_partition<T: Ord + Clone, R: Rng + ?Sized>(ground: &[T], rng: &mut R) -> Partition<T> {
    let n = ground.len();
    if n == 0 {
        return Partition::from_blocks(Vec::new());
    }
    // completions[r][m]: strings of r more symbols given m blocks so far.
    let mut completions = vec![vec![1.0f64; n + 2]; n];
    for r in 1..n {
        for m in 1..=n {
            completions[r][m] = m as f64 * completions[r - 1][m] + completions[r - 1][m + 1];
        }
    }
    let mut rgs = vec![0usize; n];
    let mut m = 1;
    for i in 1..n {
        let r = n - 1 - i;
        let stay = completions[r][m];
        let open = completions[r][m + 1];
        let u = rng.random::<f64>() * (m as f64 * stay + open);
        let b = (u / stay) as usize;
        if b < m {
            rgs[i] = b;
        } else {
            rgs[i] = m;
            m += 1;
        }
    }
    Partition::from_rgs(ground, &rgs)
}
