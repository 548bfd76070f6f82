use alloc::vec;
use alloc::vec::Vec;

use super::Partition;
use crate::data::SequenceDataset;
use crate::{Error, Result};

/// Pairwise G-test over the slices of a dataset.
#[derive(Debug, Clone)]
pub struct IndependenceOracle {
    columns: Vec<Vec<Option<u32>>>,
    arities: Vec<usize>,
    pub significance: f64,
    pub min_samples: usize,
}

impl IndependenceOracle {
    pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
    pub const DEFAULT_MIN_SAMPLES: usize = 20;

    /// Every slice of every sequence is one row.
    pub fn from_dataset(ds: &SequenceDataset, significance: f64) -> Self {
        let mut columns = vec![Vec::with_capacity(ds.total_slices()); ds.n_vars()];
        for slice in ds.sequences.iter().flatten() {
            for (v, col) in columns.iter_mut().enumerate() {
                col.push(slice.get(v));
            }
        }
        Self::from_columns(columns, ds.arities.clone(), significance)
    }

    pub fn from_columns(columns: Vec<Vec<Option<u32>>>, arities: Vec<usize>, significance: f64) -> Self {
        IndependenceOracle { columns, arities, significance, min_samples: Self::DEFAULT_MIN_SAMPLES }
    }

    /// G statistic, degrees of freedom and p-value for variables `a`, `b`.
    pub fn g_test(&self, a: usize, b: usize) -> Result<(f64, usize, f64)> {
        let (ra, rb) = (self.arities[a], self.arities[b]);
        let mut table = vec![0.0; ra * rb];
        let mut n = 0;
        for (x, y) in self.columns[a].iter().zip(&self.columns[b]) {
            if let (Some(x), Some(y)) = (x, y) {
                table[*x as usize * rb + *y as usize] += 1.0;
                n += 1;
            }
        }
        if n < self.min_samples {
            return Err(Error::InsufficientData { needed: self.min_samples, have: n });
        }
        let (g, df) = g_statistic(&table, ra, rb);
        let p = if df == 0 { 1.0 } else { chi2_sf(g, df as f64) };
        Ok((g, df, p))
    }

    /// True when independence is rejected at the configured significance.
    pub fn dependent(&self, a: usize, b: usize) -> Result<bool> {
        let (_, _, p) = self.g_test(a, b)?;
        Ok(p < self.significance)
    }
}

/// Likelihood-ratio statistic `2 Σ O ln(O / E)` of a row-major contingency
/// table and its degrees of freedom over the non-empty rows and columns.
pub fn g_statistic(table: &[f64], rows: usize, cols: usize) -> (f64, usize) {
    let row_sum: Vec<f64> = (0..rows).map(|r| table[r * cols..(r + 1) * cols].iter().sum()).collect();
    let col_sum: Vec<f64> = (0..cols).map(|c| (0..rows).map(|r| table[r * cols + c]).sum()).collect();
    let total: f64 = row_sum.iter().sum();
    if total == 0.0 {
        return (0.0, 0);
    }
    let mut g = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let o = table[r * cols + c];
            if o > 0.0 {
                let e = row_sum[r] * col_sum[c] / total;
                g += o * libm::log(o / e);
            }
        }
    }
    let nz_rows = row_sum.iter().filter(|&&s| s > 0.0).count();
    let nz_cols = col_sum.iter().filter(|&&s| s > 0.0).count();
    let df = nz_rows.saturating_sub(1) * nz_cols.saturating_sub(1);
    ((2.0 * g).max(0.0), df)
}

/// Upper tail of the chi-square distribution, `Q(df / 2, x / 2)`.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(0.5 * df, 0.5 * x)
}

fn gamma_q(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * libm::exp(-x + a * libm::log(x) - libm::lgamma(a))
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    libm::exp(-x + a * libm::log(x) - libm::lgamma(a)) * h
}

/// Connected components of the "dependent" graph over `vars`.
pub fn independent_components(vars: &[usize], oracle: &IndependenceOracle) -> Result<Partition<usize>> {
    let n = vars.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if find(&mut parent, i) == find(&mut parent, j) {
                continue;
            }
            if oracle.dependent(vars[i], vars[j])? {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        blocks[r].push(vars[i]);
    }
    Ok(Partition::from_blocks(blocks))
}
