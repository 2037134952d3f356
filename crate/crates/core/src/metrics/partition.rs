//! Chance-corrected agreement between two partitions of the same items.

use crate::error::{Error, Result};

/// Labels of N items into `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument(
                "partition must cover at least one item".into(),
            ));
        }
        if let Some((row, &topic)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::TopicOutOfRange { topic, row, k });
        }
        Ok(Self { labels, k })
    }

    /// Partition whose cluster count is one past the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Relabels clusters in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = vec![usize::MAX; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&t| {
            if map[t] == usize::MAX {
                map[t] = next;
                next += 1;
            }
            map[t]
        })
        .collect()
}

/// True when the two labelings differ only by a renaming of clusters.
pub fn same_up_to_relabeling(u: &[usize], v: &[usize]) -> bool {
    u.len() == v.len() && canonical_labels(u) == canonical_labels(v)
}

/// Sparse contingency table with marginals, in sorted cell order.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub n: u64,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    /// `((row, col), count)` for non-zero cells, sorted by `(row, col)`.
    pub cells: Vec<((usize, usize), u64)>,
}

impl Contingency {
    pub fn new(u: &Partition, v: &Partition) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::LengthMismatch {
                left: u.len(),
                right: v.len(),
            });
        }
        let mut pairs: Vec<(usize, usize)> = u
            .labels
            .iter()
            .copied()
            .zip(v.labels.iter().copied())
            .collect();
        pairs.sort_unstable();
        let mut cells: Vec<((usize, usize), u64)> = Vec::new();
        for p in pairs {
            match cells.last_mut() {
                Some((cell, count)) if *cell == p => *count += 1,
                _ => cells.push((p, 1)),
            }
        }
        let mut row_sums = vec![0u64; u.k];
        let mut col_sums = vec![0u64; v.k];
        for &((r, c), n) in &cells {
            row_sums[r] += n;
            col_sums[c] += n;
        }
        Ok(Self {
            n: u.len() as u64,
            row_sums,
            col_sums,
            cells,
        })
    }
}

fn comb2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pair counts behind the Rand index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandIndexComponents {
    /// Pairs together in both partitions.
    pub a: u64,
    /// Pairs apart in both partitions.
    pub b: u64,
    pub n_pair: u64,
}

impl RandIndexComponents {
    pub fn rand_index(&self) -> f64 {
        (self.a + self.b) as f64 / self.n_pair as f64
    }
}

/// Counts agreeing pairs from the contingency table in O(N log N).
pub fn rand_index_components(u: &Partition, v: &Partition) -> Result<RandIndexComponents> {
    let t = Contingency::new(u, v)?;
    if t.n < 2 {
        return Err(Error::TooFewItems);
    }
    let n_pair = comb2(t.n);
    let a: u64 = t.cells.iter().map(|&(_, c)| comb2(c)).sum();
    let same_u: u64 = t.row_sums.iter().map(|&c| comb2(c)).sum();
    let same_v: u64 = t.col_sums.iter().map(|&c| comb2(c)).sum();
    let b = n_pair - (same_u + same_v - a);
    Ok(RandIndexComponents { a, b, n_pair })
}

/// Adjusted Rand index. Identical partitions (up to relabeling) score 1;
/// a vanishing adjustment denominator otherwise scores 0.
pub fn ari(u: &Partition, v: &Partition) -> Result<f64> {
    let t = Contingency::new(u, v)?;
    if t.n < 2 {
        return Err(Error::TooFewItems);
    }
    if same_up_to_relabeling(&u.labels, &v.labels) {
        return Ok(1.0);
    }
    let total = comb2(t.n) as f64;
    let index: f64 = t.cells.iter().map(|&(_, c)| comb2(c) as f64).sum();
    let sum_u: f64 = t.row_sums.iter().map(|&c| comb2(c) as f64).sum();
    let sum_v: f64 = t.col_sums.iter().map(|&c| comb2(c) as f64).sum();
    let expected = sum_u * sum_v / total;
    let max_index = 0.5 * (sum_u + sum_v);
    let den = max_index - expected;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((index - expected) / den)
}

fn entropy(sums: &[u64], n: u64) -> f64 {
    let n = n as f64;
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information (natural log) of the contingency table.
pub fn mutual_information(t: &Contingency) -> f64 {
    let n = t.n as f64;
    t.cells
        .iter()
        .map(|&((r, c), nij)| {
            let nij = nij as f64;
            let outer = t.row_sums[r] as f64 * t.col_sums[c] as f64;
            nij / n * (n * nij / outer).ln()
        })
        .sum()
}

/// `ln(i!)` for `i` in `0..=n`.
pub fn log_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        table.push(acc);
    }
    table
}

/// Expected mutual information between random partitions with the given
/// marginals under the hypergeometric (permutation) model.
pub fn expected_mutual_information(row_sums: &[u64], col_sums: &[u64], n: u64) -> f64 {
    let lf = log_factorials(n as usize);
    let nf = n as f64;
    let ln_n = nf.ln();
    let n = n as usize;
    let mut emi = 0.0;
    for &a in row_sums.iter().filter(|&&a| a > 0) {
        let a = a as usize;
        for &b in col_sums.iter().filter(|&&b| b > 0) {
            let b = b as usize;
            let start = 1.max((a + b).saturating_sub(n));
            let end = a.min(b);
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            let ln_ab = (a as f64).ln() + (b as f64).ln();
            for nij in start..=end {
                let term = nij as f64 / nf * (ln_n + (nij as f64).ln() - ln_ab);
                let log_p = fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n + nij - a - b];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean entropy normalization.
pub fn ami(u: &Partition, v: &Partition) -> Result<f64> {
    let t = Contingency::new(u, v)?;
    if t.n < 2 {
        return Err(Error::TooFewItems);
    }
    if same_up_to_relabeling(&u.labels, &v.labels) {
        return Ok(1.0);
    }
    let mi = mutual_information(&t);
    let emi = expected_mutual_information(&t.row_sums, &t.col_sums, t.n);
    let mean_h = 0.5 * (entropy(&t.row_sums, t.n) + entropy(&t.col_sums, t.n));
    let den = mean_h - emi;
    if den.abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok((mi - emi) / den)
}
