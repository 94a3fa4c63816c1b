//! Hypervolume, rank correlations and mIoU.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("point {0:?} does not dominate the reference point")]
    BelowReference([f64; 2]),
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} values")]
    TooShort(usize),
    #[error("input is constant; correlation undefined")]
    Constant,
    #[error("confusion matrix: {0}")]
    Confusion(String),
}

/// Area dominated by `points` (maximization) above `reference`, by sweep.
pub fn hypervolume_2d(points: &[[f64; 2]], reference: [f64; 2]) -> Result<f64, MetricError> {
    for p in points {
        if !(p[0] > reference[0] && p[1] > reference[1]) {
            return Err(MetricError::BelowReference(*p));
        }
    }
    let mut pts = points.to_vec();
    // descending in the first objective, ties broken by the larger second
    pts.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
    let mut area = 0.0;
    let mut top = reference[1];
    for p in pts {
        if p[1] > top {
            area += (p[0] - reference[0]) * (p[1] - top);
            top = p[1];
        }
    }
    Ok(area)
}

/// Hypervolume with the origin as reference; non-positive points are skipped.
pub fn hypervolume_origin(points: &[[f64; 2]]) -> f64 {
    let pts: Vec<[f64; 2]> = points.iter().copied().filter(|p| p[0] > 0.0 && p[1] > 0.0).collect();
    hypervolume_2d(&pts, [0.0, 0.0]).expect("filtered")
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::TooShort(2));
    }
    Ok(())
}

/// Counts pairs (i, j) with `v[i] > v[j]` for i < j in `v` via merge sort,
/// sorting `v` ascending in place.
fn count_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            inv += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    inv
}

/// Sum of t(t-1)/2 over runs of equal values in a sorted slice.
fn tied_pairs_sorted(v: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in v.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Pair counts behind Kendall's tau.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KendallCounts {
    pub total: u64,
    /// Pairs tied in `a`.
    pub ties_a: u64,
    /// Pairs tied in `b`.
    pub ties_b: u64,
    /// Pairs tied in both.
    pub ties_both: u64,
    /// Concordant minus discordant.
    pub numerator: i64,
}

/// Knight's O(n log n) pair counting.
pub fn kendall_counts(a: &[f64], b: &[f64]) -> Result<KendallCounts, MetricError> {
    check_pair(a, b)?;
    let n = a.len() as u64;
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));
    let sa: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
    let ties_a = tied_pairs_sorted(&sa);
    // ties in both: runs equal in a and b of the lexicographic order
    let mut ties_both = 0u64;
    let mut run = 1u64;
    for w in idx.windows(2) {
        if a[w[0]] == a[w[1]] && b[w[0]] == b[w[1]] {
            run += 1;
        } else {
            ties_both += run * (run - 1) / 2;
            run = 1;
        }
    }
    ties_both += run * (run - 1) / 2;
    let mut sb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let swaps = count_inversions(&mut sb);
    let ties_b = tied_pairs_sorted(&sb);
    let total = n * (n - 1) / 2;
    let concordant_minus_discordant =
        total as i64 - ties_a as i64 - ties_b as i64 + ties_both as i64 - 2 * swaps as i64;
    Ok(KendallCounts { total, ties_a, ties_b, ties_both, numerator: concordant_minus_discordant })
}

/// Kendall's tau-b.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    let c = kendall_counts(a, b)?;
    let da = (c.total - c.ties_a) as f64;
    let db = (c.total - c.ties_b) as f64;
    if da == 0.0 || db == 0.0 {
        return Err(MetricError::Constant);
    }
    Ok(c.numerator as f64 / (da * db).sqrt())
}

pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricError::Constant);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    pearson_r(&average_ranks(a), &average_ranks(b))
}

/// Pixel counts: entry (i, j) counts pixels of true class i predicted as j.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(rows: &[Vec<u64>]) -> Result<Self, MetricError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(MetricError::Confusion("matrix must be square and non-empty".into()));
        }
        if rows.iter().all(|r| r.iter().all(|&c| c == 0)) {
            return Err(MetricError::Confusion("no positive counts".into()));
        }
        Ok(ConfusionMatrix { n, counts: rows.iter().flatten().copied().collect() })
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn classes(&self) -> usize {
        self.n
    }
}

/// Mean IoU over classes with a non-empty union.
pub fn miou(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    let n = cm.classes();
    let mut sum = 0.0;
    let mut used = 0;
    for i in 0..n {
        let row: u64 = (0..n).map(|j| cm.get(i, j)).sum();
        let col: u64 = (0..n).map(|j| cm.get(j, i)).sum();
        let union = row + col - cm.get(i, i);
        if union > 0 {
            sum += cm.get(i, i) as f64 / union as f64;
            used += 1;
        }
    }
    if used == 0 {
        return Err(MetricError::Confusion("every class has an empty union".into()));
    }
    Ok(sum / used as f64)
}
