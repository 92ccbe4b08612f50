//! Evaluation metrics and the k-means baseline.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::{kmeans_pp_select, sq_dist};
use crate::error::{Error, Result};
use crate::model::{hard_assign, Dataset, MembershipMatrix};

/// Relative Frobenius distance ‖w_a − w_b‖_F / ‖w_b‖_F after removing label
/// switching: columns of `w_a` are permuted to best match `w_b` by greedy
/// maximal-overlap matching on hard assignments. `w_b` is the reference run.
pub fn membership_error(w_a: &MembershipMatrix, w_b: &MembershipMatrix) -> Result<f64> {
    if w_a.n() != w_b.n() || w_a.k() != w_b.k() {
        return Err(Error::ShapeMismatch {
            a_rows: w_a.n(),
            a_cols: w_a.k(),
            b_rows: w_b.n(),
            b_cols: w_b.k(),
        });
    }
    let n = w_a.n();
    let k = w_a.k();
    let perm = match_columns(&hard_assign(w_a), &hard_assign(w_b), k);

    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..n {
        for (i, &p) in perm.iter().enumerate() {
            let diff = w_a.weights()[[r, i]] - w_b.weights()[[r, p]];
            num += diff * diff;
        }
        for j in 0..k {
            let v = w_b.weights()[[r, j]];
            den += v * v;
        }
    }
    Ok((num / den).sqrt())
}

/// Greedy maximal-overlap matching: repeatedly pair the (cluster-in-a,
/// cluster-in-b) combination with the largest co-occurrence count, breaking
/// ties toward the smallest indices. Returns `perm` with a-cluster `i`
/// matched to b-cluster `perm[i]`.
pub(crate) fn match_columns(a: &[usize], b: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![vec![0u64; k]; k];
    for (&ai, &bi) in a.iter().zip(b.iter()) {
        counts[ai][bi] += 1;
    }
    let mut perm = vec![usize::MAX; k];
    let mut used_a = vec![false; k];
    let mut used_b = vec![false; k];
    for _ in 0..k {
        let mut best: Option<(u64, usize, usize)> = None;
        for i in 0..k {
            if used_a[i] {
                continue;
            }
            for j in 0..k {
                if used_b[j] {
                    continue;
                }
                if best.is_none_or(|(c, _, _)| counts[i][j] > c) {
                    best = Some((counts[i][j], i, j));
                }
            }
        }
        let (_, i, j) = best.expect("k unmatched pairs remain");
        perm[i] = j;
        used_a[i] = true;
        used_b[j] = true;
    }
    perm
}

/// Majority-label mapping: each cluster predicts the most frequent true
/// label among its members, ties going to the smallest label.
fn majority_labels(assignments: &[usize], labels: &[i64]) -> BTreeMap<usize, i64> {
    let mut hist: BTreeMap<usize, BTreeMap<i64, usize>> = BTreeMap::new();
    for (&a, &l) in assignments.iter().zip(labels.iter()) {
        *hist.entry(a).or_default().entry(l).or_default() += 1;
    }
    hist.into_iter()
        .map(|(cluster, counts)| {
            let (&label, _) = counts
                .iter()
                .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then(lb.cmp(la)))
                .expect("cluster is non-empty");
            (cluster, label)
        })
        .collect()
}

/// Fraction of points whose cluster's majority label disagrees with their
/// true label.
pub fn classification_error(assignments: &[usize], labels: &[i64]) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            a_rows: assignments.len(),
            a_cols: 1,
            b_rows: labels.len(),
            b_cols: 1,
        });
    }
    if assignments.is_empty() {
        return Err(Error::InvalidArgument(
            "classification error needs at least one point".into(),
        ));
    }
    let majority = majority_labels(assignments, labels);
    let wrong = assignments
        .iter()
        .zip(labels.iter())
        .filter(|(a, l)| majority[a] != **l)
        .count();
    Ok(wrong as f64 / assignments.len() as f64)
}

/// Predicted-majority-label × true-label count table. Clusters sharing a
/// majority label are merged by summation; the grand total is N.
#[derive(Debug, Clone, Serialize)]
pub struct ConfusionMatrix {
    /// Distinct majority labels, ascending — one table row each.
    pub row_labels: Vec<i64>,
    /// Distinct true labels, ascending — one table column each.
    pub col_labels: Vec<i64>,
    /// counts[r][c] = points predicted row_labels[r] with truth col_labels[c].
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion_matrix(assignments: &[usize], labels: &[i64]) -> Result<ConfusionMatrix> {
    if assignments.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            a_rows: assignments.len(),
            a_cols: 1,
            b_rows: labels.len(),
            b_cols: 1,
        });
    }
    if assignments.is_empty() {
        return Err(Error::InvalidArgument(
            "confusion matrix needs at least one point".into(),
        ));
    }
    let majority = majority_labels(assignments, labels);

    let mut col_labels: Vec<i64> = labels.to_vec();
    col_labels.sort_unstable();
    col_labels.dedup();
    let mut row_labels: Vec<i64> = majority.values().copied().collect();
    row_labels.sort_unstable();
    row_labels.dedup();

    let row_index: BTreeMap<i64, usize> =
        row_labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let col_index: BTreeMap<i64, usize> =
        col_labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();

    let mut counts = vec![vec![0u64; col_labels.len()]; row_labels.len()];
    for (&a, &l) in assignments.iter().zip(labels.iter()) {
        counts[row_index[&majority[&a]]][col_index[&l]] += 1;
    }
    Ok(ConfusionMatrix {
        row_labels,
        col_labels,
        counts,
    })
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .chain(self.col_labels.iter().map(|l| l.to_string().len()))
            .chain(self.row_labels.iter().map(|l| l.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(4);
        write!(f, "{:>width$} |", "pred")?;
        for l in &self.col_labels {
            write!(f, " {l:>width$}")?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "{}-+{}",
            "-".repeat(width),
            "-".repeat((width + 1) * self.col_labels.len())
        )?;
        for (r, row) in self.counts.iter().enumerate() {
            write!(f, "{:>width$} |", self.row_labels[r])?;
            for c in row {
                write!(f, " {c:>width$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// A finished k-means run.
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub centers: Array2<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding. Assignment ties go to the
/// lowest center index; a cluster left empty is reseeded at the point
/// farthest from its assigned center. Stops when no center moves more than
/// `tol` or after `max_iter` rounds. Single-threaded and deterministic per
/// seed.
pub fn kmeans(
    data: &Dataset,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KmeansFit> {
    let n = data.n();
    let d = data.d();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InitFailure(format!(
            "k = {k} exceeds the number of data points {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = kmeans_pp_select(data.points(), k, &mut rng)?;
    let mut centers = Array2::<f64>::zeros((k, d));
    for (j, &idx) in seeds.iter().enumerate() {
        centers.row_mut(j).assign(&data.point(idx));
    }

    let mut assignments = vec![0usize; n];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;

        // Assign.
        let mut dist2 = vec![0.0f64; n];
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for j in 0..k {
                let dd = sq_dist(data.point(i), centers.row(j));
                if dd < best_d {
                    best_d = dd;
                    best = j;
                }
            }
            assignments[i] = best;
            dist2[i] = best_d;
        }

        // Update.
        let mut new_centers = Array2::<f64>::zeros((k, d));
        let mut sizes = vec![0usize; k];
        for i in 0..n {
            sizes[assignments[i]] += 1;
            let mut row = new_centers.row_mut(assignments[i]);
            row += &data.point(i);
        }
        for (j, &size) in sizes.iter().enumerate() {
            if size > 0 {
                let mut row = new_centers.row_mut(j);
                row /= size as f64;
            } else {
                // Reseed at the point currently worst-served, then exclude it
                // from rescuing another empty cluster this round.
                let far = (0..n)
                    .max_by(|&a, &b| dist2[a].partial_cmp(&dist2[b]).unwrap())
                    .expect("n >= k >= 1");
                new_centers.row_mut(j).assign(&data.point(far));
                dist2[far] = 0.0;
            }
        }

        let movement = (0..k)
            .map(|j| sq_dist(centers.row(j), new_centers.row(j)).sqrt())
            .fold(0.0f64, f64::max);
        centers = new_centers;
        if movement < tol {
            break;
        }
    }

    // Final assignment against the settled centers.
    for (i, slot) in assignments.iter_mut().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for j in 0..k {
            let dd = sq_dist(data.point(i), centers.row(j));
            if dd < best_d {
                best_d = dd;
                best = j;
            }
        }
        *slot = best;
    }

    Ok(KmeansFit {
        centers,
        assignments,
        iterations,
    })
}
