//! Affinity construction, normalized-cut spectral clustering and the
//! training-signal clustering pipeline.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::osc::{normalize_columns, osc_solve, OscConfig};

pub const ISOLATED_DEGREE: f64 = 1e-12;
pub const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITER: usize = 200;
/// Silhouette below this suggests the data holds fewer clusters than asked.
pub const WEAK_SILHOUETTE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Affinity {
    w: DMatrix<f64>,
}

impl Affinity {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }

    /// Accepts an arbitrary symmetric nonnegative matrix; the diagonal is
    /// zeroed.
    pub fn from_matrix(mut w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::DimensionMismatch { expected: w.nrows(), got: w.ncols() });
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("affinity entries must be finite and nonnegative".into()));
        }
        if (&w - w.transpose()).amax() > 1e-12 * w.amax().max(1.0) {
            return Err(Error::InvalidParameter("affinity must be symmetric".into()));
        }
        w.fill_diagonal(0.0);
        Ok(Affinity { w })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|&(_, &l)| l == cluster).map(|(i, _)| i).collect()
    }

    /// Indices i where `labels[i] != labels[i − 1]`.
    pub fn boundaries(&self) -> Vec<usize> {
        (1..self.labels.len()).filter(|&i| self.labels[i] != self.labels[i - 1]).collect()
    }
}

/// `|Z| + |Zᵀ|` with a zero diagonal.
pub fn build_affinity(z: &DMatrix<f64>) -> Result<Affinity> {
    if !z.is_square() {
        return Err(Error::DimensionMismatch { expected: z.nrows(), got: z.ncols() });
    }
    let n = z.nrows();
    let mut w = DMatrix::from_fn(n, n, |i, j| z[(i, j)].abs() + z[(j, i)].abs());
    w.fill_diagonal(0.0);
    Ok(Affinity { w })
}

/// Relabels so cluster ids appear in order of first occurrence.
pub fn canonicalize(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(from, _)| *from == l) {
            Some(&(_, to)) => to,
            None => {
                let to = map.len();
                map.push((l, to));
                to
            }
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct KMeansRun {
    labels: Vec<usize>,
    inertia: f64,
}

fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeansRun {
    let n = points.len();
    let dim = points[0].len();
    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .expect("k >= 1");
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an emptied cluster at the worst-fit point
                let far = (0..n)
                    .max_by(|&a, &b| sq_dist(&points[a], &centers[labels[a]]).total_cmp(&sq_dist(&points[b], &centers[labels[b]])))
                    .expect("n >= 1");
                centers[c] = points[far].clone();
                labels[far] = c;
                changed = true;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    KMeansRun { labels, inertia }
}

/// Seeded k-means++ with restarts; the lowest-inertia run wins.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::TooSmall { needed: k, got: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansRun> = None;
    for _ in 0..restarts.max(1) {
        let run = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart").labels)
}

/// Normalized-cut spectral clustering with the default seed.
pub fn ncut(w: &Affinity, k: usize) -> Result<ClusterAssignment> {
    ncut_seeded(w, k, 0)
}

pub fn ncut_seeded(w: &Affinity, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = w.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::TooSmall { needed: k, got: n });
    }
    if k == 1 {
        return Ok(ClusterAssignment { labels: vec![0; n], k });
    }
    let degree: Vec<f64> = w.w.row_iter().map(|r| r.sum()).collect();
    let active: Vec<usize> = (0..n).filter(|&i| degree[i] >= ISOLATED_DEGREE).collect();
    if active.len() < k {
        return Err(Error::ClusterStructure(format!("only {} connected nodes for {k} clusters", active.len())));
    }
    if active.len() < n {
        log::warn!("{} isolated nodes take their nearest neighbor's cluster", n - active.len());
    }

    let na = active.len();
    let inv_sqrt: Vec<f64> = active.iter().map(|&i| 1.0 / degree[i].sqrt()).collect();
    let m = DMatrix::from_fn(na, na, |a, b| w.w[(active[a], active[b])] * inv_sqrt[a] * inv_sqrt[b]);
    let eig = m.symmetric_eigen();
    // largest eigenvalues of D^{-1/2} W D^{-1/2} are the smallest of the
    // normalized Laplacian
    let mut order: Vec<usize> = (0..na).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let points: Vec<Vec<f64>> = (0..na)
        .map(|r| {
            let row: Vec<f64> = order[..k].iter().map(|&c| eig.eigenvectors[(r, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let active_labels = kmeans(&points, k, KMEANS_RESTARTS, seed)?;

    let mut labels = vec![0; n];
    for (a, &i) in active.iter().enumerate() {
        labels[i] = active_labels[a];
    }
    let mut is_active = vec![false; n];
    for &i in &active {
        is_active[i] = true;
    }
    for i in 0..n {
        if !is_active[i] {
            let nearest = active.iter().min_by_key(|&&a| (a.abs_diff(i), a)).expect("non-empty");
            labels[i] = labels[*nearest];
        }
    }
    Ok(ClusterAssignment { labels: canonicalize(&labels), k })
}

/// Mean silhouette with Euclidean distance between columns of `x`.
pub fn silhouette(x: &DMatrix<f64>, assignment: &ClusterAssignment) -> Result<f64> {
    let n = x.ncols();
    if assignment.labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: assignment.labels.len() });
    }
    let sizes = assignment.sizes();
    if assignment.k < 2 || sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Ok(0.0);
    }
    let gram = x.tr_mul(x);
    let dist = |i: usize, j: usize| (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let own = assignment.labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; assignment.k];
        for j in 0..n {
            if j != i {
                sums[assignment.labels[j]] += dist(i, j);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..assignment.k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Fraction of positions where `labels` agrees with `truth` under the best
/// relabeling of `labels`.
pub fn permutation_accuracy(labels: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(labels.len(), truth.len());
    if labels.is_empty() {
        return 1.0;
    }
    let k = labels.iter().chain(truth).max().map_or(0, |m| m + 1);
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    loop {
        let hits = labels.iter().zip(truth).filter(|&(&l, &t)| perm[l] == t).count();
        best = best.max(hits);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best as f64 / labels.len() as f64
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[derive(Debug, Clone)]
pub struct SignalClustering {
    pub assignment: ClusterAssignment,
    pub silhouette: f64,
    pub osc_iterations: usize,
    pub osc_converged: bool,
    pub final_objective: f64,
}

impl SignalClustering {
    pub fn weak(&self) -> bool {
        self.silhouette < WEAK_SILHOUETTE
    }
}

/// Clusters the window columns of one training recording: unit-normalize,
/// solve OSC, build the affinity and cut it into `k` groups.
pub fn cluster_training_signal(x: &DMatrix<f64>, k: usize, cfg: &OscConfig, seed: u64) -> Result<SignalClustering> {
    let xn = normalize_columns(x);
    let sol = osc_solve(&xn, cfg)?;
    let w = build_affinity(&sol.z)?;
    let assignment = ncut_seeded(&w, k, seed)?;
    let silhouette = silhouette(&xn, &assignment)?;
    if silhouette < WEAK_SILHOUETTE {
        log::warn!("weak cluster structure: silhouette {silhouette:.3}");
    }
    Ok(SignalClustering {
        assignment,
        silhouette,
        osc_iterations: sol.iterations,
        osc_converged: sol.converged,
        final_objective: sol.objective.last().copied().unwrap_or(f64::NAN),
    })
}

/// Uniform sample without replacement of `per_cluster` column indices from
/// every cluster, each sorted ascending.
pub fn select_representatives(assignment: &ClusterAssignment, per_cluster: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..assignment.k)
        .map(|c| {
            let members = assignment.members(c);
            if members.len() < per_cluster {
                return Err(Error::ClusterTooSmall { cluster: c, size: members.len(), needed: per_cluster });
            }
            let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), per_cluster).into_iter().map(|i| members[i]).collect();
            picked.sort_unstable();
            Ok(picked)
        })
        .collect()
}
