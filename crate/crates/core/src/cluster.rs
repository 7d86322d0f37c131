//! K-means over the reduced embedding, k selection diagnostics, and the
//! niche index derived from cluster sizes.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::{sq_dist, DenseMatrix};
use crate::{NicheError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub n_restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            n_restarts: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centers: DenseMatrix,
    pub inertia: f64,
    pub seed: u64,
    pub iterations_run: usize,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Seed for restart `r`, spread with a splitmix step so neighbouring seeds do
/// not share streams.
fn restart_seed(seed: u64, r: usize) -> u64 {
    let mut z = seed
        ^ (r as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn plus_plus(x: &DenseMatrix, k: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let n = x.rows();
    let mut centers = DenseMatrix::zeros(k, x.cols());
    let first = rng.gen_range(0..n);
    centers.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centers
}

/// Nearest center per point (ties to the lower index) and its squared distance.
fn assign(x: &DenseMatrix, centers: &DenseMatrix) -> (Vec<usize>, Vec<f64>) {
    (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let p = x.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..centers.rows() {
                let d = sq_dist(p, centers.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// Moves the point farthest from its own center into each empty cluster.
/// Only clusters holding at least two points donate, so no new empties appear.
fn reseed_empty(
    x: &DenseMatrix,
    labels: &mut [usize],
    dist: &mut [f64],
    centers: &mut DenseMatrix,
) {
    let k = centers.rows();
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] >= 2)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            })
            .expect("k < n guarantees a cluster with two members");
        sizes[labels[donor]] -= 1;
        sizes[c] = 1;
        labels[donor] = c;
        dist[donor] = 0.0;
        centers.row_mut(c).copy_from_slice(x.row(donor));
    }
}

fn means(x: &DenseMatrix, labels: &[usize], k: usize) -> DenseMatrix {
    let mut sums = DenseMatrix::zeros(k, x.cols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        sums.row_mut(c).iter_mut().for_each(|s| *s /= n as f64);
    }
    sums
}

struct Run {
    labels: Vec<usize>,
    centers: DenseMatrix,
    inertia: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn lloyd(x: &DenseMatrix, k: usize, seed: u64, opts: &KMeansOptions) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus(x, k, &mut rng);
    let (mut labels, mut dist) = assign(x, &centers);
    let mut inertia: f64 = dist.iter().sum();
    let mut history = vec![inertia];
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        reseed_empty(x, &mut labels, &mut dist, &mut centers);
        let next = means(x, &labels, k);
        let shift = (0..k)
            .map(|c| sq_dist(next.row(c), centers.row(c)).sqrt())
            .fold(0.0, f64::max);
        let (next_labels, next_dist) = assign(x, &next);
        let next_inertia: f64 = next_dist.iter().sum();
        if next_inertia > inertia {
            // rounding noise only; keep the better state
            break;
        }
        centers = next;
        labels = next_labels;
        dist = next_dist;
        inertia = next_inertia;
        history.push(inertia);
        iterations = it;
        if shift < opts.tol {
            break;
        }
    }
    reseed_empty(x, &mut labels, &mut dist, &mut centers);
    let recomputed: f64 = dist.iter().sum();
    Run {
        labels,
        centers,
        inertia: recomputed,
        iterations,
        history,
    }
}

fn check_embedding(x: &DenseMatrix, k: usize) -> Result<()> {
    let n = x.rows();
    if k < 2 || k + 1 > n {
        return Err(NicheError::Parameter(format!(
            "k must lie in [2, {}], got {k}",
            n.saturating_sub(1)
        )));
    }
    if !x.is_finite() {
        return Err(NicheError::Data(
            "embedding contains non-finite values".into(),
        ));
    }
    Ok(())
}

/// Best of `opts.n_restarts` k-means++ seeded Lloyd runs.
pub fn kmeans_fit(
    embedding: &DenseMatrix,
    k: usize,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<ClusterModel> {
    check_embedding(embedding, k)?;
    if opts.n_restarts == 0 {
        return Err(NicheError::Parameter("n_restarts must be positive".into()));
    }
    let runs: Vec<Run> = (0..opts.n_restarts)
        .into_par_iter()
        .map(|r| lloyd(embedding, k, restart_seed(seed, r), opts))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("at least one restart");
    Ok(ClusterModel {
        k,
        labels: best.labels,
        centers: best.centers,
        inertia: best.inertia,
        seed,
        iterations_run: best.iterations,
        history: best.history,
    })
}

/// Sum of squared distances of each point to its assigned center.
pub fn inertia(model: &ClusterModel, embedding: &DenseMatrix) -> f64 {
    model
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(embedding.row(i), model.centers.row(l)))
        .sum()
}

/// Mean per-sample silhouette with Euclidean distance; singletons score 0.
pub fn silhouette(model: &ClusterModel, embedding: &DenseMatrix) -> Result<f64> {
    silhouette_of_labels(&model.labels, model.k, embedding)
}

pub fn silhouette_of_labels(labels: &[usize], k: usize, embedding: &DenseMatrix) -> Result<f64> {
    if k < 2 {
        return Err(NicheError::Parameter(
            "silhouette needs at least two clusters".into(),
        ));
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(NicheError::Parameter(format!("label {l} outside [0, {k})")));
        }
        sizes[l] += 1;
    }
    if sizes.contains(&0) {
        return Err(NicheError::Parameter(
            "silhouette needs every cluster nonempty".into(),
        ));
    }
    let n = labels.len();
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            let p = embedding.row(i);
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += sq_dist(p, embedding.row(j)).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElbowRow {
    pub k: usize,
    pub inertia: f64,
    pub silhouette: Option<f64>,
}

/// Fits every k in an ascending grid with the same seed.
pub fn elbow_scan(
    embedding: &DenseMatrix,
    k_grid: &[usize],
    seed: u64,
    with_silhouette: bool,
    opts: &KMeansOptions,
) -> Result<Vec<ElbowRow>> {
    if k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NicheError::Parameter(
            "k grid must be strictly ascending".into(),
        ));
    }
    k_grid
        .iter()
        .map(|&k| {
            let m = kmeans_fit(embedding, k, seed, opts)?;
            let s = if with_silhouette {
                Some(silhouette(&m, embedding)?)
            } else {
                None
            };
            Ok(ElbowRow {
                k,
                inertia: m.inertia,
                silhouette: s,
            })
        })
        .collect()
}

/// `count` evenly spaced integers from `lo` to `hi` inclusive, deduplicated.
pub fn linspace_k(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count <= 1 || hi <= lo {
        return vec![lo];
    }
    let step = (hi - lo) as f64 / (count - 1) as f64;
    let mut out: Vec<usize> = (0..count)
        .map(|i| (lo as f64 + step * i as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Five points spanning `[2, n - 1]`.
pub fn coarse_k_grid(n_docs: usize) -> Vec<usize> {
    linspace_k(2, n_docs.saturating_sub(1).max(2), 5)
}

/// Thirty points spanning `[2, upper]`.
pub fn fine_k_grid(upper: usize) -> Vec<usize> {
    linspace_k(2, upper.max(2), 30)
}

/// Grid entry with the highest silhouette (first on ties).
pub fn best_silhouette_k(rows: &[ElbowRow]) -> Option<usize> {
    rows.iter()
        .filter_map(|r| r.silhouette.map(|s| (r.k, s)))
        .fold(None, |best: Option<(usize, f64)>, (k, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((k, s)),
        })
        .map(|(k, _)| k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NicheIndex {
    pub scores: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
}

impl NicheIndex {
    pub fn cluster_score(&self, cluster: usize) -> f64 {
        let largest = self.cluster_sizes.iter().copied().max().unwrap_or(0);
        niche_score(self.cluster_sizes[cluster], largest)
    }
}

/// `1 - size / largest`.
pub fn niche_score(size: usize, largest: usize) -> f64 {
    if largest == 0 {
        return 0.0;
    }
    1.0 - size as f64 / largest as f64
}

pub fn niche_index(model: &ClusterModel) -> NicheIndex {
    let sizes = model.cluster_sizes();
    let largest = sizes.iter().copied().max().unwrap_or(0);
    NicheIndex {
        scores: model
            .labels
            .iter()
            .map(|&l| niche_score(sizes[l], largest))
            .collect(),
        cluster_sizes: sizes,
    }
}

/// Counts per `[i w, (i+1) w)` bin over `[0, 1]`; the last bin is closed.
pub fn niche_histogram(scores: &[f64], bin_width: f64) -> Result<Vec<usize>> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(NicheError::Parameter(format!(
            "bin width {bin_width} outside (0, 1]"
        )));
    }
    let bins = (1.0 / bin_width).round().max(1.0) as usize;
    let mut counts = vec![0; bins];
    for &s in scores {
        if !(0.0..=1.0).contains(&s) {
            return Err(NicheError::Domain(format!(
                "niche score {s} outside [0, 1]"
            )));
        }
        // the small nudge keeps 0.3 in [0.3, 0.4) despite 0.3 / 0.1 = 2.9999...
        let b = ((s / bin_width) + 1e-9).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditCluster {
    pub cluster: usize,
    pub size: usize,
    pub niche: f64,
    pub documents: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub range: (f64, f64),
    pub clusters: Vec<AuditCluster>,
    pub notice: Option<String>,
}

impl AuditReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "niche range [{:.2}, {:.2}]",
            self.range.0, self.range.1
        );
        if let Some(n) = &self.notice {
            let _ = writeln!(out, "  {n}");
        }
        for c in &self.clusters {
            let _ = writeln!(
                out,
                "  cluster {} (size {}, niche {:.2})",
                c.cluster, c.size, c.niche
            );
            for (id, text) in &c.documents {
                let _ = writeln!(out, "    [{id}] {text}");
            }
        }
        out
    }
}

/// Samples clusters whose score lies in `range` (inclusive), then documents
/// inside each. `corpus` pairs (app id, description) in embedding row order.
pub fn sample_cluster_descriptions(
    model: &ClusterModel,
    corpus: &[(String, String)],
    range: (f64, f64),
    n_clusters: usize,
    n_docs: usize,
    seed: u64,
) -> Result<AuditReport> {
    let (lo, hi) = range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(NicheError::Parameter(format!(
            "audit range [{lo}, {hi}] not within [0, 1]"
        )));
    }
    if corpus.len() != model.labels.len() {
        return Err(NicheError::Parameter(
            "corpus and labels differ in length".into(),
        ));
    }
    let index = niche_index(model);
    let eligible: Vec<usize> = (0..model.k)
        .filter(|&c| {
            let s = index.cluster_score(c);
            s >= lo && s <= hi
        })
        .collect();
    if eligible.is_empty() {
        return Ok(AuditReport {
            range,
            clusters: Vec::new(),
            notice: Some("no cluster has a niche score in this range".into()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = sample(&mut rng, eligible.len(), n_clusters.min(eligible.len()))
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picks.sort_unstable();
    let clusters = picks
        .into_iter()
        .map(|c| {
            let members: Vec<usize> = (0..model.labels.len())
                .filter(|&i| model.labels[i] == c)
                .collect();
            let mut chosen: Vec<usize> = sample(&mut rng, members.len(), n_docs.min(members.len()))
                .into_iter()
                .map(|i| members[i])
                .collect();
            chosen.sort_unstable();
            AuditCluster {
                cluster: c,
                size: members.len(),
                niche: index.cluster_score(c),
                documents: chosen.into_iter().map(|i| corpus[i].clone()).collect(),
            }
        })
        .collect();
    Ok(AuditReport {
        range,
        clusters,
        notice: None,
    })
}
