//! One document family's encoder: semantic K-means clusters, singleton
//! augmentation, per-cluster geometric models, the folding-based feature
//! map, prototype initialization, grid selection of the sharpening
//! parameters, and normalized-LMS prototype refinement.
//!
//! Training runs in seven steps: a seeded holdout split, K-means on the
//! core semantic rows, augmentation of singleton clusters so every cluster
//! can support a geometric model, one [`KahmModel`] per cluster from the
//! core lexical rows, prototypes initialized to the semantic centroids,
//! `(omega, k)` chosen by validation error, and finally NLMS refinement of
//! the prototypes over core plus validation samples.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_model, folding_measure, KahmModel};
use crate::matrix::DenseMatrix;
use crate::rng::{derive_seed, seeded_rng};

/// Sub-stream tags hashed with the config seed so the holdout draw and the
/// K-means initialization consume independent random streams.
const HOLDOUT_STREAM: u64 = 1;
const KMEANS_STREAM: u64 = 2;

/// Iteration cap for Lloyd's algorithm.
const KMEANS_MAX_ITERS: usize = 100;

/// A trained per-family encoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSet {
    /// Cluster index of each training sample (after augmentation), in the
    /// order the samples were presented.
    assignments: Vec<usize>,
    /// One geometric model per cluster.
    cluster_models: Vec<KahmModel>,
    /// Prototype rows, C x p; row c is the semantic anchor of cluster c.
    prototypes: DenseMatrix,
    /// Sharpening exponent of the feature map; > 1.
    omega: f64,
    /// Truncation width of the feature map; in [1, C].
    k_trunc: usize,
}

impl ClusterSet {
    /// Reassembles a cluster set from stored fields, revalidating the
    /// invariants that training guarantees.
    pub fn from_parts(
        assignments: Vec<usize>,
        cluster_models: Vec<KahmModel>,
        prototypes: DenseMatrix,
        omega: f64,
        k_trunc: usize,
    ) -> Result<Self> {
        let n_clusters = cluster_models.len();
        if n_clusters == 0 {
            return Err(Error::InvalidArgument("cluster set needs C >= 1".into()));
        }
        if prototypes.rows() != n_clusters {
            return Err(Error::InvalidArgument(
                "prototype row count must equal cluster count".into(),
            ));
        }
        if !(omega > 1.0) {
            return Err(Error::InvalidArgument("omega must exceed 1".into()));
        }
        if k_trunc == 0 || k_trunc > n_clusters {
            return Err(Error::InvalidArgument(format!(
                "k_trunc {} outside [1, {}]",
                k_trunc, n_clusters
            )));
        }
        let mut counts = vec![0usize; n_clusters];
        for &a in &assignments {
            if a >= n_clusters {
                return Err(Error::InvalidArgument(format!(
                    "assignment {} out of range for {} clusters",
                    a, n_clusters
                )));
            }
            counts[a] += 1;
        }
        for (c, model) in cluster_models.iter().enumerate() {
            if counts[c] != model.n_samples() {
                return Err(Error::InvalidArgument(format!(
                    "cluster {} has {} assignments but {} reference rows",
                    c,
                    counts[c],
                    model.n_samples()
                )));
            }
            if model.n_samples() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "cluster {} has fewer than 2 samples",
                    c
                )));
            }
        }
        Ok(Self {
            assignments,
            cluster_models,
            prototypes,
            omega,
            k_trunc,
        })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn cluster_models(&self) -> &[KahmModel] {
        &self.cluster_models
    }

    pub fn prototypes(&self) -> &DenseMatrix {
        &self.prototypes
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn k_trunc(&self) -> usize {
        self.k_trunc
    }

    /// Number of clusters.
    pub fn n_clusters(&self) -> usize {
        self.cluster_models.len()
    }

    /// Semantic (output) dimension.
    pub fn semantic_dim(&self) -> usize {
        self.prototypes.cols()
    }

    /// Lexical (input) dimension.
    pub fn lexical_dim(&self) -> usize {
        self.cluster_models[0].dim()
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of semantic clusters per family.
    pub n_clusters: usize,
    /// Fraction of samples held out for grid selection; in (0, 0.5).
    pub validation_fraction: f64,
    /// Candidate sharpening exponents.
    pub omega_grid: Vec<f64>,
    /// Candidate truncation widths; entries above C are clipped.
    pub k_grid: Vec<usize>,
    /// NLMS step size; in (0, 1).
    pub nlms_step: f64,
    /// NLMS passes over the refinement set.
    pub nlms_epochs: usize,
    /// Seed for the holdout draw and K-means initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_clusters: 300,
            validation_fraction: 0.05,
            omega_grid: vec![
                5.0, 8.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0,
            ],
            k_grid: vec![
                2, 5, 8, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 25, 50, 75, 100, 125, 150,
                175, 200,
            ],
            nlms_step: 0.1,
            nlms_epochs: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::InvalidArgument("n_clusters must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::InvalidArgument(
                "validation_fraction must lie in (0, 0.5)".into(),
            ));
        }
        if !(self.nlms_step > 0.0 && self.nlms_step < 1.0) {
            return Err(Error::InvalidArgument("nlms_step must lie in (0, 1)".into()));
        }
        if self.omega_grid.is_empty() || self.k_grid.is_empty() {
            return Err(Error::InvalidArgument("parameter grids must be nonempty".into()));
        }
        if self.omega_grid.iter().any(|w| !(*w > 1.0)) {
            return Err(Error::InvalidArgument("omega grid entries must exceed 1".into()));
        }
        if self.k_grid.iter().any(|k| *k == 0) {
            return Err(Error::InvalidArgument("k grid entries must be >= 1".into()));
        }
        Ok(())
    }
}

/// Squared Euclidean distance between two equal-length slices.
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

/// Stacks the selected rows of `m` into a new matrix, in the given order.
fn gather_rows(m: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        let src = m.row(i);
        for j in 0..m.cols() {
            out.set(r, j, src[j]);
        }
    }
    out
}

/// K-means with k-means++ initialization on the rows of `v`.
///
/// Runs Lloyd iterations (at most 100) until the assignments are stable.
/// Empty clusters are repaired before each centroid update by reassigning
/// the point globally farthest from its own centroid, drawn from a cluster
/// that keeps at least two members; ties pick the smallest point index.
/// Deterministic for a fixed seed.
pub fn kmeans_clusters(
    v: &DenseMatrix,
    n_clusters: usize,
    seed: u64,
) -> Result<(Vec<usize>, DenseMatrix)> {
    let n = v.rows();
    let dim = v.cols();
    if n_clusters == 0 {
        return Err(Error::InvalidArgument("cluster count must be >= 1".into()));
    }
    if n < n_clusters {
        return Err(Error::TooFewSamples {
            context: "k-means".into(),
            needed: n_clusters,
            got: n,
        });
    }
    let mut rng = seeded_rng(seed);

    // k-means++ seeding: first center uniform, the rest proportional to the
    // squared distance from the nearest chosen center.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_clusters);
    let first = rng.gen_range(0..n);
    centers.push(v.row(first).to_vec());
    let mut min_d2: Vec<f64> = (0..n).map(|i| dist2(v.row(i), &centers[0])).collect();
    while centers.len() < n_clusters {
        let total: f64 = min_d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in min_d2.iter().enumerate() {
                cum += d;
                if r < cum {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with chosen centers; any pick is valid.
            rng.gen_range(0..n)
        };
        centers.push(v.row(pick).to_vec());
        for i in 0..n {
            let d = dist2(v.row(i), centers.last().unwrap());
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }

    let mut assignments = vec![0usize; n];
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..KMEANS_MAX_ITERS {
        // Assignment step; ties go to the lower cluster index.
        for i in 0..n {
            let row = v.row(i);
            let mut best = 0usize;
            let mut best_d = dist2(row, &centers[0]);
            for c in 1..n_clusters {
                let d = dist2(row, &centers[c]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignments[i] = best;
        }

        // Repair empty clusters one at a time.
        loop {
            let mut counts = vec![0usize; n_clusters];
            for &a in &assignments {
                counts[a] += 1;
            }
            let empty = match (0..n_clusters).find(|&c| counts[c] == 0) {
                Some(c) => c,
                None => break,
            };
            let mut donor_point = usize::MAX;
            let mut donor_d = f64::NEG_INFINITY;
            for i in 0..n {
                if counts[assignments[i]] < 2 {
                    continue;
                }
                let d = dist2(v.row(i), &centers[assignments[i]]);
                if d > donor_d {
                    donor_d = d;
                    donor_point = i;
                }
            }
            if donor_point == usize::MAX {
                // No cluster can spare a point; leave remaining empties to
                // the caller's sample-count precondition (unreachable when
                // N >= C).
                break;
            }
            assignments[donor_point] = empty;
        }

        // Centroid update.
        let mut sums = vec![vec![0.0; dim]; n_clusters];
        let mut counts = vec![0usize; n_clusters];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            let row = v.row(i);
            for j in 0..dim {
                sums[c][j] += row[j];
            }
        }
        for c in 0..n_clusters {
            if counts[c] > 0 {
                for j in 0..dim {
                    centers[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }

        if prev.as_deref() == Some(assignments.as_slice()) {
            break;
        }
        prev = Some(assignments.clone());
    }

    let mut centroids = DenseMatrix::zeros(n_clusters, dim);
    for c in 0..n_clusters {
        for j in 0..dim {
            centroids.set(c, j, centers[c][j]);
        }
    }
    Ok((assignments, centroids))
}

/// Appends a synthetic companion for every singleton cluster so that each
/// cluster holds at least two lexical samples.
///
/// The companion interpolates toward the nearest non-self lexical neighbor,
/// `0.9 * x_s + 0.1 * x_n`, rescaled to the singleton's norm; its semantic
/// target is a bit-exact copy of the singleton's. Returns the augmented
/// `(lexical, semantic, assignments)` with companions appended after the
/// original rows, in ascending cluster order.
pub fn augment_singletons(
    lexical: &DenseMatrix,
    semantic: &DenseMatrix,
    assignments: &[usize],
) -> Result<(DenseMatrix, DenseMatrix, Vec<usize>)> {
    let n = lexical.rows();
    if semantic.rows() != n || assignments.len() != n {
        return Err(Error::InvalidArgument(
            "lexical, semantic, and assignment lengths must agree".into(),
        ));
    }
    let n_clusters = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_clusters];
    for &a in assignments {
        counts[a] += 1;
    }
    let singletons: Vec<usize> = (0..n_clusters).filter(|&c| counts[c] == 1).collect();
    if singletons.is_empty() {
        return Ok((lexical.clone(), semantic.clone(), assignments.to_vec()));
    }
    if n < 2 {
        return Err(Error::NoNeighbor);
    }

    let mut lex_rows: Vec<f64> = lexical.data().to_vec();
    let mut sem_rows: Vec<f64> = semantic.data().to_vec();
    let mut assign_out = assignments.to_vec();
    for &c in &singletons {
        let s = assignments.iter().position(|&a| a == c).unwrap();
        let xs = lexical.row(s);
        // Nearest non-self neighbor; ties keep the smaller index.
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if i == s {
                continue;
            }
            let d = dist2(xs, lexical.row(i));
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let xn = lexical.row(best);
        let mut aux: Vec<f64> = (0..xs.len()).map(|j| 0.9 * xs[j] + 0.1 * xn[j]).collect();
        let target: f64 = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let raw: f64 = aux.iter().map(|v| v * v).sum::<f64>().sqrt();
        if raw > 0.0 {
            let scale = target / raw;
            for v in &mut aux {
                *v *= scale;
            }
        }
        lex_rows.extend_from_slice(&aux);
        sem_rows.extend_from_slice(semantic.row(s));
        assign_out.push(c);
    }
    let n_aug = assign_out.len();
    let lex_out = DenseMatrix::from_rows(n_aug, lexical.cols(), lex_rows)?;
    let sem_out = DenseMatrix::from_rows(n_aug, semantic.cols(), sem_rows)?;
    Ok((lex_out, sem_out, assign_out))
}

/// Indices of the `k` smallest folding totals, smallest first; ties break
/// toward the lower cluster index.
pub fn ordered_k_min_from_totals(totals: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..totals.len()).collect();
    idx.sort_by(|&a, &b| {
        totals[a]
            .partial_cmp(&totals[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k.min(totals.len()));
    idx
}

/// Folding total of `x` against every model, in cluster order.
pub fn folding_totals(x: &[f64], cluster_models: &[KahmModel]) -> Result<Vec<f64>> {
    cluster_models
        .iter()
        .map(|m| folding_measure(m, x).map(|s| s.total))
        .collect()
}

/// The ordered sequence of the `k` clusters folding `x` the least.
pub fn ordered_k_min(x: &[f64], cluster_models: &[KahmModel], k: usize) -> Result<Vec<usize>> {
    let totals = folding_totals(x, cluster_models)?;
    Ok(ordered_k_min_from_totals(&totals, k))
}

/// Feature-map evaluation from precomputed folding totals: weights
/// `(1 - T_c)^omega` normalized over the `k` least-folding clusters, zero
/// elsewhere. Falls back to uniform weight over the selected clusters if
/// every term underflows to zero.
pub fn feature_map_from_totals(totals: &[f64], omega: f64, k_trunc: usize) -> Vec<f64> {
    let support = ordered_k_min_from_totals(totals, k_trunc);
    let mut phi = vec![0.0; totals.len()];
    let mut sum = 0.0;
    for &c in &support {
        let w = (1.0 - totals[c]).max(0.0).powf(omega);
        phi[c] = w;
        sum += w;
    }
    if sum > 0.0 {
        for &c in &support {
            phi[c] /= sum;
        }
    } else {
        let u = 1.0 / support.len() as f64;
        for &c in &support {
            phi[c] = u;
        }
    }
    phi
}

/// Probability vector over clusters assigning `x` to the clusters that fold
/// it the least, sharpened by the trained exponent.
pub fn feature_map(x: &[f64], cluster_set: &ClusterSet) -> Result<Vec<f64>> {
    let totals = folding_totals(x, &cluster_set.cluster_models)?;
    Ok(feature_map_from_totals(
        &totals,
        cluster_set.omega,
        cluster_set.k_trunc,
    ))
}

/// Semantic embedding of `x`: the feature-map mixture of prototype rows.
pub fn predict_embedding(x: &[f64], cluster_set: &ClusterSet) -> Result<Vec<f64>> {
    let phi = feature_map(x, cluster_set)?;
    Ok(cluster_set.prototypes.matvec_t(&phi))
}

/// Sparse feature representation cached during refinement: the support
/// indices (ascending) and their weights.
struct SparseFeature {
    support: Vec<usize>,
    weights: Vec<f64>,
}

fn sparse_feature(phi: &[f64]) -> SparseFeature {
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (c, &w) in phi.iter().enumerate() {
        if w != 0.0 {
            support.push(c);
            weights.push(w);
        }
    }
    SparseFeature { support, weights }
}

/// One normalized-LMS pass structure over cached features.
fn nlms_run(
    prototypes: &mut DenseMatrix,
    features: &[SparseFeature],
    targets: &DenseMatrix,
    step: f64,
    epochs: usize,
) {
    let p = prototypes.cols();
    let mut pred = vec![0.0; p];
    for _ in 0..epochs {
        for (i, feat) in features.iter().enumerate() {
            for v in pred.iter_mut() {
                *v = 0.0;
            }
            let mut g_norm2 = 0.0;
            for (s, &c) in feat.support.iter().enumerate() {
                let w = feat.weights[s];
                g_norm2 += w * w;
                let row = prototypes.row(c);
                for j in 0..p {
                    pred[j] += w * row[j];
                }
            }
            let gain = step / (1.0 + step * g_norm2);
            let target = targets.row(i);
            // prototypes += gain * g * (v - pred)^T, restricted to support.
            for (s, &c) in feat.support.iter().enumerate() {
                let f = gain * feat.weights[s];
                for j in 0..p {
                    let cur = prototypes.get(c, j);
                    prototypes.set(c, j, cur + f * (target[j] - pred[j]));
                }
            }
        }
    }
}

/// Refines the prototypes with the normalized LMS recursion over paired
/// rows of `lexical` and `semantic`, visiting samples in ascending index
/// order for `epochs` passes. Returns the refined prototype matrix; the
/// cluster set itself is unchanged (the feature map does not depend on the
/// prototypes).
pub fn nlms_refine(
    cluster_set: &ClusterSet,
    lexical: &DenseMatrix,
    semantic: &DenseMatrix,
    step: f64,
    epochs: usize,
) -> Result<DenseMatrix> {
    if lexical.rows() != semantic.rows() || lexical.rows() == 0 {
        return Err(Error::InvalidArgument(
            "refinement set must be nonempty with paired rows".into(),
        ));
    }
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::InvalidArgument("nlms step must lie in (0, 1)".into()));
    }
    let mut features = Vec::with_capacity(lexical.rows());
    for i in 0..lexical.rows() {
        let phi = feature_map(lexical.row(i), cluster_set)?;
        features.push(sparse_feature(&phi));
    }
    let mut proto = cluster_set.prototypes.clone();
    nlms_run(&mut proto, &features, semantic, step, epochs);
    Ok(proto)
}

/// Trains one family's encoder end to end.
///
/// `lexical` is N x n, `semantic` is N x p with paired rows. The pipeline:
/// seeded holdout split, K-means over the core semantic rows, singleton
/// augmentation, one geometric model per cluster from the core lexical
/// rows, centroid-initialized prototypes, `(omega, k)` selection by
/// validation mean squared error (per coordinate), and NLMS refinement over
/// the union of core and validation samples.
pub fn train_law_encoder(
    lexical: &DenseMatrix,
    semantic: &DenseMatrix,
    config: &TrainConfig,
) -> Result<ClusterSet> {
    train_law_encoder_with_summary(lexical, semantic, config).map(|(set, _)| set)
}

/// Key facts about one training run, for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    /// Total training pairs supplied.
    pub n_samples: usize,
    /// Pairs held out for grid selection.
    pub n_validation: usize,
    /// Selected sharpening exponent.
    pub omega: f64,
    /// Selected truncation width.
    pub k_trunc: usize,
    /// Per-coordinate validation MSE of the selected grid cell (measured
    /// with centroid prototypes, before NLMS refinement).
    pub validation_mse: f64,
}

/// Like [`train_law_encoder`], but also returns the grid-selection summary.
pub fn train_law_encoder_with_summary(
    lexical: &DenseMatrix,
    semantic: &DenseMatrix,
    config: &TrainConfig,
) -> Result<(ClusterSet, TrainSummary)> {
    config.validate()?;
    let n = lexical.rows();
    if semantic.rows() != n {
        return Err(Error::InvalidArgument(
            "lexical and semantic row counts must agree".into(),
        ));
    }
    if n < 2 {
        return Err(Error::TooFewSamples {
            context: "law training".into(),
            needed: 2,
            got: n,
        });
    }
    let p = semantic.cols();

    // 1) Holdout split: uniform without replacement, seeded.
    let n_val = ((config.validation_fraction * n as f64).round() as usize).max(1);
    let mut rng: ChaCha20Rng = seeded_rng(derive_seed(config.seed, HOLDOUT_STREAM));
    let mut val_idx = rand::seq::index::sample(&mut rng, n, n_val).into_vec();
    val_idx.sort_unstable();
    let mut is_val = vec![false; n];
    for &i in &val_idx {
        is_val[i] = true;
    }
    let core_idx: Vec<usize> = (0..n).filter(|&i| !is_val[i]).collect();
    let core_lex = gather_rows(lexical, &core_idx);
    let core_sem = gather_rows(semantic, &core_idx);
    let val_lex = gather_rows(lexical, &val_idx);
    let val_sem = gather_rows(semantic, &val_idx);

    // 2) Semantic clusters on the core rows.
    let (assignments, centroids) = kmeans_clusters(
        &core_sem,
        config.n_clusters,
        derive_seed(config.seed, KMEANS_STREAM),
    )?;

    // 3) Every cluster needs at least two members to carry a model.
    let (aug_lex, aug_sem, aug_assign) = augment_singletons(&core_lex, &core_sem, &assignments)?;

    // 4) Per-cluster geometric models from the lexical rows.
    let n_clusters = config.n_clusters;
    let mut cluster_models = Vec::with_capacity(n_clusters);
    for c in 0..n_clusters {
        let member_idx: Vec<usize> = (0..aug_assign.len())
            .filter(|&i| aug_assign[i] == c)
            .collect();
        let members = gather_rows(&aug_lex, &member_idx);
        cluster_models.push(build_model(members)?);
    }

    // 5/6) Grid selection with centroid prototypes. Folding totals per
    // validation sample do not depend on (omega, k), so they are computed
    // once and reused across all grid cells.
    let mut k_grid: Vec<usize> = config.k_grid.iter().map(|&k| k.min(n_clusters)).collect();
    k_grid.sort_unstable();
    k_grid.dedup();
    let val_totals: Vec<Vec<f64>> = (0..val_lex.rows())
        .map(|i| folding_totals(val_lex.row(i), &cluster_models))
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, f64, usize)> = None; // (mse, omega, k)
    for &omega in &config.omega_grid {
        for &k in &k_grid {
            let mut sse = 0.0;
            for (i, totals) in val_totals.iter().enumerate() {
                let phi = feature_map_from_totals(totals, omega, k);
                let pred = centroids.matvec_t(&phi);
                sse += dist2(&pred, val_sem.row(i));
            }
            let mse = sse / (val_totals.len() as f64 * p as f64);
            let better = match best {
                None => true,
                Some((b_mse, b_omega, b_k)) => {
                    mse < b_mse
                        || (mse == b_mse && (omega < b_omega || (omega == b_omega && k < b_k)))
                }
            };
            if better {
                best = Some((mse, omega, k));
            }
        }
    }
    let (validation_mse, omega, k_trunc) = best.expect("validated grids are nonempty");

    let cluster_set = ClusterSet::from_parts(
        aug_assign.clone(),
        cluster_models,
        centroids,
        omega,
        k_trunc,
    )?;

    // 7) NLMS refinement over augmented core plus validation rows.
    let union_rows = aug_lex.rows() + val_lex.rows();
    let mut union_lex = Vec::with_capacity(union_rows * lexical.cols());
    union_lex.extend_from_slice(aug_lex.data());
    union_lex.extend_from_slice(val_lex.data());
    let mut union_sem = Vec::with_capacity(union_rows * p);
    union_sem.extend_from_slice(aug_sem.data());
    union_sem.extend_from_slice(val_sem.data());
    let union_lex = DenseMatrix::from_rows(union_rows, lexical.cols(), union_lex)?;
    let union_sem = DenseMatrix::from_rows(union_rows, p, union_sem)?;

    let refined = nlms_refine(
        &cluster_set,
        &union_lex,
        &union_sem,
        config.nlms_step,
        config.nlms_epochs,
    )?;
    let ClusterSet {
        assignments,
        cluster_models,
        omega,
        k_trunc,
        ..
    } = cluster_set;
    let set = ClusterSet::from_parts(assignments, cluster_models, refined, omega, k_trunc)?;
    let summary = TrainSummary {
        n_samples: n,
        n_validation: n_val,
        omega,
        k_trunc,
        validation_mse,
    };
    Ok((set, summary))
}
