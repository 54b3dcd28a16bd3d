//! Retrieval evaluation: per-query metrics, micro/macro aggregation, paired
//! bootstrap confidence intervals, the abstention-threshold sweep, the
//! cluster-mass diagnostic, and a small timing harness.
//!
//! Six per-query metrics are supported. Three are ranking metrics — hit
//! (gold anywhere in the top-k), top1 (gold at rank one), and reciprocal
//! rank over the order-preserving deduplicated label list — and three are
//! consensus metrics over the top-k label multiset: majority accuracy
//! against a predominance threshold, the gold consensus fraction, and that
//! fraction normalized by the gold label's corpus prior.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

use crate::cluster::{feature_map, ClusterSet};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{derive_seed, seeded_rng};

use rand::Rng;

/// Ranking cutoffs reported by default.
pub const DEFAULT_CUTOFFS: [usize; 5] = [3, 5, 10, 15, 20];

/// Default predominance threshold for majority accuracy.
pub const DEFAULT_TAU: f64 = 0.10;

/// Margin below which a cluster fails the mass diagnostic.
pub const L2_MASS_TOLERANCE: f64 = 3e-3;

/// One query's retrieval outcome: the gold label and the labels of the
/// ranked units the system returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub gold_label: String,
    pub ranked_labels: Vec<String>,
    /// Optional grouping tag for stratified reporting.
    pub style_tag: Option<String>,
}

/// The six per-query metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Hit,
    Top1,
    Mrr,
    MajAcc,
    ConsFrac,
    Lift,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Hit,
        Metric::Top1,
        Metric::Mrr,
        Metric::MajAcc,
        Metric::ConsFrac,
        Metric::Lift,
    ];
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Metric::Hit => "hit",
            Metric::Top1 => "top1",
            Metric::Mrr => "mrr",
            Metric::MajAcc => "majacc",
            Metric::ConsFrac => "consfrac",
            Metric::Lift => "lift",
        };
        f.write_str(name)
    }
}

/// Shared metric context: the predominance threshold and the corpus label
/// priors (needed only by the consensus metrics).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricParams {
    pub tau: f64,
    pub priors: BTreeMap<String, f64>,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            priors: BTreeMap::new(),
        }
    }
}

/// Micro averages over queries; macro averages the per-law means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggMode {
    Micro,
    Macro,
}

impl std::fmt::Display for AggMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AggMode::Micro => "micro",
            AggMode::Macro => "macro",
        })
    }
}

/// Hit, top1, and deduplicated reciprocal rank at cutoff `k`.
///
/// The reciprocal rank is taken over the order-preserving list of distinct
/// labels in the top-k: duplicates collapse onto their first occurrence, so
/// a gold label dominated by one repeated rival still earns rank two.
pub fn ranking_metrics(result: &QueryResult, k: usize) -> Result<(f64, f64, f64)> {
    let labels = top_k(result, k)?;
    let hit = if labels.iter().any(|l| **l == result.gold_label) {
        1.0
    } else {
        0.0
    };
    let top1 = if *labels[0] == result.gold_label { 1.0 } else { 0.0 };
    let mut distinct: Vec<&str> = Vec::new();
    for l in &labels {
        if !distinct.contains(&l.as_str()) {
            distinct.push(l);
        }
    }
    let mrr = match distinct.iter().position(|l| *l == result.gold_label) {
        Some(pos) => 1.0 / (pos + 1) as f64,
        None => 0.0,
    };
    Ok((hit, top1, mrr))
}

/// Majority accuracy, consensus fraction, and prior-normalized lift at
/// cutoff `k`.
///
/// The plurality label is the most frequent label in the top-k, ties going
/// to the label whose first occurrence is earliest in the ranking. Majority
/// accuracy requires the plurality to be gold AND its fraction to reach
/// `tau`. Lift divides the gold consensus fraction by the gold label's
/// corpus prior and treats a missing or zero prior as an error.
pub fn consensus_metrics(
    result: &QueryResult,
    k: usize,
    tau: f64,
    priors: &BTreeMap<String, f64>,
) -> Result<(f64, f64, f64)> {
    let labels = top_k(result, k)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    // Plurality with earliest-first-occurrence tie-break: walking the
    // ranking in order, every label's first occurrence is visited before
    // any later rival's, so a strict comparison keeps the earliest.
    let mut plurality = "";
    let mut plurality_count = 0usize;
    let mut seen: Vec<&str> = Vec::new();
    for l in &labels {
        if seen.contains(&l.as_str()) {
            continue;
        }
        seen.push(l);
        let c = counts[l.as_str()];
        if c > plurality_count {
            plurality_count = c;
            plurality = l;
        }
    }
    let m = plurality_count as f64 / k as f64;
    let majacc = if plurality == result.gold_label && m >= tau {
        1.0
    } else {
        0.0
    };
    let gold_count = counts.get(result.gold_label.as_str()).copied().unwrap_or(0);
    let consfrac = gold_count as f64 / k as f64;
    let prior = priors.get(&result.gold_label).copied().unwrap_or(0.0);
    if prior <= 0.0 {
        return Err(Error::MissingPrior(result.gold_label.clone()));
    }
    let lift = consfrac / prior;
    Ok((majacc, consfrac, lift))
}

fn top_k<'a>(result: &'a QueryResult, k: usize) -> Result<Vec<&'a String>> {
    if k == 0 {
        return Err(Error::InvalidArgument("cutoff must be >= 1".into()));
    }
    if k > result.ranked_labels.len() {
        return Err(Error::CutoffTooLarge {
            k,
            len: result.ranked_labels.len(),
        });
    }
    Ok(result.ranked_labels[..k].iter().collect())
}

/// One metric value for one query.
pub fn query_score(
    result: &QueryResult,
    metric: Metric,
    k: usize,
    params: &MetricParams,
) -> Result<f64> {
    match metric {
        Metric::Hit => ranking_metrics(result, k).map(|(h, _, _)| h),
        Metric::Top1 => ranking_metrics(result, k).map(|(_, t, _)| t),
        Metric::Mrr => ranking_metrics(result, k).map(|(_, _, m)| m),
        Metric::MajAcc => consensus_metrics(result, k, params.tau, &params.priors).map(|(a, _, _)| a),
        Metric::ConsFrac => {
            consensus_metrics(result, k, params.tau, &params.priors).map(|(_, c, _)| c)
        }
        Metric::Lift => consensus_metrics(result, k, params.tau, &params.priors).map(|(_, _, l)| l),
    }
}

/// Mean of per-query scores grouped per gold label.
fn law_means(scores: &[f64], laws: &[&str]) -> Vec<f64> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (s, l) in scores.iter().zip(laws) {
        let e = sums.entry(l).or_insert((0.0, 0));
        e.0 += s;
        e.1 += 1;
    }
    sums.values().map(|(s, n)| s / *n as f64).collect()
}

/// Aggregates already-computed per-query scores: micro is the mean over
/// queries, macro the unweighted mean of per-law means (laws keyed by each
/// query's gold label).
pub fn aggregate_scores(scores: &[f64], gold_labels: &[&str], mode: AggMode) -> Result<f64> {
    if scores.is_empty() || scores.len() != gold_labels.len() {
        return Err(Error::EmptyInput);
    }
    match mode {
        AggMode::Micro => Ok(scores.iter().sum::<f64>() / scores.len() as f64),
        AggMode::Macro => {
            let means = law_means(scores, gold_labels);
            Ok(means.iter().sum::<f64>() / means.len() as f64)
        }
    }
}

/// Computes and aggregates one metric over a query set.
pub fn aggregate(
    results: &[QueryResult],
    metric: Metric,
    k: usize,
    mode: AggMode,
    params: &MetricParams,
) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scores: Vec<f64> = results
        .iter()
        .map(|r| query_score(r, metric, k, params))
        .collect::<Result<_>>()?;
    let laws: Vec<&str> = results.iter().map(|r| r.gold_label.as_str()).collect();
    aggregate_scores(&scores, &laws, mode)
}

/// Aggregates one metric within each style-tag group (untagged queries
/// group under the empty string).
pub fn aggregate_by_style(
    results: &[QueryResult],
    metric: Metric,
    k: usize,
    mode: AggMode,
    params: &MetricParams,
) -> Result<BTreeMap<String, f64>> {
    let mut groups: BTreeMap<String, Vec<&QueryResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry(r.style_tag.clone().unwrap_or_default())
            .or_default()
            .push(r);
    }
    let mut out = BTreeMap::new();
    for (tag, members) in groups {
        let scores: Vec<f64> = members
            .iter()
            .map(|r| query_score(r, metric, k, params))
            .collect::<Result<_>>()?;
        let laws: Vec<&str> = members.iter().map(|r| r.gold_label.as_str()).collect();
        out.insert(tag, aggregate_scores(&scores, &laws, mode)?);
    }
    Ok(out)
}

/// Bootstrap settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 5000,
            seed: 0,
            alpha: 0.05,
        }
    }
}

/// What gets drawn with replacement in each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResampleUnit {
    /// Resample queries; aggregates are micro means.
    Query,
    /// Resample laws; aggregates are macro (per-law mean) means.
    Law,
}

/// One system's per-query scores, aligned with the shared query order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemScores {
    pub name: String,
    pub scores: Vec<f64>,
}

/// Point estimate plus percentile confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Bootstrap output: per-system intervals and per-pair delta intervals
/// (later system minus earlier, in input order).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub systems: Vec<(String, IntervalEstimate)>,
    pub deltas: Vec<(String, String, IntervalEstimate)>,
}

/// Empirical percentile with linear interpolation between order statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

fn interval(mean: f64, mut replicates: Vec<f64>, alpha: f64) -> IntervalEstimate {
    replicates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    IntervalEstimate {
        mean,
        lo: percentile(&replicates, alpha / 2.0),
        hi: percentile(&replicates, 1.0 - alpha / 2.0),
    }
}

/// Paired nonparametric bootstrap over a shared query set.
///
/// Every replicate draws one set of unit indices (queries, or laws keyed by
/// gold label) and evaluates every system on that same draw, so the deltas
/// are paired. Replicate `r` uses its own generator seeded from
/// `(config.seed, r)`, which makes the output independent of evaluation
/// order and bit-reproducible for a fixed seed.
pub fn paired_bootstrap(
    systems: &[SystemScores],
    gold_labels: &[&str],
    config: &BootstrapConfig,
    unit: ResampleUnit,
) -> Result<BootstrapReport> {
    if systems.is_empty() || gold_labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = gold_labels.len();
    for s in systems {
        if s.scores.len() != n {
            return Err(Error::InvalidArgument(format!(
                "system {} has {} scores for {} queries",
                s.name,
                s.scores.len(),
                n
            )));
        }
    }
    if config.resamples == 0 {
        return Err(Error::InvalidArgument("resamples must be >= 1".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
    }

    // For law-unit resampling the per-law means are fixed; only which laws
    // enter each replicate varies.
    let mode = match unit {
        ResampleUnit::Query => AggMode::Micro,
        ResampleUnit::Law => AggMode::Macro,
    };
    let point: Vec<f64> = systems
        .iter()
        .map(|s| aggregate_scores(&s.scores, gold_labels, mode))
        .collect::<Result<_>>()?;

    let per_system_units: Vec<Vec<f64>> = match unit {
        ResampleUnit::Query => systems.iter().map(|s| s.scores.clone()).collect(),
        ResampleUnit::Law => systems
            .iter()
            .map(|s| law_means(&s.scores, gold_labels))
            .collect(),
    };
    let n_units = per_system_units[0].len();

    let mut replicate_aggs: Vec<Vec<f64>> = vec![Vec::with_capacity(config.resamples); systems.len()];
    let mut draw = vec![0usize; n_units];
    for r in 0..config.resamples {
        let mut rng = seeded_rng(derive_seed(config.seed, r as u64));
        for slot in draw.iter_mut() {
            *slot = rng.gen_range(0..n_units);
        }
        for (s, units) in per_system_units.iter().enumerate() {
            let sum: f64 = draw.iter().map(|&i| units[i]).sum();
            replicate_aggs[s].push(sum / n_units as f64);
        }
    }

    let mut report = BootstrapReport {
        systems: Vec::new(),
        deltas: Vec::new(),
    };
    for (s, sys) in systems.iter().enumerate() {
        report.systems.push((
            sys.name.clone(),
            interval(point[s], replicate_aggs[s].clone(), config.alpha),
        ));
    }
    for a in 0..systems.len() {
        for b in (a + 1)..systems.len() {
            let deltas: Vec<f64> = replicate_aggs[b]
                .iter()
                .zip(&replicate_aggs[a])
                .map(|(x, y)| x - y)
                .collect();
            report.deltas.push((
                systems[a].name.clone(),
                systems[b].name.clone(),
                interval(point[b] - point[a], deltas, config.alpha),
            ));
        }
    }
    Ok(report)
}

/// One row of the abstention sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub coverage: f64,
    pub majority_acc: f64,
    pub precision: f64,
}

/// Full sweep table plus the selected operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Threshold with maximal precision among rows meeting the coverage
    /// floor (ties to the smaller threshold); absent when no row qualifies.
    pub selected: Option<SweepRow>,
}

/// The default sweep grid: 0.00 to 1.00 in steps of 0.01.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Sweeps the predominance threshold: at each candidate, a query counts as
/// covered when its plurality fraction reaches the threshold; accuracy
/// counts abstentions as wrong; precision is accuracy among the covered.
pub fn routing_sweep(
    results: &[QueryResult],
    k: usize,
    thresholds: &[f64],
    min_coverage: f64,
) -> Result<SweepReport> {
    if results.is_empty() || thresholds.is_empty() {
        return Err(Error::EmptyInput);
    }
    // Plurality fraction and correctness per query are threshold-free.
    let mut stats = Vec::with_capacity(results.len());
    for r in results {
        let labels = top_k(r, k)?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in &labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        let mut plurality = "";
        let mut plurality_count = 0usize;
        let mut seen: Vec<&str> = Vec::new();
        for l in &labels {
            if seen.contains(&l.as_str()) {
                continue;
            }
            seen.push(l);
            let c = counts[l.as_str()];
            if c > plurality_count {
                plurality_count = c;
                plurality = l;
            }
        }
        let m = plurality_count as f64 / k as f64;
        stats.push((m, plurality == r.gold_label));
    }

    let n = stats.len() as f64;
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let covered = stats.iter().filter(|(m, _)| *m >= t).count();
        let correct = stats.iter().filter(|(m, ok)| *m >= t && *ok).count();
        let coverage = covered as f64 / n;
        let majority_acc = correct as f64 / n;
        let precision = if covered == 0 {
            0.0
        } else {
            correct as f64 / covered as f64
        };
        rows.push(SweepRow {
            threshold: t,
            coverage,
            majority_acc,
            precision,
        });
    }
    let mut selected: Option<SweepRow> = None;
    for row in &rows {
        if row.coverage >= min_coverage
            && selected.map_or(true, |s| row.precision > s.precision)
        {
            selected = Some(*row);
        }
    }
    Ok(SweepReport { rows, selected })
}

/// Per-cluster mass margins for one trained encoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L2MassReport {
    /// margin_c = mean over law samples of feature weight c squared, minus
    /// cluster c's share of the law's samples.
    pub margins: Vec<f64>,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    /// Clusters whose margin falls below -3e-3.
    pub flagged: Vec<usize>,
}

/// Stacks each cluster's reference rows (in cluster order) back into the
/// law's training sample matrix with matching assignments, for feeding the
/// mass diagnostic without keeping the raw training data around.
pub fn stacked_training_samples(encoder: &ClusterSet) -> (DenseMatrix, Vec<usize>) {
    let dim = encoder.lexical_dim();
    let total: usize = encoder
        .cluster_models()
        .iter()
        .map(|m| m.n_samples())
        .sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut assignments = Vec::with_capacity(total);
    for (c, model) in encoder.cluster_models().iter().enumerate() {
        data.extend_from_slice(model.reference().data());
        assignments.extend(std::iter::repeat(c).take(model.n_samples()));
    }
    let samples = DenseMatrix::from_rows(total, dim, data).expect("reference rows are finite");
    (samples, assignments)
}

/// Empirical cluster-mass check: every cluster's mean squared feature
/// weight over the law's own samples should not fall materially below the
/// cluster's sample share.
pub fn l2_mass_diagnostic(
    encoder: &ClusterSet,
    law_samples: &DenseMatrix,
    assignments: &[usize],
) -> Result<L2MassReport> {
    let n = law_samples.rows();
    if n == 0 || assignments.len() != n {
        return Err(Error::EmptyInput);
    }
    let n_clusters = encoder.n_clusters();
    let mut counts = vec![0usize; n_clusters];
    for &a in assignments {
        if a >= n_clusters {
            return Err(Error::InvalidArgument(format!(
                "assignment {} out of range for {} clusters",
                a, n_clusters
            )));
        }
        counts[a] += 1;
    }
    let mut sq_sums = vec![0.0; n_clusters];
    for i in 0..n {
        let phi = feature_map(law_samples.row(i), encoder)?;
        for c in 0..n_clusters {
            sq_sums[c] += phi[c] * phi[c];
        }
    }
    let margins: Vec<f64> = (0..n_clusters)
        .map(|c| sq_sums[c] / n as f64 - counts[c] as f64 / n as f64)
        .collect();
    let mut sorted = margins.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let flagged = (0..n_clusters)
        .filter(|&c| margins[c] < -L2_MASS_TOLERANCE)
        .collect();
    Ok(L2MassReport {
        min: sorted[0],
        median,
        mean: margins.iter().sum::<f64>() / n_clusters as f64,
        margins,
        flagged,
    })
}

/// Mean per-query stage timings in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingProfile {
    pub embed_ms: f64,
    pub search_ms: f64,
    pub total_ms: f64,
    pub queries: usize,
}

/// Times the two pipeline stages per query over repeated batches, skipping
/// warm-up batches (default 3). The total is decomposed from the same
/// clock readings, so it equals embed + search exactly.
pub fn timing_profile<E, S>(
    n_queries: usize,
    warmup_batches: usize,
    measured_batches: usize,
    mut embed: E,
    mut search: S,
) -> TimingProfile
where
    E: FnMut(usize),
    S: FnMut(usize),
{
    let mut embed_total = 0.0f64;
    let mut search_total = 0.0f64;
    let mut measured_queries = 0usize;
    if n_queries == 0 || measured_batches == 0 {
        return TimingProfile {
            embed_ms: 0.0,
            search_ms: 0.0,
            total_ms: 0.0,
            queries: 0,
        };
    }
    for batch in 0..warmup_batches + measured_batches {
        let measured = batch >= warmup_batches;
        for q in 0..n_queries {
            let t0 = Instant::now();
            embed(q);
            let t1 = Instant::now();
            search(q);
            let t2 = Instant::now();
            if measured {
                embed_total += (t1 - t0).as_secs_f64() * 1e3;
                search_total += (t2 - t1).as_secs_f64() * 1e3;
                measured_queries += 1;
            }
        }
    }
    TimingProfile {
        embed_ms: embed_total / measured_queries as f64,
        search_ms: search_total / measured_queries as f64,
        total_ms: (embed_total + search_total) / measured_queries as f64,
        queries: measured_queries,
    }
}

/// One aggregated metric row of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub system: String,
    pub metric: String,
    pub cutoff: usize,
    pub mode: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// One paired system delta.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub cutoff: usize,
    pub mode: String,
    pub system_a: String,
    pub system_b: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Assembled evaluation report, serialized by the command-line tools.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
    pub deltas: Vec<DeltaRow>,
    pub by_style: BTreeMap<String, Vec<MetricRow>>,
    pub sweep: Option<SweepReport>,
    pub l2_mass: BTreeMap<String, L2MassReport>,
    pub timing: Option<TimingProfile>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qr(gold: &str, labels: &[&str]) -> QueryResult {
        QueryResult {
            query_id: "q".into(),
            gold_label: gold.into(),
            ranked_labels: labels.iter().map(|s| s.to_string()).collect(),
            style_tag: None,
        }
    }

    #[test]
    fn ranking_metrics_dedup_oracle() {
        let r = qr("B", &["A", "A", "B", "C"]);
        let (hit, top1, mrr) = ranking_metrics(&r, 4).unwrap();
        assert_eq!(hit, 1.0);
        assert_eq!(top1, 0.0);
        assert_eq!(mrr, 0.5); // distinct list (A, B, C), gold at rank 2
    }

    #[test]
    fn ranking_metrics_edge_cases() {
        let r = qr("A", &["A", "B"]);
        assert_eq!(ranking_metrics(&r, 2).unwrap(), (1.0, 1.0, 1.0));
        let r = qr("Z", &["A", "B"]);
        assert_eq!(ranking_metrics(&r, 2).unwrap(), (0.0, 0.0, 0.0));
        assert!(matches!(
            ranking_metrics(&r, 3),
            Err(Error::CutoffTooLarge { k: 3, len: 2 })
        ));
    }

    #[test]
    fn consensus_metrics_tie_and_lift_oracle() {
        let mut priors = BTreeMap::new();
        priors.insert("A".to_string(), 0.2);
        let r = qr("A", &["A", "A", "B", "C", "C"]);
        let (majacc, consfrac, lift) = consensus_metrics(&r, 5, 0.1, &priors).unwrap();
        assert_eq!(majacc, 1.0); // A/C tie at 2; A occurs first
        assert_eq!(consfrac, 0.4);
        assert_eq!(lift, 2.0);
    }

    #[test]
    fn consensus_pure_neighborhood() {
        let mut priors = BTreeMap::new();
        priors.insert("G".to_string(), 0.25);
        let r = qr("G", &["G", "G", "G"]);
        let (majacc, consfrac, lift) = consensus_metrics(&r, 3, 0.1, &priors).unwrap();
        assert_eq!(majacc, 1.0);
        assert_eq!(consfrac, 1.0);
        assert_eq!(lift, 4.0);
    }

    #[test]
    fn consensus_gold_absent() {
        let mut priors = BTreeMap::new();
        priors.insert("Z".to_string(), 0.5);
        let r = qr("Z", &["A", "B", "A"]);
        let (majacc, consfrac, lift) = consensus_metrics(&r, 3, 0.1, &priors).unwrap();
        assert_eq!(majacc, 0.0);
        assert_eq!(consfrac, 0.0);
        assert_eq!(lift, 0.0);
    }

    #[test]
    fn missing_prior_is_an_error() {
        let r = qr("A", &["A"]);
        let empty = BTreeMap::new();
        assert!(matches!(
            consensus_metrics(&r, 1, 0.1, &empty),
            Err(Error::MissingPrior(l)) if l == "A"
        ));
    }

    #[test]
    fn aggregate_micro_macro_oracle() {
        // Law A: scores {1, 1}; law B: {0}.
        let scores = [1.0, 1.0, 0.0];
        let laws = ["A", "A", "B"];
        let micro = aggregate_scores(&scores, &laws, AggMode::Micro).unwrap();
        let macro_ = aggregate_scores(&scores, &laws, AggMode::Macro).unwrap();
        assert!((micro - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(macro_, 0.5);
    }

    #[test]
    fn aggregate_singleton_and_constant() {
        assert_eq!(
            aggregate_scores(&[0.7], &["A"], AggMode::Micro).unwrap(),
            0.7
        );
        assert_eq!(
            aggregate_scores(&[0.7], &["A"], AggMode::Macro).unwrap(),
            0.7
        );
        let scores = [0.25; 6];
        let laws = ["A", "A", "B", "B", "C", "C"];
        let micro = aggregate_scores(&scores, &laws, AggMode::Micro).unwrap();
        let macro_ = aggregate_scores(&scores, &laws, AggMode::Macro).unwrap();
        assert_eq!(micro, 0.25);
        assert_eq!(macro_, 0.25);
    }

    #[test]
    fn metrics_match_brute_force_counting() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(23);
        let alphabet: Vec<String> = (0..10).map(|i| format!("L{i}")).collect();
        let mut priors = BTreeMap::new();
        for l in &alphabet {
            priors.insert(l.clone(), 0.1);
        }
        for _ in 0..1000 {
            let len = rng.gen_range(1..=20);
            let labels: Vec<&str> = (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())].as_str())
                .collect();
            let gold = alphabet[rng.gen_range(0..alphabet.len())].clone();
            let k = rng.gen_range(1..=len);
            let r = QueryResult {
                query_id: "q".into(),
                gold_label: gold.clone(),
                ranked_labels: labels.iter().map(|s| s.to_string()).collect(),
                style_tag: None,
            };

            let (hit, top1, mrr) = ranking_metrics(&r, k).unwrap();
            // Naive recount with explicit loops.
            let top: Vec<&str> = labels[..k].to_vec();
            let naive_hit = if top.iter().any(|l| *l == gold) { 1.0 } else { 0.0 };
            let naive_top1 = if top[0] == gold { 1.0 } else { 0.0 };
            let mut dedup: Vec<&str> = Vec::new();
            for l in &top {
                let mut present = false;
                for d in &dedup {
                    if d == l {
                        present = true;
                    }
                }
                if !present {
                    dedup.push(l);
                }
            }
            let mut naive_mrr = 0.0;
            for (i, d) in dedup.iter().enumerate() {
                if *d == gold {
                    naive_mrr = 1.0 / (i + 1) as f64;
                    break;
                }
            }
            assert_eq!(hit, naive_hit);
            assert_eq!(top1, naive_top1);
            assert!((mrr - naive_mrr).abs() < 1e-12);
            assert!(hit >= top1);

            let (majacc, consfrac, lift) = consensus_metrics(&r, k, 0.1, &priors).unwrap();
            // Plurality by scanning all candidate labels and counting.
            let mut best_label = "";
            let mut best_count = 0usize;
            let mut best_first = usize::MAX;
            for cand in &alphabet {
                let mut count = 0;
                let mut first = usize::MAX;
                for (i, l) in top.iter().enumerate() {
                    if *l == cand.as_str() {
                        count += 1;
                        if first == usize::MAX {
                            first = i;
                        }
                    }
                }
                if count > best_count || (count == best_count && count > 0 && first < best_first)
                {
                    best_count = count;
                    best_label = cand;
                    best_first = first;
                }
            }
            let m = best_count as f64 / k as f64;
            let naive_majacc = if best_label == gold && m >= 0.1 { 1.0 } else { 0.0 };
            let mut gold_count = 0;
            for l in &top {
                if *l == gold {
                    gold_count += 1;
                }
            }
            let naive_consfrac = gold_count as f64 / k as f64;
            assert_eq!(majacc, naive_majacc);
            assert!((consfrac - naive_consfrac).abs() < 1e-12);
            assert!((lift - naive_consfrac / 0.1).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&consfrac));
        }
    }

    #[test]
    fn metrics_invariant_under_relabeling() {
        let mut priors = BTreeMap::new();
        priors.insert("A".to_string(), 0.3);
        priors.insert("B".to_string(), 0.7);
        let r = qr("A", &["B", "A", "A", "B"]);
        let before_rank = ranking_metrics(&r, 4).unwrap();
        let before_cons = consensus_metrics(&r, 4, 0.1, &priors).unwrap();

        // Swap A <-> B everywhere.
        let swap = |l: &str| if l == "A" { "B" } else { "A" };
        let mut priors2 = BTreeMap::new();
        priors2.insert("B".to_string(), 0.3);
        priors2.insert("A".to_string(), 0.7);
        let r2 = QueryResult {
            query_id: r.query_id.clone(),
            gold_label: swap(&r.gold_label).to_string(),
            ranked_labels: r.ranked_labels.iter().map(|l| swap(l).to_string()).collect(),
            style_tag: None,
        };
        assert_eq!(ranking_metrics(&r2, 4).unwrap(), before_rank);
        assert_eq!(consensus_metrics(&r2, 4, 0.1, &priors2).unwrap(), before_cons);
    }

    #[test]
    fn bootstrap_constant_scores_collapse() {
        let systems = [SystemScores {
            name: "s".into(),
            scores: vec![0.5; 40],
        }];
        let laws: Vec<&str> = vec!["A"; 40];
        let config = BootstrapConfig {
            resamples: 200,
            ..BootstrapConfig::default()
        };
        let report = paired_bootstrap(&systems, &laws, &config, ResampleUnit::Query).unwrap();
        let est = report.systems[0].1;
        assert_eq!(est.mean, 0.5);
        assert_eq!(est.lo, est.mean);
        assert_eq!(est.hi, est.mean);
    }

    #[test]
    fn bootstrap_self_delta_is_zero() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(3);
        let scores: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
        let systems = [
            SystemScores {
                name: "a".into(),
                scores: scores.clone(),
            },
            SystemScores {
                name: "b".into(),
                scores,
            },
        ];
        let laws: Vec<&str> = vec!["L"; 50];
        let config = BootstrapConfig {
            resamples: 100,
            ..BootstrapConfig::default()
        };
        let report = paired_bootstrap(&systems, &laws, &config, ResampleUnit::Query).unwrap();
        let delta = report.deltas[0].2;
        assert_eq!(delta.mean, 0.0);
        assert_eq!(delta.lo, 0.0);
        assert_eq!(delta.hi, 0.0);
    }

    #[test]
    fn bootstrap_bernoulli_width_matches_normal_approx() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(41);
        let scores: Vec<f64> = (0..1000)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 })
            .collect();
        let systems = [SystemScores {
            name: "s".into(),
            scores,
        }];
        let laws: Vec<&str> = vec!["L"; 1000];
        let config = BootstrapConfig::default(); // 5000 resamples
        let report = paired_bootstrap(&systems, &laws, &config, ResampleUnit::Query).unwrap();
        let est = report.systems[0].1;
        let width = est.hi - est.lo;
        let expected = 2.0 * 1.96 * (0.25f64 / 1000.0).sqrt(); // ~0.062
        assert!(
            (width - expected).abs() < 0.2 * expected,
            "width {width}, expected ~{expected}"
        );
    }

    #[test]
    fn bootstrap_is_seed_reproducible() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(8);
        let scores: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.0)).collect();
        let laws_owned: Vec<String> = (0..100).map(|i| format!("L{}", i % 5)).collect();
        let laws: Vec<&str> = laws_owned.iter().map(|s| s.as_str()).collect();
        let systems = [SystemScores {
            name: "s".into(),
            scores,
        }];
        let config = BootstrapConfig {
            resamples: 500,
            ..BootstrapConfig::default()
        };
        let a = paired_bootstrap(&systems, &laws, &config, ResampleUnit::Law).unwrap();
        let b = paired_bootstrap(&systems, &laws, &config, ResampleUnit::Law).unwrap();
        assert_eq!(a.systems[0].1, b.systems[0].1);
    }

    #[test]
    fn bootstrap_law_unit_resamples_laws() {
        // Two laws with constant-but-different scores: replicates hit
        // exactly {0, 0.5, 1}, and the 95% CI spans the extremes.
        let systems = [SystemScores {
            name: "s".into(),
            scores: vec![1.0, 1.0, 0.0],
        }];
        let laws = ["A", "A", "B"];
        let config = BootstrapConfig::default();
        let report = paired_bootstrap(&systems, &laws, &config, ResampleUnit::Law).unwrap();
        let est = report.systems[0].1;
        assert_eq!(est.mean, 0.5); // macro point estimate
        assert_eq!(est.lo, 0.0);
        assert_eq!(est.hi, 1.0);
    }

    #[test]
    fn sweep_three_query_oracle() {
        // m in {0.2, 0.4, 1.0} with correctness {0, 1, 1} at k = 5.
        let results = [
            qr("X", &["A", "B", "C", "D", "E"]), // plurality A (m 0.2), wrong
            qr("A", &["A", "A", "B", "C", "D"]), // plurality A (m 0.4), right
            qr("A", &["A", "A", "A", "A", "A"]), // m 1.0, right
        ];
        let report = routing_sweep(&results, 5, &[0.0, 0.3, 1.5], 0.5).unwrap();
        let at = |t: f64| *report.rows.iter().find(|r| r.threshold == t).unwrap();

        let r0 = at(0.0);
        assert_eq!(r0.coverage, 1.0);
        assert!((r0.majority_acc - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r0.precision, r0.majority_acc);

        let r3 = at(0.3);
        assert!((r3.coverage - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r3.precision, 1.0);
        assert!((r3.majority_acc - 2.0 / 3.0).abs() < 1e-12);

        let r15 = at(1.5);
        assert_eq!(r15.coverage, 0.0);
        assert_eq!(r15.precision, 0.0);

        // Selection: best precision with coverage >= 0.5 is tau = 0.3.
        assert_eq!(report.selected.unwrap().threshold, 0.3);
    }

    #[test]
    fn sweep_selection_prefers_smaller_threshold_on_ties() {
        let results = [qr("A", &["A", "A"]), qr("B", &["B", "A"])];
        // Both thresholds cover everything with equal precision.
        let report = routing_sweep(&results, 2, &[0.1, 0.2], 0.5).unwrap();
        assert_eq!(report.selected.unwrap().threshold, 0.1);
    }

    #[test]
    fn l2_mass_one_hot_is_exact_zero() {
        use crate::cluster::ClusterSet;
        use crate::geometry::build_model;
        let a = DenseMatrix::from_rows(2, 2, vec![0.6, 0.4, 1.4, -0.4]).unwrap();
        let b = DenseMatrix::from_rows(2, 2, vec![-0.6, 0.4, -1.4, -0.4]).unwrap();
        let models = vec![build_model(a).unwrap(), build_model(b).unwrap()];
        let protos = DenseMatrix::from_rows(2, 1, vec![1.0, -1.0]).unwrap();
        let encoder =
            ClusterSet::from_parts(vec![0, 0, 1, 1], models, protos, 2.0, 1).unwrap();
        let (samples, assignments) = stacked_training_samples(&encoder);
        let report = l2_mass_diagnostic(&encoder, &samples, &assignments).unwrap();
        assert_eq!(report.margins, vec![0.0, 0.0]);
        assert!(report.flagged.is_empty());
    }

    #[test]
    fn l2_mass_uniform_split_margin() {
        use crate::cluster::ClusterSet;
        use crate::geometry::build_model;
        // Two identical clusters: every sample gets feature weights
        // (0.5, 0.5), so each margin is 0.25 - 0.5 = -0.25.
        let refs = DenseMatrix::from_rows(2, 2, vec![0.6, 0.4, 1.4, -0.4]).unwrap();
        let models = vec![
            build_model(refs.clone()).unwrap(),
            build_model(refs).unwrap(),
        ];
        let protos = DenseMatrix::from_rows(2, 1, vec![1.0, -1.0]).unwrap();
        let encoder =
            ClusterSet::from_parts(vec![0, 0, 1, 1], models, protos, 2.0, 2).unwrap();
        let (samples, assignments) = stacked_training_samples(&encoder);
        let report = l2_mass_diagnostic(&encoder, &samples, &assignments).unwrap();
        for m in &report.margins {
            assert!((m + 0.25).abs() < 1e-12);
        }
        assert_eq!(report.flagged, vec![0, 1]);
        assert!((report.min + 0.25).abs() < 1e-12);
        assert!((report.median + 0.25).abs() < 1e-12);
        assert!((report.mean + 0.25).abs() < 1e-12);
    }

    #[test]
    fn timing_total_is_additive() {
        fn spin(us: u64) {
            let t = Instant::now();
            while t.elapsed().as_micros() < us as u128 {}
        }
        let profile = timing_profile(4, 1, 2, |_| spin(100), |_| spin(200));
        assert_eq!(profile.queries, 8);
        assert!(profile.embed_ms > 0.0);
        assert!(profile.search_ms > 0.0);
        let sum = profile.embed_ms + profile.search_ms;
        assert!((profile.total_ms - sum).abs() <= 0.05 * sum);
    }

    #[test]
    fn timing_stable_under_more_batches() {
        fn spin(us: u64) {
            let t = Instant::now();
            while t.elapsed().as_micros() < us as u128 {}
        }
        let a = timing_profile(4, 1, 2, |_| spin(300), |_| spin(300));
        let b = timing_profile(4, 1, 4, |_| spin(300), |_| spin(300));
        assert!((a.total_ms - b.total_ms).abs() <= 0.3 * a.total_ms.max(b.total_ms));
    }

    #[test]
    fn style_grouping_aggregates_separately() {
        let mut r1 = qr("A", &["A", "B"]);
        r1.style_tag = Some("paraphrase".into());
        let mut r2 = qr("A", &["B", "A"]);
        r2.style_tag = Some("keyword".into());
        let params = MetricParams::default();
        let groups =
            aggregate_by_style(&[r1, r2], Metric::Top1, 2, AggMode::Micro, &params).unwrap();
        assert_eq!(groups["paraphrase"], 1.0);
        assert_eq!(groups["keyword"], 0.0);
    }
}
