//! `kahm evaluate`: route queries through the registry, search the corpus,
//! and report retrieval metrics with bootstrap confidence intervals.
//!
//! The command always evaluates the registry's own pipeline (system `kahm`).
//! `--lexical-corpus` adds a surface-feature baseline searched with the raw
//! query vectors, and `--compare` adds systems replayed from run files
//! produced by earlier invocations. All systems are scored on the same
//! queries, so bootstrap deltas are paired.
//!
//! Every output file is byte-deterministic for fixed inputs, flags, and
//! seeds; wall-clock timings are printed to stdout only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use kahm::{
    aggregate_scores, build_index, default_threshold_grid, encode_query, l2_mass_diagnostic,
    paired_bootstrap, query_score, routing_sweep, search, stacked_training_samples, timing_profile,
    AggMode, BootstrapConfig, DeltaRow, EvalReport, Metric, MetricParams, MetricRow, QueryResult,
    ResampleUnit, SystemScores, VectorBundle,
};

use crate::common::{ensure_out_dir, read_labeled_bundle, resolve_jobs, thread_pool, write_json};
use crate::manifest::write_run_manifest;
use crate::{CliError, ResultExt};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Trained encoder registry file.
    #[arg(long)]
    pub registry: PathBuf,
    /// Semantic corpus bundle (labels required).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Query bundle in the lexical space; its labels are the gold laws.
    #[arg(long)]
    pub queries: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Ranking cutoffs, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![3, 5, 10, 15, 20])]
    pub cutoffs: Vec<usize>,
    /// Predominance threshold for the consensus metrics.
    #[arg(long, default_value_t = 0.10)]
    pub tau: f64,
    /// Bootstrap resamples (0 disables interval estimation).
    #[arg(long, default_value_t = 5000)]
    pub bootstrap: usize,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also report macro (per-law mean) aggregates.
    #[arg(long = "macro")]
    pub macro_agg: bool,
    /// Sweep the abstention threshold and report the operating point.
    #[arg(long)]
    pub sweep: bool,
    /// Coverage floor for selecting the sweep operating point.
    #[arg(long = "min-coverage", default_value_t = 0.5)]
    pub min_coverage: f64,
    /// Lexical corpus bundle for the surface-feature baseline system.
    #[arg(long = "lexical-corpus")]
    pub lexical_corpus: Option<PathBuf>,
    /// Run files (from earlier evaluations) to score as extra systems.
    #[arg(long = "compare", value_name = "RUN_JSON")]
    pub compare: Vec<PathBuf>,
    /// Worker threads (default: KAHM_JOBS env var, then all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Replayable record of one system's retrieval pass.
#[derive(Serialize, Deserialize)]
struct RunFile {
    system: String,
    /// Ranked list length stored per query.
    k: usize,
    queries: Vec<RunQuery>,
}

#[derive(Serialize, Deserialize)]
struct RunQuery {
    id: String,
    gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    selected_law: Option<String>,
    #[serde(default)]
    zero_norm: bool,
    ranked_ids: Vec<String>,
    ranked_labels: Vec<String>,
    scores: Vec<f64>,
}

/// One system ready for scoring: a name plus per-query results aligned with
/// the evaluation query order.
struct System {
    name: String,
    results: Vec<QueryResult>,
}

fn hits_to_run_query(
    id: &str,
    gold: &str,
    selected_law: Option<String>,
    zero_norm: bool,
    hits: Vec<kahm::SearchHit>,
) -> RunQuery {
    let mut ranked_ids = Vec::with_capacity(hits.len());
    let mut ranked_labels = Vec::with_capacity(hits.len());
    let mut scores = Vec::with_capacity(hits.len());
    for h in hits {
        ranked_ids.push(h.id);
        ranked_labels.push(h.label);
        scores.push(h.score);
    }
    RunQuery {
        id: id.to_string(),
        gold: gold.to_string(),
        selected_law,
        zero_norm,
        ranked_ids,
        ranked_labels,
        scores,
    }
}

fn run_file_to_system(run: &RunFile, name: String, queries: &VectorBundle) -> System {
    let results = run
        .queries
        .iter()
        .map(|q| QueryResult {
            query_id: q.id.clone(),
            gold_label: q.gold.clone(),
            ranked_labels: q.ranked_labels.clone(),
            style_tag: None,
        })
        .collect();
    debug_assert_eq!(run.queries.len(), queries.ids.len());
    System { name, results }
}

/// Align a loaded run file with the evaluation query order; id or gold
/// disagreements are counted and rejected.
fn align_run_file(run: RunFile, path: &Path, queries: &VectorBundle) -> Result<RunFile, CliError> {
    let mut by_id: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, id) in queries.ids.iter().enumerate() {
        by_id.insert(id, i);
    }
    let mut slots: Vec<Option<RunQuery>> = (0..queries.ids.len()).map(|_| None).collect();
    let mut unexpected = 0usize;
    let mut duplicates = 0usize;
    for q in run.queries {
        match by_id.get(q.id.as_str()) {
            Some(&i) if slots[i].is_none() => slots[i] = Some(q),
            Some(_) => duplicates += 1,
            None => unexpected += 1,
        }
    }
    let missing = slots.iter().filter(|s| s.is_none()).count();
    if missing + unexpected + duplicates > 0 {
        return Err(CliError::data(format!(
            "run file {}: query ids disagree with the evaluation set \
             ({missing} missing, {unexpected} unexpected, {duplicates} duplicated)",
            path.display()
        )));
    }
    let aligned: Vec<RunQuery> = slots.into_iter().map(|s| s.expect("no slot missing")).collect();
    let gold = queries.labels.as_ref().expect("labels checked by caller");
    let gold_mismatches = aligned
        .iter()
        .zip(gold)
        .filter(|(q, g)| &q.gold != *g)
        .count();
    if gold_mismatches > 0 {
        return Err(CliError::data(format!(
            "run file {}: gold labels disagree with the query bundle on {gold_mismatches} of {} queries",
            path.display(),
            aligned.len()
        )));
    }
    Ok(RunFile { system: run.system, k: run.k, queries: aligned })
}

/// Distinct display name per system: later duplicates get `-2`, `-3`, ...
fn unique_name(base: &str, used: &mut BTreeMap<String, usize>) -> String {
    let count = used.entry(base.to_string()).or_insert(0);
    *count += 1;
    if *count == 1 {
        base.to_string()
    } else {
        format!("{base}-{count}")
    }
}

fn print_metric_block(rows: &[MetricRow], system: &str, mode: &str, cutoffs: &[usize]) {
    println!("== {system} ({mode}) ==");
    print!("{:>7}", "cutoff");
    for m in Metric::ALL {
        print!(" {:>9}", m.to_string());
    }
    println!();
    for &k in cutoffs {
        print!("{k:>7}");
        for m in Metric::ALL {
            let row = rows
                .iter()
                .find(|r| {
                    r.system == system
                        && r.mode == mode
                        && r.cutoff == k
                        && r.metric == m.to_string()
                })
                .expect("row computed for every cell");
            print!(" {:>9.4}", row.mean);
        }
        println!();
    }
    println!();
}

pub fn run(args: EvaluateArgs, invocation: &[String]) -> Result<(), CliError> {
    let jobs = resolve_jobs(args.jobs)?;
    let pool = thread_pool(jobs)?;

    let registry = kahm::load_registry(&args.registry).ctx("loading registry")?;
    let corpus = read_labeled_bundle(&args.corpus, "corpus")?;
    let queries = read_labeled_bundle(&args.queries, "query")?;
    let gold: Vec<String> = queries.labels.clone().expect("labels checked");
    let n_queries = queries.ids.len();
    if n_queries == 0 {
        return Err(CliError::validation("query bundle is empty"));
    }

    // Cutoffs: sorted, deduplicated, and bounded by the corpus size.
    let mut cutoffs = args.cutoffs.clone();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    if cutoffs.is_empty() {
        return Err(CliError::validation("at least one cutoff is required"));
    }
    if cutoffs[0] == 0 {
        return Err(CliError::validation("cutoffs must be >= 1"));
    }
    let k_max = *cutoffs.last().expect("nonempty");
    if k_max > corpus.ids.len() {
        return Err(CliError::from(kahm::Error::CutoffTooLarge {
            k: k_max,
            len: corpus.ids.len(),
        })
        .context("corpus"));
    }

    // Corpus label shares are the priors for the lift metric.
    let corpus_labels = corpus.labels.clone().expect("labels checked");
    let mut priors: BTreeMap<String, f64> = BTreeMap::new();
    for label in &corpus_labels {
        *priors.entry(label.clone()).or_insert(0.0) += 1.0;
    }
    for share in priors.values_mut() {
        *share /= corpus_labels.len() as f64;
    }
    let params = MetricParams { tau: args.tau, priors };

    // Primary system: gate each query, then exact inner-product search.
    let index = build_index(corpus.matrix.clone(), corpus.ids.clone(), corpus_labels.clone())
        .ctx("corpus")?;
    let encoded: Vec<(kahm::EncodedQuery, Vec<kahm::SearchHit>)> = pool.install(|| {
        (0..n_queries)
            .into_par_iter()
            .map(|i| {
                let enc = encode_query(&registry, queries.matrix.row(i), true)
                    .ctx(format!("query {}", queries.ids[i]))?;
                let hits = search(&index, &enc.embedding, k_max)
                    .ctx(format!("query {}", queries.ids[i]))?;
                Ok((enc, hits))
            })
            .collect::<Result<_, CliError>>()
    })?;
    let zero_norm_count = encoded.iter().filter(|(e, _)| e.zero_norm).count();

    ensure_out_dir(&args.out)?;
    let mut outputs: Vec<String> = Vec::new();
    let mut inputs: Vec<String> = vec![
        args.registry.display().to_string(),
        args.corpus.display().to_string(),
        args.queries.display().to_string(),
    ];

    let kahm_run = RunFile {
        system: "kahm".to_string(),
        k: k_max,
        queries: encoded
            .iter()
            .zip(queries.ids.iter().zip(&gold))
            .map(|((enc, hits), (id, g))| {
                hits_to_run_query(
                    id,
                    g,
                    Some(enc.law_id.clone()),
                    enc.zero_norm,
                    hits.clone(),
                )
            })
            .collect(),
    };
    write_json(&args.out, "run_kahm.json", &kahm_run)?;
    outputs.push("run_kahm.json".to_string());

    let mut used_names: BTreeMap<String, usize> = BTreeMap::new();
    let mut systems: Vec<System> = Vec::new();
    systems.push(run_file_to_system(
        &kahm_run,
        unique_name("kahm", &mut used_names),
        &queries,
    ));

    // Surface-feature baseline: search the lexical corpus with raw queries.
    if let Some(lex_path) = &args.lexical_corpus {
        inputs.push(lex_path.display().to_string());
        let lex_corpus = read_labeled_bundle(lex_path, "lexical corpus")?;
        let lex_labels = lex_corpus.labels.clone().expect("labels checked");
        let lex_index =
            build_index(lex_corpus.matrix.clone(), lex_corpus.ids.clone(), lex_labels)
                .ctx("lexical corpus")?;
        if k_max > lex_corpus.ids.len() {
            return Err(CliError::from(kahm::Error::CutoffTooLarge {
                k: k_max,
                len: lex_corpus.ids.len(),
            })
            .context("lexical corpus"));
        }
        let lex_hits: Vec<Vec<kahm::SearchHit>> = pool.install(|| {
            (0..n_queries)
                .into_par_iter()
                .map(|i| {
                    search(&lex_index, queries.matrix.row(i), k_max)
                        .ctx(format!("query {}", queries.ids[i]))
                })
                .collect::<Result<_, CliError>>()
        })?;
        let lex_run = RunFile {
            system: "lexical".to_string(),
            k: k_max,
            queries: lex_hits
                .into_iter()
                .zip(queries.ids.iter().zip(&gold))
                .map(|(hits, (id, g))| hits_to_run_query(id, g, None, false, hits))
                .collect(),
        };
        write_json(&args.out, "run_lexical.json", &lex_run)?;
        outputs.push("run_lexical.json".to_string());
        systems.push(run_file_to_system(
            &lex_run,
            unique_name("lexical", &mut used_names),
            &queries,
        ));
    }

    // Replayed systems from run files.
    for path in &args.compare {
        inputs.push(path.display().to_string());
        let text = std::fs::read_to_string(path).ctx(format!("reading {}", path.display()))?;
        let run: RunFile =
            serde_json::from_str(&text).ctx(format!("parsing {}", path.display()))?;
        let run = align_run_file(run, path, &queries)?;
        let short = run
            .queries
            .iter()
            .map(|q| q.ranked_labels.len())
            .min()
            .unwrap_or(0);
        if short < k_max {
            return Err(CliError::from(kahm::Error::CutoffTooLarge { k: k_max, len: short })
                .context(format!("run file {}", path.display())));
        }
        let name = unique_name(&run.system.clone(), &mut used_names);
        systems.push(run_file_to_system(&run, name, &queries));
    }

    // Score every (system, metric, cutoff) cell, then aggregate.
    let gold_refs: Vec<&str> = gold.iter().map(String::as_str).collect();
    let mut modes = vec![AggMode::Micro];
    if args.macro_agg {
        modes.push(AggMode::Macro);
    }
    let mut report = EvalReport::default();
    for &k in &cutoffs {
        for metric in Metric::ALL {
            let scored: Vec<SystemScores> = systems
                .iter()
                .map(|sys| {
                    let scores = sys
                        .results
                        .iter()
                        .map(|r| query_score(r, metric, k, &params))
                        .collect::<Result<Vec<f64>, kahm::Error>>()
                        .ctx(format!("system {}", sys.name))?;
                    Ok(SystemScores { name: sys.name.clone(), scores })
                })
                .collect::<Result<_, CliError>>()?;
            for &mode in &modes {
                if args.bootstrap > 0 {
                    let unit = match mode {
                        AggMode::Micro => ResampleUnit::Query,
                        AggMode::Macro => ResampleUnit::Law,
                    };
                    let config = BootstrapConfig {
                        resamples: args.bootstrap,
                        seed: args.seed,
                        alpha: 0.05,
                    };
                    let boot = paired_bootstrap(&scored, &gold_refs, &config, unit)
                        .ctx(format!("{metric}@{k}"))?;
                    for (name, est) in &boot.systems {
                        report.rows.push(MetricRow {
                            system: name.clone(),
                            metric: metric.to_string(),
                            cutoff: k,
                            mode: mode.to_string(),
                            mean: est.mean,
                            ci_lo: est.lo,
                            ci_hi: est.hi,
                        });
                    }
                    for (a, b, est) in &boot.deltas {
                        report.deltas.push(DeltaRow {
                            metric: metric.to_string(),
                            cutoff: k,
                            mode: mode.to_string(),
                            system_a: a.clone(),
                            system_b: b.clone(),
                            mean: est.mean,
                            ci_lo: est.lo,
                            ci_hi: est.hi,
                        });
                    }
                } else {
                    let means: Vec<f64> = scored
                        .iter()
                        .map(|s| aggregate_scores(&s.scores, &gold_refs, mode))
                        .collect::<Result<_, kahm::Error>>()
                        .ctx(format!("{metric}@{k}"))?;
                    for (sys, mean) in scored.iter().zip(&means) {
                        report.rows.push(MetricRow {
                            system: sys.name.clone(),
                            metric: metric.to_string(),
                            cutoff: k,
                            mode: mode.to_string(),
                            mean: *mean,
                            ci_lo: *mean,
                            ci_hi: *mean,
                        });
                    }
                    for i in 0..scored.len() {
                        for j in i + 1..scored.len() {
                            let d = means[j] - means[i];
                            report.deltas.push(DeltaRow {
                                metric: metric.to_string(),
                                cutoff: k,
                                mode: mode.to_string(),
                                system_a: scored[i].name.clone(),
                                system_b: scored[j].name.clone(),
                                mean: d,
                                ci_lo: d,
                                ci_hi: d,
                            });
                        }
                    }
                }
            }
        }
    }

    // Optional abstention sweep over the primary system at the top cutoff.
    if args.sweep {
        let sweep = routing_sweep(
            &systems[0].results,
            k_max,
            &default_threshold_grid(),
            args.min_coverage,
        )
        .ctx("sweep")?;
        report.sweep = Some(sweep);
    }

    // Cluster-mass diagnostic for every law in the registry.
    for (law_id, encoder) in registry.entries() {
        let (samples, assignments) = stacked_training_samples(encoder);
        let mass = l2_mass_diagnostic(encoder, &samples, &assignments)
            .ctx(format!("law {law_id}"))?;
        report.l2_mass.insert(law_id.clone(), mass);
    }

    write_json(&args.out, "report.json", &report)?;
    outputs.push("report.json".to_string());

    write_run_manifest(
        &args.out,
        "evaluate",
        invocation,
        serde_json::json!({
            "cutoffs": cutoffs,
            "tau": args.tau,
            "bootstrap": args.bootstrap,
            "seed": args.seed,
            "macro": args.macro_agg,
            "sweep": args.sweep,
            "min_coverage": args.min_coverage,
            "jobs": jobs,
        }),
        inputs,
        outputs,
        args.seed,
    )?;

    // ---- stdout report ----
    println!(
        "evaluated {} queries against {} corpus units across {} systems",
        n_queries,
        corpus.ids.len(),
        systems.len()
    );
    if zero_norm_count > 0 {
        println!("warning: {zero_norm_count} queries produced zero-norm embeddings");
    }
    println!();
    for sys in &systems {
        for &mode in &modes {
            print_metric_block(&report.rows, &sys.name, &mode.to_string(), &cutoffs);
        }
    }
    if systems.len() > 1 {
        println!("== deltas (system_b - system_a) ==");
        println!(
            "{:>7} {:>9} {:<6} {:<24} {:>9} {:>9} {:>9}",
            "cutoff", "metric", "mode", "pair", "delta", "lo", "hi"
        );
        for d in &report.deltas {
            println!(
                "{:>7} {:>9} {:<6} {:<24} {:>9.4} {:>9.4} {:>9.4}",
                d.cutoff,
                d.metric,
                d.mode,
                format!("{} vs {}", d.system_b, d.system_a),
                d.mean,
                d.ci_lo,
                d.ci_hi
            );
        }
        println!();
    }
    if let Some(sweep) = &report.sweep {
        match &sweep.selected {
            Some(row) => println!(
                "sweep: selected threshold {:.2} (coverage {:.4}, majority acc {:.4}, precision {:.4})",
                row.threshold, row.coverage, row.majority_acc, row.precision
            ),
            None => println!(
                "sweep: no threshold reaches coverage {:.2}",
                args.min_coverage
            ),
        }
    }
    println!("== cluster mass margins ==");
    println!(
        "{:<16} {:>10} {:>10} {:>10} {:>8}",
        "law", "min", "median", "mean", "flagged"
    );
    for (law, mass) in &report.l2_mass {
        println!(
            "{:<16} {:>10.2e} {:>10.2e} {:>10.2e} {:>8}",
            law,
            mass.min,
            mass.median,
            mass.mean,
            mass.flagged.len()
        );
    }
    println!();

    // Wall-clock profile (stdout only: timings vary run to run).
    let timing_n = n_queries.min(32);
    let timing = timing_profile(
        timing_n,
        1,
        2,
        |i| {
            let _ = encode_query(&registry, queries.matrix.row(i), true);
        },
        |i| {
            let _ = search(&index, &encoded[i].0.embedding, k_max);
        },
    );
    println!(
        "timing over {} queries: embed {:.3} ms, search {:.3} ms, total {:.3} ms per query",
        timing.queries, timing.embed_ms, timing.search_ms, timing.total_ms
    );
    println!("report: {}", args.out.join("report.json").display());
    Ok(())
}
