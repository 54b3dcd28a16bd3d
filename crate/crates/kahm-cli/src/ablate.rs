//! `kahm ablate-clusters`: sweep the clusters-per-law knob and report how
//! encoder quality moves with it.
//!
//! For every grid value the command retrains all laws, predicts embeddings
//! for the held-out test queries through each query's gold law (isolating
//! encoder quality from routing), and compares against the clean semantic
//! targets: mean cosine, per-coordinate MSE, and overall R^2, plus the
//! wall-clock training time. Timings are printed but kept out of
//! `ablation.json` so the file is byte-deterministic.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use kahm::{predict_embedding, ClusterSet, TrainConfig};

use crate::common::{
    discover_laws, ensure_out_dir, read_labeled_bundle, resolve_jobs, thread_pool, write_json,
    LawBundles,
};
use crate::manifest::write_run_manifest;
use crate::{CliError, ResultExt};

#[derive(Args)]
pub struct AblateArgs {
    /// Directory holding training bundles plus test_queries / test_semantic.
    pub data_dir: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Cluster counts to sweep, comma-separated.
    #[arg(long = "cluster-grid", value_delimiter = ',', default_values_t = vec![100, 200, 300, 400])]
    pub cluster_grid: Vec<usize>,
    /// Fraction of training rows held out for grid validation.
    #[arg(long = "val-frac", default_value_t = 0.05)]
    pub val_frac: f64,
    /// Candidate sharpness exponents (comma-separated; default: built-in grid).
    #[arg(long = "omega-grid", value_delimiter = ',')]
    pub omega_grid: Option<Vec<f64>>,
    /// Candidate mixture sizes (comma-separated; default: built-in grid).
    #[arg(long = "k-grid", value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
    /// Gain-refinement step size.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Gain-refinement epochs.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Seed for holdout selection and cluster initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: KAHM_JOBS env var, then all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// One grid value's quality summary (timings reported separately).
#[derive(Serialize)]
struct AblationRow {
    clusters: usize,
    cosine_mean: f64,
    mse: f64,
    r2: f64,
}

fn train_all(
    laws: &[LawBundles],
    config: &TrainConfig,
    pool: &rayon::ThreadPool,
) -> Result<Vec<(String, ClusterSet)>, CliError> {
    pool.install(|| {
        laws.par_iter()
            .map(|law| {
                let set =
                    kahm::train_law_encoder(&law.lexical.matrix, &law.semantic.matrix, config)
                        .ctx(format!("law {}", law.law_id))?;
                Ok((law.law_id.clone(), set))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })
}

pub fn run(args: AblateArgs, invocation: &[String]) -> Result<(), CliError> {
    if args.cluster_grid.is_empty() {
        return Err(CliError::validation("cluster grid must not be empty"));
    }
    if args.cluster_grid.contains(&0) {
        return Err(CliError::validation("cluster counts must be >= 1"));
    }
    let jobs = resolve_jobs(args.jobs)?;
    let pool = thread_pool(jobs)?;

    let laws = discover_laws(&args.data_dir)?;
    let queries = read_labeled_bundle(&args.data_dir.join("test_queries.manifest"), "query")?;
    let truth = kahm::read_bundle(&args.data_dir.join("test_semantic.manifest"))
        .ctx("test_semantic bundle")?;
    if truth.ids != queries.ids {
        return Err(CliError::data(format!(
            "test_semantic ids disagree with test_queries ids ({} vs {} rows)",
            truth.ids.len(),
            queries.ids.len()
        )));
    }
    let gold = queries.labels.as_ref().expect("labels checked");
    let n = queries.ids.len();
    let p = truth.matrix.cols();

    // Total variance of the targets around their column means, for R^2.
    let mut col_means = vec![0.0f64; p];
    for i in 0..n {
        for (m, v) in col_means.iter_mut().zip(truth.matrix.row(i)) {
            *m += v;
        }
    }
    for m in &mut col_means {
        *m /= n as f64;
    }
    let ss_tot: f64 = (0..n)
        .map(|i| {
            truth
                .matrix
                .row(i)
                .iter()
                .zip(&col_means)
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>()
        })
        .sum();

    let defaults = TrainConfig::default();
    let base_config = TrainConfig {
        n_clusters: 0, // set per grid value
        validation_fraction: args.val_frac,
        omega_grid: args.omega_grid.clone().unwrap_or(defaults.omega_grid),
        k_grid: args.k_grid.clone().unwrap_or(defaults.k_grid),
        nlms_step: args.beta,
        nlms_epochs: args.epochs,
        seed: args.seed,
    };

    let mut rows: Vec<AblationRow> = Vec::with_capacity(args.cluster_grid.len());
    let mut seconds: Vec<f64> = Vec::with_capacity(args.cluster_grid.len());
    for &clusters in &args.cluster_grid {
        let config = TrainConfig { n_clusters: clusters, ..base_config.clone() };
        let t0 = Instant::now();
        let trained = train_all(&laws, &config, &pool)?;
        let elapsed = t0.elapsed().as_secs_f64();

        let predictions: Vec<Vec<f64>> = pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let law = &gold[i];
                    let encoder = trained
                        .iter()
                        .find(|(id, _)| id == law)
                        .map(|(_, set)| set)
                        .ok_or_else(|| {
                            CliError::data(format!(
                                "query {} is labeled {law:?} but no such law was trained",
                                queries.ids[i]
                            ))
                        })?;
                    predict_embedding(queries.matrix.row(i), encoder)
                        .ctx(format!("query {}", queries.ids[i]))
                })
                .collect::<Result<_, CliError>>()
        })?;

        let mut cosine_sum = 0.0f64;
        let mut ss_res = 0.0f64;
        for (i, pred) in predictions.iter().enumerate() {
            let t = truth.matrix.row(i);
            let dot: f64 = pred.iter().zip(t).map(|(a, b)| a * b).sum();
            let np: f64 = pred.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nt: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            cosine_sum += if np > 0.0 && nt > 0.0 { dot / (np * nt) } else { 0.0 };
            ss_res += pred
                .iter()
                .zip(t)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let r2 = if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            0.0
        };
        rows.push(AblationRow {
            clusters,
            cosine_mean: cosine_sum / n as f64,
            mse: ss_res / (n * p) as f64,
            r2,
        });
        seconds.push(elapsed);
    }

    ensure_out_dir(&args.out)?;
    write_json(&args.out, "ablation.json", &rows)?;
    write_run_manifest(
        &args.out,
        "ablate-clusters",
        invocation,
        serde_json::json!({
            "cluster_grid": args.cluster_grid,
            "val_frac": args.val_frac,
            "omega_grid": base_config.omega_grid,
            "k_grid": base_config.k_grid,
            "beta": args.beta,
            "epochs": args.epochs,
            "seed": args.seed,
            "jobs": jobs,
        }),
        vec![args.data_dir.display().to_string()],
        vec!["ablation.json".to_string()],
        args.seed,
    )?;

    println!(
        "{:>8} {:>12} {:>12} {:>10} {:>9}",
        "clusters", "cosine_mean", "mse", "r2", "seconds"
    );
    for (row, secs) in rows.iter().zip(&seconds) {
        println!(
            "{:>8} {:>12.6} {:>12.4e} {:>10.6} {:>9.2}",
            row.clusters, row.cosine_mean, row.mse, row.r2, secs
        );
    }
    println!("ablation: {}", args.out.join("ablation.json").display());
    Ok(())
}
