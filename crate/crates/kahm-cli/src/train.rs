//! `kahm train`: fit one encoder per law and save a registry.
//!
//! Laws are discovered from `train_lexical_<law>.manifest` files in the data
//! directory and trained in parallel; results are assembled in law-id order,
//! so the saved registry bytes do not depend on the worker count.

use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use kahm::{ClusterSet, EncoderRegistry, TrainConfig, TrainSummary};

use crate::common::{discover_laws, ensure_out_dir, resolve_jobs, thread_pool, write_json};
use crate::manifest::write_run_manifest;
use crate::{CliError, ResultExt};

#[derive(Args)]
pub struct TrainArgs {
    /// Directory holding train_lexical_<law> / train_semantic_<law> bundles.
    pub data_dir: PathBuf,
    /// Output directory for the registry and summary (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Clusters per law.
    #[arg(long, default_value_t = 300)]
    pub clusters: usize,
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

#[derive(Serialize)]
struct LawSummaryRow {
    law: String,
    #[serde(flatten)]
    summary: TrainSummary,
}

pub fn run(args: TrainArgs, invocation: &[String]) -> Result<(), CliError> {
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        n_clusters: args.clusters,
        validation_fraction: args.val_frac,
        omega_grid: args.omega_grid.clone().unwrap_or(defaults.omega_grid),
        k_grid: args.k_grid.clone().unwrap_or(defaults.k_grid),
        nlms_step: args.beta,
        nlms_epochs: args.epochs,
        seed: args.seed,
    };
    let jobs = resolve_jobs(args.jobs)?;

    let laws = discover_laws(&args.data_dir)?;
    let inputs: Vec<String> = laws
        .iter()
        .flat_map(|law| {
            ["lexical", "semantic"].map(|side| {
                args.data_dir
                    .join(format!("train_{side}_{}.manifest", law.law_id))
                    .display()
                    .to_string()
            })
        })
        .collect();

    let pool = thread_pool(jobs)?;
    let trained: Vec<(String, ClusterSet, TrainSummary)> = pool.install(|| {
        laws.par_iter()
            .map(|law| {
                let (set, summary) = kahm::train_law_encoder_with_summary(
                    &law.lexical.matrix,
                    &law.semantic.matrix,
                    &config,
                )
                .ctx(format!("law {}", law.law_id))?;
                Ok((law.law_id.clone(), set, summary))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    ensure_out_dir(&args.out)?;
    let rows: Vec<LawSummaryRow> = trained
        .iter()
        .map(|(law, _, summary)| LawSummaryRow { law: law.clone(), summary: summary.clone() })
        .collect();

    let registry = EncoderRegistry::new(
        trained.into_iter().map(|(law, set, _)| (law, set)).collect(),
    )?;
    let registry_path = args.out.join("registry.khr");
    kahm::save_registry(&registry, &registry_path).ctx("saving registry")?;
    write_json(&args.out, "train_summary.json", &rows)?;

    write_run_manifest(
        &args.out,
        "train",
        invocation,
        serde_json::json!({
            "clusters": config.n_clusters,
            "val_frac": config.validation_fraction,
            "omega_grid": config.omega_grid,
            "k_grid": config.k_grid,
            "beta": config.nlms_step,
            "epochs": config.nlms_epochs,
            "seed": config.seed,
            "jobs": jobs,
        }),
        inputs,
        vec!["registry.khr".to_string(), "train_summary.json".to_string()],
        args.seed,
    )?;

    println!(
        "{:<16} {:>8} {:>6} {:>7} {:>5} {:>13}",
        "law", "samples", "val", "omega", "k", "val_mse"
    );
    for row in &rows {
        println!(
            "{:<16} {:>8} {:>6} {:>7} {:>5} {:>13.6e}",
            row.law,
            row.summary.n_samples,
            row.summary.n_validation,
            row.summary.omega,
            row.summary.k_trunc,
            row.summary.validation_mse
        );
    }
    println!("registry: {}", registry_path.display());
    Ok(())
}
