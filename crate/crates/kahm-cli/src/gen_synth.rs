//! `kahm gen-synth`: write a seeded synthetic benchmark to disk.
//!
//! The generator produces, per law, paired lexical/semantic training bundles,
//! plus a shared set of labeled test queries, their clean semantic targets,
//! and a retrieval corpus in both spaces. Everything is derived from one seed
//! so two runs with identical flags produce identical bytes.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use kahm::io::synth::SyntheticSpec;
use kahm::VectorBundle;

use crate::common::{ensure_out_dir, write_json};
use crate::manifest::write_run_manifest;
use crate::{CliError, ResultExt};

#[derive(Args, Serialize)]
pub struct GenSynthArgs {
    /// Number of laws (domains).
    #[arg(long, default_value_t = 3)]
    pub laws: usize,
    /// Clusters (styles) per law.
    #[arg(long, default_value_t = 8)]
    pub clusters: usize,
    /// Lexical feature dimension.
    #[arg(long, default_value_t = 32)]
    pub lexical_dim: usize,
    /// Semantic embedding dimension.
    #[arg(long, default_value_t = 48)]
    pub semantic_dim: usize,
    /// Training samples per cluster.
    #[arg(long, default_value_t = 40)]
    pub samples: usize,
    /// Teacher noise added to semantic targets.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Lexical distortion magnitude (how far surface features drift from the
    /// shared map of the semantic space).
    #[arg(long, default_value_t = 0.75)]
    pub distortion: f64,
    /// Seed for all random draws.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct GenSummary {
    laws: usize,
    clusters_per_law: usize,
    train_rows_per_law: usize,
    test_queries: usize,
    corpus_rows: usize,
}

pub fn run(args: GenSynthArgs, invocation: &[String]) -> Result<(), CliError> {
    let spec = SyntheticSpec {
        n_laws: args.laws,
        clusters_per_law: args.clusters,
        lexical_dim: args.lexical_dim,
        semantic_dim: args.semantic_dim,
        samples_per_cluster: args.samples,
        teacher_noise_sigma: args.sigma,
        lexical_distortion: args.distortion,
        seed: args.seed,
    };
    let data = kahm::generate_synthetic(&spec)?;
    ensure_out_dir(&args.out)?;

    let mut outputs = Vec::new();
    for law in &data.laws {
        let lexical = VectorBundle::new(
            law.train_lexical.clone(),
            law.train_ids.clone(),
            None,
        )?;
        let semantic = VectorBundle::new(
            law.train_semantic.clone(),
            law.train_ids.clone(),
            None,
        )?;
        for (stem, bundle) in [("train_lexical", &lexical), ("train_semantic", &semantic)] {
            let name = format!("{stem}_{}", law.law_id);
            kahm::write_bundle(bundle, &args.out.join(&name))
                .ctx(format!("writing {name}"))?;
            outputs.push(format!("{name}.manifest"));
        }
    }

    let test_semantic = VectorBundle::new(
        data.test_semantic.clone(),
        data.test_queries.ids.clone(),
        data.test_queries.labels.clone(),
    )?;
    for (name, bundle) in [
        ("test_queries", &data.test_queries),
        ("test_semantic", &test_semantic),
        ("corpus_semantic", &data.corpus_semantic),
        ("corpus_lexical", &data.corpus_lexical),
    ] {
        kahm::write_bundle(bundle, &args.out.join(name)).ctx(format!("writing {name}"))?;
        outputs.push(format!("{name}.manifest"));
    }

    let summary = GenSummary {
        laws: data.laws.len(),
        clusters_per_law: spec.clusters_per_law,
        train_rows_per_law: spec.clusters_per_law * spec.samples_per_cluster,
        test_queries: data.test_queries.ids.len(),
        corpus_rows: data.corpus_semantic.ids.len(),
    };
    write_json(&args.out, "gen_summary.json", &summary)?;
    outputs.push("gen_summary.json".to_string());

    write_run_manifest(
        &args.out,
        "gen-synth",
        invocation,
        serde_json::to_value(&spec)?,
        Vec::new(),
        outputs,
        args.seed,
    )?;

    println!(
        "generated {} laws x {} clusters: {} train rows/law, {} test queries, {} corpus rows -> {}",
        summary.laws,
        summary.clusters_per_law,
        summary.train_rows_per_law,
        summary.test_queries,
        summary.corpus_rows,
        args.out.display()
    );
    Ok(())
}
