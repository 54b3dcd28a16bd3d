//! Helpers shared by the subcommands: worker-count resolution, training-data
//! discovery, and bundle loading with the extra checks the pipeline needs.

use std::path::{Path, PathBuf};

use kahm::VectorBundle;

use crate::{CliError, ResultExt};

/// Resolve the worker count: explicit `--jobs` wins, then the `KAHM_JOBS`
/// environment variable, then 0 (let the thread pool pick).
pub fn resolve_jobs(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(jobs) = flag {
        return Ok(jobs);
    }
    match std::env::var("KAHM_JOBS") {
        Ok(raw) => raw.trim().parse::<usize>().map_err(|_| {
            CliError::validation(format!("KAHM_JOBS must be a non-negative integer, got {raw:?}"))
        }),
        Err(_) => Ok(0),
    }
}

/// Build a rayon pool with `jobs` threads (0 = library default).
pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::validation(format!("cannot build thread pool: {e}")))
}

/// One law's training data as found on disk.
pub struct LawBundles {
    pub law_id: String,
    pub lexical: VectorBundle,
    pub semantic: VectorBundle,
}

/// Discover per-law training bundles in `dir`.
///
/// A law is any `train_lexical_<law>.manifest` file; its semantic counterpart
/// `train_semantic_<law>.manifest` must exist beside it. Laws are returned
/// sorted by id so downstream work is order-independent of the directory
/// listing. The two bundles of a law must agree on sample ids row for row.
pub fn discover_laws(dir: &Path) -> Result<Vec<LawBundles>, CliError> {
    let mut law_ids: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir).ctx(format!("reading {}", dir.display()))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(rest) = name.strip_prefix("train_lexical_") {
            if let Some(law) = rest.strip_suffix(".manifest") {
                law_ids.push(law.to_string());
            }
        }
    }
    if law_ids.is_empty() {
        return Err(CliError::data(format!(
            "no training bundles (train_lexical_*.manifest) found in {}",
            dir.display()
        )));
    }
    law_ids.sort();

    let mut laws = Vec::with_capacity(law_ids.len());
    for law_id in law_ids {
        let lexical_path = dir.join(format!("train_lexical_{law_id}.manifest"));
        let semantic_path = dir.join(format!("train_semantic_{law_id}.manifest"));
        let lexical = kahm::read_bundle(&lexical_path)
            .ctx(format!("law {law_id}: lexical bundle"))?;
        let semantic = kahm::read_bundle(&semantic_path)
            .ctx(format!("law {law_id}: semantic bundle"))?;
        if lexical.ids != semantic.ids {
            let mismatched = lexical
                .ids
                .iter()
                .zip(&semantic.ids)
                .filter(|(a, b)| a != b)
                .count()
                + lexical.ids.len().abs_diff(semantic.ids.len());
            return Err(CliError::data(format!(
                "law {law_id}: lexical and semantic bundles disagree on sample ids \
                 ({mismatched} positions differ; {} vs {} rows)",
                lexical.ids.len(),
                semantic.ids.len()
            )));
        }
        laws.push(LawBundles { law_id, lexical, semantic });
    }
    Ok(laws)
}

/// Load a bundle that must carry labels (corpus or query sets).
pub fn read_labeled_bundle(path: &Path, what: &str) -> Result<VectorBundle, CliError> {
    let bundle = kahm::read_bundle(path).ctx(format!("{what} bundle"))?;
    if bundle.labels.is_none() {
        return Err(CliError::data(format!(
            "{what} bundle {} has no labels file",
            path.display()
        )));
    }
    Ok(bundle)
}

/// Create the output directory (and parents) if missing.
pub fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).ctx(format!("creating {}", path.display()))?;
    Ok(())
}

/// Serialize a value as pretty JSON with a trailing newline and write it
/// under the output directory.
pub fn write_json<T: serde::Serialize>(
    out_dir: &Path,
    file_name: &str,
    value: &T,
) -> Result<PathBuf, CliError> {
    let path = out_dir.join(file_name);
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&path, text + "\n").ctx(format!("writing {}", path.display()))?;
    Ok(path)
}
