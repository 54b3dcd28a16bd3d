//! On-disk vector bundles: a plain-text manifest describing shape and dtype,
//! a row-major little-endian f32 payload, and sidecar id/label files.
//!
//! A bundle named `foo` occupies `foo.manifest`, `foo.bin`, `foo.ids`, and
//! optionally `foo.labels`, all in the same directory. The manifest is the
//! entry point: it records the shape, the dtype tag, and the sidecar file
//! names (resolved relative to the manifest's directory).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Manifest format version this module reads and writes.
pub const FORMAT_VERSION: u32 = 1;
/// The only payload dtype currently supported.
const DTYPE: &str = "f32le";

/// An in-memory vector bundle: a dense row-major matrix plus one id per row
/// and, optionally, one label per row.
///
/// Values are held as `f64` but stored on disk as little-endian `f32`, so a
/// write/read round trip is bit-exact only for values that are exactly
/// representable in f32. Everything this crate generates is rounded through
/// f32 before it lands in a bundle, which keeps in-memory and on-disk data
/// identical.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBundle {
    /// Row-major data, one vector per row.
    pub matrix: DenseMatrix,
    /// One id per row; ids must be unique within a bundle.
    pub ids: Vec<String>,
    /// Optional one label per row (e.g. a law id for corpus rows).
    pub labels: Option<Vec<String>>,
}

impl VectorBundle {
    /// Builds a bundle and checks the row-count invariants.
    pub fn new(
        matrix: DenseMatrix,
        ids: Vec<String>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if ids.len() != matrix.rows() {
            return Err(Error::InvalidArgument(format!(
                "bundle has {} rows but {} ids",
                matrix.rows(),
                ids.len()
            )));
        }
        if let Some(ref l) = labels {
            if l.len() != matrix.rows() {
                return Err(Error::InvalidArgument(format!(
                    "bundle has {} rows but {} labels",
                    matrix.rows(),
                    l.len()
                )));
            }
        }
        check_unique_ids(&ids)?;
        Ok(Self {
            matrix,
            ids,
            labels,
        })
    }
}

fn check_unique_ids(ids: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

/// Strips a trailing `.manifest` extension so callers may pass either the
/// bundle stem (`dir/foo`) or the manifest path (`dir/foo.manifest`).
fn bundle_stem(path: &Path) -> PathBuf {
    match path.extension() {
        Some(ext) if ext == "manifest" => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn sidecar_name(stem: &Path, suffix: &str) -> Result<String> {
    let base = stem
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("bundle path {:?} has no file name", stem)))?
        .to_string_lossy();
    Ok(format!("{base}.{suffix}"))
}

/// Writes `bundle` as `<stem>.manifest` / `<stem>.bin` / `<stem>.ids`
/// (plus `<stem>.labels` when labels are present).
///
/// `path` may be the stem or the manifest path itself. All values must be
/// finite; they are narrowed to f32 for storage.
pub fn write_bundle(bundle: &VectorBundle, path: &Path) -> Result<()> {
    if bundle.ids.len() != bundle.matrix.rows() {
        return Err(Error::InvalidArgument(format!(
            "bundle has {} rows but {} ids",
            bundle.matrix.rows(),
            bundle.ids.len()
        )));
    }
    if let Some(ref l) = bundle.labels {
        if l.len() != bundle.matrix.rows() {
            return Err(Error::InvalidArgument(format!(
                "bundle has {} rows but {} labels",
                bundle.matrix.rows(),
                l.len()
            )));
        }
    }
    check_unique_ids(&bundle.ids)?;

    let stem = bundle_stem(path);
    let ids_file = sidecar_name(&stem, "ids")?;
    let labels_file = match bundle.labels {
        Some(_) => Some(sidecar_name(&stem, "labels")?),
        None => None,
    };

    // Payload: row-major little-endian f32.
    let rows = bundle.matrix.rows();
    let cols = bundle.matrix.cols();
    let mut payload = Vec::with_capacity(rows * cols * 4);
    for (idx, &v) in bundle.matrix.data().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                row: idx / cols,
                col: idx % cols,
            });
        }
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(stem.with_extension("bin"), payload)?;

    let mut id_text = String::new();
    for id in &bundle.ids {
        id_text.push_str(id);
        id_text.push('\n');
    }
    fs::write(stem.with_extension("ids"), id_text)?;

    if let (Some(labels), Some(ref name)) = (&bundle.labels, &labels_file) {
        let mut label_text = String::new();
        for label in labels {
            label_text.push_str(label);
            label_text.push('\n');
        }
        fs::write(stem.parent().unwrap_or(Path::new("")).join(name), label_text)?;
    }

    let mut manifest = format!(
        "format_version={FORMAT_VERSION}\nrows={rows}\ncols={cols}\ndtype={DTYPE}\nids_file={ids_file}\n"
    );
    if let Some(name) = labels_file {
        manifest.push_str(&format!("labels_file={name}\n"));
    }
    fs::write(stem.with_extension("manifest"), manifest)?;
    Ok(())
}

/// Reads a bundle given its manifest path (or stem). Sidecar files are
/// resolved relative to the manifest's directory.
pub fn read_bundle(path: &Path) -> Result<VectorBundle> {
    let stem = bundle_stem(path);
    let manifest_path = stem.with_extension("manifest");
    let dir = manifest_path.parent().unwrap_or(Path::new("")).to_path_buf();
    let text = fs::read_to_string(&manifest_path)?;

    let mut format_version: Option<u32> = None;
    let mut rows: Option<usize> = None;
    let mut cols: Option<usize> = None;
    let mut dtype: Option<String> = None;
    let mut ids_file: Option<String> = None;
    let mut labels_file: Option<String> = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::MalformedManifest(format!("line {}: expected key=value", lineno + 1))
        })?;
        let value = value.trim();
        match key.trim() {
            "format_version" => {
                format_version = Some(value.parse().map_err(|_| {
                    Error::MalformedManifest(format!("bad format_version {value:?}"))
                })?)
            }
            "rows" => {
                rows = Some(
                    value
                        .parse()
                        .map_err(|_| Error::MalformedManifest(format!("bad rows {value:?}")))?,
                )
            }
            "cols" => {
                cols = Some(
                    value
                        .parse()
                        .map_err(|_| Error::MalformedManifest(format!("bad cols {value:?}")))?,
                )
            }
            "dtype" => dtype = Some(value.to_string()),
            "ids_file" => ids_file = Some(value.to_string()),
            "labels_file" => labels_file = Some(value.to_string()),
            other => {
                return Err(Error::MalformedManifest(format!(
                    "unknown key {other:?}"
                )))
            }
        }
    }

    let format_version =
        format_version.ok_or_else(|| Error::MalformedManifest("missing format_version".into()))?;
    if format_version != FORMAT_VERSION {
        return Err(Error::MalformedManifest(format!(
            "unsupported format_version {format_version}"
        )));
    }
    let rows = rows.ok_or_else(|| Error::MalformedManifest("missing rows".into()))?;
    let cols = cols.ok_or_else(|| Error::MalformedManifest("missing cols".into()))?;
    let dtype = dtype.ok_or_else(|| Error::MalformedManifest("missing dtype".into()))?;
    if dtype != DTYPE {
        return Err(Error::MalformedManifest(format!(
            "unsupported dtype {dtype:?}"
        )));
    }
    let ids_file = ids_file.ok_or_else(|| Error::MalformedManifest("missing ids_file".into()))?;

    let payload = fs::read(stem.with_extension("bin"))?;
    let expected = (rows as u64) * (cols as u64) * 4;
    if payload.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: payload.len() as u64,
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (idx, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                row: idx / cols.max(1),
                col: idx % cols.max(1),
            });
        }
        data.push(v);
    }
    let matrix = DenseMatrix::from_rows(rows, cols, data)?;

    let ids = read_lines(&dir.join(&ids_file))?;
    if ids.len() != rows {
        return Err(Error::MalformedManifest(format!(
            "ids file {ids_file:?} has {} entries for {} rows",
            ids.len(),
            rows
        )));
    }
    check_unique_ids(&ids)?;

    let labels = match labels_file {
        Some(name) => {
            let labels = read_lines(&dir.join(&name))?;
            if labels.len() != rows {
                return Err(Error::MalformedManifest(format!(
                    "labels file {name:?} has {} entries for {} rows",
                    labels.len(),
                    rows
                )));
            }
            Some(labels)
        }
        None => None,
    };

    Ok(VectorBundle {
        matrix,
        ids,
        labels,
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}
