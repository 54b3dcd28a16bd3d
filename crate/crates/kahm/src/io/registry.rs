//! Single-file binary container for a trained encoder registry.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        5 bytes  "KAHM1"
//! version      u32      currently 1
//! law_count    u32
//! per law:
//!   section_len u64     byte length of the section body below
//!   law_id      u32 length + UTF-8 bytes
//!   divisor     u32     covariance divisor convention (1 = N-1, unbiased)
//!   omega       f64
//!   k_trunc     u32
//!   prototypes  matrix
//!   assignments u32 count + u32 per entry
//!   clusters    u32 count, then per cluster:
//!     reference, encoding, theta, theta_inv  matrices
//!     lambda_star                            f64
//!     membership_coeffs                      matrix
//! matrix encoding: u32 rows, u32 cols, rows*cols f64 values
//! ```
//!
//! Values are stored as f64 bit patterns, so a save/load round trip is
//! exact: a reloaded registry reproduces routing decisions and embeddings
//! bit for bit. Loading re-runs the full structural validation, so a
//! hand-edited or truncated file is rejected rather than deserialized into
//! an inconsistent model.

use std::fs;
use std::path::Path;

use crate::cluster::ClusterSet;
use crate::error::{Error, Result};
use crate::gateway::EncoderRegistry;
use crate::geometry::KahmModel;
use crate::matrix::DenseMatrix;

const MAGIC: &[u8; 5] = b"KAHM1";
pub const FORMAT_VERSION: u32 = 1;
/// Marker for the sample-covariance divisor used when the models were
/// built. The only defined convention is 1 = divide by N-1.
const DIVISOR_UNBIASED: u32 = 1;

// ---------------------------------------------------------------- writing

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    let len = u32::try_from(bytes.len())
        .map_err(|_| Error::InvalidArgument(format!("law id {s:?} is too long to store")))?;
    put_u32(out, len);
    out.extend_from_slice(bytes);
    Ok(())
}

fn put_matrix(out: &mut Vec<u8>, m: &DenseMatrix) -> Result<()> {
    let rows = u32::try_from(m.rows())
        .map_err(|_| Error::InvalidArgument("matrix too large to store".into()))?;
    let cols = u32::try_from(m.cols())
        .map_err(|_| Error::InvalidArgument("matrix too large to store".into()))?;
    put_u32(out, rows);
    put_u32(out, cols);
    for &v in m.data() {
        put_f64(out, v);
    }
    Ok(())
}

fn encode_law(law_id: &str, set: &ClusterSet) -> Result<Vec<u8>> {
    let mut body = Vec::new();
    put_str(&mut body, law_id)?;
    put_u32(&mut body, DIVISOR_UNBIASED);
    put_f64(&mut body, set.omega());
    put_u32(&mut body, set.k_trunc() as u32);
    put_matrix(&mut body, set.prototypes())?;
    put_u32(&mut body, set.assignments().len() as u32);
    for &a in set.assignments() {
        let a = u32::try_from(a)
            .map_err(|_| Error::InvalidArgument("assignment index too large to store".into()))?;
        put_u32(&mut body, a);
    }
    put_u32(&mut body, set.cluster_models().len() as u32);
    for model in set.cluster_models() {
        put_matrix(&mut body, model.reference())?;
        put_matrix(&mut body, model.encoding())?;
        put_matrix(&mut body, model.theta())?;
        put_matrix(&mut body, model.theta_inv())?;
        put_f64(&mut body, model.lambda_star());
        put_matrix(&mut body, model.membership_coeffs())?;
    }
    Ok(body)
}

/// Serializes a trained registry to a single file at `path`.
pub fn save_registry(registry: &EncoderRegistry, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    let count = u32::try_from(registry.len())
        .map_err(|_| Error::InvalidArgument("too many laws to store".into()))?;
    put_u32(&mut out, count);
    for (law_id, set) in registry.entries() {
        let body = encode_law(law_id, set)?;
        put_u64(&mut out, body.len() as u64);
        out.extend_from_slice(&body);
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------- reading

/// Bounds-checked reader over the raw file bytes.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptSection("unexpected end of file".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::CorruptSection("law id is not valid UTF-8".into()))
    }

    fn matrix(&mut self) -> Result<DenseMatrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::CorruptSection("matrix shape overflows".into()))?;
        // Guard against absurd shapes before allocating.
        if count * 8 > self.bytes.len() - self.pos {
            return Err(Error::CorruptSection("matrix data exceeds file size".into()));
        }
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(self.f64()?);
        }
        DenseMatrix::from_rows(rows, cols, data)
            .map_err(|e| Error::CorruptSection(format!("bad matrix payload: {e}")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn decode_law(body: &[u8]) -> Result<(String, ClusterSet)> {
    let mut cur = Cursor::new(body);
    let law_id = cur.string()?;
    let wrap = |e: Error| Error::CorruptSection(format!("law {law_id:?}: {e}"));

    let divisor = cur.u32()?;
    if divisor != DIVISOR_UNBIASED {
        return Err(Error::CorruptSection(format!(
            "law {law_id:?}: unknown covariance divisor convention {divisor}"
        )));
    }
    let omega = cur.f64()?;
    let k_trunc = cur.u32()? as usize;
    let prototypes = cur.matrix()?;
    let n_assign = cur.u32()? as usize;
    if n_assign * 4 > cur.remaining() {
        return Err(Error::CorruptSection(
            "assignment data exceeds file size".into(),
        ));
    }
    let mut assignments = Vec::with_capacity(n_assign);
    for _ in 0..n_assign {
        assignments.push(cur.u32()? as usize);
    }
    let n_clusters = cur.u32()? as usize;
    let mut models = Vec::with_capacity(n_clusters);
    for _ in 0..n_clusters {
        let reference = cur.matrix()?;
        let encoding = cur.matrix()?;
        let theta = cur.matrix()?;
        let theta_inv = cur.matrix()?;
        let lambda_star = cur.f64()?;
        let membership = cur.matrix()?;
        let model =
            KahmModel::from_parts(reference, encoding, theta, theta_inv, lambda_star, membership)
                .map_err(wrap)?;
        models.push(model);
    }
    if cur.remaining() != 0 {
        return Err(Error::CorruptSection(format!(
            "law {law_id:?}: {} trailing bytes in section",
            cur.remaining()
        )));
    }
    let set = ClusterSet::from_parts(assignments, models, prototypes, omega, k_trunc).map_err(wrap)?;
    Ok((law_id, set))
}

/// Loads a registry saved by [`save_registry`], re-validating every model.
pub fn load_registry(path: &Path) -> Result<EncoderRegistry> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut cur = Cursor::new(&bytes);
    cur.take(MAGIC.len())?;
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let law_count = cur.u32()? as usize;
    let mut entries = Vec::with_capacity(law_count);
    for _ in 0..law_count {
        let section_len = cur.u64()? as usize;
        let body = cur.take(section_len)?;
        entries.push(decode_law(body)?);
    }
    if cur.remaining() != 0 {
        return Err(Error::CorruptSection(format!(
            "{} trailing bytes after last law section",
            cur.remaining()
        )));
    }
    EncoderRegistry::new(entries)
        .map_err(|e| Error::CorruptSection(format!("invalid registry contents: {e}")))
}
