use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by the stage that raises them: geometric model
/// construction, clustering/training, routing, indexing, evaluation, and
/// file I/O. `InvalidArgument` covers precondition violations (dimension
/// mismatches, out-of-range cutoffs) that callers can always avoid.
#[derive(Debug, Error)]
pub enum Error {
    // ---- model geometry ----
    /// Every projected coordinate's empirical range collapsed below the
    /// 1e-3 cutoff, so no encoding dimension can be retained.
    #[error("reference samples have no usable spread in any direction")]
    DegenerateData,
    /// The projected-sample covariance is not positive definite, even after
    /// one round of diagonal jitter repair.
    #[error("projected covariance is singular even after jitter repair")]
    SingularCovariance,
    /// The regularization fixed-point iteration failed to reach tolerance
    /// within the iteration cap.
    #[error("fixed-point iteration for the regularization constant did not converge within {0} iterations")]
    NoConvergence(usize),
    /// The reference matrix is identically zero, so the regularized solve
    /// is degenerate.
    #[error("reference matrix has zero Frobenius norm")]
    ZeroData,
    /// The sum of membership values is too close to zero to normalize.
    #[error("membership sum {0:e} is below the stability threshold")]
    UnstableDenominator(f64),

    // ---- clustering / training ----
    /// Fewer samples than requested clusters (or than the minimum needed).
    #[error("{context}: need at least {needed} samples, got {got}")]
    TooFewSamples {
        context: String,
        needed: usize,
        got: usize,
    },
    /// A singleton cluster cannot be augmented because the training set has
    /// no other sample to interpolate toward.
    #[error("cannot augment a singleton cluster: no other sample exists")]
    NoNeighbor,

    // ---- routing ----
    /// The encoder registry has no entries.
    #[error("encoder registry is empty")]
    EmptyRegistry,
    /// Two registry entries share a law id.
    #[error("duplicate law id {0:?} in registry")]
    DuplicateLaw(String),

    // ---- index ----
    /// A corpus row has zero norm and cannot be L2-normalized.
    #[error("corpus row {0:?} has zero norm")]
    ZeroRow(String),
    /// Two corpus rows share an id.
    #[error("duplicate corpus id {0:?}")]
    DuplicateId(String),
    /// The query vector is empty or identically zero.
    #[error("query vector is empty or zero")]
    EmptyQuery,

    // ---- evaluation ----
    /// A metric cutoff exceeds the ranked list length.
    #[error("cutoff {k} exceeds ranked list length {len}")]
    CutoffTooLarge { k: usize, len: usize },
    /// The gold label has no corpus mass, so lift is undefined.
    #[error("gold label {0:?} has no corpus prior mass")]
    MissingPrior(String),
    /// An aggregate was requested over an empty collection.
    #[error("cannot aggregate over empty input")]
    EmptyInput,

    // ---- file formats ----
    /// The bundle manifest is missing keys, has bad values, or disagrees
    /// with its id/label files.
    #[error("malformed bundle manifest: {0}")]
    MalformedManifest(String),
    /// Payload byte length disagrees with rows x cols x 4.
    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },
    /// A non-finite value was found at a format boundary.
    #[error("non-finite value at row {row}, col {col}")]
    NonFiniteValue { row: usize, col: usize },
    /// The registry file does not start with the expected magic string.
    #[error("bad registry magic")]
    BadMagic,
    /// The registry format version is newer than this reader supports.
    #[error("unsupported registry format version {0}")]
    VersionUnsupported(u32),
    /// A registry section is truncated or internally inconsistent.
    #[error("corrupt registry section: {0}")]
    CorruptSection(String),
    /// Underlying OS-level I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    // ---- preconditions ----
    /// A caller-side contract violation not covered by a dedicated variant.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
