//! Seeded synthetic benchmark generator.
//!
//! The generator builds a multi-family retrieval world with known ground
//! truth. Each law (family) owns a private block of semantic coordinates;
//! its clusters are random unit prototypes inside that block, so prototypes
//! from different laws are exactly orthogonal. A fixed orthonormal map
//! carries semantic vectors into lexical space, where every cluster also
//! receives a cluster-specific distortion direction. Training pairs, test
//! queries, and a retrieval corpus are all drawn around these anchors:
//!
//! * training lexical rows = anchor + jitter, training semantic rows =
//!   prototype + teacher noise;
//! * test queries = fresh jittered lexical rows with the clean prototype as
//!   their semantic ground truth and the owning law as gold label;
//! * corpus rows = unit vectors near each prototype, stored both in
//!   semantic space and — with an *independent* distortion direction — in
//!   lexical space, so lexical-only retrieval degrades as distortion grows
//!   while semantic retrieval does not.
//!
//! Every emitted value is rounded through f32, so in-memory data survives a
//! bundle write/read round trip bit for bit. Each law draws from its own
//! derived RNG stream, which makes the output for a given seed independent
//! of how many laws follow it.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::bundle::VectorBundle;
use crate::matrix::DenseMatrix;
use crate::rng::stream_rng;

/// RNG stream for the semantic-to-lexical map.
const MAP_STREAM: u64 = 3;
/// Base RNG stream for per-law draws; law `q` uses `LAW_STREAM_BASE + q`.
const LAW_STREAM_BASE: u64 = 100;

/// Spread of lexical samples around their cluster anchor. This balances two
/// failure modes: too narrow and the most distant query/cluster pairs lose
/// all kernel mass (membership denominators hit the stability floor); too
/// wide and neighboring clusters overlap, so samples fold into the wrong
/// cluster. At 0.2 the unit-scale anchor separations sit 4+ standard
/// deviations out while the farthest distorted pairs keep kernel values
/// far above the floor.
const TRAIN_JITTER: f64 = 0.2;
/// Spread of corpus rows around their prototype in semantic space.
const CORPUS_JITTER: f64 = 0.05;
/// Corpus rows generated per cluster.
const CORPUS_PER_CLUSTER: usize = 3;
/// Test queries generated per cluster.
const QUERIES_PER_CLUSTER: usize = 6;

/// Parameters of one synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Number of law families.
    pub n_laws: usize,
    /// Semantic clusters per family.
    pub clusters_per_law: usize,
    /// Lexical (input) dimension.
    pub lexical_dim: usize,
    /// Semantic (output) dimension; must be at least `n_laws`.
    pub semantic_dim: usize,
    /// Training pairs per cluster.
    pub samples_per_cluster: usize,
    /// Noise scale on training semantic targets.
    pub teacher_noise_sigma: f64,
    /// Scale of the cluster-specific lexical distortion directions.
    pub lexical_distortion: f64,
    /// Master seed; all draws derive from it.
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_laws: 3,
            clusters_per_law: 8,
            lexical_dim: 32,
            semantic_dim: 48,
            samples_per_cluster: 40,
            teacher_noise_sigma: 0.05,
            lexical_distortion: 0.75,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_laws == 0 || self.clusters_per_law == 0 {
            return Err(Error::InvalidArgument(
                "n_laws and clusters_per_law must be positive".into(),
            ));
        }
        if self.lexical_dim == 0 || self.semantic_dim == 0 {
            return Err(Error::InvalidArgument(
                "lexical_dim and semantic_dim must be positive".into(),
            ));
        }
        if self.semantic_dim < self.n_laws {
            return Err(Error::InvalidArgument(format!(
                "semantic_dim {} is too small for {} disjoint law blocks",
                self.semantic_dim, self.n_laws
            )));
        }
        if self.samples_per_cluster < 2 {
            return Err(Error::InvalidArgument(
                "samples_per_cluster must be at least 2".into(),
            ));
        }
        if !(self.teacher_noise_sigma >= 0.0 && self.teacher_noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(
                "teacher_noise_sigma must be finite and non-negative".into(),
            ));
        }
        if !(self.lexical_distortion >= 0.0 && self.lexical_distortion.is_finite()) {
            return Err(Error::InvalidArgument(
                "lexical_distortion must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Training data for one law family.
#[derive(Debug, Clone, PartialEq)]
pub struct LawData {
    pub law_id: String,
    /// One training row id per sample.
    pub train_ids: Vec<String>,
    /// Lexical training rows, `samples_per_cluster * clusters_per_law` of them.
    pub train_lexical: DenseMatrix,
    /// Row-aligned semantic targets.
    pub train_semantic: DenseMatrix,
}

/// A complete synthetic world: per-law training data, labeled test queries
/// with clean semantic ground truth, and a dual-representation corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub laws: Vec<LawData>,
    /// Lexical test queries; labels carry the gold law id.
    pub test_queries: VectorBundle,
    /// Clean semantic target per test query (row-aligned with `test_queries`).
    pub test_semantic: DenseMatrix,
    /// Unit corpus rows in semantic space; labels carry the owning law id.
    pub corpus_semantic: VectorBundle,
    /// The same corpus rows in lexical space (independently distorted),
    /// sharing ids and labels with `corpus_semantic`.
    pub corpus_lexical: VectorBundle,
}

/// Rounds through f32 so in-memory values match their on-disk encoding.
fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

fn gauss(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller on open-interval uniforms; cheap and dependency-free.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gauss_vec(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| gauss(rng)).collect()
}

fn unit_vec(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v = gauss_vec(rng, dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}

/// Builds the fixed semantic-to-lexical map: `lexical_dim x semantic_dim`
/// with orthonormal rows when `lexical_dim <= semantic_dim`, orthonormal
/// columns otherwise. Either way it never stretches distances, and within
/// the common subspace it preserves them exactly.
fn lexical_map(rng: &mut ChaCha20Rng, lexical_dim: usize, semantic_dim: usize) -> DenseMatrix {
    let long = lexical_dim.max(semantic_dim);
    let short = lexical_dim.min(semantic_dim);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v = gauss_vec(rng, long);
        for b in &basis {
            let dot: f64 = v.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
            for (x, c) in v.iter_mut().zip(b.iter()) {
                *x -= dot * c;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue; // essentially impossible; redraw keeps determinism
        }
        for x in &mut v {
            *x /= norm;
        }
        basis.push(v);
    }
    let mut m = DenseMatrix::zeros(lexical_dim, semantic_dim);
    if lexical_dim <= semantic_dim {
        for (i, b) in basis.iter().enumerate() {
            for j in 0..semantic_dim {
                m.set(i, j, b[j]);
            }
        }
    } else {
        for (j, b) in basis.iter().enumerate() {
            for i in 0..lexical_dim {
                m.set(i, j, b[i]);
            }
        }
    }
    m
}

/// Generates a synthetic world according to `spec`. The output is fully
/// determined by its fields: a second call with equal parameters produces
/// identical data.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let q_laws = spec.n_laws;
    let c_per = spec.clusters_per_law;
    let n = spec.lexical_dim;
    let p = spec.semantic_dim;
    let block = p / q_laws;

    let mut map_rng = stream_rng(spec.seed, MAP_STREAM);
    let map = lexical_map(&mut map_rng, n, p);

    let mut laws = Vec::with_capacity(q_laws);
    let mut test_rows: Vec<f64> = Vec::new();
    let mut test_ids: Vec<String> = Vec::new();
    let mut test_labels: Vec<String> = Vec::new();
    let mut test_sem_rows: Vec<f64> = Vec::new();
    let mut corpus_sem_rows: Vec<f64> = Vec::new();
    let mut corpus_lex_rows: Vec<f64> = Vec::new();
    let mut corpus_ids: Vec<String> = Vec::new();
    let mut corpus_labels: Vec<String> = Vec::new();

    for q in 0..q_laws {
        let law_id = format!("law{q:02}");
        let mut rng = stream_rng(spec.seed, LAW_STREAM_BASE + q as u64);

        // Cluster prototypes: unit vectors inside this law's coordinate
        // block, quantized once so every consumer sees identical values.
        let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(c_per);
        for _ in 0..c_per {
            let inner = unit_vec(&mut rng, block);
            let mut w = vec![0.0; p];
            for (j, &v) in inner.iter().enumerate() {
                w[q * block + j] = quantize(v);
            }
            prototypes.push(w);
        }

        // Cluster-specific lexical distortion directions. These are drawn
        // even when the distortion scale is zero, so changing the scale
        // never shifts any other draw.
        let dirs: Vec<Vec<f64>> = (0..c_per).map(|_| unit_vec(&mut rng, n)).collect();

        // Lexical anchors.
        let anchors: Vec<Vec<f64>> = (0..c_per)
            .map(|c| {
                let mut a = map.matvec(&prototypes[c]);
                for (x, d) in a.iter_mut().zip(dirs[c].iter()) {
                    *x += spec.lexical_distortion * d;
                }
                a
            })
            .collect();

        // Training pairs.
        let rows = c_per * spec.samples_per_cluster;
        let mut lex = Vec::with_capacity(rows * n);
        let mut sem = Vec::with_capacity(rows * p);
        let mut train_ids = Vec::with_capacity(rows);
        for c in 0..c_per {
            for s in 0..spec.samples_per_cluster {
                train_ids.push(format!("{law_id}-c{c:02}-t{s:04}"));
                for j in 0..n {
                    lex.push(quantize(anchors[c][j] + TRAIN_JITTER * gauss(&mut rng)));
                }
                for j in 0..p {
                    sem.push(quantize(
                        prototypes[c][j] + spec.teacher_noise_sigma * gauss(&mut rng),
                    ));
                }
            }
        }
        laws.push(LawData {
            law_id: law_id.clone(),
            train_ids,
            train_lexical: DenseMatrix::from_rows(rows, n, lex)?,
            train_semantic: DenseMatrix::from_rows(rows, p, sem)?,
        });

        // Test queries: fresh jittered lexical points around each anchor,
        // with the clean prototype as ground truth.
        for c in 0..c_per {
            for t in 0..QUERIES_PER_CLUSTER {
                test_ids.push(format!("q-{law_id}-c{c:02}-{t:02}"));
                test_labels.push(law_id.clone());
                for j in 0..n {
                    test_rows.push(quantize(anchors[c][j] + TRAIN_JITTER * gauss(&mut rng)));
                }
                test_sem_rows.extend_from_slice(&prototypes[c]);
            }
        }

        // Corpus rows: unit vectors near each prototype, plus a lexical
        // rendering whose distortion direction is drawn independently of
        // the cluster's own, so lexical-space retrieval genuinely suffers
        // under distortion.
        for c in 0..c_per {
            for u in 0..CORPUS_PER_CLUSTER {
                corpus_ids.push(format!("d-{law_id}-c{c:02}-{u:02}"));
                corpus_labels.push(law_id.clone());
                let mut s: Vec<f64> = prototypes[c]
                    .iter()
                    .map(|&v| v + CORPUS_JITTER * gauss(&mut rng))
                    .collect();
                let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
                for x in &mut s {
                    *x /= norm;
                }
                let fresh_dir = unit_vec(&mut rng, n);
                let mut y = map.matvec(&s);
                for (x, d) in y.iter_mut().zip(fresh_dir.iter()) {
                    *x += spec.lexical_distortion * d;
                }
                corpus_sem_rows.extend(s.iter().map(|&v| quantize(v)));
                corpus_lex_rows.extend(y.iter().map(|&v| quantize(v)));
            }
        }
    }

    let n_test = test_ids.len();
    let n_corpus = corpus_ids.len();
    let test_queries = VectorBundle::new(
        DenseMatrix::from_rows(n_test, n, test_rows)?,
        test_ids,
        Some(test_labels),
    )?;
    let test_semantic = DenseMatrix::from_rows(n_test, p, test_sem_rows)?;
    let corpus_semantic = VectorBundle::new(
        DenseMatrix::from_rows(n_corpus, p, corpus_sem_rows)?,
        corpus_ids.clone(),
        Some(corpus_labels.clone()),
    )?;
    let corpus_lexical = VectorBundle::new(
        DenseMatrix::from_rows(n_corpus, n, corpus_lex_rows)?,
        corpus_ids,
        Some(corpus_labels),
    )?;

    Ok(SyntheticData {
        spec: spec.clone(),
        laws,
        test_queries,
        test_semantic,
        corpus_semantic,
        corpus_lexical,
    })
}
