//! Lexical-to-semantic query encoding with kernel affine hull machines.
//!
//! The crate trains one encoder per document family ("law"): reference
//! lexical vectors are clustered, each cluster gets a geometric model that
//! maps queries into the cluster's affine hull, and a feature map built from
//! space-folding scores mixes frozen semantic prototypes into the final
//! embedding. A registry of encoders routes each query to the family whose
//! geometry it matches best; retrieval is exact inner-product search over
//! normalized corpus embeddings; the evaluation module scores rankings and
//! attaches paired-bootstrap confidence intervals.
//!
//! Determinism: every random choice flows from a caller-provided `u64` seed
//! through a counter-based stream splitter, so training, evaluation, and
//! synthetic data generation are reproducible bit for bit — including across
//! thread counts, because parallel sections only map independent work.

pub mod cluster;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod geometry;
pub mod index;
pub mod io;
pub mod matrix;
pub mod rng;

pub use cluster::{
    augment_singletons, feature_map, feature_map_from_totals, folding_totals, kmeans_clusters,
    nlms_refine, ordered_k_min, ordered_k_min_from_totals, predict_embedding, train_law_encoder,
    train_law_encoder_with_summary, ClusterSet, TrainConfig, TrainSummary,
};
pub use error::{Error, Result};
pub use eval::{
    aggregate, aggregate_by_style, aggregate_scores, consensus_metrics, default_threshold_grid,
    l2_mass_diagnostic, paired_bootstrap, query_score, ranking_metrics, routing_sweep,
    stacked_training_samples, timing_profile, AggMode, BootstrapConfig, BootstrapReport,
    DeltaRow, EvalReport, IntervalEstimate, L2MassReport, Metric, MetricParams, MetricRow,
    QueryResult, ResampleUnit, SweepReport, SweepRow, SystemScores, TimingProfile,
    DEFAULT_CUTOFFS, DEFAULT_TAU, L2_MASS_TOLERANCE,
};
pub use gateway::{encode_query, selection_score, EncodedQuery, EncoderRegistry};
pub use geometry::{
    build_model, compute_encoding_matrix, folding_measure, gaussian_kernel, kahm_map,
    kahm_map_with_weights, projected_covariance, regularization_residual, solve_lambda_star,
    FoldingScore, KahmModel,
};
pub use index::{build_index, search, FlatIndex, SearchHit};
pub use io::{
    generate_synthetic, load_registry, read_bundle, save_registry, write_bundle, LawData,
    SyntheticData, SyntheticSpec, VectorBundle,
};
pub use matrix::{sample_covariance, symmetric_eigen_desc, DenseMatrix, SpdFactor};
pub use rng::{derive_seed, seeded_rng, splitmix64, stream_rng};
