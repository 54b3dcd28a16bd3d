//! Multi-family registry and distance-gated selection: each query is routed
//! to the family whose clusters fold it the least, and that family's encoder
//! produces the final semantic embedding.

use serde::{Deserialize, Serialize};

use crate::cluster::{folding_totals, predict_embedding, ClusterSet};
use crate::error::{Error, Result};

/// Ordered collection of per-family encoders, keyed by law id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderRegistry {
    entries: Vec<(String, ClusterSet)>,
}

impl EncoderRegistry {
    /// Builds a registry from `(law_id, encoder)` pairs. Entries are stored
    /// in ascending law-id order regardless of input order; duplicate ids
    /// are rejected.
    pub fn new(mut entries: Vec<(String, ClusterSet)>) -> Result<Self> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateLaw(w[0].0.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// Entries in ascending law-id order.
    pub fn entries(&self) -> &[(String, ClusterSet)] {
        &self.entries
    }

    /// Looks up one family's encoder.
    pub fn get(&self, law_id: &str) -> Option<&ClusterSet> {
        self.entries
            .binary_search_by(|(id, _)| id.as_str().cmp(law_id))
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Routed encoding of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedQuery {
    /// Law selected by the gate.
    pub law_id: String,
    /// Predicted semantic embedding (normalized unless `zero_norm`).
    pub embedding: Vec<f64>,
    /// Set when normalization was requested but the prediction had zero
    /// norm; the embedding is then returned unnormalized.
    pub zero_norm: bool,
}

/// Gate score of one family for a query: the minimum clusterwise folding
/// total. Smaller means the family's geometry explains the query better.
pub fn selection_score(encoder: &ClusterSet, x: &[f64]) -> Result<f64> {
    let totals = folding_totals(x, encoder.cluster_models())?;
    Ok(totals.into_iter().fold(f64::INFINITY, f64::min))
}

/// Routes `x` to the family with the smallest selection score (ties take
/// the smaller law id) and returns that family's predicted embedding,
/// L2-normalized when `normalize` is set.
pub fn encode_query(
    registry: &EncoderRegistry,
    x: &[f64],
    normalize: bool,
) -> Result<EncodedQuery> {
    if registry.is_empty() {
        return Err(Error::EmptyRegistry);
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, (_, encoder)) in registry.entries.iter().enumerate() {
        let score = selection_score(encoder, x)?;
        // Strict improvement keeps the earliest (smallest) law id on ties.
        if best.map_or(true, |(b, _)| score < b) {
            best = Some((score, i));
        }
    }
    let (_, idx) = best.expect("registry is nonempty");
    let (law_id, encoder) = &registry.entries[idx];
    let mut embedding = predict_embedding(x, encoder)?;
    let mut zero_norm = false;
    if normalize {
        let norm: f64 = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut embedding {
                *v /= norm;
            }
        } else {
            zero_norm = true;
        }
    }
    Ok(EncodedQuery {
        law_id: law_id.clone(),
        embedding,
        zero_norm,
    })
}
