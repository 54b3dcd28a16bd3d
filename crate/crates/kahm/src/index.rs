//! Exact inner-product retrieval over an L2-normalized corpus.
//!
//! The corpus is small enough for exhaustive scoring, which keeps ranking
//! exact: every search scores all rows against the normalized query and
//! sorts descending, breaking score ties by row index.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Immutable retrieval index: normalized vectors plus per-row bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatIndex {
    vectors: DenseMatrix,
    ids: Vec<String>,
    labels: Vec<String>,
}

/// One ranked retrieval result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub label: String,
    pub score: f64,
}

impl FlatIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Embedding dimension of the stored rows.
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vectors(&self) -> &DenseMatrix {
        &self.vectors
    }
}

/// Builds an index from raw rows, normalizing each to unit length.
///
/// Rejects zero rows (they carry no direction) and duplicate ids.
pub fn build_index(
    vectors: DenseMatrix,
    ids: Vec<String>,
    labels: Vec<String>,
) -> Result<FlatIndex> {
    let m = vectors.rows();
    if ids.len() != m || labels.len() != m {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} ids and {} labels",
            m,
            ids.len(),
            labels.len()
        )));
    }
    let mut seen = HashSet::with_capacity(m);
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    let mut vectors = vectors;
    let p = vectors.cols();
    for i in 0..m {
        let norm: f64 = vectors.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroRow(ids[i].clone()));
        }
        for j in 0..p {
            let v = vectors.get(i, j) / norm;
            vectors.set(i, j, v);
        }
    }
    Ok(FlatIndex {
        vectors,
        ids,
        labels,
    })
}

/// Exact top-`k` rows by inner product with the normalized query,
/// descending; ties take the lower row index.
pub fn search(index: &FlatIndex, q: &[f64], k: usize) -> Result<Vec<SearchHit>> {
    let m = index.len();
    if k == 0 {
        return Err(Error::InvalidArgument("cutoff must be >= 1".into()));
    }
    if k > m {
        return Err(Error::CutoffTooLarge { k, len: m });
    }
    if q.len() != index.dim() {
        return Err(Error::InvalidArgument(format!(
            "query has dimension {}, index stores {}",
            q.len(),
            index.dim()
        )));
    }
    let norm: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if q.is_empty() || norm == 0.0 {
        return Err(Error::EmptyQuery);
    }
    let unit: Vec<f64> = q.iter().map(|v| v / norm).collect();
    let scores = index.vectors.matvec(&unit);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(order[..k]
        .iter()
        .map(|&i| SearchHit {
            id: index.ids[i].clone(),
            label: index.labels[i].clone(),
            score: scores[i],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(rows: usize, cols: usize, data: Vec<f64>) -> FlatIndex {
        let ids = (0..rows).map(|i| format!("d{i}")).collect();
        let labels = (0..rows).map(|i| format!("l{i}")).collect();
        build_index(DenseMatrix::from_rows(rows, cols, data).unwrap(), ids, labels).unwrap()
    }

    #[test]
    fn rows_are_normalized_on_build() {
        let index = idx(1, 2, vec![3.0, 4.0]);
        assert!((index.vectors().get(0, 0) - 0.6).abs() < 1e-12);
        assert!((index.vectors().get(0, 1) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let v = DenseMatrix::from_rows(2, 1, vec![1.0, 2.0]).unwrap();
        let err = build_index(
            v,
            vec!["a".into(), "a".into()],
            vec!["x".into(), "y".into()],
        );
        assert!(matches!(err, Err(Error::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn zero_rows_rejected() {
        let v = DenseMatrix::from_rows(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let err = build_index(
            v,
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
        );
        assert!(matches!(err, Err(Error::ZeroRow(id)) if id == "b"));
    }

    #[test]
    fn three_row_ranking_oracle() {
        let s = 1.0 / 2.0f64.sqrt();
        let index = idx(3, 2, vec![1.0, 0.0, 0.0, 1.0, s, s]);
        let hits = search(&index, &[1.0, 0.0], 3).unwrap();
        assert_eq!(hits[0].id, "d0");
        assert_eq!(hits[1].id, "d2");
        assert_eq!(hits[2].id, "d1");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
        assert!((hits[1].score - 0.70711).abs() < 1e-5);
        assert!(hits[2].score.abs() < 1e-12);
    }

    #[test]
    fn self_query_ranks_first_with_unit_score() {
        let index = idx(3, 3, vec![0.2, 0.5, 0.1, -0.4, 0.3, 0.9, 1.0, 1.0, 0.0]);
        let stored: Vec<f64> = index.vectors().row(1).to_vec();
        let hits = search(&index, &stored, 1).unwrap();
        assert_eq!(hits[0].id, "d1");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_cutoff_returns_a_permutation() {
        let index = idx(4, 2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.5, 0.5]);
        let hits = search(&index, &[0.3, 0.7], 4).unwrap();
        let mut ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec!["d0", "d1", "d2", "d3"]);
    }

    #[test]
    fn ties_break_by_row_index() {
        // Rows 0 and 1 score identically against the axis query.
        let index = idx(3, 2, vec![0.0, 1.0, 0.0, -1.0, 1.0, 0.0]);
        let hits = search(&index, &[1.0, 0.0], 3).unwrap();
        assert_eq!(hits[0].id, "d2");
        assert_eq!(hits[1].id, "d0");
        assert_eq!(hits[2].id, "d1");
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(17);
        for _ in 0..200 {
            let m = rng.gen_range(1..=60);
            let p = rng.gen_range(1..=8);
            let mut data = Vec::with_capacity(m * p);
            for _ in 0..m * p {
                // Small integer grid so exact score ties actually occur.
                data.push(rng.gen_range(-2i32..=2) as f64);
            }
            // Ensure no zero rows.
            for r in 0..m {
                if data[r * p..(r + 1) * p].iter().all(|v| *v == 0.0) {
                    data[r * p] = 1.0;
                }
            }
            let index = idx(m, p, data);
            let mut q: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if q.iter().all(|v| *v == 0.0) {
                q[0] = 1.0;
            }
            let k = rng.gen_range(1..=m);
            let hits = search(&index, &q, k).unwrap();

            let qnorm: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let unit: Vec<f64> = q.iter().map(|v| v / qnorm).collect();
            let mut scored: Vec<(usize, f64)> = (0..m)
                .map(|i| {
                    let row = index.vectors().row(i);
                    (i, row.iter().zip(&unit).map(|(a, b)| a * b).sum())
                })
                .collect();
            // Stable sort on descending score preserves index order on ties.
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            for (hit, (row, score)) in hits.iter().zip(scored.iter().take(k)) {
                assert_eq!(hit.id, format!("d{row}"));
                assert_eq!(hit.score, *score);
            }
        }
    }

    #[test]
    fn ranking_invariant_to_query_scaling() {
        let index = idx(3, 2, vec![0.9, 0.1, 0.2, 0.8, -0.5, 0.5]);
        let a = search(&index, &[0.4, 0.3], 3).unwrap();
        let b = search(&index, &[4.0, 3.0], 3).unwrap();
        let ids_a: Vec<&str> = a.iter().map(|h| h.id.as_str()).collect();
        let ids_b: Vec<&str> = b.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids_a, ids_b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.score - y.score).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_queries_rejected() {
        let index = idx(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            search(&index, &[0.0, 0.0], 1),
            Err(Error::EmptyQuery)
        ));
        assert!(matches!(
            search(&index, &[1.0, 0.0], 3),
            Err(Error::CutoffTooLarge { k: 3, len: 2 })
        ));
    }
}
