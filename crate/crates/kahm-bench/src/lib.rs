//! Shared fixtures for the pipeline benchmarks: deterministic matrices and
//! ranked-retrieval results built without any external randomness source.

use kahm::{splitmix64, DenseMatrix, QueryResult};

/// Deterministic pseudo-random matrix with entries in [-1, 1], derived from
/// `seed` by hashing the flat element index.
pub fn pseudo_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|i| {
            let h = splitmix64(seed.wrapping_add(i as u64));
            (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    DenseMatrix::from_rows(rows, cols, data).expect("finite data")
}

/// Deterministic ranked results over `n_labels` labels for metric benches.
pub fn pseudo_results(n_queries: usize, list_len: usize, n_labels: usize) -> Vec<QueryResult> {
    (0..n_queries)
        .map(|q| {
            let gold = format!("law{:02}", splitmix64(q as u64) as usize % n_labels);
            let ranked_labels: Vec<String> = (0..list_len)
                .map(|r| {
                    let h = splitmix64((q * list_len + r) as u64 ^ 0x9e37);
                    format!("law{:02}", h as usize % n_labels)
                })
                .collect();
            QueryResult {
                query_id: format!("q{q:04}"),
                gold_label: gold,
                ranked_labels,
                style_tag: None,
            }
        })
        .collect()
}
