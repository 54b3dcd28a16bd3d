//! Row-major dense matrix type and the small set of linear-algebra
//! primitives the encoder needs: sample covariance, symmetric
//! eigendecomposition, and SPD (Cholesky) solves.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major real matrix with finite entries.
///
/// This is the shared carrier for sample sets, embeddings, kernel matrices,
/// and every other matrix-valued quantity in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "data length {} != rows {} x cols {}",
                data.len(),
                rows,
                cols
            )));
        }
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: idx / cols.max(1),
                    col: idx % cols.max(1),
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// All-zeros matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major backing storage.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += row[j] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Transposed matrix-vector product `self^T * x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_t dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let xi = x[i];
            for j in 0..self.cols {
                out[j] += row[j] * xi;
            }
        }
        out
    }

    /// Maximum absolute entry-wise asymmetry, `max |A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub(crate) fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_na(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

/// Sample covariance of the rows of `x`, with the unbiased N-1 divisor.
///
/// Requires at least two rows.
pub fn sample_covariance(x: &DenseMatrix) -> Result<DenseMatrix> {
    let n = x.rows();
    let d = x.cols();
    if n < 2 {
        return Err(Error::TooFewSamples {
            context: "sample covariance".into(),
            needed: 2,
            got: n,
        });
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        let row = x.row(i);
        for j in 0..d {
            mean[j] += row[j];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = DenseMatrix::zeros(d, d);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                let db = row[b] - mean[b];
                let v = cov.get(a, b) + da * db;
                cov.set(a, b, v);
            }
        }
    }
    let scale = 1.0 / (n as f64 - 1.0);
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) * scale;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    Ok(cov)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
///
/// Returns `(eigenvalues, eigenvectors)` where row `i` of `eigenvectors` is
/// the unit eigenvector for the i-th largest eigenvalue. Each eigenvector's
/// sign is fixed so its largest-magnitude component (first such index on
/// ties) is positive, which makes serialized models reproducible.
pub fn symmetric_eigen_desc(m: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    debug_assert_eq!(m.rows(), m.cols());
    let d = m.rows();
    let eig = SymmetricEigen::new(m.to_na());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let mut values = Vec::with_capacity(d);
    let mut vectors = DenseMatrix::zeros(d, d);
    for (rank, &idx) in order.iter().enumerate() {
        values.push(eig.eigenvalues[idx]);
        let col = eig.eigenvectors.column(idx);
        let mut best = 0usize;
        for j in 1..d {
            if col[j].abs() > col[best].abs() {
                best = j;
            }
        }
        let flip = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            vectors.set(rank, j, flip * col[j]);
        }
    }
    (values, vectors)
}

/// Cholesky factorization of an SPD matrix; `None` if not SPD.
pub struct SpdFactor {
    chol: Cholesky<f64, nalgebra::Dyn>,
    dim: usize,
}

impl SpdFactor {
    pub fn new(m: &DenseMatrix) -> Option<Self> {
        debug_assert_eq!(m.rows(), m.cols());
        let dim = m.rows();
        Cholesky::new(m.to_na()).map(|chol| Self { chol, dim })
    }

    /// Solves `A x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim);
        let rhs = nalgebra::DVector::from_column_slice(b);
        let sol = self.chol.solve(&rhs);
        sol.iter().copied().collect()
    }

    /// Solves `A X = B` column-wise for a matrix right-hand side.
    pub fn solve_mat(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(b.rows(), self.dim);
        let sol = self.chol.solve(&b.to_na());
        DenseMatrix::from_na(&sol)
    }

    /// Full inverse `A^{-1}`.
    pub fn inverse(&self) -> DenseMatrix {
        DenseMatrix::from_na(&self.chol.inverse())
    }
}

/// Least-squares residual norm of projecting `target` onto the column span
/// of `basis` (columns are `basis` rows transposed). Used to verify affine
/// hull membership.
pub fn span_projection_residual(basis_rows: &[&[f64]], target: &[f64]) -> f64 {
    if basis_rows.is_empty() {
        return (target.iter().map(|v| v * v).sum::<f64>()).sqrt();
    }
    let dim = target.len();
    let cols = basis_rows.len();
    let mut a = DMatrix::zeros(dim, cols);
    for (c, row) in basis_rows.iter().enumerate() {
        for r in 0..dim {
            a[(r, c)] = row[r];
        }
    }
    let b = nalgebra::DVector::from_column_slice(target);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-12).expect("svd solve");
    let resid = &a * coef - b;
    resid.norm()
}
