//! Per-cluster geometric model: encoding matrix, Gaussian kernel with
//! covariance scaling, fixed-point regularization, kernel-RLS membership
//! functions, the affine-hull map, and the space-folding measure.
//!
//! A model built from reference samples `X` (N x n) sends any point `x` to
//!
//! ```text
//! A(x) = sum_i  w_i(x) * x^i,      w_i(x) = h_i(Px) / sum_j h_j(Px)
//! ```
//!
//! where `P` projects onto the leading covariance eigenvectors, and the
//! membership values `h_i` solve a kernel regularized least-squares problem
//! whose ridge constant is the fixed point of a data-driven map. The output
//! always lies in the affine hull of the reference rows. The space-folding
//! measure then scores how much displacement and rotation the map applies
//! to `x`; small values mean `x` is geometrically compatible with the
//! reference cluster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sample_covariance, symmetric_eigen_desc, DenseMatrix, SpdFactor};

/// Empirical-range cutoff below which a projected coordinate is considered
/// collapsed and dropped by the encoding-matrix loop.
const RANGE_CUTOFF: f64 = 1e-3;
/// Convergence tolerance for the regularization fixed point.
const FIXED_POINT_TOL: f64 = 1e-12;
/// Iteration cap for the regularization fixed point.
const FIXED_POINT_CAP: usize = 10_000;
/// Threshold on |sum of membership values| below which normalization is
/// refused. The membership values come from a regularized solve and can be
/// negative, so their sum is not sign-protected.
const DENOMINATOR_FLOOR: f64 = 1e-12;
/// Relative diagonal jitter applied once if the projected covariance fails
/// its SPD factorization.
const JITTER_SCALE: f64 = 1e-10;

/// One cluster's geometric model.
///
/// Immutable after construction; all query-time operations take `&self` and
/// are safe to call concurrently.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KahmModel {
    /// Reference samples X, one row per sample (N x n).
    reference: DenseMatrix,
    /// Encoding matrix P (n_low x n); rows are covariance eigenvectors.
    encoding: DenseMatrix,
    /// Covariance of the projected reference samples (n_low x n_low), SPD.
    theta: DenseMatrix,
    /// Cached inverse of `theta`.
    theta_inv: DenseMatrix,
    /// Ridge constant of the membership solve.
    lambda_star: f64,
    /// Cached (K + lambda* I)^{-1}, N x N.
    membership_coeffs: DenseMatrix,
    /// Cached projected reference rows (N x n_low); derived, not serialized
    /// independently of the fields above.
    proj_reference: DenseMatrix,
}

/// Space-folding score of a point against one cluster model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldingScore {
    /// Combined score, `sqrt((euc^2 + cos^2) / 2)`, in [0, 1].
    pub total: f64,
    /// Displacement term `1 - exp(-||x - A(x)||)`, in [0, 1).
    pub euclidean_part: f64,
    /// Angular term `arccos(cos(A(x), x)) / pi`, in [0, 1].
    pub cosine_part: f64,
}

impl FoldingScore {
    /// Combines the two components into the total score.
    pub fn from_parts(euclidean_part: f64, cosine_part: f64) -> Self {
        let total =
            (0.5 * (euclidean_part * euclidean_part + cosine_part * cosine_part)).sqrt();
        Self {
            total,
            euclidean_part,
            cosine_part,
        }
    }
}

/// Computes the encoding matrix: rows are the leading eigenvectors of the
/// sample covariance, truncated while any retained projected coordinate has
/// empirical range below 1e-3.
///
/// Starts from `n_low = min(20, n, N-1)` and decrements; the projection is
/// re-evaluated against the reduced matrix each step (the ranges of the
/// retained rows do not change, so only trailing rows are dropped).
pub fn compute_encoding_matrix(x: &DenseMatrix) -> Result<(DenseMatrix, usize)> {
    let n_samples = x.rows();
    let dim = x.cols();
    if n_samples < 2 {
        return Err(Error::TooFewSamples {
            context: "encoding matrix".into(),
            needed: 2,
            got: n_samples,
        });
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("samples have zero columns".into()));
    }
    let cov = sample_covariance(x)?;
    let (_vals, vecs) = symmetric_eigen_desc(&cov);
    let n_init = 20usize.min(dim).min(n_samples - 1);

    // Range of each candidate projected coordinate. Row j of the eigenvector
    // matrix is fixed regardless of how many rows are retained.
    let mut ranges = Vec::with_capacity(n_init);
    for j in 0..n_init {
        let axis = vecs.row(j);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n_samples {
            let row = x.row(i);
            let mut proj = 0.0;
            for d in 0..dim {
                proj += axis[d] * row[d];
            }
            lo = lo.min(proj);
            hi = hi.max(proj);
        }
        ranges.push(hi - lo);
    }

    let mut n_low = n_init;
    while n_low > 0 {
        let min_range = ranges[..n_low]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_range >= RANGE_CUTOFF {
            break;
        }
        n_low -= 1;
    }
    if n_low == 0 {
        return Err(Error::DegenerateData);
    }

    let mut enc = DenseMatrix::zeros(n_low, dim);
    for j in 0..n_low {
        let axis = vecs.row(j);
        for d in 0..dim {
            enc.set(j, d, axis[d]);
        }
    }
    Ok((enc, n_low))
}

/// Covariance of the projected samples with the unbiased N-1 divisor,
/// repaired to SPD with one round of diagonal jitter if necessary.
pub fn projected_covariance(x_proj: &DenseMatrix) -> Result<DenseMatrix> {
    covariance_spd(x_proj).map(|(theta, _)| theta)
}

/// Covariance plus its Cholesky factor; shared by `projected_covariance`
/// and `build_model`.
fn covariance_spd(x_proj: &DenseMatrix) -> Result<(DenseMatrix, SpdFactor)> {
    let mut theta = sample_covariance(x_proj)?;
    if let Some(f) = SpdFactor::new(&theta) {
        return Ok((theta, f));
    }
    let dim = theta.rows();
    let trace: f64 = (0..dim).map(|i| theta.get(i, i)).sum();
    let jitter = JITTER_SCALE * trace / dim as f64;
    for i in 0..dim {
        let v = theta.get(i, i) + jitter;
        theta.set(i, i, v);
    }
    match SpdFactor::new(&theta) {
        Some(f) => Ok((theta, f)),
        None => Err(Error::SingularCovariance),
    }
}

/// Gaussian kernel with inverse-covariance scaling:
/// `exp(-(u-v)^T theta^{-1} (u-v) / (2 n_low))`. Inputs are points in the
/// projected (n_low-dimensional) space.
pub fn gaussian_kernel(u: &[f64], v: &[f64], model: &KahmModel) -> f64 {
    kernel_value(u, v, &model.theta_inv, model.n_low())
}

fn kernel_value(u: &[f64], v: &[f64], theta_inv: &DenseMatrix, n_low: usize) -> f64 {
    debug_assert_eq!(u.len(), n_low);
    debug_assert_eq!(v.len(), n_low);
    let mut diff = vec![0.0; n_low];
    for i in 0..n_low {
        diff[i] = u[i] - v[i];
    }
    let mut quad = 0.0;
    for i in 0..n_low {
        let row = theta_inv.row(i);
        let mut acc = 0.0;
        for j in 0..n_low {
            acc += row[j] * diff[j];
        }
        quad += diff[i] * acc;
    }
    (-quad / (2.0 * n_low as f64)).exp()
}

/// One application of the reconstruction-residual map
/// `r(e, tau) = ||X - K (K + (e+tau) I)^{-1} X||_F^2 / (n N)`.
///
/// Exposed so tests can verify the fixed point and the contraction of its
/// iterates independently of `solve_lambda_star`.
pub fn regularization_residual(
    x: &DenseMatrix,
    kernel_matrix: &DenseMatrix,
    e: f64,
    tau: f64,
) -> Result<f64> {
    let n_samples = x.rows();
    let dim = x.cols();
    let mut shifted = kernel_matrix.clone();
    for i in 0..n_samples {
        let v = shifted.get(i, i) + e + tau;
        shifted.set(i, i, v);
    }
    let factor = SpdFactor::new(&shifted).ok_or(Error::SingularCovariance)?;
    let sol = factor.solve_mat(x); // (K + (e+tau) I)^{-1} X
    let smooth = kernel_matrix.to_na() * sol.to_na(); // K (...)^{-1} X
    let x_na = x.to_na();
    let resid = &x_na - &smooth;
    Ok(resid.norm_squared() / (dim as f64 * n_samples as f64))
}

/// Solves for the ridge constant: iterates `e <- r(e, tau)` from the
/// midpoint of the admissible interval `(0, ||X||_F^2 / (n N))` until the
/// step is below 1e-12, then returns `(lambda_star, e_hat)` with
/// `lambda_star = e_hat + tau` and `tau = 2 ||X||_F^2 / (n N)`.
pub fn solve_lambda_star(x: &DenseMatrix, kernel_matrix: &DenseMatrix) -> Result<(f64, f64)> {
    let n_samples = x.rows();
    let dim = x.cols();
    if kernel_matrix.rows() != n_samples || kernel_matrix.cols() != n_samples {
        return Err(Error::InvalidArgument(
            "kernel matrix shape does not match sample count".into(),
        ));
    }
    let fro2 = x.data().iter().map(|v| v * v).sum::<f64>();
    if fro2 == 0.0 {
        return Err(Error::ZeroData);
    }
    let scale = 1.0 / (dim as f64 * n_samples as f64);
    let tau = 2.0 * fro2 * scale;
    let mut e = 0.5 * fro2 * scale; // midpoint of (0, fro2 * scale)

    // Preassembled nalgebra views; the shifted matrix is rebuilt per step.
    let x_na = x.to_na();
    let k_na = kernel_matrix.to_na();
    for _ in 0..FIXED_POINT_CAP {
        let mut shifted = k_na.clone();
        for i in 0..n_samples {
            shifted[(i, i)] += e + tau;
        }
        let chol =
            nalgebra::Cholesky::new(shifted).ok_or(Error::SingularCovariance)?;
        let sol = chol.solve(&x_na);
        let resid = &x_na - &k_na * sol;
        let next = resid.norm_squared() * scale;
        if (next - e).abs() < FIXED_POINT_TOL {
            return Ok((next + tau, next));
        }
        e = next;
    }
    Err(Error::NoConvergence(FIXED_POINT_CAP))
}

/// Builds the full cluster model from reference samples.
pub fn build_model(x: DenseMatrix) -> Result<KahmModel> {
    let n_samples = x.rows();
    if n_samples < 2 {
        return Err(Error::TooFewSamples {
            context: "cluster model".into(),
            needed: 2,
            got: n_samples,
        });
    }
    let (encoding, n_low) = compute_encoding_matrix(&x)?;

    // Projected reference rows (N x n_low).
    let mut proj = DenseMatrix::zeros(n_samples, n_low);
    for i in 0..n_samples {
        let p = encoding.matvec(x.row(i));
        for j in 0..n_low {
            proj.set(i, j, p[j]);
        }
    }

    let (theta, theta_factor) = covariance_spd(&proj)?;
    let theta_inv = theta_factor.inverse();

    // Kernel Gram matrix over the projected rows; symmetric, unit diagonal.
    let mut kernel = DenseMatrix::zeros(n_samples, n_samples);
    for i in 0..n_samples {
        kernel.set(i, i, 1.0);
        for j in (i + 1)..n_samples {
            let v = kernel_value(proj.row(i), proj.row(j), &theta_inv, n_low);
            kernel.set(i, j, v);
            kernel.set(j, i, v);
        }
    }

    let (lambda_star, _e_hat) = solve_lambda_star(&x, &kernel)?;

    let mut shifted = kernel.clone();
    for i in 0..n_samples {
        let v = shifted.get(i, i) + lambda_star;
        shifted.set(i, i, v);
    }
    let membership_coeffs = SpdFactor::new(&shifted)
        .ok_or(Error::SingularCovariance)?
        .inverse();

    Ok(KahmModel {
        reference: x,
        encoding,
        theta,
        theta_inv,
        lambda_star,
        membership_coeffs,
        proj_reference: proj,
    })
}

impl KahmModel {
    /// Reassembles a model from its stored fields, revalidating the type
    /// invariants and recomputing the projected-reference cache.
    pub fn from_parts(
        reference: DenseMatrix,
        encoding: DenseMatrix,
        theta: DenseMatrix,
        theta_inv: DenseMatrix,
        lambda_star: f64,
        membership_coeffs: DenseMatrix,
    ) -> Result<Self> {
        let n_samples = reference.rows();
        let dim = reference.cols();
        let n_low = encoding.rows();
        if n_samples < 2 {
            return Err(Error::InvalidArgument("model needs N >= 2".into()));
        }
        if n_low == 0 || n_low > 20.min(dim).min(n_samples - 1) {
            return Err(Error::InvalidArgument(format!(
                "n_low {} outside [1, min(20, n, N-1)]",
                n_low
            )));
        }
        if encoding.cols() != dim
            || theta.rows() != n_low
            || theta.cols() != n_low
            || theta_inv.rows() != n_low
            || theta_inv.cols() != n_low
            || membership_coeffs.rows() != n_samples
            || membership_coeffs.cols() != n_samples
        {
            return Err(Error::InvalidArgument("model matrix shapes disagree".into()));
        }
        if !(lambda_star > 0.0) {
            return Err(Error::InvalidArgument("lambda_star must be positive".into()));
        }
        if theta.max_asymmetry() > 1e-8 || membership_coeffs.max_asymmetry() > 1e-8 {
            return Err(Error::InvalidArgument(
                "theta and membership coefficients must be symmetric".into(),
            ));
        }
        if SpdFactor::new(&theta).is_none() {
            return Err(Error::InvalidArgument("theta must be positive definite".into()));
        }
        // theta_inv must actually invert theta.
        let prod = theta.to_na() * theta_inv.to_na();
        for i in 0..n_low {
            for j in 0..n_low {
                let want = if i == j { 1.0 } else { 0.0 };
                if (prod[(i, j)] - want).abs() > 1e-8 {
                    return Err(Error::InvalidArgument(
                        "theta_inv does not invert theta".into(),
                    ));
                }
            }
        }
        let mut proj = DenseMatrix::zeros(n_samples, n_low);
        for i in 0..n_samples {
            let p = encoding.matvec(reference.row(i));
            for j in 0..n_low {
                proj.set(i, j, p[j]);
            }
        }
        Ok(Self {
            reference,
            encoding,
            theta,
            theta_inv,
            lambda_star,
            membership_coeffs,
            proj_reference: proj,
        })
    }

    pub fn reference(&self) -> &DenseMatrix {
        &self.reference
    }

    pub fn encoding(&self) -> &DenseMatrix {
        &self.encoding
    }

    pub fn theta(&self) -> &DenseMatrix {
        &self.theta
    }

    pub fn theta_inv(&self) -> &DenseMatrix {
        &self.theta_inv
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    pub fn membership_coeffs(&self) -> &DenseMatrix {
        &self.membership_coeffs
    }

    /// Number of retained encoding dimensions.
    pub fn n_low(&self) -> usize {
        self.encoding.rows()
    }

    /// Number of reference samples.
    pub fn n_samples(&self) -> usize {
        self.reference.rows()
    }

    /// Original sample dimension.
    pub fn dim(&self) -> usize {
        self.reference.cols()
    }
}

/// Applies the affine-hull map and also returns the normalized weights.
///
/// `x` must have the model's original dimension. Fails with
/// `UnstableDenominator` when the membership sum is within 1e-12 of zero;
/// negative individual weights are allowed (the combination is affine, not
/// convex).
pub fn kahm_map_with_weights(model: &KahmModel, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "query has dimension {}, model expects {}",
            x.len(),
            model.dim()
        )));
    }
    let proj = model.encoding.matvec(x);
    let n_samples = model.n_samples();
    let mut kappa = vec![0.0; n_samples];
    for j in 0..n_samples {
        kappa[j] = kernel_value(
            &proj,
            model.proj_reference.row(j),
            &model.theta_inv,
            model.n_low(),
        );
    }
    let h = model.membership_coeffs.matvec(&kappa);
    let sum: f64 = h.iter().sum();
    if sum.abs() < DENOMINATOR_FLOOR {
        return Err(Error::UnstableDenominator(sum));
    }
    let weights: Vec<f64> = h.iter().map(|v| v / sum).collect();
    let out = model.reference.matvec_t(&weights);
    Ok((out, weights))
}

/// Maps `x` to its affine-hull reconstruction.
pub fn kahm_map(model: &KahmModel, x: &[f64]) -> Result<Vec<f64>> {
    kahm_map_with_weights(model, x).map(|(out, _)| out)
}

/// Space-folding score of `x` against the model.
///
/// The cosine term is defined as maximal mismatch (1) when either `x` or
/// its reconstruction has zero norm; the arccos argument is clamped to
/// [-1, 1] to absorb rounding.
pub fn folding_measure(model: &KahmModel, x: &[f64]) -> Result<FoldingScore> {
    let a = kahm_map(model, x)?;
    let mut dist2 = 0.0;
    let mut dot = 0.0;
    let mut na2 = 0.0;
    let mut nx2 = 0.0;
    for i in 0..x.len() {
        let d = x[i] - a[i];
        dist2 += d * d;
        dot += a[i] * x[i];
        na2 += a[i] * a[i];
        nx2 += x[i] * x[i];
    }
    let euclidean_part = 1.0 - (-dist2.sqrt()).exp();
    let cosine_part = if na2 == 0.0 || nx2 == 0.0 {
        1.0
    } else {
        let c = (dot / (na2.sqrt() * nx2.sqrt())).clamp(-1.0, 1.0);
        c.acos() / std::f64::consts::PI
    };
    Ok(FoldingScore::from_parts(euclidean_part, cosine_part))
}
