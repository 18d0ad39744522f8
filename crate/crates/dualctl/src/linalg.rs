//! Dense linear-algebra kernel.
//!
//! Everything in this module is small and generic: nuclear norms, the
//! closed-form maximiser of `⟨A, M⟩` over the scaled-orthogonal group
//! `{A : A Aᵀ = α² I}`, Haar-distributed orthogonal matrices and uniform
//! unit-sphere samples. The rest of the crate builds its value functions and
//! policies on top of these four operations.
//!
//! Singular values are computed by a one-sided Jacobi iteration rather than
//! nalgebra's bidiagonal SVD: the latter silently returns an incorrect
//! factorisation for some exactly rank-deficient inputs (orthogonal factors,
//! wrong singular values — see the regression tests below), and the matrices
//! this crate decomposes are frequently exact outer products. Jacobi is
//! accurate to machine precision on the small dimensions used here.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Tolerance multiplier used when validating scaled-orthogonality.
const ORTHOGONALITY_TOL: f64 = 1e-9;

/// Maximum Jacobi sweeps before reporting SVD failure.
const SVD_MAX_SWEEPS: usize = 60;

/// A square matrix `A` with `A Aᵀ = α² I`.
///
/// The constructor enforces the defining identity, so holding a value of this
/// type is a proof that the matrix lies on the scaled-orthogonal manifold
/// (up to `1e-9 · (1 + α²)` per entry).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledOrthogonal {
    matrix: DMatrix<f64>,
    scale: f64,
}

impl ScaledOrthogonal {
    /// Validates `matrix · matrixᵀ = scale² · I` and wraps the matrix.
    pub fn new(matrix: DMatrix<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter {
                name: "scale",
                reason: format!("must be a positive finite real, got {scale}"),
            });
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                context: "ScaledOrthogonal::new",
                expected: "square matrix".to_string(),
                got: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        let n = matrix.nrows();
        let gram = &matrix * matrix.transpose();
        let tol = ORTHOGONALITY_TOL * (1.0 + scale * scale);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { scale * scale } else { 0.0 };
                if (gram[(i, j)] - expect).abs() > tol {
                    return Err(Error::InvalidParameter {
                        name: "matrix",
                        reason: format!(
                            "A·Aᵀ deviates from {}²·I at ({i},{j}) by {:.3e}",
                            scale,
                            (gram[(i, j)] - expect).abs()
                        ),
                    });
                }
            }
        }
        Ok(Self { matrix, scale })
    }

    /// The wrapped matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The scale `α` with `A Aᵀ = α² I`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Side length of the square matrix.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Applies the matrix to a vector.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// Flips the sign of the whole matrix; the manifold is symmetric.
    pub fn negated(&self) -> Self {
        Self {
            matrix: -&self.matrix,
            scale: self.scale,
        }
    }

    /// Frobenius inner product `⟨A, M⟩ = tr(Aᵀ M)`.
    pub fn inner(&self, m: &DMatrix<f64>) -> f64 {
        self.matrix.dot(m)
    }
}

/// Full singular value decomposition `m = u · diag(sigma) · vᵀ` of a square
/// matrix, with `u`, `v` orthogonal and `sigma` sorted in descending order.
#[derive(Debug, Clone)]
pub struct SquareSvd {
    /// Left singular vectors, one per column.
    pub u: DMatrix<f64>,
    /// Singular values, descending, all non-negative.
    pub sigma: DVector<f64>,
    /// Right singular vectors, one per column (not transposed).
    pub v: DMatrix<f64>,
}

/// One-sided Jacobi SVD of a square matrix.
///
/// Rotates pairs of columns until they are mutually orthogonal; the column
/// norms are then the singular values, the normalised columns the left
/// vectors, and the accumulated rotations the right vectors. Columns whose
/// singular value underflows are replaced by an orthonormal completion, so
/// both factors are always fully orthogonal.
pub fn jacobi_svd(m: &DMatrix<f64>) -> Result<SquareSvd> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "jacobi_svd",
            expected: "square matrix".to_string(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "matrix must be non-empty".to_string(),
        });
    }
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    for _ in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..n {
                    app += a[(i, p)] * a[(i, p)];
                    aqq += a[(i, q)] * a[(i, q)];
                    apq += a[(i, p)] * a[(i, q)];
                }
                if apq.abs() <= 1e-15 * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                // Rotation angle diagonalising the 2x2 Gram block.
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = c * aip - s * aiq;
                    a[(i, q)] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdFailure {
            rows: n,
            cols: n,
            context: "jacobi_svd",
        });
    }

    // Column norms are the singular values; sort them descending.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut sigma = DVector::<f64>::zeros(n);
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut v_sorted = DMatrix::<f64>::zeros(n, n);
    let scale = norms[order[0]];
    let rank_tol = scale * f64::EPSILON * (n as f64).max(1.0) * 4.0;
    let mut filled = Vec::with_capacity(n);
    for (slot, &j) in order.iter().enumerate() {
        sigma[slot] = norms[j];
        v_sorted.set_column(slot, &v.column(j));
        if norms[j] > rank_tol {
            u.set_column(slot, &(a.column(j) / norms[j]));
            filled.push(slot);
        }
    }
    // Orthonormal completion for the null-space columns of u.
    for slot in 0..n {
        if filled.contains(&slot) {
            continue;
        }
        let mut best: Option<(f64, DVector<f64>)> = None;
        for k in 0..n {
            let mut cand = DVector::<f64>::zeros(n);
            cand[k] = 1.0;
            for &used in &filled {
                let proj = u.column(used).dot(&cand);
                cand -= proj * DVector::from(u.column(used));
            }
            let norm = cand.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, cand));
            }
        }
        let (norm, cand) = best.expect("candidate basis scanned");
        debug_assert!(norm > 0.1, "orthonormal completion degenerate");
        u.set_column(slot, &(cand / norm));
        filled.push(slot);
    }
    Ok(SquareSvd {
        u,
        sigma,
        v: v_sorted,
    })
}

/// Checks a candidate decomposition hard enough to catch wrong factors:
/// both factors orthogonal, singular values sorted and non-negative, and
/// the product reconstructing `m`.
fn svd_is_valid(m: &DMatrix<f64>, svd: &SquareSvd) -> bool {
    let n = m.nrows();
    let mut prev = f64::INFINITY;
    for &s in svd.sigma.iter() {
        if !s.is_finite() || s < 0.0 || s > prev {
            return false;
        }
        prev = s;
    }
    let tol_orth = 1e-11 * n as f64;
    let eye = DMatrix::<f64>::identity(n, n);
    if (svd.u.transpose() * &svd.u - &eye).amax() > tol_orth
        || (svd.v.transpose() * &svd.v - &eye).amax() > tol_orth
    {
        return false;
    }
    let mut product = svd.u.clone();
    for j in 0..n {
        product.column_mut(j).scale_mut(svd.sigma[j]);
    }
    let tol_rec = 1e-11 * n as f64 * svd.sigma[0] + f64::MIN_POSITIVE;
    (product * svd.v.transpose() - m).amax() <= tol_rec
}

/// Full SVD of a square matrix: a fast bidiagonalisation attempt whose
/// factors are verified before use, with the slower but robust Jacobi
/// iteration as the fallback. The result is a deterministic function of
/// the input either way.
pub fn square_svd(m: &DMatrix<f64>) -> Result<SquareSvd> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "square_svd",
            expected: "square matrix".to_string(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "matrix must be non-empty".to_string(),
        });
    }
    if let Some(fast) = m.clone().try_svd(true, true, f64::EPSILON, 1024) {
        if let (Some(u), Some(v_t)) = (fast.u, fast.v_t) {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| fast.singular_values[j].total_cmp(&fast.singular_values[i]));
            let mut sigma = DVector::<f64>::zeros(n);
            let mut u_sorted = DMatrix::<f64>::zeros(n, n);
            let mut v_sorted = DMatrix::<f64>::zeros(n, n);
            for (slot, &j) in order.iter().enumerate() {
                sigma[slot] = fast.singular_values[j];
                u_sorted.set_column(slot, &u.column(j));
                v_sorted.set_column(slot, &v_t.row(j).transpose());
            }
            let candidate = SquareSvd {
                u: u_sorted,
                sigma,
                v: v_sorted,
            };
            if svd_is_valid(m, &candidate) {
                return Ok(candidate);
            }
        }
    }
    jacobi_svd(m)
}

/// Sum of singular values of `m`.
///
/// Fails only if neither decomposition converges, which is reported rather
/// than silently truncated.
pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(square_svd(m)?.sigma.iter().sum())
}

/// Maximises `⟨A, M⟩ = tr(Aᵀ M)` over `{A : A Aᵀ = α² I}`.
///
/// With `M = U Σ Vᵀ` the maximum is `α · Σᵢ σᵢ` and a maximiser is
/// `A = α · U Vᵀ`. The optimum value is unique; the maximiser is unique
/// whenever `M` has full rank, otherwise the decomposition's basis choice
/// fills the unconstrained directions (deterministically for a given input).
pub fn procrustes_max(m: &DMatrix<f64>, alpha: f64) -> Result<(f64, ScaledOrthogonal)> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("must be a positive finite real, got {alpha}"),
        });
    }
    let svd = square_svd(m)?;
    let value = alpha * svd.sigma.iter().sum::<f64>();
    let argmax = ScaledOrthogonal::new(alpha * &svd.u * svd.v.transpose(), alpha)?;
    Ok((value, argmax))
}

/// Draws an orthogonal matrix from the Haar (rotation-invariant) measure.
///
/// QR of a standard Gaussian matrix, with the sign of each diagonal entry of
/// `R` folded into the corresponding column of `Q`; without the correction
/// the QR convention biases the distribution.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(n > 0, "dimension must be positive");
    let gauss = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let qr = gauss.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Draws a vector uniformly from the unit sphere in `R^n`.
///
/// Gaussian direction, normalised; for `n = 1` this is a fair ±1 coin.
pub fn unit_sphere_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    assert!(n > 0, "dimension must be positive");
    loop {
        let v = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}
