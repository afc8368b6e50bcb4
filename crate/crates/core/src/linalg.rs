//! Dense linear-algebra kernels for small symmetric matrices.
//!
//! Everything here operates on `ndarray::Array2<f64>`. The matrices involved
//! are small (latent dimension r, or the input dimension M), so plain
//! triple-loop factorizations are both fast enough and fully deterministic.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor L with A = L·Lᵀ.
///
/// Fails with a numerical error (carrying the offending pivot) when A is not
/// positive definite to working precision.
pub fn cholesky(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = check_square(a)?;
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::numerical(format!(
                        "Cholesky pivot {} is {:.3e} (matrix {}x{} not SPD; diag range [{:.3e}, {:.3e}])",
                        i,
                        sum,
                        n,
                        n,
                        diag_min(a),
                        diag_max(a),
                    )));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// log det(A) from its Cholesky factor: 2·Σ log L_ii.
pub fn logdet_from_cholesky(l: &Array2<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>()
}

/// Solves A·X = B given the Cholesky factor L of A (forward then back
/// substitution, column by column).
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = l.nrows();
    if b.nrows() != n {
        return Err(Error::shape(format!(
            "cholesky_solve: rhs has {} rows, factor is {}x{}",
            b.nrows(),
            n,
            n
        )));
    }
    let mut x = b.to_owned();
    for c in 0..x.ncols() {
        // L y = b
        for i in 0..n {
            let mut sum = x[[i, c]];
            for k in 0..i {
                sum -= l[[i, k]] * x[[k, c]];
            }
            x[[i, c]] = sum / l[[i, i]];
        }
        // Lᵀ x = y
        for ii in 0..n {
            let i = n - 1 - ii;
            let mut sum = x[[i, c]];
            for k in (i + 1)..n {
                sum -= l[[k, i]] * x[[k, c]];
            }
            x[[i, c]] = sum / l[[i, i]];
        }
    }
    Ok(x)
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_triangular_inverse(l: &Array2<f64>) -> Result<Array2<f64>> {
    let n = l.nrows();
    let mut t = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        if l[[i, i]] == 0.0 {
            return Err(Error::numerical(format!(
                "triangular inverse: zero diagonal at {}",
                i
            )));
        }
        t[[i, i]] = 1.0 / l[[i, i]];
        for j in 0..i {
            let mut sum = 0.0;
            for k in j..i {
                sum += l[[i, k]] * t[[k, j]];
            }
            t[[i, j]] = -sum / l[[i, i]];
        }
    }
    Ok(t)
}

/// Inverse of an SPD matrix via its Cholesky factorization.
pub fn spd_inverse(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = check_square(a)?;
    let l = cholesky(a)?;
    let inv = cholesky_solve(&l, Array2::<f64>::eye(n).view())?;
    Ok(symmetrize(&inv))
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted in
/// descending order; column k of the eigenvector matrix pairs with
/// eigenvalue k. Deterministic for a given input.
pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = check_square(a)?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("eigendecomposition input has non-finite entries"));
    }
    let mut m = symmetrize_view(a);
    let mut v = Array2::<f64>::eye(n);
    if n == 1 {
        return Ok((Array1::from(vec![m[[0, 0]]]), v));
    }

    let norm: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * norm.max(1e-300);
    const MAX_SWEEPS: usize = 100;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                // stable tangent of the rotation angle
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let vals = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs[[k, dst]] = v[[k, src]];
        }
    }
    Ok((vals, vecs))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(a: ArrayView2<'_, f64>) -> Result<f64> {
    let (vals, _) = symmetric_eigen(a)?;
    Ok(vals[0])
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: ArrayView2<'_, f64>) -> Result<f64> {
    let (vals, _) = symmetric_eigen(a)?;
    Ok(vals[vals.len() - 1])
}

/// Solves A·x = b for symmetric positive semi-definite A in the least-squares
/// sense: eigenvalues below `rel_tol · λ_max` are dropped.
pub fn symmetric_pseudo_solve(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    rel_tol: f64,
) -> Result<Array2<f64>> {
    let n = check_square(a)?;
    if b.nrows() != n {
        return Err(Error::shape(format!(
            "pseudo_solve: rhs has {} rows, matrix is {}x{}",
            b.nrows(),
            n,
            n
        )));
    }
    let (vals, vecs) = symmetric_eigen(a)?;
    let cutoff = vals[0].abs().max(0.0) * rel_tol;
    // x = V diag(1/λ restricted) Vᵀ b
    let vtb = vecs.t().dot(&b);
    let mut scaled = vtb;
    for i in 0..n {
        let lam = vals[i];
        let inv = if lam.abs() > cutoff && lam.abs() > 0.0 {
            1.0 / lam
        } else {
            0.0
        };
        for c in 0..scaled.ncols() {
            scaled[[i, c]] *= inv;
        }
    }
    Ok(vecs.dot(&scaled))
}

/// (A + Aᵀ)/2, removing rounding-level asymmetry.
pub fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    symmetrize_view(a.view())
}

fn symmetrize_view(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    out
}

/// Squared Frobenius norm.
pub fn frob_sq(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Frobenius inner product ⟨A, B⟩ = Σ a_ij·b_ij.
pub fn frob_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn check_square(a: ArrayView2<'_, f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::shape(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

fn diag_min(a: ArrayView2<'_, f64>) -> f64 {
    (0..a.nrows()).map(|i| a[[i, i]]).fold(f64::INFINITY, f64::min)
}

fn diag_max(a: ArrayView2<'_, f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a[[i, i]])
        .fold(f64::NEG_INFINITY, f64::max)
}
