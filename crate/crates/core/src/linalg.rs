//! Small dense linear-algebra helpers: Gram-Schmidt orthonormalization,
//! a cyclic Jacobi eigensolver for symmetric matrices, numeric rank, and
//! least squares. Matrices here are at most a few dozen rows/columns.

use crate::error::{CoreError, Result};
use crate::tensor::{gemm, Tensor};

/// Orthonormalize the columns of `a` (rows >= cols) by modified Gram-Schmidt.
///
/// The diagonal of the implicit R factor is positive by construction, so the
/// result is deterministic for a given input.
pub fn orthonormal_columns(a: &Tensor) -> Result<Tensor> {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    if m < n {
        return Err(CoreError::Contract(format!(
            "orthonormal_columns needs rows >= cols, got {m}x{n}"
        )));
    }
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.at(i, j)).collect()).collect();
    for j in 0..n {
        // Two re-orthogonalization passes keep the basis orthonormal to ~1e-15.
        for _ in 0..2 {
            for i in 0..j {
                let dot: f64 = (0..m).map(|r| cols[i][r] * cols[j][r]).sum();
                for r in 0..m {
                    cols[j][r] -= dot * cols[i][r];
                }
            }
        }
        let norm: f64 = (0..m).map(|r| cols[j][r] * cols[j][r]).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(CoreError::Numeric(format!(
                "orthonormal_columns: column {j} is numerically dependent"
            )));
        }
        for r in 0..m {
            cols[j][r] /= norm;
        }
    }
    let mut out = Tensor::zeros(&[m, n]);
    for j in 0..n {
        for i in 0..m {
            out.set(i, j, cols[j][i]);
        }
    }
    Ok(out)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted descending
/// and eigenvectors as columns of the returned matrix.
pub fn jacobi_eigh(a: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let n = a.shape()[0];
    if a.shape() != [n, n] {
        return Err(CoreError::shape("jacobi_eigh", format!("{:?}", a.shape())));
    }
    let mut m = a.clone();
    let mut v = Tensor::zeros(&[n, n]);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let scale: f64 = m.data().iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.at(i, j) * m.at(i, j))
            .sum::<f64>()
            .sqrt();
        if off < 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let (app, aqq) = (m.at(p, p), m.at(q, q));
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m.at(k, p), m.at(k, q));
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.at(p, k), m.at(q, k));
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.at(k, p), v.at(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.at(j, j).partial_cmp(&m.at(i, i)).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| m.at(i, i)).collect();
    let mut vecs = Tensor::zeros(&[n, n]);
    for (newj, &oldj) in order.iter().enumerate() {
        for i in 0..n {
            vecs.set(i, newj, v.at(i, oldj));
        }
    }
    Ok((eigvals, vecs))
}

/// Singular values of an arbitrary matrix, descending, via the Gram matrix
/// of its smaller side.
pub fn singular_values(a: &Tensor) -> Result<Vec<f64>> {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let gram = if m >= n { gemm(a, true, a, false)? } else { gemm(a, false, a, true)? };
    let (eigvals, _) = jacobi_eigh(&gram)?;
    Ok(eigvals.into_iter().map(|l| l.max(0.0).sqrt()).collect())
}

/// Numeric rank: number of singular values above `rel_tol * sigma_max`.
pub fn numeric_rank(a: &Tensor, rel_tol: f64) -> Result<usize> {
    let sv = singular_values(a)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rel_tol * smax).count())
}

/// Solve the symmetric positive-definite system `A x = b` by Cholesky.
fn cholesky_solve(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = a.shape()[0];
    let q = b.shape()[1];
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(CoreError::Numeric("cholesky: matrix not positive definite".into()));
                }
                l[i * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut x = b.clone();
    // forward then backward substitution, one rhs column at a time
    for col in 0..q {
        for i in 0..n {
            let mut s = x.at(i, col);
            for k in 0..i {
                s -= l[i * n + k] * x.at(k, col);
            }
            x.set(i, col, s / l[i * n + i]);
        }
        for i in (0..n).rev() {
            let mut s = x.at(i, col);
            for k in (i + 1)..n {
                s -= l[k * n + i] * x.at(k, col);
            }
            x.set(i, col, s / l[i * n + i]);
        }
    }
    Ok(x)
}

/// Ordinary least squares `Y ~ X B` via normal equations.
///
/// Returns `(B, used_ridge)` where `B` is `p x q`. If the Gram matrix is not
/// positive definite the solve is retried with a small ridge and the flag is
/// set so callers can warn.
pub fn least_squares(x: &Tensor, y: &Tensor, ridge: f64) -> Result<(Tensor, bool)> {
    if x.shape()[0] != y.shape()[0] {
        return Err(CoreError::shape(
            "least_squares",
            format!("{:?} vs {:?}", x.shape(), y.shape()),
        ));
    }
    let xtx = gemm(x, true, x, false)?;
    let xty = gemm(x, true, y, false)?;
    match cholesky_solve(&xtx, &xty) {
        Ok(b) => Ok((b, false)),
        Err(_) => {
            let p = xtx.shape()[0];
            let mut damped = xtx.clone();
            let scale = (0..p).map(|i| xtx.at(i, i)).fold(0.0_f64, f64::max).max(1.0);
            for i in 0..p {
                damped.set(i, i, damped.at(i, i) + ridge * scale);
            }
            Ok((cholesky_solve(&damped, &xty)?, true))
        }
    }
}

/// Invert a square matrix via Gaussian elimination with partial pivoting.
pub fn invert(a: &Tensor) -> Result<Tensor> {
    let n = a.shape()[0];
    if a.shape() != [n, n] {
        return Err(CoreError::shape("invert", format!("{:?}", a.shape())));
    }
    let mut aug = vec![0.0; n * 2 * n];
    for i in 0..n {
        for j in 0..n {
            aug[i * 2 * n + j] = a.at(i, j);
        }
        aug[i * 2 * n + n + i] = 1.0;
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                aug[i * 2 * n + col].abs().partial_cmp(&aug[j * 2 * n + col].abs()).unwrap()
            })
            .unwrap();
        let pv = aug[pivot_row * 2 * n + col];
        if pv.abs() < 1e-12 {
            return Err(CoreError::Numeric("invert: singular matrix".into()));
        }
        if pivot_row != col {
            for j in 0..2 * n {
                aug.swap(col * 2 * n + j, pivot_row * 2 * n + j);
            }
        }
        let pv = aug[col * 2 * n + col];
        for j in 0..2 * n {
            aug[col * 2 * n + j] /= pv;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = aug[i * 2 * n + col];
            if f != 0.0 {
                for j in 0..2 * n {
                    aug[i * 2 * n + j] -= f * aug[col * 2 * n + j];
                }
            }
        }
    }
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, aug[i * 2 * n + n + j]);
        }
    }
    Ok(out)
}
