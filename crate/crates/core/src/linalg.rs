//! Internal dense decompositions: one-sided Jacobi SVD, cyclic Jacobi
//! eigensolver for symmetric matrices, and a thresholded pseudo-inverse for
//! PSD Gram matrices.
//!
//! Jacobi methods are chosen for their accuracy on small singular values and
//! for bitwise-deterministic sweeps (fixed cyclic pair order, no pivot
//! heuristics).

use crate::matrix::{dot, Mat};
use crate::Scalar;

const MAX_SWEEPS: usize = 100;

/// Left singular vectors and singular values of `x`, all `min(M, N)` of
/// them, sorted by descending singular value.
pub(crate) struct LeftSvd<T> {
    /// `M x r` with orthonormal columns, `r = min(M, N)`.
    pub u: Mat<T>,
    /// Length `r`, descending, all `>= 0`.
    pub sigma: Vec<T>,
}

/// Orthogonalize the rows of `b` in place with Hestenes rotations, applying
/// the same rotations to the rows of `j`. On return the rows of `b` are
/// mutually orthogonal to working precision.
fn hestenes_orthogonalize<T: Scalar>(b: &mut Mat<T>, j: &mut Mat<T>) {
    let n = b.rows();
    let tol = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let rp = b.row(p);
                    let rq = b.row(q);
                    (dot(rp, rp), dot(rq, rq), dot(rp, rq))
                };
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / ((T::one() + T::one()) * gamma);
                let t = {
                    let denom = zeta.abs() + (T::one() + zeta * zeta).sqrt();
                    if zeta >= T::zero() {
                        T::one() / denom
                    } else {
                        -T::one() / denom
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(b, p, q, c, s);
                rotate_rows(j, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Apply the rotation `[c -s; s c]` to rows `p`, `q` of `m`.
fn rotate_rows<T: Scalar>(m: &mut Mat<T>, p: usize, q: usize, c: T, s: T) {
    let (rp, rq) = m.two_rows_mut(p, q);
    for (a, b) in rp.iter_mut().zip(rq) {
        let vp = *a;
        let vq = *b;
        *a = c * vp - s * vq;
        *b = s * vp + c * vq;
    }
}

/// Descending sort order of `sigma`, ties broken by index.
fn descending_order<T: Scalar>(sigma: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| {
        sigma[b]
            .partial_cmp(&sigma[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Full set of left singular vectors of `x` via one-sided Jacobi on the
/// smaller side of the matrix.
pub(crate) fn left_svd<T: Scalar>(x: &Mat<T>) -> LeftSvd<T> {
    let (m, n) = (x.rows(), x.cols());
    if m <= n {
        // Rotate rows of X itself: G X = B, so U = Gᵀ (columns = rows of G).
        let mut b = x.clone();
        let mut g = Mat::identity(m);
        hestenes_orthogonalize(&mut b, &mut g);
        let sigma: Vec<T> = (0..m).map(|i| dot(b.row(i), b.row(i)).sqrt()).collect();
        let order = descending_order(&sigma);
        let mut u = Mat::zeros(m, m);
        for (col, &src) in order.iter().enumerate() {
            for row in 0..m {
                u[(row, col)] = g[(src, row)];
            }
        }
        LeftSvd {
            u,
            sigma: order.iter().map(|&i| sigma[i]).collect(),
        }
    } else {
        // Rotate rows of Xᵀ: the orthogonalized rows, normalized, are the
        // left singular vectors as columns.
        let mut b = x.transpose();
        let mut g = Mat::identity(n);
        hestenes_orthogonalize(&mut b, &mut g);
        let sigma: Vec<T> = (0..n).map(|i| dot(b.row(i), b.row(i)).sqrt()).collect();
        let order = descending_order(&sigma);
        let sigma_sorted: Vec<T> = order.iter().map(|&i| sigma[i]).collect();
        let sigma_max = sigma_sorted.first().copied().unwrap_or(T::zero());
        let cutoff = sigma_max * T::epsilon() * T::from_f64_lossy(m.max(n) as f64);
        let mut u = Mat::zeros(m, n);
        let mut degenerate = Vec::new();
        for (col, &src) in order.iter().enumerate() {
            if sigma_sorted[col] > cutoff && sigma_sorted[col] > T::zero() {
                let inv = T::one() / sigma_sorted[col];
                for row in 0..m {
                    u[(row, col)] = b[(src, row)] * inv;
                }
            } else {
                degenerate.push(col);
            }
        }
        if !degenerate.is_empty() {
            complete_orthonormal(&mut u, &degenerate);
        }
        LeftSvd {
            u,
            sigma: sigma_sorted,
        }
    }
}

/// Fill the listed columns of `u` with vectors orthonormal to all other
/// columns, drawn deterministically from the coordinate basis. Used only for
/// rank-deficient inputs where the singular vectors are not unique.
fn complete_orthonormal<T: Scalar>(u: &mut Mat<T>, columns: &[usize]) {
    let m = u.rows();
    let filled: Vec<usize> = (0..u.cols()).filter(|c| !columns.contains(c)).collect();
    let mut done: Vec<usize> = filled;
    let mut next_basis = 0usize;
    for &col in columns {
        'search: while next_basis < m {
            let mut cand = vec![T::zero(); m];
            cand[next_basis] = T::one();
            next_basis += 1;
            // Project out the already-placed columns.
            for &f in &done {
                let proj: T = (0..m).map(|r| u[(r, f)] * cand[r]).sum();
                for (r, c) in cand.iter_mut().enumerate() {
                    *c = *c - proj * u[(r, f)];
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > T::from_f64_lossy(0.5) {
                let inv = T::one() / norm;
                for (r, c) in cand.iter().enumerate() {
                    u[(r, col)] = *c * inv;
                }
                done.push(col);
                break 'search;
            }
        }
    }
}

/// Singular values of `x`, descending. Same Jacobi core as [`left_svd`]
/// without vector accumulation bookkeeping.
pub(crate) fn singular_values<T: Scalar>(x: &Mat<T>) -> Vec<T> {
    let mut b = if x.rows() <= x.cols() {
        x.clone()
    } else {
        x.transpose()
    };
    let mut scratch = Mat::identity(b.rows());
    hestenes_orthogonalize(&mut b, &mut scratch);
    let mut sigma: Vec<T> = (0..b.rows())
        .map(|i| dot(b.row(i), b.row(i)).sqrt())
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sigma
}

/// Eigendecomposition of a symmetric matrix.
pub(crate) struct SymEig<T> {
    /// Eigenvalues, descending.
    pub values: Vec<T>,
    /// `n x n`; column `i` is the eigenvector for `values[i]`.
    pub vectors: Mat<T>,
}

/// Cyclic two-sided Jacobi eigensolver for a symmetric matrix.
pub(crate) fn sym_eig<T: Scalar>(a: &Mat<T>) -> SymEig<T> {
    assert_eq!(a.rows(), a.cols(), "sym_eig needs a square matrix");
    let n = a.rows();
    let mut a = a.clone();
    let mut v = Mat::identity(n);
    let two = T::one() + T::one();
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + a[(p, q)] * a[(p, q)];
            }
        }
        let scale = a.max_abs();
        if off.sqrt() <= T::epsilon() * (T::one() + scale) {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= T::epsilon() * (T::one() + scale) * T::from_f64_lossy(1e-2) {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = {
                    let denom = theta.abs() + (T::one() + theta * theta).sqrt();
                    if theta >= T::zero() {
                        T::one() / denom
                    } else {
                        -T::one() / denom
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                // A <- Gᵀ A G over rows/columns p, q.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let diag: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
    let order = descending_order(&diag);
    let mut vectors = Mat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    SymEig {
        values: order.iter().map(|&i| diag[i]).collect(),
        vectors,
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix, computed from its
/// eigendecomposition with inverse eigenvalues below
/// `rel_tol * max_eigenvalue` zeroed.
pub(crate) fn pinv_psd<T: Scalar>(g: &Mat<T>, rel_tol: T) -> Mat<T> {
    let eig = sym_eig(g);
    let lmax = eig.values.first().copied().unwrap_or(T::zero());
    let cutoff = rel_tol * lmax;
    let n = g.rows();
    let mut out = Mat::zeros(n, n);
    for (idx, &lambda) in eig.values.iter().enumerate() {
        if lambda > cutoff && lambda > T::zero() {
            let inv = T::one() / lambda;
            for i in 0..n {
                let wi = eig.vectors[(i, idx)];
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + inv * wi * eig.vectors[(j, idx)];
                }
            }
        }
    }
    out
}
