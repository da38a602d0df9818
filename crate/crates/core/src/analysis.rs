//! Quantitative subspace diagnostics: CCA similarity between two matrices
//! over a shared sample axis, sparsity measurements, and relative
//! reconstruction error of a fitted model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::FactorModel;
use crate::linalg;
use crate::matrix::Mat;
use crate::Scalar;

/// Canonical correlations between two variable sets, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CcaResult<T> {
    pub correlations: Vec<T>,
    pub mean_correlation: T,
}

/// Which fitted matrix a sparsity report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixTag {
    #[serde(rename = "U_train")]
    UTrain,
    #[serde(rename = "V_train")]
    VTrain,
}

/// Sparsity summary of a matrix: Hoyer score plus the fraction of entries
/// whose magnitude falls below `1e-6` of the largest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SparsityReport<T> {
    pub hoyer: T,
    pub zero_fraction: T,
    pub matrix_tag: MatrixTag,
}

/// Subtract each row's mean (rows are variables, columns are samples).
fn center_rows<T: Scalar>(x: &Mat<T>) -> Mat<T> {
    let n = T::from_f64_lossy(x.cols() as f64);
    let mut out = x.clone();
    for i in 0..x.rows() {
        let mean = x.row(i).iter().copied().sum::<T>() / n;
        for v in out.row_mut(i) {
            *v -= mean;
        }
    }
    out
}

/// Covariance `Xc Xcᵀ / (N - 1)` of row-variables, plus `ridge` on the
/// diagonal.
fn covariance<T: Scalar>(xc: &Mat<T>, ridge: T) -> Mat<T> {
    let scale = T::one() / T::from_f64_lossy((xc.cols() - 1) as f64);
    let mut s = xc.matmul_t(xc).scale(scale);
    for i in 0..s.rows() {
        s[(i, i)] += ridge;
    }
    s
}

/// `S^{-1/2}` for a symmetric PSD matrix, zeroing directions whose
/// eigenvalue is below `1e-12` of the largest.
fn inv_sqrt_psd<T: Scalar>(s: &Mat<T>) -> Mat<T> {
    let eig = linalg::sym_eig(s);
    let lmax = eig.values.first().copied().unwrap_or(T::zero());
    let cutoff = lmax * T::from_f64_lossy(1e-12);
    let n = s.rows();
    let mut out = Mat::zeros(n, n);
    for (idx, &lambda) in eig.values.iter().enumerate() {
        if lambda > cutoff && lambda > T::zero() {
            let w = T::one() / lambda.sqrt();
            for i in 0..n {
                let vi = eig.vectors[(i, idx)];
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + w * vi * eig.vectors[(j, idx)];
                }
            }
        }
    }
    out
}

/// Default covariance regularization for [`cca_similarity`]:
/// `1e-8 · trace(cov) / dim` of the given variable set.
pub fn auto_ridge<T: Scalar>(x: &Mat<T>) -> T {
    let xc = center_rows(x);
    let scale = T::one() / T::from_f64_lossy((x.cols() - 1).max(1) as f64);
    let trace: T = (0..x.rows())
        .map(|i| crate::matrix::dot(xc.row(i), xc.row(i)) * scale)
        .sum();
    T::from_f64_lossy(1e-8) * trace / T::from_f64_lossy(x.rows() as f64)
}

/// Canonical correlations between `x1` (`M1 x N`) and `x2` (`M2 x N`), both
/// holding one sample per column. Covariances are estimated with the sample
/// mean removed and `ridge · I` added to both auto-covariances; pass `0` for
/// the unregularized analysis on full-rank data, or [`auto_ridge`] for
/// near-singular inputs. Returns `min(M1, M2, N - 1)` correlations.
pub fn cca_similarity<T: Scalar>(x1: &Mat<T>, x2: &Mat<T>, ridge: T) -> Result<CcaResult<T>> {
    if x1.cols() != x2.cols() {
        return Err(Error::Dimension(format!(
            "sample counts differ: {} vs {}",
            x1.cols(),
            x2.cols()
        )));
    }
    if x1.cols() < 2 {
        return Err(Error::Dimension("CCA needs at least 2 samples".into()));
    }
    if !x1.is_finite() || !x2.is_finite() {
        return Err(Error::Numeric("CCA input contains NaN or Inf".into()));
    }
    if !(ridge >= T::zero() && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge must be finite and >= 0, got {ridge}")));
    }

    let x1c = center_rows(x1);
    let x2c = center_rows(x2);
    let s11 = covariance(&x1c, ridge);
    let s22 = covariance(&x2c, ridge);
    let scale = T::one() / T::from_f64_lossy((x1.cols() - 1) as f64);
    let s12 = x1c.matmul_t(&x2c).scale(scale);
    if !s11.is_finite() || !s22.is_finite() || !s12.is_finite() {
        return Err(Error::Numeric("covariance matrices are non-finite".into()));
    }

    let k = inv_sqrt_psd(&s11).matmul(&s12).matmul(&inv_sqrt_psd(&s22));
    let mut rho = linalg::singular_values(&k);
    let count = x1.rows().min(x2.rows()).min(x1.cols() - 1);
    rho.truncate(count);

    let bound = T::one() + T::from_f64_lossy(1e-10);
    if rho.iter().any(|r| !r.is_finite() || *r > bound) {
        return Err(Error::Numeric(
            "canonical correlations left [0, 1] beyond rounding".into(),
        ));
    }
    let mean = rho.iter().copied().sum::<T>() / T::from_f64_lossy(rho.len().max(1) as f64);
    Ok(CcaResult {
        correlations: rho,
        mean_correlation: mean,
    })
}

/// Hoyer sparsity of the flattened entries:
/// `(√n − ‖m‖₁/‖m‖₂) / (√n − 1)`. 0 for constant magnitude, 1 for one-hot.
pub fn hoyer_sparsity<T: Scalar>(m: &Mat<T>) -> Result<T> {
    let n = m.rows() * m.cols();
    if n < 2 {
        return Err(Error::Dimension(
            "hoyer sparsity needs at least 2 entries".into(),
        ));
    }
    if !m.is_finite() {
        return Err(Error::Numeric("matrix contains NaN or Inf".into()));
    }
    let l1: T = m.data().iter().map(|v| v.abs()).sum();
    let l2 = m.fro_norm();
    if l2 == T::zero() {
        return Err(Error::Numeric("hoyer sparsity undefined for the zero matrix".into()));
    }
    let sqrt_n = T::from_f64_lossy(n as f64).sqrt();
    let h = (sqrt_n - l1 / l2) / (sqrt_n - T::one());
    Ok(h.max(T::zero()).min(T::one()))
}

/// Fraction of entries with magnitude at most `1e-6 · max|entry|`.
pub fn zero_fraction<T: Scalar>(m: &Mat<T>) -> T {
    let tau = T::from_f64_lossy(1e-6) * m.max_abs();
    let below = m.data().iter().filter(|v| v.abs() <= tau).count();
    T::from_f64_lossy(below as f64) / T::from_f64_lossy((m.rows() * m.cols()) as f64)
}

/// Bundle both sparsity measures for a tagged matrix.
pub fn sparsity_report<T: Scalar>(m: &Mat<T>, tag: MatrixTag) -> Result<SparsityReport<T>> {
    Ok(SparsityReport {
        hoyer: hoyer_sparsity(m)?,
        zero_fraction: zero_fraction(m),
        matrix_tag: tag,
    })
}

/// Relative reconstruction error `‖X − U Vᵀ‖_F / ‖X‖_F` of a fitted model
/// against the matrix it factorized (for SCNMFS, `V = Qᵀ Z` is already
/// materialized in the model).
pub fn reconstruction_error<T: Scalar>(x: &Mat<T>, model: &FactorModel<T>) -> Result<T> {
    if model.u.rows() != x.rows() || model.v.rows() != x.cols() {
        return Err(Error::Dimension(format!(
            "model factors ({}x{}, {}x{}) do not match a {}x{} matrix",
            model.u.rows(),
            model.u.cols(),
            model.v.rows(),
            model.v.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let norm = x.fro_norm();
    if norm == T::zero() {
        return Err(Error::Numeric(
            "relative reconstruction error undefined for the zero matrix".into(),
        ));
    }
    let recon = model.u.matmul_t(&model.v);
    Ok(x.distance_fro(&recon) / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorize::truncated_svd;
    use crate::rng;

    #[test]
    fn cca_on_identical_inputs_is_one() {
        let x = rng::uniform_matrix::<f64>(&mut rng::seeded(12, 0), 3, 40);
        let r = cca_similarity(&x, &x, 0.0).unwrap();
        assert_eq!(r.correlations.len(), 3);
        for rho in &r.correlations {
            assert!((rho - 1.0).abs() < 1e-8, "rho = {rho}");
        }
    }

    #[test]
    fn cca_invariant_under_invertible_map() {
        let x = rng::uniform_matrix::<f64>(&mut rng::seeded(13, 0), 3, 50);
        let r_mat = Mat::from_rows(vec![
            vec![2.0, 1.0, 0.0],
            vec![0.5, -1.0, 0.3],
            vec![0.0, 0.7, 1.4],
        ])
        .unwrap();
        let y = r_mat.matmul(&x);
        let r = cca_similarity(&x, &y, 0.0).unwrap();
        for rho in &r.correlations {
            assert!((rho - 1.0).abs() < 1e-8, "rho = {rho}");
        }
    }

    #[test]
    fn cca_null_distribution_stays_low() {
        // Monte-Carlo bound: independent Gaussian variable sets keep the mean
        // canonical correlation under 0.15 at N = 1000.
        let mut worst: f64 = 0.0;
        for seed in 0..100u64 {
            let mut r = rng::seeded(1000 + seed, 0);
            let g1 = gaussian_matrix(&mut r, 3, 1000);
            let g2 = gaussian_matrix(&mut r, 3, 1000);
            let res = cca_similarity(&g1, &g2, 0.0).unwrap();
            worst = worst.max(res.mean_correlation);
        }
        assert!(worst < 0.15, "worst null mean correlation {worst}");
    }

    fn gaussian_matrix(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
        // Box-Muller over the crate's uniform source.
        Mat::from_fn(rows, cols, |_, _| {
            let u1: f64 = rng::uniform_open01(r);
            let u2: f64 = rng::uniform_open01(r);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
    }

    #[test]
    fn cca_rejects_sample_mismatch() {
        let a = Mat::<f64>::zeros(2, 5);
        let b = Mat::<f64>::zeros(2, 6);
        assert_eq!(
            cca_similarity(&a, &b, 0.0).unwrap_err().code(),
            "DimensionError"
        );
    }

    #[test]
    fn hoyer_known_values() {
        let one_hot: Mat<f64> = Mat::from_rows(vec![vec![0.0, 0.0, 1.0, 0.0]]).unwrap();
        assert!((hoyer_sparsity(&one_hot).unwrap() - 1.0).abs() < 1e-12);

        let ones: Mat<f64> = Mat::from_rows(vec![vec![1.0, 1.0, 1.0, 1.0]]).unwrap();
        assert!(hoyer_sparsity(&ones).unwrap().abs() < 1e-12);

        let half: Mat<f64> = Mat::from_rows(vec![vec![1.0, 1.0, 0.0, 0.0]]).unwrap();
        let expected = 2.0 - f64::sqrt(2.0);
        assert!((hoyer_sparsity(&half).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn hoyer_rejects_zero_matrix() {
        let z = Mat::<f64>::zeros(2, 2);
        assert_eq!(hoyer_sparsity(&z).unwrap_err().code(), "NumericError");
    }

    #[test]
    fn reconstruction_error_of_rank_one_svd_on_identity() {
        let x = Mat::<f64>::identity(2);
        let m = truncated_svd(&x, 1).unwrap();
        let err = reconstruction_error(&x, &m).unwrap();
        assert!((err - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_error_is_scale_invariant() {
        let x = rng::uniform_matrix::<f64>(&mut rng::seeded(20, 0), 4, 6);
        let m = truncated_svd(&x, 2).unwrap();
        let e1 = reconstruction_error(&x, &m).unwrap();
        let c = 3.75;
        let xs = x.scale(c);
        let mut ms = m.clone();
        ms.v = m.v.scale(c); // U Vᵀ scales with X when V does.
        let e2 = reconstruction_error(&xs, &ms).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_error_zero_for_exact_factorization() {
        let u = rng::uniform_matrix::<f64>(&mut rng::seeded(30, 0), 4, 2);
        let v = rng::uniform_matrix::<f64>(&mut rng::seeded(31, 0), 5, 2);
        let x = u.matmul_t(&v);
        let m = crate::factorize::FactorModel {
            method: crate::factorize::Method::Nmf,
            k: 2,
            hyper: crate::factorize::Hyper::default(),
            seed: 0,
            u,
            v,
            a: None,
            z: None,
            sigma: None,
            objective_trace: vec![0.0],
        };
        assert!(reconstruction_error(&x, &m).unwrap() < 1e-12);
    }
}
