//! Subspace fits and test-time projection.
//!
//! All four methods produce a [`FactorModel`] holding the projection matrix
//! `U` (`M x k`), the subspace representation `V` (`N x k`, one row per
//! sample) and an objective trace. Test features are projected with `U`
//! frozen: directly (`V = Xᵀ U`) for SVD, by iterating only the `V` update
//! with `U` fixed for the NMF family.
//!
//! Conventions shared by the multiplicative-update fits:
//!
//! * factors are initialized i.i.d. uniform on `(0, 1]` from the given seed
//!   (strictly positive, so no entry starts absorbed at zero);
//! * every update denominator is guarded with `+ eps` (default `1e-12`);
//! * within a sweep the update order is `U` then `V` (then `A` for DNMF;
//!   `U` then `Z` for SCNMFS), and the objective is recorded after the sweep
//!   completes;
//! * `objective_trace[0]` is the objective of the initial factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{dot, LabelMatrix, Mat, NonNegMatrix};
use crate::rng;
use crate::Scalar;

/// Subspace method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Svd,
    Nmf,
    Dnmf,
    Scnmfs,
}

impl Method {
    /// True for the multiplicative-update methods that require `X >= 0`.
    pub fn is_nmf_family(self) -> bool {
        !matches!(self, Method::Svd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Svd => "svd",
            Method::Nmf => "nmf",
            Method::Dnmf => "dnmf",
            Method::Scnmfs => "scnmfs",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svd" => Ok(Method::Svd),
            "nmf" => Ok(Method::Nmf),
            "dnmf" => Ok(Method::Dnmf),
            "scnmfs" => Ok(Method::Scnmfs),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Hyperparameters for the iterative fits.
///
/// `tol = 0` disables early stopping, matching the fixed-iteration protocol;
/// when `tol > 0` a fit stops once `|prev - cur| / (1 + |prev|) < tol`
/// between consecutive objective values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Hyper<T> {
    /// DNMF label-regression weight (`> 0` in normal use; `0` reduces the
    /// fit to plain NMF and is accepted for that purpose).
    pub alpha: T,
    /// SCNMFS Frobenius penalty on `U`, in `(0, 1)`.
    pub beta: T,
    /// Number of multiplicative-update sweeps.
    pub iters: usize,
    /// Relative-change early-stop threshold; `0` disables.
    pub tol: T,
    /// Additive guard on every update denominator.
    pub eps: T,
}

impl<T: Scalar> Default for Hyper<T> {
    fn default() -> Self {
        Hyper {
            alpha: T::one(),
            beta: T::from_f64_lossy(0.1),
            iters: 3000,
            tol: T::zero(),
            eps: T::from_f64_lossy(1e-12),
        }
    }
}

impl<T: Scalar> Hyper<T> {
    fn validate_common(&self) -> Result<()> {
        if !(self.tol >= T::zero() && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be finite and >= 0, got {}", self.tol)));
        }
        if !(self.eps > T::zero() && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be finite and > 0, got {}", self.eps)));
        }
        Ok(())
    }

    fn validate_alpha(&self) -> Result<()> {
        if !(self.alpha >= T::zero() && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    fn validate_beta(&self) -> Result<()> {
        if !(self.beta > T::zero() && self.beta < T::one()) {
            return Err(Error::Config(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// A fitted factorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FactorModel<T> {
    pub method: Method,
    pub k: usize,
    pub hyper: Hyper<T>,
    pub seed: u64,
    /// Projection matrix, `M x k`. Non-negative for the NMF family,
    /// orthonormal columns for SVD.
    #[serde(rename = "U")]
    pub u: Mat<T>,
    /// Subspace representation of the training samples, `N x k`.
    #[serde(rename = "V")]
    pub v: Mat<T>,
    /// DNMF auxiliary regression matrix, `C x k`; may contain negatives.
    #[serde(rename = "A", skip_serializing_if = "Option::is_none", default)]
    pub a: Option<Mat<T>>,
    /// SCNMFS per-class coefficients, `C x k`, non-negative.
    #[serde(rename = "Z", skip_serializing_if = "Option::is_none", default)]
    pub z: Option<Mat<T>>,
    /// Top-`k` singular values (SVD only), descending.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<Vec<T>>,
    /// Objective value before the first sweep and after each sweep.
    pub objective_trace: Vec<T>,
}

impl<T: Scalar> FactorModel<T> {
    /// Feature dimension `M`.
    pub fn feature_dim(&self) -> usize {
        self.u.rows()
    }

    /// Structural sanity check, used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.u.cols() != self.k || self.v.cols() != self.k {
            return Err(Error::Dimension(format!(
                "factor shapes {}x{} / {}x{} do not match k = {}",
                self.u.rows(),
                self.u.cols(),
                self.v.rows(),
                self.v.cols(),
                self.k
            )));
        }
        if !self.u.is_finite() || !self.v.is_finite() {
            return Err(Error::Numeric("model factors contain NaN or Inf".into()));
        }
        if self.method.is_nmf_family() {
            if self.u.min_entry() < T::zero() || self.v.min_entry() < T::zero() {
                return Err(Error::NonNegativity(
                    "NMF-family model has a negative factor entry".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Options for [`project_test`]. Only the NMF family uses them; the SVD
/// projection is closed-form.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProjectOptions<T> {
    pub iters: usize,
    pub tol: T,
    pub seed: u64,
}

impl<T: Scalar> Default for ProjectOptions<T> {
    fn default() -> Self {
        ProjectOptions {
            iters: 3000,
            tol: T::zero(),
            seed: 0,
        }
    }
}

/// `‖X − F Gᵀ‖²_F` where `F` is `rows(X) x k` and `G` is `cols(X) x k`.
fn residual_sq<T: Scalar>(x: &Mat<T>, f: &Mat<T>, g: &Mat<T>) -> T {
    let mut total = T::zero();
    for i in 0..x.rows() {
        let f_row = f.row(i);
        let x_row = x.row(i);
        for n in 0..x.cols() {
            let d = x_row[n] - dot(f_row, g.row(n));
            total += d * d;
        }
    }
    total
}

/// In-place multiplicative step `f_ij *= num_ij / (den_ij + eps)`.
fn mult_update<T: Scalar>(f: &mut Mat<T>, num: &Mat<T>, den: &Mat<T>, eps: T) {
    for ((fv, &nv), &dv) in f
        .data_mut()
        .iter_mut()
        .zip(num.data())
        .zip(den.data())
    {
        *fv = *fv * (nv / (dv + eps));
    }
}

#[inline]
fn pos_part<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

/// Magnitude of the negative part: `max(0, -v)`, so it can be *added* on the
/// opposite side of a multiplicative ratio.
#[inline]
fn neg_part<T: Scalar>(v: T) -> T {
    if v < T::zero() {
        -v
    } else {
        T::zero()
    }
}

fn debug_assert_nonneg<T: Scalar>(m: &Mat<T>, what: &str) {
    debug_assert!(
        m.data().iter().all(|v| *v >= T::zero() && v.is_finite()),
        "{what} lost non-negativity"
    );
    let _ = (m, what);
}

fn check_fit_dims<T: Scalar>(x: &Mat<T>, k: usize) -> Result<()> {
    let limit = x.rows().min(x.cols());
    if k == 0 || k >= limit {
        return Err(Error::Dimension(format!(
            "k = {k} out of range for a {}x{} matrix (need 1 <= k < {limit})",
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

fn check_not_all_zero<T: Scalar>(x: &Mat<T>) -> Result<()> {
    if x.max_abs() == T::zero() {
        return Err(Error::Numeric(
            "all-zero input matrix: multiplicative-update denominators vanish".into(),
        ));
    }
    Ok(())
}

fn check_labels<T: Scalar>(x: &Mat<T>, q: &LabelMatrix) -> Result<()> {
    if q.samples() != x.cols() {
        return Err(Error::LabelMismatch(format!(
            "label matrix has {} samples but X has {} columns",
            q.samples(),
            x.cols()
        )));
    }
    Ok(())
}

/// Early-stop test on consecutive objective values.
fn converged<T: Scalar>(prev: T, cur: T, tol: T) -> bool {
    tol > T::zero() && (prev - cur).abs() / (T::one() + prev.abs()) < tol
}

/// Truncated SVD subspace: `U` holds the top-`k` left singular vectors
/// (descending singular values), `V = Xᵀ U`.
///
/// Each column of `U` is oriented so its largest-magnitude entry is
/// positive, making the factorization deterministic.
pub fn truncated_svd<T: Scalar>(x: &Mat<T>, k: usize) -> Result<FactorModel<T>> {
    if !x.is_finite() {
        return Err(Error::Numeric("input matrix contains NaN or Inf".into()));
    }
    let limit = x.rows().min(x.cols());
    if k == 0 || k > limit {
        return Err(Error::Dimension(format!(
            "k = {k} out of range for a {}x{} matrix (need 1 <= k <= {limit})",
            x.rows(),
            x.cols()
        )));
    }
    let svd = linalg::left_svd(x);
    let mut u = Mat::zeros(x.rows(), k);
    for col in 0..k {
        // Sign convention: largest-magnitude entry positive.
        let mut best = 0usize;
        let mut best_abs = T::zero();
        for row in 0..x.rows() {
            let a = svd.u[(row, col)].abs();
            if a > best_abs {
                best_abs = a;
                best = row;
            }
        }
        let flip = svd.u[(best, col)] < T::zero();
        for row in 0..x.rows() {
            let v = svd.u[(row, col)];
            u[(row, col)] = if flip { -v } else { v };
        }
    }
    let sigma: Vec<T> = svd.sigma[..k].to_vec();
    let v = x.t_matmul(&u);
    let objective = residual_sq(x, &u, &v);
    Ok(FactorModel {
        method: Method::Svd,
        k,
        hyper: Hyper {
            alpha: T::zero(),
            beta: T::zero(),
            iters: 0,
            tol: T::zero(),
            eps: T::from_f64_lossy(1e-12),
        },
        seed: 0,
        u,
        v,
        a: None,
        z: None,
        sigma: Some(sigma),
        objective_trace: vec![objective],
    })
}

/// Plain NMF: minimize `‖X − U Vᵀ‖²_F` over `U, V >= 0` by multiplicative
/// updates. The objective trace is non-increasing up to rounding.
pub fn nmf_fit<T: Scalar>(
    x: &NonNegMatrix<T>,
    k: usize,
    hyper: &Hyper<T>,
    seed: u64,
) -> Result<FactorModel<T>> {
    hyper.validate_common()?;
    let x = x.as_mat();
    check_fit_dims(x, k)?;
    check_not_all_zero(x)?;
    let eps = hyper.eps;

    let mut r = rng::seeded(seed, 0);
    let mut u: Mat<T> = rng::uniform_matrix(&mut r, x.rows(), k);
    let mut v: Mat<T> = rng::uniform_matrix(&mut r, x.cols(), k);

    let mut trace = Vec::with_capacity(hyper.iters + 1);
    trace.push(residual_sq(x, &u, &v));

    for _ in 0..hyper.iters {
        let xv = x.matmul(&v);
        let vtv = v.t_matmul(&v);
        let uvtv = u.matmul(&vtv);
        mult_update(&mut u, &xv, &uvtv, eps);

        let xtu = x.t_matmul(&u);
        let utu = u.t_matmul(&u);
        let vutu = v.matmul(&utu);
        mult_update(&mut v, &xtu, &vutu, eps);

        debug_assert_nonneg(&u, "NMF U");
        debug_assert_nonneg(&v, "NMF V");

        let obj = residual_sq(x, &u, &v);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if converged(prev, obj, hyper.tol) {
            break;
        }
    }

    let model = FactorModel {
        method: Method::Nmf,
        k,
        hyper: *hyper,
        seed,
        u,
        v,
        a: None,
        z: None,
        sigma: None,
        objective_trace: trace,
    };
    model.validate()?;
    Ok(model)
}

/// DNMF: minimize `‖X − U Vᵀ‖²_F + α ‖Q − A Vᵀ‖²_F` over `U, V >= 0` with
/// the auxiliary matrix `A` free in sign.
///
/// The `V` update splits the label terms into their positive part
/// (entrywise `max(·, 0)`) and the magnitude of their negative part; both
/// appear with `+` on opposite sides of the ratio, so the iterate stays
/// non-negative and the fixed point recovers the stationarity condition.
/// `A` is recomputed in closed form, `A = Q V (VᵀV)†`, after each `(U, V)`
/// sweep and once from the initial `V` before the first sweep. The
/// pseudo-inverse zeroes inverse singular values below `1e-12` of the
/// largest.
pub fn dnmf_fit<T: Scalar>(
    x: &NonNegMatrix<T>,
    q: &LabelMatrix,
    k: usize,
    hyper: &Hyper<T>,
    seed: u64,
) -> Result<FactorModel<T>> {
    hyper.validate_common()?;
    hyper.validate_alpha()?;
    let x = x.as_mat();
    check_fit_dims(x, k)?;
    check_not_all_zero(x)?;
    check_labels(x, q)?;
    let eps = hyper.eps;
    let alpha = hyper.alpha;
    let q_mat: Mat<T> = q.indicator();
    let pinv_tol = T::from_f64_lossy(1e-12);

    let mut r = rng::seeded(seed, 0);
    let mut u: Mat<T> = rng::uniform_matrix(&mut r, x.rows(), k);
    let mut v: Mat<T> = rng::uniform_matrix(&mut r, x.cols(), k);
    let update_a = |v: &Mat<T>| -> Mat<T> {
        let vtv = v.t_matmul(v);
        q_mat.matmul(v).matmul(&linalg::pinv_psd(&vtv, pinv_tol))
    };
    let mut a = update_a(&v);

    let objective = |u: &Mat<T>, v: &Mat<T>, a: &Mat<T>| -> T {
        residual_sq(x, u, v) + alpha * residual_sq(&q_mat, a, v)
    };
    let mut trace = Vec::with_capacity(hyper.iters + 1);
    trace.push(objective(&u, &v, &a));

    for _ in 0..hyper.iters {
        let xv = x.matmul(&v);
        let vtv = v.t_matmul(&v);
        let uvtv = u.matmul(&vtv);
        mult_update(&mut u, &xv, &uvtv, eps);

        let xtu = x.t_matmul(&u);
        let utu = u.t_matmul(&u);
        let vutu = v.matmul(&utu);
        let ata = a.t_matmul(&a);
        let vata = v.matmul(&ata);
        let qta = q_mat.t_matmul(&a);
        for i in 0..v.rows() {
            for j in 0..v.cols() {
                let num = xtu[(i, j)] + alpha * neg_part(vata[(i, j)]) + alpha * pos_part(qta[(i, j)]);
                let den =
                    vutu[(i, j)] + alpha * pos_part(vata[(i, j)]) + alpha * neg_part(qta[(i, j)]);
                v[(i, j)] = v[(i, j)] * (num / (den + eps));
            }
        }

        a = update_a(&v);

        debug_assert_nonneg(&u, "DNMF U");
        debug_assert_nonneg(&v, "DNMF V");

        let obj = objective(&u, &v, &a);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if converged(prev, obj, hyper.tol) {
            break;
        }
    }

    let model = FactorModel {
        method: Method::Dnmf,
        k,
        hyper: *hyper,
        seed,
        u,
        v,
        a: Some(a),
        z: None,
        sigma: None,
        objective_trace: trace,
    };
    model.validate()?;
    Ok(model)
}

/// SCNMFS: minimize `‖X − U Zᵀ Q‖²_F + β ‖U‖²_F` over `U, Z >= 0`, with the
/// subspace representation constructed as `V = Qᵀ Z`. Rows of `V` for
/// same-label samples are copies of the same row of `Z`, hence bitwise
/// identical.
pub fn scnmfs_fit<T: Scalar>(
    x: &NonNegMatrix<T>,
    q: &LabelMatrix,
    k: usize,
    hyper: &Hyper<T>,
    seed: u64,
) -> Result<FactorModel<T>> {
    hyper.validate_common()?;
    hyper.validate_beta()?;
    let x = x.as_mat();
    check_fit_dims(x, k)?;
    check_not_all_zero(x)?;
    check_labels(x, q)?;
    let eps = hyper.eps;
    let beta = hyper.beta;
    let labels = q.labels();
    let counts: Vec<T> = q
        .counts()
        .iter()
        .map(|&c| T::from_f64_lossy(c as f64))
        .collect();

    let mut r = rng::seeded(seed, 0);
    let mut u: Mat<T> = rng::uniform_matrix(&mut r, x.rows(), k);
    let mut z: Mat<T> = rng::uniform_matrix(&mut r, q.classes(), k);

    // V = Qᵀ Z by row gather.
    let gather_v = |z: &Mat<T>| -> Mat<T> {
        let mut v = Mat::zeros(labels.len(), k);
        for (n, &c) in labels.iter().enumerate() {
            v.row_mut(n).copy_from_slice(z.row(c));
        }
        v
    };
    let mut v = gather_v(&z);

    let objective =
        |u: &Mat<T>, v: &Mat<T>| -> T { residual_sq(x, u, v) + beta * u.sq_fro_norm() };
    let mut trace = Vec::with_capacity(hyper.iters + 1);
    trace.push(objective(&u, &v));

    for _ in 0..hyper.iters {
        // U update: numerator X Qᵀ Z = X V; denominator U (Zᵀ Q Qᵀ Z) + β U,
        // with Zᵀ Q Qᵀ Z = Vᵀ V.
        let xv = x.matmul(&v);
        let vtv = v.t_matmul(&v);
        let uvtv = u.matmul(&vtv);
        for i in 0..u.rows() {
            for j in 0..u.cols() {
                let den = uvtv[(i, j)] + beta * u[(i, j)];
                u[(i, j)] = u[(i, j)] * (xv[(i, j)] / (den + eps));
            }
        }

        // Z update: numerator Q Xᵀ U (class-wise row sums of Xᵀ U);
        // denominator Q Qᵀ Z Uᵀ U = diag(class counts) · Z Uᵀ U.
        let xtu = x.t_matmul(&u);
        let mut num: Mat<T> = Mat::zeros(q.classes(), k);
        for (n, &c) in labels.iter().enumerate() {
            let src = xtu.row(n);
            let dst = num.row_mut(c);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        let utu = u.t_matmul(&u);
        let zutu = z.matmul(&utu);
        for c in 0..q.classes() {
            for j in 0..k {
                let den = counts[c] * zutu[(c, j)];
                z[(c, j)] = z[(c, j)] * (num[(c, j)] / (den + eps));
            }
        }

        v = gather_v(&z);

        debug_assert_nonneg(&u, "SCNMFS U");
        debug_assert_nonneg(&z, "SCNMFS Z");

        let obj = objective(&u, &v);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if converged(prev, obj, hyper.tol) {
            break;
        }
    }

    let model = FactorModel {
        method: Method::Scnmfs,
        k,
        hyper: *hyper,
        seed,
        u,
        v,
        a: None,
        z: Some(z),
        sigma: None,
        objective_trace: trace,
    };
    model.validate()?;
    Ok(model)
}

/// Project test features into a fitted subspace with `U` frozen.
///
/// SVD models return `X_testᵀ U` directly. NMF-family models initialize
/// `V_test` uniformly on `(0, 1]` from `opts.seed` and iterate only the
/// plain NMF `V` update (labels are unavailable at test time, so DNMF and
/// SCNMFS project the same way).
pub fn project_test<T: Scalar>(
    x_test: &Mat<T>,
    model: &FactorModel<T>,
    opts: &ProjectOptions<T>,
) -> Result<Mat<T>> {
    if x_test.rows() != model.u.rows() {
        return Err(Error::Dimension(format!(
            "test matrix has {} rows but the model projects from {}",
            x_test.rows(),
            model.u.rows()
        )));
    }
    if !x_test.is_finite() {
        return Err(Error::Numeric("test matrix contains NaN or Inf".into()));
    }
    if model.method == Method::Svd {
        return Ok(x_test.t_matmul(&model.u));
    }
    if x_test.min_entry() < T::zero() {
        return Err(Error::NonNegativity(format!(
            "negative test feature under {}",
            model.method.name()
        )));
    }

    let eps = model.hyper.eps;
    let u = &model.u;
    let mut r = rng::seeded(opts.seed, 0);
    let mut v: Mat<T> = rng::uniform_matrix(&mut r, x_test.cols(), model.k);

    // U is frozen, so these factors of the update are loop-invariant.
    let xtu = x_test.t_matmul(u);
    let utu = u.t_matmul(u);

    let mut prev_obj = if opts.tol > T::zero() {
        Some(residual_sq(x_test, u, &v))
    } else {
        None
    };
    for _ in 0..opts.iters {
        let vutu = v.matmul(&utu);
        mult_update(&mut v, &xtu, &vutu, eps);
        debug_assert_nonneg(&v, "projected V");
        if let Some(prev) = prev_obj {
            let obj = residual_sq(x_test, u, &v);
            if converged(prev, obj, opts.tol) {
                break;
            }
            prev_obj = Some(obj);
        }
    }

    if !v.is_finite() || v.min_entry() < T::zero() {
        return Err(Error::Numeric("projection diverged".into()));
    }
    Ok(v)
}
