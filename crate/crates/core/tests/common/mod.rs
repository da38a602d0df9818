//! Independent oracles and data generators for the integration suites.
//!
//! Everything here is written against plain `Vec<Vec<f64>>` with explicit
//! triple loops, separate from the library's matrix code, so the update-rule
//! and decomposition tests compare two implementations that share nothing
//! but the documented conventions (seeded `(0, 1]` init, `+eps` denominator
//! guards, update order).

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subfactor::fewshot::FeatureDataset;
use subfactor::matrix::Mat;

pub type M = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> M {
    vec![vec![0.0; c]; r]
}

pub fn matmul(a: &M, b: &M) -> M {
    let (ra, ca, cb) = (a.len(), a[0].len(), b[0].len());
    let mut out = zeros(ra, cb);
    for i in 0..ra {
        for j in 0..cb {
            let mut s = 0.0;
            for t in 0..ca {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &M) -> M {
    let (r, c) = (a.len(), a[0].len());
    let mut out = zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            out[j][i] = a[i][j];
        }
    }
    out
}

pub fn frob_sq(a: &M) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

pub fn sub(a: &M, b: &M) -> M {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
        .collect()
}

/// Reproduce the library's documented initialization: ChaCha8 stream 0 of
/// `seed`, i.i.d. uniform on `(0, 1]`, filled row-major.
pub fn seeded_uniform(seed: u64, rows: usize, cols: usize, skip: usize) -> M {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    for _ in 0..skip {
        let _: f64 = rng.random();
    }
    (0..rows)
        .map(|_| (0..cols).map(|_| 1.0 - rng.random::<f64>()).collect())
        .collect()
}

pub fn to_mat(a: &M) -> Mat<f64> {
    Mat::from_rows(a.clone()).unwrap()
}

pub fn from_mat(m: &Mat<f64>) -> M {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn max_abs_diff(a: &M, b: &Mat<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b[(i, j)]).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Naive symmetric eigensolver (classical Jacobi, off-diagonal pivot search)
// ---------------------------------------------------------------------------

/// Eigendecomposition of a symmetric matrix by classical Jacobi with
/// largest-off-diagonal pivoting. Returns (values desc, vectors as columns).
pub fn naive_sym_eig(a: &M) -> (Vec<f64>, M) {
    let n = a.len();
    let mut a = a.clone();
    let mut v = zeros(n, n);
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..200 * n * n {
        // Largest off-diagonal element.
        let (mut p, mut q, mut big) = (0, 0, 0.0f64);
        for i in 0..n {
            for j in i + 1..n {
                if a[i][j].abs() > big {
                    big = a[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big < 1e-15 * (1.0 + diag_max(&a)) {
            break;
        }
        let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = c * t;
        for k in 0..n {
            let akp = a[k][p];
            let akq = a[k][q];
            a[k][p] = c * akp - s * akq;
            a[k][q] = s * akp + c * akq;
        }
        for k in 0..n {
            let apk = a[p][k];
            let aqk = a[q][k];
            a[p][k] = c * apk - s * aqk;
            a[q][k] = s * apk + c * aqk;
        }
        for k in 0..n {
            let vkp = v[k][p];
            let vkq = v[k][q];
            v[k][p] = c * vkp - s * vkq;
            v[k][q] = s * vkp + c * vkq;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].partial_cmp(&a[x][x]).unwrap().then(x.cmp(&y)));
    let values: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let mut vectors = zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row][col] = v[row][src];
        }
    }
    (values, vectors)
}

fn diag_max(a: &M) -> f64 {
    a.iter()
        .enumerate()
        .map(|(i, r)| r[i].abs())
        .fold(0.0, f64::max)
}

/// Pseudo-inverse of a symmetric PSD matrix, inverse eigenvalues below
/// `1e-12 * max` zeroed.
pub fn naive_pinv_psd(g: &M) -> M {
    let (vals, vecs) = naive_sym_eig(g);
    let n = g.len();
    let lmax = vals.first().copied().unwrap_or(0.0);
    let mut out = zeros(n, n);
    for (idx, &l) in vals.iter().enumerate() {
        if l > 1e-12 * lmax && l > 0.0 {
            for i in 0..n {
                for j in 0..n {
                    out[i][j] += vecs[i][idx] * vecs[j][idx] / l;
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Naive multiplicative-update trajectories
// ---------------------------------------------------------------------------

pub struct NaiveNmf {
    pub x: M,
    pub u: M,
    pub v: M,
    pub eps: f64,
}

impl NaiveNmf {
    pub fn new(x: M, k: usize, seed: u64) -> Self {
        let m = x.len();
        let n = x[0].len();
        let u = seeded_uniform(seed, m, k, 0);
        let v = seeded_uniform(seed, n, k, m * k);
        NaiveNmf {
            x,
            u,
            v,
            eps: 1e-12,
        }
    }

    pub fn sweep(&mut self) {
        let xv = matmul(&self.x, &self.v);
        let vtv = matmul(&transpose(&self.v), &self.v);
        let uvtv = matmul(&self.u, &vtv);
        for i in 0..self.u.len() {
            for j in 0..self.u[0].len() {
                self.u[i][j] *= xv[i][j] / (uvtv[i][j] + self.eps);
            }
        }
        let xtu = matmul(&transpose(&self.x), &self.u);
        let utu = matmul(&transpose(&self.u), &self.u);
        let vutu = matmul(&self.v, &utu);
        for i in 0..self.v.len() {
            for j in 0..self.v[0].len() {
                self.v[i][j] *= xtu[i][j] / (vutu[i][j] + self.eps);
            }
        }
    }

    pub fn objective(&self) -> f64 {
        frob_sq(&sub(&self.x, &matmul(&self.u, &transpose(&self.v))))
    }
}

pub struct NaiveDnmf {
    pub x: M,
    pub q: M,
    pub u: M,
    pub v: M,
    pub a: M,
    pub alpha: f64,
    pub eps: f64,
}

impl NaiveDnmf {
    pub fn new(x: M, labels: &[usize], classes: usize, k: usize, alpha: f64, seed: u64) -> Self {
        let m = x.len();
        let n = x[0].len();
        let mut q = zeros(classes, n);
        for (j, &c) in labels.iter().enumerate() {
            q[c][j] = 1.0;
        }
        let u = seeded_uniform(seed, m, k, 0);
        let v = seeded_uniform(seed, n, k, m * k);
        let a = Self::solve_a(&q, &v);
        NaiveDnmf {
            x,
            q,
            u,
            v,
            a,
            alpha,
            eps: 1e-12,
        }
    }

    fn solve_a(q: &M, v: &M) -> M {
        let vtv = matmul(&transpose(v), v);
        matmul(&matmul(q, v), &naive_pinv_psd(&vtv))
    }

    pub fn sweep(&mut self) {
        let xv = matmul(&self.x, &self.v);
        let vtv = matmul(&transpose(&self.v), &self.v);
        let uvtv = matmul(&self.u, &vtv);
        for i in 0..self.u.len() {
            for j in 0..self.u[0].len() {
                self.u[i][j] *= xv[i][j] / (uvtv[i][j] + self.eps);
            }
        }

        let xtu = matmul(&transpose(&self.x), &self.u);
        let utu = matmul(&transpose(&self.u), &self.u);
        let vutu = matmul(&self.v, &utu);
        let ata = matmul(&transpose(&self.a), &self.a);
        let vata = matmul(&self.v, &ata);
        let qta = matmul(&transpose(&self.q), &self.a);
        for i in 0..self.v.len() {
            for j in 0..self.v[0].len() {
                let num = xtu[i][j]
                    + self.alpha * (-vata[i][j]).max(0.0)
                    + self.alpha * qta[i][j].max(0.0);
                let den = vutu[i][j]
                    + self.alpha * vata[i][j].max(0.0)
                    + self.alpha * (-qta[i][j]).max(0.0);
                self.v[i][j] *= num / (den + self.eps);
            }
        }

        self.a = Self::solve_a(&self.q, &self.v);
    }

    pub fn objective(&self) -> f64 {
        frob_sq(&sub(&self.x, &matmul(&self.u, &transpose(&self.v))))
            + self.alpha * frob_sq(&sub(&self.q, &matmul(&self.a, &transpose(&self.v))))
    }
}

pub struct NaiveScnmfs {
    pub x: M,
    pub q: M,
    pub u: M,
    pub z: M,
    pub beta: f64,
    pub eps: f64,
}

impl NaiveScnmfs {
    pub fn new(x: M, labels: &[usize], classes: usize, k: usize, beta: f64, seed: u64) -> Self {
        let m = x.len();
        let n = x[0].len();
        let mut q = zeros(classes, n);
        for (j, &c) in labels.iter().enumerate() {
            q[c][j] = 1.0;
        }
        let u = seeded_uniform(seed, m, k, 0);
        let z = seeded_uniform(seed, classes, k, m * k);
        NaiveScnmfs {
            x,
            q,
            u,
            z,
            beta,
            eps: 1e-12,
        }
    }

    pub fn v(&self) -> M {
        matmul(&transpose(&self.q), &self.z)
    }

    pub fn sweep(&mut self) {
        // U: X Qᵀ Z over U Zᵀ Q Qᵀ Z + β U.
        let qt = transpose(&self.q);
        let qtz = matmul(&qt, &self.z);
        let num_u = matmul(&self.x, &qtz);
        let zt_q = matmul(&transpose(&self.z), &self.q);
        let den_core = matmul(&matmul(&self.u, &zt_q), &qtz);
        for i in 0..self.u.len() {
            for j in 0..self.u[0].len() {
                let den = den_core[i][j] + self.beta * self.u[i][j];
                self.u[i][j] *= num_u[i][j] / (den + self.eps);
            }
        }

        // Z: Q Xᵀ U over Q Qᵀ Z Uᵀ U.
        let num_z = matmul(&matmul(&self.q, &transpose(&self.x)), &self.u);
        let qqt = matmul(&self.q, &qt);
        let utu = matmul(&transpose(&self.u), &self.u);
        let den_z = matmul(&matmul(&qqt, &self.z), &utu);
        for i in 0..self.z.len() {
            for j in 0..self.z[0].len() {
                self.z[i][j] *= num_z[i][j] / (den_z[i][j] + self.eps);
            }
        }
    }

    pub fn objective(&self) -> f64 {
        frob_sq(&sub(&self.x, &matmul(&self.u, &transpose(&self.v()))))
            + self.beta * frob_sq(&self.u)
    }
}

// ---------------------------------------------------------------------------
// Gram-matrix SVD oracle
// ---------------------------------------------------------------------------

/// Singular values and left singular vectors of `x` via an eigensolve of the
/// smaller Gram matrix.
pub fn gram_svd_oracle(x: &M) -> (Vec<f64>, M) {
    let m = x.len();
    let n = x[0].len();
    if m <= n {
        let g = matmul(x, &transpose(x));
        let (vals, vecs) = naive_sym_eig(&g);
        let sigma = vals.iter().map(|l| l.max(0.0).sqrt()).collect();
        (sigma, vecs)
    } else {
        let g = matmul(&transpose(x), x);
        let (vals, w) = naive_sym_eig(&g);
        let sigma: Vec<f64> = vals.iter().map(|l: &f64| l.max(0.0).sqrt()).collect();
        // u_i = X w_i / sigma_i for the non-null directions.
        let mut u = zeros(m, n);
        for (idx, &s) in sigma.iter().enumerate() {
            if s > 1e-300 {
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += x[i][j] * w[j][idx];
                    }
                    u[i][idx] = acc / s;
                }
            }
        }
        (sigma, u)
    }
}

/// Largest principal angle (radians) between the spans of the first `k`
/// columns of `a` and `b` (both with orthonormal columns).
pub fn max_principal_angle(a: &M, b: &M, k: usize) -> f64 {
    // Singular values of AᵀB via the eigenvalues of (AᵀB)ᵀ(AᵀB).
    let m = a.len();
    let mut atb = zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for r in 0..m {
                s += a[r][i] * b[r][j];
            }
            atb[i][j] = s;
        }
    }
    let gram = matmul(&transpose(&atb), &atb);
    let (vals, _) = naive_sym_eig(&gram);
    let smallest = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    smallest.min(1.0).acos()
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Two Gaussian classes with the given centers and unit-variance isotropic
/// noise, `per_class` samples each, interleaved labels 0,1,0,1,...
pub fn two_gaussian_classes(
    seed: u64,
    dim: usize,
    per_class: usize,
    center0: f64,
    center1_first_coord: f64,
) -> FeatureDataset<f64> {
    let n = per_class * 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let mut features = Mat::zeros(dim, n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let label = j % 2;
        labels.push(label);
        for i in 0..dim {
            let mean = if label == 1 && i == 0 {
                center1_first_coord
            } else {
                center0
            };
            features[(i, j)] = mean + gaussian(&mut rng);
        }
    }
    FeatureDataset::with_default_names(features, labels).unwrap()
}

/// Shuffle the labels of a dataset (a bijection, so class counts survive).
pub fn permute_labels(d: &FeatureDataset<f64>, seed: u64) -> FeatureDataset<f64> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(99);
    let mut labels = d.labels().to_vec();
    labels.shuffle(&mut rng);
    FeatureDataset::new(d.features().clone(), labels, d.class_names().to_vec()).unwrap()
}
