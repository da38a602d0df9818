//! Few-shot evaluation pipeline around the factorizations: feature datasets,
//! optional feature standardization, episode sampling, KNN classification,
//! repeated-run accuracy statistics, and the linear head used by the CAM
//! generator.
//!
//! Two repeated-run protocols are supported:
//!
//! * [`evaluate`] — pools the given train/test datasets and redraws the
//!   partition every run, preserving each class's original train/test counts;
//! * [`evaluate_episodes`] — classic C-way l-shot episodes drawn from one
//!   dataset via [`sample_episode`].
//!
//! Run `r` of a protocol seeded with `s` samples from the ChaCha stream
//! `(s, r)` and derives its fit and projection seeds as
//! `derive_seed(s, 2r)` / `derive_seed(s, 2r + 1)`, so parallel and serial
//! execution produce identical reports.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::{
    dnmf_fit, nmf_fit, project_test, scnmfs_fit, truncated_svd, FactorModel, Hyper, Method,
    ProjectOptions,
};
use crate::matrix::{dot, LabelMatrix, Mat, NonNegMatrix};
use crate::rng;
use crate::Scalar;

/// Feature vectors (one column per sample) with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset<T> {
    features: Mat<T>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    nonneg: bool,
}

impl<T: Scalar> FeatureDataset<T> {
    /// Validate and build: labels must cover `[0, C)` with every class
    /// populated, and features must be finite. The non-negativity flag is
    /// set by scanning.
    pub fn new(features: Mat<T>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if labels.len() != features.cols() {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                features.cols()
            )));
        }
        if class_names.is_empty() {
            return Err(Error::Label("dataset needs at least one class".into()));
        }
        if !features.is_finite() {
            return Err(Error::Numeric("features contain NaN or Inf".into()));
        }
        let classes = class_names.len();
        let mut counts = vec![0usize; classes];
        for &l in &labels {
            if l >= classes {
                return Err(Error::Label(format!(
                    "label {l} out of range for {classes} classes"
                )));
            }
            counts[l] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Label(format!(
                "class '{}' has no samples",
                class_names[empty]
            )));
        }
        let nonneg = features.min_entry() >= T::zero();
        Ok(FeatureDataset {
            features,
            labels,
            class_names,
            nonneg,
        })
    }

    /// Default class names `class_0 .. class_{C-1}`.
    pub fn with_default_names(features: Mat<T>, labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let names = (0..classes).map(|c| format!("class_{c}")).collect();
        FeatureDataset::new(features, labels, names)
    }

    pub fn features(&self) -> &Mat<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// True when every feature is `>= 0` (NMF-family precondition).
    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.rows()
    }

    /// Sample indices belonging to class `c`, ascending.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == c).then_some(i))
            .collect()
    }

    /// Gather the given sample columns into a new dataset (classes kept).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i >= self.num_samples()) {
            return Err(Error::Dimension("subset index out of range".into()));
        }
        let features = Mat::from_fn(self.feature_dim(), indices.len(), |i, j| {
            self.features[(i, indices[j])]
        });
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        FeatureDataset::new(features, labels, self.class_names.clone())
    }

    /// One-hot label matrix for the supervised fits.
    pub fn label_matrix(&self) -> LabelMatrix {
        LabelMatrix::new(self.num_classes(), self.labels.clone())
            .expect("dataset invariants guarantee a valid label matrix")
    }
}

/// Per-feature statistics captured from a training set by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StandardizeStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

/// Standardize both datasets with per-feature mean and (population) standard
/// deviation computed on `train` only. Zero-variance features are centered
/// and divided by one.
pub fn standardize<T: Scalar>(
    train: &FeatureDataset<T>,
    test: &FeatureDataset<T>,
) -> Result<(FeatureDataset<T>, FeatureDataset<T>, StandardizeStats<T>)> {
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::Dimension(format!(
            "feature dimensions differ: {} vs {}",
            train.feature_dim(),
            test.feature_dim()
        )));
    }
    let m = train.feature_dim();
    let n = T::from_f64_lossy(train.num_samples() as f64);
    let mut mean = Vec::with_capacity(m);
    let mut std = Vec::with_capacity(m);
    for i in 0..m {
        let row = train.features.row(i);
        let mu = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n;
        let sd = var.sqrt();
        mean.push(mu);
        std.push(if sd > T::zero() { sd } else { T::one() });
    }
    let apply = |d: &FeatureDataset<T>| -> Result<FeatureDataset<T>> {
        let f = Mat::from_fn(m, d.num_samples(), |i, j| {
            (d.features[(i, j)] - mean[i]) / std[i]
        });
        FeatureDataset::new(f, d.labels.clone(), d.class_names.clone())
    };
    let train2 = apply(train)?;
    let test2 = apply(test)?;
    Ok((train2, test2, StandardizeStats { mean, std }))
}

/// Layout of a C-way l-shot episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    /// Number of ways; must equal the dataset's class count.
    pub ways: usize,
    /// Support samples per class.
    pub shots: usize,
    /// Query samples per class.
    pub query_per_class: usize,
    /// Number of episodes an evaluation draws.
    pub repeats: usize,
    pub seed: u64,
}

impl EpisodeSpec {
    fn validate(&self) -> Result<()> {
        if self.ways < 2 {
            return Err(Error::Config(format!("ways must be >= 2, got {}", self.ways)));
        }
        if self.shots < 1 || self.query_per_class < 1 {
            return Err(Error::Config(
                "shots and query_per_class must be >= 1".into(),
            ));
        }
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draw episode `run_index`: disjoint support and query sets with exactly
/// `shots` and `query_per_class` samples per class, deterministic in
/// `(spec.seed, run_index)`.
pub fn sample_episode<T: Scalar>(
    data: &FeatureDataset<T>,
    spec: &EpisodeSpec,
    run_index: usize,
) -> Result<(FeatureDataset<T>, FeatureDataset<T>)> {
    spec.validate()?;
    if spec.ways != data.num_classes() {
        return Err(Error::Label(format!(
            "episode requests {} ways but the dataset has {} classes",
            spec.ways,
            data.num_classes()
        )));
    }
    let need = spec.shots + spec.query_per_class;
    let mut r = rng::seeded(spec.seed, run_index as u64);
    let mut support = Vec::with_capacity(spec.ways * spec.shots);
    let mut query = Vec::with_capacity(spec.ways * spec.query_per_class);
    for c in 0..data.num_classes() {
        let mut idx = data.class_indices(c);
        if idx.len() < need {
            return Err(Error::InsufficientSamples {
                class: data.class_names[c].clone(),
                msg: format!("has {} samples, episode needs {need}", idx.len()),
            });
        }
        idx.shuffle(&mut r);
        support.extend_from_slice(&idx[..spec.shots]);
        query.extend_from_slice(&idx[spec.shots..need]);
    }
    Ok((data.subset(&support)?, data.subset(&query)?))
}

/// KNN distance choice. Euclidean is the default protocol metric; cosine is
/// offered as a configuration alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

/// Sort key for neighbor ranking: squared Euclidean distance, or cosine
/// distance `1 - cos(a, b)` (zero-norm vectors count as distance 1).
fn metric_key<T: Scalar>(metric: Metric, a: &[T], b: &[T]) -> T {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<T>(),
        Metric::Cosine => {
            let na = dot(a, a).sqrt();
            let nb = dot(b, b).sqrt();
            if na == T::zero() || nb == T::zero() {
                T::one()
            } else {
                T::one() - dot(a, b) / (na * nb)
            }
        }
    }
}

/// Majority-vote KNN over rows of the support matrix.
///
/// Vote ties go to the class of the nearest neighbor among the tied
/// classes; distance ties rank the lower sample index first.
pub fn knn_predict<T: Scalar>(
    support_v: &Mat<T>,
    support_labels: &[usize],
    query_v: &Mat<T>,
    k_neighbors: usize,
    metric: Metric,
) -> Result<Vec<usize>> {
    if support_v.rows() != support_labels.len() {
        return Err(Error::Dimension(format!(
            "{} support rows but {} labels",
            support_v.rows(),
            support_labels.len()
        )));
    }
    if support_v.cols() != query_v.cols() {
        return Err(Error::Dimension(format!(
            "support dimension {} != query dimension {}",
            support_v.cols(),
            query_v.cols()
        )));
    }
    if k_neighbors < 1 || k_neighbors > support_v.rows() {
        return Err(Error::Dimension(format!(
            "K = {k_neighbors} out of range for {} support samples",
            support_v.rows()
        )));
    }
    let classes = support_labels.iter().copied().max().unwrap_or(0) + 1;
    let mut out = Vec::with_capacity(query_v.rows());
    let mut ranked: Vec<(T, usize)> = Vec::with_capacity(support_v.rows());
    for qi in 0..query_v.rows() {
        let q = query_v.row(qi);
        ranked.clear();
        ranked.extend(
            (0..support_v.rows()).map(|si| (metric_key(metric, q, support_v.row(si)), si)),
        );
        ranked.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        let top = &ranked[..k_neighbors];
        let mut votes = vec![0usize; classes];
        for &(_, si) in top {
            votes[support_labels[si]] += 1;
        }
        let best = *votes.iter().max().unwrap();
        let winner = top
            .iter()
            .map(|&(_, si)| support_labels[si])
            .find(|&c| votes[c] == best)
            .unwrap();
        out.push(winner);
    }
    Ok(out)
}

/// Fraction of matching positions.
pub fn accuracy<T: Scalar>(predictions: &[usize], truth: &[usize]) -> T {
    assert_eq!(predictions.len(), truth.len());
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    T::from_f64_lossy(hits as f64) / T::from_f64_lossy(truth.len() as f64)
}

/// Knobs for a repeated-run evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalOptions<T> {
    pub method: Method,
    pub k: usize,
    pub hyper: Hyper<T>,
    /// KNN neighbor count.
    pub knn_k: usize,
    pub metric: Metric,
    /// Standardize features with train statistics before fitting. Only valid
    /// with SVD: the NMF family requires non-negative inputs.
    pub standardize: bool,
    pub repeats: usize,
    pub seed: u64,
    /// Fan repeats across threads; the report is identical either way.
    pub parallel: bool,
}

impl<T: Scalar> EvalOptions<T> {
    pub fn new(method: Method, k: usize) -> Self {
        EvalOptions {
            method,
            k,
            hyper: Hyper::default(),
            knn_k: 5,
            metric: Metric::Euclidean,
            standardize: false,
            repeats: 10,
            seed: 0,
            parallel: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if self.standardize && self.method.is_nmf_family() {
            return Err(Error::Config(format!(
                "standardization produces negative features and cannot be combined with {}",
                self.method.name()
            )));
        }
        Ok(())
    }
}

/// Resolved configuration echoed into every report for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalConfig<T> {
    pub protocol: String,
    pub method: Method,
    pub k: usize,
    pub hyper: Hyper<T>,
    pub knn_k: usize,
    pub metric: Metric,
    pub standardize: bool,
    pub repeats: usize,
    pub seed: u64,
    pub feature_dim: usize,
    pub classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub query_per_class: Option<usize>,
}

/// Accuracy over repeated runs, with mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub per_run_accuracy: Vec<T>,
    pub mean: T,
    pub std: T,
    pub config_echo: EvalConfig<T>,
}

fn mean_std<T: Scalar>(values: &[T]) -> (T, T) {
    let n = T::from_f64_lossy(values.len() as f64);
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Fit the configured subspace on `train`, project `test` with `U` frozen,
/// and KNN-classify. Returns the accuracy on `test`.
fn run_once<T: Scalar>(
    train: &FeatureDataset<T>,
    test: &FeatureDataset<T>,
    opts: &EvalOptions<T>,
    fit_seed: u64,
    proj_seed: u64,
) -> Result<T> {
    let (train_s, test_s);
    let (train, test) = if opts.standardize {
        let (a, b, _) = standardize(train, test)?;
        train_s = a;
        test_s = b;
        (&train_s, &test_s)
    } else {
        (train, test)
    };

    let model: FactorModel<T> = match opts.method {
        Method::Svd => truncated_svd(train.features(), opts.k)?,
        Method::Nmf => nmf_fit(
            &NonNegMatrix::new(train.features().clone())?,
            opts.k,
            &opts.hyper,
            fit_seed,
        )?,
        Method::Dnmf => dnmf_fit(
            &NonNegMatrix::new(train.features().clone())?,
            &train.label_matrix(),
            opts.k,
            &opts.hyper,
            fit_seed,
        )?,
        Method::Scnmfs => scnmfs_fit(
            &NonNegMatrix::new(train.features().clone())?,
            &train.label_matrix(),
            opts.k,
            &opts.hyper,
            fit_seed,
        )?,
    };

    let proj = ProjectOptions {
        iters: opts.hyper.iters,
        tol: opts.hyper.tol,
        seed: proj_seed,
    };
    let v_test = project_test(test.features(), &model, &proj)?;
    let preds = knn_predict(&model.v, train.labels(), &v_test, opts.knn_k, opts.metric)?;
    Ok(accuracy(&preds, test.labels()))
}

/// Redraw the train/test partition from the pooled samples, preserving each
/// class's original train and test counts. Deterministic in `(seed, run)`.
fn resample_partition<T: Scalar>(
    train: &FeatureDataset<T>,
    test: &FeatureDataset<T>,
    pool: &FeatureDataset<T>,
    seed: u64,
    run: usize,
) -> Result<(FeatureDataset<T>, FeatureDataset<T>)> {
    let mut r = rng::seeded(seed, run as u64);
    let mut tr_idx = Vec::with_capacity(train.num_samples());
    let mut te_idx = Vec::with_capacity(test.num_samples());
    for c in 0..pool.num_classes() {
        let mut idx = pool.class_indices(c);
        idx.shuffle(&mut r);
        let n_tr = train.class_indices(c).len();
        let n_te = test.class_indices(c).len();
        debug_assert_eq!(idx.len(), n_tr + n_te);
        tr_idx.extend_from_slice(&idx[..n_tr]);
        te_idx.extend_from_slice(&idx[n_tr..n_tr + n_te]);
    }
    Ok((pool.subset(&tr_idx)?, pool.subset(&te_idx)?))
}

/// Concatenate two datasets column-wise (shared class set).
fn pool_datasets<T: Scalar>(
    train: &FeatureDataset<T>,
    test: &FeatureDataset<T>,
) -> Result<FeatureDataset<T>> {
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::Dimension(format!(
            "feature dimensions differ: {} vs {}",
            train.feature_dim(),
            test.feature_dim()
        )));
    }
    if train.num_classes() != test.num_classes() {
        return Err(Error::Label(
            "train and test datasets disagree on the class set".into(),
        ));
    }
    let n = train.num_samples() + test.num_samples();
    let features = Mat::from_fn(train.feature_dim(), n, |i, j| {
        if j < train.num_samples() {
            train.features()[(i, j)]
        } else {
            test.features()[(i, j - train.num_samples())]
        }
    });
    let mut labels = train.labels().to_vec();
    labels.extend_from_slice(test.labels());
    FeatureDataset::new(features, labels, train.class_names().to_vec())
}

fn collect_runs<T: Scalar>(
    repeats: usize,
    parallel: bool,
    run: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if parallel {
        (0..repeats).into_par_iter().map(run).collect()
    } else {
        (0..repeats).map(run).collect()
    }
}

/// Repeated-resampling protocol: for every run, redraw the train/test
/// partition from the pooled data, fit on the train side, project the test
/// side with `U` frozen, and KNN-classify. Reports mean ± std accuracy.
pub fn evaluate<T: Scalar>(
    train: &FeatureDataset<T>,
    test: &FeatureDataset<T>,
    opts: &EvalOptions<T>,
) -> Result<EvalReport<T>> {
    opts.validate()?;
    let pool = pool_datasets(train, test)?;
    let per_run = collect_runs(opts.repeats, opts.parallel, |run| {
        let (tr, te) = resample_partition(train, test, &pool, opts.seed, run)?;
        run_once(
            &tr,
            &te,
            opts,
            rng::derive_seed(opts.seed, 2 * run as u64),
            rng::derive_seed(opts.seed, 2 * run as u64 + 1),
        )
    })?;
    let (mean, std) = mean_std(&per_run);
    Ok(EvalReport {
        config_echo: EvalConfig {
            protocol: "resample".into(),
            method: opts.method,
            k: opts.k,
            hyper: opts.hyper,
            knn_k: opts.knn_k,
            metric: opts.metric,
            standardize: opts.standardize,
            repeats: opts.repeats,
            seed: opts.seed,
            feature_dim: train.feature_dim(),
            classes: train.num_classes(),
            train_samples: train.num_samples(),
            test_samples: test.num_samples(),
            shots: None,
            query_per_class: None,
        },
        per_run_accuracy: per_run,
        mean,
        std,
    })
}

/// Episode protocol: each run draws a fresh C-way l-shot episode and scores
/// the query set against the support-set subspace.
pub fn evaluate_episodes<T: Scalar>(
    data: &FeatureDataset<T>,
    episode: &EpisodeSpec,
    opts: &EvalOptions<T>,
) -> Result<EvalReport<T>> {
    opts.validate()?;
    episode.validate()?;
    let per_run = collect_runs(episode.repeats, opts.parallel, |run| {
        let (support, query) = sample_episode(data, episode, run)?;
        run_once(
            &support,
            &query,
            opts,
            rng::derive_seed(episode.seed, 2 * run as u64),
            rng::derive_seed(episode.seed, 2 * run as u64 + 1),
        )
    })?;
    let (mean, std) = mean_std(&per_run);
    Ok(EvalReport {
        config_echo: EvalConfig {
            protocol: "episode".into(),
            method: opts.method,
            k: opts.k,
            hyper: opts.hyper,
            knn_k: opts.knn_k,
            metric: opts.metric,
            standardize: opts.standardize,
            repeats: episode.repeats,
            seed: episode.seed,
            feature_dim: data.feature_dim(),
            classes: data.num_classes(),
            train_samples: episode.ways * episode.shots,
            test_samples: episode.ways * episode.query_per_class,
            shots: Some(episode.shots),
            query_per_class: Some(episode.query_per_class),
        },
        per_run_accuracy: per_run,
        mean,
        std,
    })
}

/// Multinomial linear classifier on subspace coordinates: logits
/// `z = Vᵀ W + b`, prediction `argmax z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearHead<T> {
    /// `k x C` weight matrix (no bias row).
    pub w: Mat<T>,
    /// Per-class bias, folded out of the back-projected weights.
    pub bias: Vec<T>,
}

impl<T: Scalar> LinearHead<T> {
    /// Logits for each row of `v` (`N x k`) as an `N x C` matrix.
    pub fn logits(&self, v: &Mat<T>) -> Result<Mat<T>> {
        if v.cols() != self.w.rows() {
            return Err(Error::Dimension(format!(
                "subspace dimension {} does not match head dimension {}",
                v.cols(),
                self.w.rows()
            )));
        }
        let mut z = v.matmul(&self.w);
        for i in 0..z.rows() {
            for (zv, b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *zv += *b;
            }
        }
        Ok(z)
    }

    /// Argmax class per row (ties to the lower class index).
    pub fn predict(&self, v: &Mat<T>) -> Result<Vec<usize>> {
        let z = self.logits(v)?;
        Ok((0..z.rows()).map(|i| argmax(z.row(i))).collect())
    }

    /// Weight column for class `c`, length `k`.
    pub fn class_weight(&self, c: usize) -> Vec<T> {
        self.w.col_to_vec(c)
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }
}

pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of one logit row.
pub fn softmax_row<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean multinomial cross-entropy of the head on `(v, labels)`.
pub fn cross_entropy_loss<T: Scalar>(
    v: &Mat<T>,
    labels: &[usize],
    head: &LinearHead<T>,
) -> Result<T> {
    let z = head.logits(v)?;
    let n = T::from_f64_lossy(labels.len() as f64);
    let mut loss = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        let p = softmax_row(z.row(i));
        loss -= p[label].max(T::min_positive_value()).ln();
    }
    Ok(loss / n)
}

/// Analytic gradient of [`cross_entropy_loss`] in `(W, bias)`.
pub fn cross_entropy_grad<T: Scalar>(
    v: &Mat<T>,
    labels: &[usize],
    head: &LinearHead<T>,
) -> Result<(Mat<T>, Vec<T>)> {
    let z = head.logits(v)?;
    let classes = head.classes();
    let n = T::from_f64_lossy(labels.len() as f64);
    // P - Y, row by row.
    let mut delta = Mat::zeros(v.rows(), classes);
    for (i, &label) in labels.iter().enumerate() {
        let p = softmax_row(z.row(i));
        for c in 0..classes {
            delta[(i, c)] = p[c] - if c == label { T::one() } else { T::zero() };
        }
    }
    let grad_w = v.t_matmul(&delta).scale(T::one() / n);
    let grad_b: Vec<T> = (0..classes)
        .map(|c| (0..v.rows()).map(|i| delta[(i, c)]).sum::<T>() / n)
        .collect();
    Ok((grad_w, grad_b))
}

/// Train the linear head with full-batch gradient descent on the multinomial
/// cross-entropy (bias handled as a separate parameter; equivalent to an
/// appended constant-one coordinate that is excluded from back-projection).
pub fn train_linear_head<T: Scalar>(
    v: &Mat<T>,
    labels: &[usize],
    epochs: usize,
    lr: T,
    seed: u64,
) -> Result<LinearHead<T>> {
    if labels.len() != v.rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} subspace rows",
            labels.len(),
            v.rows()
        )));
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    if classes < 2 {
        return Err(Error::Label("linear head needs at least 2 classes".into()));
    }
    if !(lr > T::zero() && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }

    let mut r = rng::seeded(seed, 0);
    let scale = T::from_f64_lossy(0.01);
    let half = T::from_f64_lossy(0.5);
    let mut head = LinearHead {
        w: Mat::from_fn(v.cols(), classes, |_, _| {
            (rng::uniform_open01::<T>(&mut r) - half) * scale
        }),
        bias: (0..classes)
            .map(|_| (rng::uniform_open01::<T>(&mut r) - half) * scale)
            .collect(),
    };

    for _ in 0..epochs {
        let (gw, gb) = cross_entropy_grad(v, labels, &head)?;
        for (wv, g) in head.w.data_mut().iter_mut().zip(gw.data()) {
            *wv -= lr * *g;
        }
        for (bv, g) in head.bias.iter_mut().zip(&gb) {
            *bv -= lr * *g;
        }
    }
    let final_loss = cross_entropy_loss(v, labels, &head)?;
    if !final_loss.is_finite() {
        return Err(Error::Numeric("linear head training diverged".into()));
    }
    Ok(head)
}
