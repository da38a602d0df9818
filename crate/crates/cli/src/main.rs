//! `subfactor` — reproducible subspace-factorization experiments on feature
//! files: fit subspaces, project test features, run repeated-sampling
//! evaluations, compare matrices, and render class activation maps.
//!
//! Every output artifact embeds the resolved configuration (plus seed), so
//! re-running an emitted config reproduces the artifact byte for byte.
//! Module errors exit with status 1 and a single machine-parsable JSON line
//! on stderr; configuration errors exit with status 2.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use subfactor::analysis::{self, MatrixTag};
use subfactor::factorize::{
    dnmf_fit, nmf_fit, project_test, scnmfs_fit, truncated_svd, FactorModel, Hyper, Method,
    ProjectOptions,
};
use subfactor::fewshot::{
    evaluate, evaluate_episodes, train_linear_head, EpisodeSpec, EvalOptions, EvalReport,
    FeatureDataset, Metric,
};
use subfactor::matrix::{Mat, NonNegMatrix};
use subfactor::{io, Error};

#[derive(Parser)]
#[command(
    name = "subfactor",
    version,
    about = "Subspace factorization, few-shot evaluation and subspace CAMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Svd,
    Nmf,
    Dnmf,
    Scnmfs,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Svd => Method::Svd,
            MethodArg::Nmf => Method::Nmf,
            MethodArg::Dnmf => Method::Dnmf,
            MethodArg::Scnmfs => Method::Scnmfs,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Tsv,
}

#[derive(Args)]
struct HyperArgs {
    /// Subspace dimension.
    #[arg(long, default_value_t = 30)]
    k: usize,
    /// DNMF label-regression weight.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// SCNMFS Frobenius penalty on U, in (0, 1).
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Multiplicative-update sweeps.
    #[arg(long, default_value_t = 3000)]
    iters: usize,
    /// Early-stop threshold on relative objective change (0 disables).
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
    /// Denominator guard for the multiplicative updates.
    #[arg(long, default_value_t = 1e-12)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl HyperArgs {
    fn hyper(&self) -> Hyper<f64> {
        Hyper {
            alpha: self.alpha,
            beta: self.beta,
            iters: self.iters,
            tol: self.tol,
            eps: self.eps,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a subspace model on a matrix or feature file.
    Factorize {
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Matrix CSV, or a feature file (required for dnmf/scnmfs labels).
        #[arg(long)]
        input: PathBuf,
        /// Model JSON destination.
        #[arg(long)]
        output: PathBuf,
    },
    /// Project features into a fitted subspace with U frozen.
    Project {
        /// Model JSON from `factorize`.
        #[arg(long)]
        model: PathBuf,
        /// Matrix CSV or feature file to project.
        #[arg(long)]
        input: PathBuf,
        /// Destination matrix CSV (one row per sample).
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 3000)]
        iters: usize,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Repeated-run evaluation: fit, project, KNN-classify, report mean±std.
    Evaluate {
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// KNN neighbor count.
        #[arg(long = "K", default_value_t = 5)]
        knn_k: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
        metric: MetricArg,
        /// Standardize features with train statistics (SVD only).
        #[arg(long, default_value_t = false)]
        standardize: bool,
        /// `resample` redraws the train/test split; `episode` draws C-way
        /// l-shot episodes from the pooled data.
        #[arg(long, default_value = "resample")]
        protocol: String,
        /// Support samples per class (episode protocol).
        #[arg(long)]
        shots: Option<usize>,
        /// Query samples per class (episode protocol).
        #[arg(long)]
        query_per_class: Option<usize>,
        /// Report destination.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
    },
    /// CCA similarity and sparsity reports for two matrices.
    Compare {
        #[arg(long)]
        matrix_a: PathBuf,
        #[arg(long)]
        matrix_b: PathBuf,
        /// Covariance ridge; defaults to 1e-8·trace/dim per matrix.
        #[arg(long)]
        ridge: Option<f64>,
        /// Which fitted matrix kind both inputs represent (u or v).
        #[arg(long, default_value = "u")]
        tag: String,
        /// Transpose both matrices before the CCA (samples in rows).
        #[arg(long, default_value_t = false)]
        transpose: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Class activation map through a fitted subspace.
    Cam {
        /// Feature-map stack file (`# channels=.. height=.. width=..`).
        #[arg(long)]
        fmap: PathBuf,
        /// Feature file holding the image's pooled feature vector.
        #[arg(long)]
        input: PathBuf,
        /// Sample index inside `--input`.
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Model JSON from `factorize` (provides U and V).
        #[arg(long)]
        model: PathBuf,
        /// Feature file the model was fitted on (labels for the head).
        #[arg(long)]
        train_features: PathBuf,
        /// Linear-head training epochs.
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        /// Linear-head learning rate.
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        head_seed: u64,
        /// Projection sweeps for the feature vector (NMF family).
        #[arg(long, default_value_t = 3000)]
        iters: usize,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_h: usize,
        #[arg(long)]
        out_w: usize,
        /// Destination CSV for the normalized map.
        #[arg(long)]
        output: PathBuf,
        /// JSON sidecar with prediction metadata.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        /// Optional PGM grayscale render.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.code(), "message": e.to_string()}));
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

/// A factorization input: a bare matrix, or a feature file with labels.
enum FitInput {
    Matrix(Mat<f64>),
    Features(FeatureDataset<f64>),
}

/// Sniff the header to decide which format `path` holds.
fn read_fit_input(path: &Path) -> Result<FitInput, Error> {
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or_default();
    if header.contains("features=") {
        Ok(FitInput::Features(io::features_from_csv(&text)?))
    } else {
        Ok(FitInput::Matrix(io::matrix_from_csv(&text)?))
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Factorize {
            hyper,
            method,
            input,
            output,
        } => cmd_factorize(&hyper, method.into(), &input, &output),
        Command::Project {
            model,
            input,
            output,
            iters,
            tol,
            seed,
        } => cmd_project(&model, &input, &output, iters, tol, seed),
        Command::Evaluate {
            hyper,
            method,
            train,
            test,
            knn_k,
            repeats,
            metric,
            standardize,
            protocol,
            shots,
            query_per_class,
            output,
            format,
        } => cmd_evaluate(
            &hyper,
            method.into(),
            &train,
            &test,
            knn_k,
            repeats,
            metric.into(),
            standardize,
            &protocol,
            shots,
            query_per_class,
            &output,
            format,
        ),
        Command::Compare {
            matrix_a,
            matrix_b,
            ridge,
            tag,
            transpose,
            output,
        } => cmd_compare(&matrix_a, &matrix_b, ridge, &tag, transpose, &output),
        Command::Cam {
            fmap,
            input,
            sample,
            model,
            train_features,
            epochs,
            lr,
            head_seed,
            iters,
            tol,
            seed,
            out_h,
            out_w,
            output,
            sidecar,
            pgm,
        } => cmd_cam(
            &fmap,
            &input,
            sample,
            &model,
            &train_features,
            epochs,
            lr,
            head_seed,
            iters,
            tol,
            seed,
            out_h,
            out_w,
            &output,
            sidecar.as_deref(),
            pgm.as_deref(),
        ),
    }
}

fn cmd_factorize(
    args: &HyperArgs,
    method: Method,
    input: &Path,
    output: &Path,
) -> Result<(), Error> {
    args.validate()?;
    let hyper = args.hyper();
    let fit_input = read_fit_input(input)?;
    let model: FactorModel<f64> = match (&fit_input, method) {
        (FitInput::Matrix(x), Method::Svd) => truncated_svd(x, args.k)?,
        (FitInput::Features(d), Method::Svd) => truncated_svd(d.features(), args.k)?,
        (FitInput::Matrix(x), Method::Nmf) => {
            nmf_fit(&NonNegMatrix::new(x.clone())?, args.k, &hyper, args.seed)?
        }
        (FitInput::Features(d), Method::Nmf) => nmf_fit(
            &NonNegMatrix::new(d.features().clone())?,
            args.k,
            &hyper,
            args.seed,
        )?,
        (FitInput::Matrix(_), Method::Dnmf | Method::Scnmfs) => {
            return Err(Error::Config(format!(
                "{} needs labels: pass a feature file as --input",
                method.name()
            )));
        }
        (FitInput::Features(d), Method::Dnmf) => dnmf_fit(
            &NonNegMatrix::new(d.features().clone())?,
            &d.label_matrix(),
            args.k,
            &hyper,
            args.seed,
        )?,
        (FitInput::Features(d), Method::Scnmfs) => scnmfs_fit(
            &NonNegMatrix::new(d.features().clone())?,
            &d.label_matrix(),
            args.k,
            &hyper,
            args.seed,
        )?,
    };
    let config = json!({
        "command": "factorize",
        "method": method.name(),
        "k": args.k,
        "hyper": hyper,
        "seed": args.seed,
        "input": input.display().to_string(),
        "output": output.display().to_string(),
    });
    io::save_model(output, &model, Some(&config))?;
    println!(
        "{} model: {}x{} -> k={}, final objective {:.6e}",
        method.name(),
        model.u.rows(),
        model.v.rows(),
        model.k,
        model.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_project(
    model_path: &Path,
    input: &Path,
    output: &Path,
    iters: usize,
    tol: f64,
    seed: u64,
) -> Result<(), Error> {
    let model: FactorModel<f64> = io::load_model(model_path)?;
    let x = match read_fit_input(input)? {
        FitInput::Matrix(x) => x,
        FitInput::Features(d) => d.features().clone(),
    };
    let opts = ProjectOptions { iters, tol, seed };
    let v = project_test(&x, &model, &opts)?;
    let config = json!({
        "command": "project",
        "model": model_path.display().to_string(),
        "input": input.display().to_string(),
        "iters": iters,
        "tol": tol,
        "seed": seed,
    });
    io::write_matrix_csv(output, &v, Some(&format!("config={config}")))?;
    println!("projected {} samples into k={}", v.rows(), v.cols());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    args: &HyperArgs,
    method: Method,
    train_path: &Path,
    test_path: &Path,
    knn_k: usize,
    repeats: usize,
    metric: Metric,
    standardize: bool,
    protocol: &str,
    shots: Option<usize>,
    query_per_class: Option<usize>,
    output: &Path,
    format: FormatArg,
) -> Result<(), Error> {
    args.validate()?;
    if knn_k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    let train: FeatureDataset<f64> = io::load_features(train_path)?;
    let test: FeatureDataset<f64> = io::load_features(test_path)?;
    let mut opts = EvalOptions::new(method, args.k);
    opts.hyper = args.hyper();
    opts.knn_k = knn_k;
    opts.metric = metric;
    opts.standardize = standardize;
    opts.repeats = repeats;
    opts.seed = args.seed;

    let report: EvalReport<f64> = match protocol {
        "resample" => evaluate(&train, &test, &opts)?,
        "episode" => {
            let shots = shots.ok_or_else(|| {
                Error::Config("episode protocol requires --shots".into())
            })?;
            let query = query_per_class.ok_or_else(|| {
                Error::Config("episode protocol requires --query-per-class".into())
            })?;
            // Pool both files and let the episode sampler draw from it.
            let pooled = pool_for_episodes(&train, &test)?;
            let episode = EpisodeSpec {
                ways: pooled.num_classes(),
                shots,
                query_per_class: query,
                repeats,
                seed: args.seed,
            };
            evaluate_episodes(&pooled, &episode, &opts)?
        }
        other => {
            return Err(Error::Config(format!(
                "protocol must be 'resample' or 'episode', got '{other}'"
            )));
        }
    };

    let tsv = tsv_row(train_path, &report);
    match format {
        FormatArg::Json => {
            std::fs::write(output, serde_json::to_string_pretty(&report)?)?;
        }
        FormatArg::Tsv => {
            std::fs::write(output, format!("{tsv}\n"))?;
        }
    }
    println!("{tsv}");
    Ok(())
}

fn pool_for_episodes(
    train: &FeatureDataset<f64>,
    test: &FeatureDataset<f64>,
) -> Result<FeatureDataset<f64>, Error> {
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::Dimension(format!(
            "feature dimensions differ: {} vs {}",
            train.feature_dim(),
            test.feature_dim()
        )));
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

/// One-line TSV row for table assembly:
/// dataset, protocol, method, k, K, repeats, seed, mean, std.
fn tsv_row(train_path: &Path, report: &EvalReport<f64>) -> String {
    let c = &report.config_echo;
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}",
        train_path.display(),
        c.protocol,
        c.method.name(),
        c.k,
        c.knn_k,
        c.repeats,
        c.seed,
        report.mean,
        report.std
    )
}

fn cmd_compare(
    matrix_a: &Path,
    matrix_b: &Path,
    ridge: Option<f64>,
    tag: &str,
    transpose: bool,
    output: &Path,
) -> Result<(), Error> {
    let tag = match tag {
        "u" => MatrixTag::UTrain,
        "v" => MatrixTag::VTrain,
        other => {
            return Err(Error::Config(format!("tag must be 'u' or 'v', got '{other}'")));
        }
    };
    let mut a: Mat<f64> = io::read_matrix_csv(matrix_a)?;
    let mut b: Mat<f64> = io::read_matrix_csv(matrix_b)?;
    if transpose {
        a = a.transpose();
        b = b.transpose();
    }
    let (ridge_a, ridge_b) = match ridge {
        Some(r) => (r, r),
        None => (analysis::auto_ridge(&a), analysis::auto_ridge(&b)),
    };
    // A shared ridge keeps the analysis symmetric; use the larger default.
    let ridge_used = ridge_a.max(ridge_b);
    let cca = analysis::cca_similarity(&a, &b, ridge_used)?;
    let sparsity_a = analysis::sparsity_report(&a, tag)?;
    let sparsity_b = analysis::sparsity_report(&b, tag)?;
    let config = json!({
        "command": "compare",
        "matrix_a": matrix_a.display().to_string(),
        "matrix_b": matrix_b.display().to_string(),
        "ridge": ridge_used,
        "tag": tag,
        "transpose": transpose,
    });
    let doc = json!({
        "cca": cca,
        "sparsity_a": sparsity_a,
        "sparsity_b": sparsity_b,
        "config": config,
    });
    std::fs::write(output, serde_json::to_string_pretty(&doc)?)?;
    println!(
        "mean canonical correlation {:.6}; hoyer a={:.4} b={:.4}",
        cca.mean_correlation, sparsity_a.hoyer, sparsity_b.hoyer
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_cam(
    fmap_path: &Path,
    input: &Path,
    sample: usize,
    model_path: &Path,
    train_features: &Path,
    epochs: usize,
    lr: f64,
    head_seed: u64,
    iters: usize,
    tol: f64,
    seed: u64,
    out_h: usize,
    out_w: usize,
    output: &Path,
    sidecar: Option<&Path>,
    pgm: Option<&Path>,
) -> Result<(), Error> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Config("out-h and out-w must be >= 1".into()));
    }
    let fmap = io::read_feature_map::<f64>(fmap_path)?;
    let model: FactorModel<f64> = io::load_model(model_path)?;
    let train: FeatureDataset<f64> = io::load_features(train_features)?;
    if train.num_samples() != model.v.rows() {
        return Err(Error::LabelMismatch(format!(
            "model V holds {} samples but the training feature file has {}",
            model.v.rows(),
            train.num_samples()
        )));
    }
    let head = train_linear_head(&model.v, train.labels(), epochs, lr, head_seed)?;

    let image: FeatureDataset<f64> = io::load_features(input)?;
    if sample >= image.num_samples() {
        return Err(Error::Dimension(format!(
            "sample {sample} out of range for {} samples",
            image.num_samples()
        )));
    }
    let feature_vec = image.features().col_to_vec(sample);

    let proj = ProjectOptions { iters, tol, seed };
    let map = subfactor::cam::cam_generate(&fmap, &feature_vec, &model, &head, out_h, out_w, &proj)?;

    let config = json!({
        "command": "cam",
        "fmap": fmap_path.display().to_string(),
        "input": input.display().to_string(),
        "sample": sample,
        "model": model_path.display().to_string(),
        "train_features": train_features.display().to_string(),
        "epochs": epochs,
        "lr": lr,
        "head_seed": head_seed,
        "iters": iters,
        "tol": tol,
        "seed": seed,
        "out_h": out_h,
        "out_w": out_w,
    });
    io::write_matrix_csv(output, &map.values, Some(&format!("config={config}")))?;
    if let Some(path) = sidecar {
        let doc = json!({
            "predicted_class": map.predicted_class,
            "class_score": map.class_score,
            "constant_map": map.degenerate,
            "config": config,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    }
    if let Some(path) = pgm {
        io::write_pgm(path, &map.values)?;
    }
    println!(
        "predicted class {} (score {:.4}){}",
        map.predicted_class,
        map.class_score,
        if map.degenerate {
            "; constant map flagged"
        } else {
            ""
        }
    );
    Ok(())
}
