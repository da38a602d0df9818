//! File formats: matrix CSV, labeled feature files, feature-map stacks,
//! model JSON, and a PGM renderer for activation maps.
//!
//! All text formats are UTF-8 with a single `# key=<v> ...` header line.
//! Floats are written in Rust's shortest round-trip form and parsed exactly,
//! so a write/read cycle is bit-preserving. Lines beginning with `#` after
//! the data block (e.g. an appended config echo) are ignored by the readers.

use std::fmt::Write as _;
use std::path::Path;

use crate::cam::FeatureMapStack;
use crate::error::{Error, Result};
use crate::factorize::FactorModel;
use crate::fewshot::FeatureDataset;
use crate::matrix::Mat;
use crate::Scalar;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parse a `# a=1 b=2` header line into the values of the expected keys.
fn parse_header(line: &str, keys: &[&str]) -> Result<Vec<usize>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "expected a '#' header line"))?;
    let mut values = Vec::with_capacity(keys.len());
    let fields: Vec<(&str, &str)> = body
        .split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .collect();
    for key in keys {
        let raw = fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| parse_err(1, format!("header is missing '{key}='")))?;
        let v: usize = raw
            .parse()
            .map_err(|_| parse_err(1, format!("invalid {key} value '{raw}'")))?;
        values.push(v);
    }
    Ok(values)
}

fn parse_float<T: Scalar>(tok: &str, line: usize) -> Result<T> {
    tok.trim()
        .parse::<T>()
        .map_err(|_| parse_err(line, format!("invalid float literal '{}'", tok.trim())))
}

/// Split a data line on commas, or on whitespace when no comma is present.
fn split_values(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Read the data lines following the header: exactly `expect` of them,
/// tolerating trailing `#` comment lines and blank lines at the end.
fn data_lines(text: &str, expect: usize) -> Result<Vec<(usize, &str)>> {
    let mut out = Vec::with_capacity(expect);
    for (idx, line) in text.lines().enumerate().skip(1) {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((idx + 1, trimmed));
    }
    if out.len() != expect {
        return Err(parse_err(
            out.get(expect).map_or(text.lines().count(), |(l, _)| *l),
            format!("expected {expect} data lines, found {}", out.len()),
        ));
    }
    Ok(out)
}

/// Render a matrix in the shared CSV format. `trailer` lines (e.g. a config
/// echo) are appended as `#`-prefixed comments.
pub fn matrix_to_csv<T: Scalar>(m: &Mat<T>, trailer: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# rows={} cols={}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let mut first = true;
        for v in m.row(i) {
            if !first {
                s.push(',');
            }
            let _ = write!(s, "{v}");
            first = false;
        }
        s.push('\n');
    }
    if let Some(t) = trailer {
        let _ = writeln!(s, "# {t}");
    }
    s
}

/// Parse the shared matrix CSV format.
pub fn matrix_from_csv<T: Scalar>(text: &str) -> Result<Mat<T>> {
    let header = text.lines().next().ok_or_else(|| parse_err(1, "empty file"))?;
    let dims = parse_header(header, &["rows", "cols"])?;
    let (rows, cols) = (dims[0], dims[1]);
    if rows == 0 || cols == 0 {
        return Err(parse_err(1, "matrix must be at least 1x1"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (line_no, line) in data_lines(text, rows)? {
        let toks = split_values(line);
        if toks.len() != cols {
            return Err(parse_err(
                line_no,
                format!("expected {cols} values, found {}", toks.len()),
            ));
        }
        for tok in toks {
            data.push(parse_float(tok, line_no)?);
        }
    }
    Mat::from_vec(rows, cols, data)
}

pub fn write_matrix_csv<T: Scalar>(
    path: impl AsRef<Path>,
    m: &Mat<T>,
    trailer: Option<&str>,
) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m, trailer))?;
    Ok(())
}

pub fn read_matrix_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Mat<T>> {
    matrix_from_csv(&std::fs::read_to_string(path)?)
}

/// Render a feature dataset: header, then one `<label>,<f1>,...,<fM>` line
/// per sample.
pub fn features_to_csv<T: Scalar>(d: &FeatureDataset<T>, trailer: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# features={} samples={} classes={}",
        d.feature_dim(),
        d.num_samples(),
        d.num_classes()
    );
    for j in 0..d.num_samples() {
        let _ = write!(s, "{}", d.labels()[j]);
        for i in 0..d.feature_dim() {
            let _ = write!(s, ",{}", d.features()[(i, j)]);
        }
        s.push('\n');
    }
    if let Some(t) = trailer {
        let _ = writeln!(s, "# {t}");
    }
    s
}

/// Parse a feature file. Class names are synthesized as `class_<i>`.
pub fn features_from_csv<T: Scalar>(text: &str) -> Result<FeatureDataset<T>> {
    let header = text.lines().next().ok_or_else(|| parse_err(1, "empty file"))?;
    let dims = parse_header(header, &["features", "samples", "classes"])?;
    let (m, n, classes) = (dims[0], dims[1], dims[2]);
    if m == 0 || n == 0 || classes == 0 {
        return Err(parse_err(1, "features, samples and classes must be >= 1"));
    }
    let mut features = Mat::zeros(m, n);
    let mut labels = Vec::with_capacity(n);
    for (j, (line_no, line)) in data_lines(text, n)?.into_iter().enumerate() {
        let toks = split_values(line);
        if toks.len() != m + 1 {
            return Err(parse_err(
                line_no,
                format!("expected a label plus {m} features, found {} values", toks.len()),
            ));
        }
        let label: usize = toks[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid label '{}'", toks[0].trim())))?;
        labels.push(label);
        for (i, tok) in toks[1..].iter().enumerate() {
            features[(i, j)] = parse_float(tok, line_no)?;
        }
    }
    let names = (0..classes).map(|c| format!("class_{c}")).collect();
    FeatureDataset::new(features, labels, names)
}

/// Load a feature dataset from disk (see the crate README for the format).
pub fn load_features<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureDataset<T>> {
    features_from_csv(&std::fs::read_to_string(path)?)
}

pub fn save_features<T: Scalar>(
    path: impl AsRef<Path>,
    d: &FeatureDataset<T>,
    trailer: Option<&str>,
) -> Result<()> {
    std::fs::write(path, features_to_csv(d, trailer))?;
    Ok(())
}

/// Render a feature-map stack: header, then `c·h` lines of `w` floats
/// (channel-major, one spatial row per line).
pub fn feature_map_to_text<T: Scalar>(f: &FeatureMapStack<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# channels={} height={} width={}",
        f.channels(),
        f.height(),
        f.width()
    );
    for c in 0..f.channels() {
        for y in 0..f.height() {
            let mut first = true;
            for x in 0..f.width() {
                if !first {
                    s.push(',');
                }
                let _ = write!(s, "{}", f.at(c, y, x));
                first = false;
            }
            s.push('\n');
        }
    }
    s
}

pub fn feature_map_from_text<T: Scalar>(text: &str) -> Result<FeatureMapStack<T>> {
    let header = text.lines().next().ok_or_else(|| parse_err(1, "empty file"))?;
    let dims = parse_header(header, &["channels", "height", "width"])?;
    let (c, h, w) = (dims[0], dims[1], dims[2]);
    if c == 0 || h == 0 || w == 0 {
        return Err(parse_err(1, "channels, height and width must be >= 1"));
    }
    let mut data = Vec::with_capacity(c * h * w);
    for (line_no, line) in data_lines(text, c * h)? {
        let toks = split_values(line);
        if toks.len() != w {
            return Err(parse_err(
                line_no,
                format!("expected {w} values, found {}", toks.len()),
            ));
        }
        for tok in toks {
            data.push(parse_float(tok, line_no)?);
        }
    }
    FeatureMapStack::new(c, h, w, data, "file")
}

pub fn read_feature_map<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMapStack<T>> {
    feature_map_from_text(&std::fs::read_to_string(path)?)
}

pub fn write_feature_map<T: Scalar>(
    path: impl AsRef<Path>,
    f: &FeatureMapStack<T>,
) -> Result<()> {
    std::fs::write(path, feature_map_to_text(f))?;
    Ok(())
}

/// Serialize a model to the JSON document
/// `{method, k, hyper, seed, U, V, A?, Z?, sigma?, objective_trace}`,
/// optionally embedding a `config` echo for provenance.
pub fn save_model<T: Scalar>(
    path: impl AsRef<Path>,
    model: &FactorModel<T>,
    config: Option<&serde_json::Value>,
) -> Result<()> {
    let mut doc = serde_json::to_value(model)?;
    if let (Some(cfg), Some(obj)) = (config, doc.as_object_mut()) {
        obj.insert("config".into(), cfg.clone());
    }
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

/// Load and structurally validate a model JSON document.
pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<FactorModel<T>> {
    let model: FactorModel<T> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    model.validate()?;
    Ok(model)
}

/// Write a `[0, 1]`-valued matrix as an ASCII (P2) PGM image.
pub fn write_pgm<T: Scalar>(path: impl AsRef<Path>, m: &Mat<T>) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "P2");
    let _ = writeln!(s, "{} {}", m.cols(), m.rows());
    let _ = writeln!(s, "255");
    for i in 0..m.rows() {
        let mut first = true;
        for v in m.row(i) {
            let level = (v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0) * 255.0).round() as u32;
            if !first {
                s.push(' ');
            }
            let _ = write!(s, "{level}");
            first = false;
        }
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn matrix_csv_round_trip_is_bit_exact() {
        let m = rng::uniform_matrix::<f64>(&mut rng::seeded(1, 0), 4, 3).map(|v| v * 1e-7);
        let text = matrix_to_csv(&m, Some("config={\"k\":2}"));
        let back: Mat<f64> = matrix_from_csv(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn matrix_csv_reports_line_numbers() {
        let text = "# rows=2 cols=2\n1.0,2.0\n1.0,oops\n";
        match matrix_from_csv::<f64>(text).unwrap_err() {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("oops"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn matrix_csv_rejects_wrong_line_count() {
        let text = "# rows=3 cols=1\n1.0\n2.0\n";
        assert_eq!(
            matrix_from_csv::<f64>(text).unwrap_err().code(),
            "ParseError"
        );
    }

    #[test]
    fn feature_file_round_trip() {
        let text = "# features=3 samples=2 classes=2\n0,1.5,2.5,3.5\n1,4.5,5.5,6.5\n";
        let d: FeatureDataset<f64> = features_from_csv(text).unwrap();
        assert_eq!(d.feature_dim(), 3);
        assert_eq!(d.num_samples(), 2);
        assert_eq!(d.labels(), &[0, 1]);
        assert_eq!(d.features()[(2, 1)], 6.5);
        let back: FeatureDataset<f64> = features_from_csv(&features_to_csv(&d, None)).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn feature_file_with_empty_class_is_a_label_error() {
        let text = "# features=2 samples=2 classes=3\n0,1.0,2.0\n1,3.0,4.0\n";
        assert_eq!(
            features_from_csv::<f64>(text).unwrap_err().code(),
            "LabelError"
        );
    }

    #[test]
    fn feature_file_accepts_negative_features() {
        // Negative features load fine; the NMF-family fits reject them later.
        let text = "# features=2 samples=2 classes=2\n0,-1.0,2.0\n1,3.0,4.0\n";
        let d: FeatureDataset<f64> = features_from_csv(text).unwrap();
        assert!(!d.nonneg());
    }

    #[test]
    fn feature_map_round_trip() {
        let mut r = rng::seeded(3, 0);
        let data: Vec<f64> = (0..2 * 3 * 4).map(|_| rng::uniform_open01(&mut r)).collect();
        let f = FeatureMapStack::new(2, 3, 4, data, "x").unwrap();
        let back: FeatureMapStack<f64> = feature_map_from_text(&feature_map_to_text(&f)).unwrap();
        assert_eq!(f.data(), back.data());
        assert_eq!(back.channels(), 2);
        assert_eq!(back.height(), 3);
        assert_eq!(back.width(), 4);
    }

    #[test]
    fn model_file_round_trip_with_config_echo() {
        let dir = std::env::temp_dir().join("subfactor_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        let x = rng::uniform_matrix::<f64>(&mut rng::seeded(5, 0), 4, 5);
        let model = crate::factorize::truncated_svd(&x, 2).unwrap();
        let cfg = serde_json::json!({"command": "factorize", "k": 2});
        save_model(&path, &model, Some(&cfg)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"config\""));
        let back: FactorModel<f64> = load_model(&path).unwrap();
        assert_eq!(model, back);
        std::fs::remove_dir_all(&dir).ok();
    }
}
