//! Class activation maps computed through a fitted subspace.
//!
//! The test image's feature vector is projected into the subspace, the
//! linear head picks the class `i`, and the head's weight column is
//! back-projected to channel space as `x' = U w_i`. Weighting the flattened
//! feature-map stack by `x'` yields the raw map, which is resized with
//! align-corners bilinear interpolation and min–max normalized to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::{project_test, FactorModel, ProjectOptions};
use crate::fewshot::{argmax, softmax_row, LinearHead};
use crate::matrix::Mat;
use crate::Scalar;

/// Per-image activation tensor from a convolutional layer, `c` channels of
/// `h x w` maps stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapStack<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
    source_id: String,
}

impl<T: Scalar> FeatureMapStack<T> {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<T>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Dimension(
                "feature map dimensions must be >= 1".into(),
            ));
        }
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "feature map buffer length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature map contains NaN or Inf".into()));
        }
        Ok(FeatureMapStack {
            channels,
            height,
            width,
            data,
            source_id: source_id.into(),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Entry `(channel, row, col)`.
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Flatten to the `c x (h·w)` matrix form.
    pub fn flattened(&self) -> Mat<T> {
        Mat::from_vec(self.channels, self.height * self.width, self.data.clone())
            .expect("stack dimensions are validated")
    }
}

/// Final activation map plus the classification it explains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ActivationMap<T> {
    pub height: usize,
    pub width: usize,
    /// Resized map, min–max normalized to `[0, 1]` (all zeros when the raw
    /// map is constant).
    pub values: Mat<T>,
    /// Raw `h x w` map before resizing and normalization.
    pub raw: Mat<T>,
    pub predicted_class: usize,
    /// Softmax probability of the predicted class.
    pub class_score: T,
    /// Set when the raw map is constant, so normalization was undefined and
    /// `values` is all zeros.
    pub degenerate: bool,
}

/// Align-corners bilinear resize.
///
/// Output pixel `(r, c)` samples the source at
/// `(r·(h-1)/(out_h-1), c·(w-1)/(out_w-1))`; corners map to corners exactly
/// and a same-size resize is the identity.
pub fn bilinear_resize<T: Scalar>(src: &Mat<T>, out_h: usize, out_w: usize) -> Result<Mat<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Dimension("resize target must be >= 1x1".into()));
    }
    let (h, w) = (src.rows(), src.cols());
    let scale = |out_len: usize, in_len: usize| -> T {
        if out_len <= 1 {
            T::zero()
        } else {
            T::from_f64_lossy((in_len - 1) as f64) / T::from_f64_lossy((out_len - 1) as f64)
        }
    };
    let sy = scale(out_h, h);
    let sx = scale(out_w, w);
    let mut out = Mat::zeros(out_h, out_w);
    for r in 0..out_h {
        let y = T::from_f64_lossy(r as f64) * sy;
        let y0 = y.floor();
        let yi = num_traits::cast::<T, usize>(y0).unwrap_or(0).min(h - 1);
        let yi1 = (yi + 1).min(h - 1);
        let fy = y - y0;
        for c in 0..out_w {
            let x = T::from_f64_lossy(c as f64) * sx;
            let x0 = x.floor();
            let xi = num_traits::cast::<T, usize>(x0).unwrap_or(0).min(w - 1);
            let xi1 = (xi + 1).min(w - 1);
            let fx = x - x0;
            let top = src[(yi, xi)] * (T::one() - fx) + src[(yi, xi1)] * fx;
            let bottom = src[(yi1, xi)] * (T::one() - fx) + src[(yi1, xi1)] * fx;
            out[(r, c)] = top * (T::one() - fy) + bottom * fy;
        }
    }
    Ok(out)
}

/// Generate the class activation map for one image.
///
/// `feature_vec` is the image's pooled feature vector (length = channel
/// count), `model.u` must be `c x k`, and `head` supplies the `k x C`
/// weights whose bias stays out of the back-projection. `proj` seeds the
/// NMF-family subspace projection of the feature vector.
pub fn cam_generate<T: Scalar>(
    fmap: &FeatureMapStack<T>,
    feature_vec: &[T],
    model: &FactorModel<T>,
    head: &LinearHead<T>,
    out_h: usize,
    out_w: usize,
    proj: &ProjectOptions<T>,
) -> Result<ActivationMap<T>> {
    let c = fmap.channels();
    if model.u.rows() != c {
        return Err(Error::Dimension(format!(
            "model projects from {} channels but the feature map has {c}",
            model.u.rows()
        )));
    }
    if feature_vec.len() != c {
        return Err(Error::Dimension(format!(
            "feature vector length {} does not match {c} channels",
            feature_vec.len()
        )));
    }
    if head.w.rows() != model.k {
        return Err(Error::Dimension(format!(
            "head dimension {} does not match subspace dimension {}",
            head.w.rows(),
            model.k
        )));
    }

    // Subspace representation of the image, 1 x k.
    let x = Mat::from_vec(c, 1, feature_vec.to_vec())?;
    let v = project_test(&x, model, proj)?;

    let z = head.logits(&v)?;
    let predicted = argmax(z.row(0));
    let scores = softmax_row(z.row(0));
    let class_score = scores[predicted];

    // Back-project the winning weight column: x' = U w_i.
    let w_i = head.class_weight(predicted);
    let x_prime: Vec<T> = (0..c)
        .map(|row| {
            model.u.row(row)
                .iter()
                .zip(&w_i)
                .map(|(&u, &w)| u * w)
                .sum()
        })
        .collect();

    // Raw map: (x')ᵀ M̄ reshaped to h x w.
    let (h, w) = (fmap.height(), fmap.width());
    let mut raw = Mat::zeros(h, w);
    for (ch, &weight) in x_prime.iter().enumerate() {
        for y in 0..h {
            for xcol in 0..w {
                raw[(y, xcol)] += weight * fmap.at(ch, y, xcol);
            }
        }
    }

    let resized = bilinear_resize(&raw, out_h, out_w)?;
    if !resized.is_finite() {
        return Err(Error::Numeric("activation map is non-finite".into()));
    }
    let min = resized.min_entry();
    let max = resized.max_entry();
    let degenerate = max == min;
    let values = if degenerate {
        Mat::zeros(out_h, out_w)
    } else {
        let span = max - min;
        resized.map(|v| (v - min) / span)
    };

    Ok(ActivationMap {
        height: out_h,
        width: out_w,
        values,
        raw,
        predicted_class: predicted,
        class_score,
        degenerate,
    })
}
