//! Subspace factorization toolkit for few-shot classification on precomputed
//! feature vectors.
//!
//! The crate implements four ways of deriving a `k`-dimensional subspace from
//! a feature matrix `X` (one column per sample):
//!
//! * truncated SVD — `X = U Σ Pᵀ`, subspace representation `V = Xᵀ U`;
//! * NMF — `X ≈ U Vᵀ` with `U, V ≥ 0`, fitted by multiplicative updates;
//! * DNMF — NMF plus a label-regression penalty `α‖Q − A Vᵀ‖²`;
//! * SCNMFS — supervised NMF with `V = Qᵀ Z` (samples sharing a label share
//!   one subspace code) and a Frobenius penalty `β‖U‖²`.
//!
//! Around the factorizations sit the pieces of a complete pipeline: feature
//! file ingestion, episode sampling, frozen-`U` test projection, KNN
//! classification with repeated-run statistics ([`fewshot`]), subspace
//! diagnostics (CCA similarity, Hoyer sparsity, reconstruction error in
//! [`analysis`]) and class activation maps generated through the subspace
//! ([`cam`]).
//!
//! All numeric code is generic over the scalar type via [`Scalar`]; `f64` is
//! the default used by the CLI and the type aliases below. Every fit and
//! sampling routine is seeded and bitwise deterministic for a fixed scalar
//! type: identical inputs and seeds reproduce identical models.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign};

pub mod analysis;
pub mod cam;
pub mod error;
pub mod factorize;
pub mod fewshot;
pub mod io;
pub(crate) mod linalg;
pub mod matrix;
pub mod rng;

pub use error::{Error, Result};
pub use factorize::{FactorModel, Hyper, Method, ProjectOptions};
pub use matrix::{LabelMatrix, Mat, NonNegMatrix};

/// Scalar type the numeric core is generic over. Implemented for `f32` and
/// `f64`; anything satisfying the bounds works.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + Sum
    + FromStr
    + Display
    + Debug
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants and seeded uniform draws.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from(v).expect("finite f64 constant must convert")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense matrix over the default `f64` scalar.
pub type Mat64 = Mat<f64>;
/// Dense matrix over `f32`.
pub type Mat32 = Mat<f32>;
/// Fitted factorization over the default `f64` scalar.
pub type FactorModel64 = FactorModel<f64>;
/// Feature dataset over the default `f64` scalar.
pub type FeatureDataset64 = fewshot::FeatureDataset<f64>;
