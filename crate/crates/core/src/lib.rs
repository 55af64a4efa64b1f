//! Clustering-enhanced text classification.
//!
//! The crate implements the full pipeline as a library:
//!
//! - [`corpus`]: tokenization, vocabulary, tf-idf features, pretrained
//!   embedding loading, and deterministic stratified splits;
//! - [`autodiff`]: a tape-based reverse-mode engine over dense f64 tensors,
//!   with a finite-difference gradient checker;
//! - [`clustering`]: K-means / GMM centroid initialization plus the
//!   Student's-t soft assignment, auxiliary target distribution, and
//!   clustering KL objective;
//! - [`latent`]: the autoencoder / variational branch over tf-idf features
//!   (reconstruction and prior-KL objectives);
//! - [`model`]: embedding + bi-LSTM encoder, stacked cluster-token
//!   interaction layers with Kronecker aggregation, pooling head, and the
//!   variant-gated joint loss;
//! - [`training`]: Adam with global-norm gradient clipping, early stopping
//!   on a holdout split, metrics, and checkpointing.

pub mod autodiff;
pub mod clustering;
pub mod corpus;
pub mod error;
pub mod latent;
pub mod model;
mod nn;
pub mod training;

pub use error::{Error, Result};
