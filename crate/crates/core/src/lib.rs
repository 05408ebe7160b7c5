//! Few-shot biometric verification with Gaussian embedding templates.
//!
//! Each identity is enrolled as a multivariate Gaussian `N(μ, Σ)` fitted to
//! the embeddings of a few shots and their augmentations. A probe embedding
//! is accepted when its Mahalanobis distance to the claimed identity's
//! distribution is at most a global threshold, which is calibrated at the
//! equal error rate of a FAR/FRR sweep.
//!
//! Pipeline pieces:
//!
//! - [`augment`]: seeded image transformations expanding M shots to M·N images
//! - [`detector`]: HTTP face-detector client and cropping
//! - [`ingest`]: FEDM1 embedding files, CSV embeddings and PNG images
//! - [`template`]: Gaussian fitting and Mahalanobis distances
//! - [`gallery`]: enrollment store, verify/identify, FTPL1 persistence
//! - [`eval`]: score matrices, FAR/FRR curves, EER and report export
//! - [`cli`]: the `facedim` command line

pub mod augment;
pub mod cli;
pub mod detector;
pub mod embedding;
pub mod error;
pub mod eval;
mod fsutil;
pub mod gallery;
pub mod ingest;
pub mod linalg;
pub mod template;

pub use augment::{AugmentConfig, AugmentationParams, ImageTensor};
pub use embedding::{Embedding, EmbeddingSet};
pub use error::{Error, Result};
pub use eval::{EvalReport, ScoreSet};
pub use gallery::{Gallery, VerificationResult};
pub use template::{fit_template, mahalanobis, GaussianTemplate, DEFAULT_EPSILON};
