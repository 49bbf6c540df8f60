//! DeepPCANet: convolutional networks whose widths, depth and initial kernels are
//! derived from the training data.
//!
//! The pipeline selects representative images per class ([`representatives`]), grows a
//! body block by block from principal components of activation patches
//! ([`pca_kernels`], [`netbuilder`]) until the between/within-class trace ratio drops,
//! then trains the network with a small hand-written engine ([`nn`]) and reports
//! metrics and Grad-CAM maps ([`evaluation`]).

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod hyperopt;
pub mod image;
pub mod netbuilder;
pub mod nn;
pub mod pca_kernels;
pub mod representatives;
pub mod rng;

pub use error::{Error, Result};
