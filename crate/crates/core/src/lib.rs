//! Desk-scale waste-image classification.
//!
//! Dense `f64` tensors with a define-by-run autodiff tape, the layer set of a
//! ResNet18-style network, transfer-learning freeze policies, Adam/NLL
//! training, data preprocessing and augmentation, confusion-matrix
//! evaluation, feature-map extraction, and a bin-routing controller.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod grad_check;
pub mod layers;
mod linalg;
pub mod model;
pub mod plot;
pub mod rng;
pub mod sort;
pub mod tensor;
pub mod textfmt;
pub mod train;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
