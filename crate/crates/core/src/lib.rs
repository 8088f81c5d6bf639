//! Dual-branch image classifier built from scratch: a frequency branch
//! (2D DCT, low-pass coefficient crop, cascaded group attention, inverse
//! transform) fused with a mobile-convolution branch, plus the reverse-mode
//! autodiff, AdamW training loop, dataset tooling, metrics, and exact
//! multiply-add cost accounting needed to train and audit it.

pub mod attention;
pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod frequency;
pub mod gradcheck;
pub mod metrics;
pub mod mobileconv;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::RngState;
pub use tensor::Tensor;
