//! Frequency-masked sparse super-resolution.
//!
//! A high-frequency mask computed on the low-resolution input decides
//! where the body of an SR network runs. Convolutional bodies gather only
//! masked pixels into a 1x1 GEMM over unfolded columns; windowed attention
//! bodies drop whole windows whose mask density is below a threshold.

pub mod error;
pub mod flops;
pub mod freqmask;
pub mod model;
pub mod netpbm;
pub mod reference;
pub mod sparse_cnn;
pub mod sparse_transformer;
pub mod sweep;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use flops::{FlopsReport, WorkCounter};
pub use freqmask::{BitMask2D, HighFreqMap, MaskStrategy, WindowDecision};
pub use model::{bind, super_resolve, Model, ModelSpec, RunConfig, RunMode, SrOutput};
pub use tensor::Tensor;
pub use weights::WeightStore;
