//! Seeded inputs shared by the kernel benchmarks.

pub use amsr_core;

use amsr_core::freqmask::BitMask2D;
use amsr_core::model::{bind, Model};
use amsr_core::reference::{seeded_weights, tiny_cnn, tiny_stl, TINY_CNN_SEED, TINY_STL_SEED};
use amsr_core::sparse_cnn::{Activation, MaskedConvBlock};
use amsr_core::tensor::ConvWeights3x3;
use amsr_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0)).expect("finite")
}

pub fn random_conv(rng: &mut ChaCha8Rng, out_c: usize, in_c: usize) -> ConvWeights3x3 {
    let a = 1.0 / ((9 * in_c) as f32).sqrt();
    let taps = (0..out_c * in_c * 9).map(|_| rng.random_range(-a..a)).collect();
    ConvWeights3x3::new(out_c, in_c, taps, vec![0.0; out_c]).expect("consistent shapes")
}

pub fn relu_blocks(rng: &mut ChaCha8Rng, c: usize, n: usize) -> Vec<MaskedConvBlock> {
    (0..n)
        .map(|_| MaskedConvBlock::from_conv3x3(&random_conv(rng, c, c), Activation::Relu).expect("square block"))
        .collect()
}

/// Each bit set independently with probability `coverage`.
pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, coverage: f64) -> BitMask2D {
    BitMask2D::from_fn(h, w, |_, _| rng.random_bool(coverage))
}

pub fn reference_models() -> (Model, Model) {
    let cnn = bind(&tiny_cnn(), &seeded_weights(&tiny_cnn(), TINY_CNN_SEED))
        .expect("tiny-cnn binds")
        .0;
    let stl = bind(&tiny_stl(), &seeded_weights(&tiny_stl(), TINY_STL_SEED))
        .expect("tiny-stl binds")
        .0;
    (cnn, stl)
}
