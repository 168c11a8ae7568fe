//! Dense rank-3 tensors and the reference kernels built on them.
//!
//! Layout is channel-major, then row, then column. Every kernel here is a
//! pure function; the sparse paths in [`crate::sparse_cnn`] and
//! [`crate::sparse_transformer`] are checked against these.

mod conv;
mod gemm;
mod metrics;
mod resample;

pub use conv::{
    conv3x3, gemm1x1, pad_zero, reshape3x3_to_1x1, unfold3x3, ConvWeights1x1, ConvWeights3x3, UNFOLD_OFFSETS,
};
pub use gemm::{dot_f64, matvec_bias};
pub use metrics::{mse, psnr};
pub use resample::{bicubic_axis_taps, bicubic_resize, pixel_shuffle, pixel_unshuffle, AxisTaps};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("channels", &self.channels)
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl Tensor {
    /// Builds a tensor, rejecting zero dimensions, a length mismatch and
    /// non-finite elements.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(channels, height, width)?;
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    /// # Panics
    /// On a zero dimension or a non-finite fill value.
    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        check_dims(channels, height, width).expect("positive dimensions");
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        check_dims(channels, height, width)?;
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    /// Crate-internal constructor for kernels whose outputs are finite by
    /// construction.
    pub(crate) fn from_raw(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            data,
        }
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

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, y, x)]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Elementwise map; the result is re-validated for finiteness.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Self {
        Self::from_raw(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
        )
    }

    /// Crops the top-left `height x width` region.
    pub fn crop(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || height > self.height || width > self.width {
            return Err(Error::shape(format!(
                "cannot crop {}x{} to {}x{}",
                self.height, self.width, height, width
            )));
        }
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for y in 0..height {
                let start = self.index(c, y, 0);
                data.extend_from_slice(&self.data[start..start + width]);
            }
        }
        Ok(Self::from_raw(self.channels, height, width, data))
    }

    /// Zero-pads on the bottom and right edges up to `height x width`.
    pub fn pad_to(&self, height: usize, width: usize) -> Result<Self> {
        if height < self.height || width < self.width {
            return Err(Error::shape(format!(
                "cannot pad {}x{} to {}x{}",
                self.height, self.width, height, width
            )));
        }
        let mut out = Self::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..self.height {
                let src = self.index(c, y, 0);
                let dst = out.index(c, y, 0);
                out.data[dst..dst + self.width].copy_from_slice(&self.data[src..src + self.width]);
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }
}

fn check_dims(channels: usize, height: usize, width: usize) -> Result<()> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::shape(format!(
            "dimensions must be positive, got {channels}x{height}x{width}"
        )));
    }
    Ok(())
}
