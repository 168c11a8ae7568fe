//! Training-free mask generation.
//!
//! The high-frequency map is the magnitude of the residual between the
//! luma of the LR image and a 5x5, sigma=1 Gaussian blur of it, scaled so
//! its maximum is 1. A binarization strategy turns it into a pixel mask,
//! which is then dilated to trade compute for coverage. Transformer bodies
//! reduce the pixel mask further to one keep bit per attention window.

mod binarize;
mod blur;
mod morph;
mod window;

pub use binarize::{binarize_fixed, binarize_median, kmeans2_binarize, KmeansResult};
pub use blur::{gaussian_blur, gaussian_kernel, highfreq_map, to_luma};
pub use morph::dilate;
pub use window::{window_decision, WindowDecision};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Binary per-pixel map; `true` means the body processes that pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMask2D {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl fmt::Debug for BitMask2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMask2D {}x{}", self.height, self.width)?;
        for y in 0..self.height.min(32) {
            let row: String = (0..self.width.min(64))
                .map(|x| if self.get(y, x) { '#' } else { '.' })
                .collect();
            writeln!(f, "  {row}")?;
        }
        Ok(())
    }
}

impl BitMask2D {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("mask dimensions must be positive"));
        }
        if bits.len() != height * width {
            return Err(Error::shape(format!(
                "mask length {} != {}x{}",
                bits.len(),
                height,
                width
            )));
        }
        Ok(Self { height, width, bits })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![false; height * width]).expect("positive dimensions")
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![true; height * width]).expect("positive dimensions")
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self::new(height, width, bits).expect("positive dimensions")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count_ones() as f64 / self.bits.len() as f64
    }

    /// `self` is a subset of `other`.
    pub fn is_subset_of(&self, other: &BitMask2D) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Zero-extends on the bottom and right edges.
    pub fn pad_to(&self, height: usize, width: usize) -> Result<Self> {
        if height < self.height || width < self.width {
            return Err(Error::shape(format!(
                "cannot pad mask {}x{} to {}x{}",
                self.height, self.width, height, width
            )));
        }
        Ok(Self::from_fn(height, width, |y, x| {
            y < self.height && x < self.width && self.get(y, x)
        }))
    }
}

/// High-frequency magnitude map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighFreqMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl HighFreqMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::shape(format!(
                "map of {} values cannot be {}x{}",
                values.len(),
                height,
                width
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::invalid(format!(
                "high-frequency value {} at {} outside [0, 1]",
                values[i], i
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// How the high-frequency map is binarized.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MaskStrategy {
    /// Adaptive two-cluster Lloyd iteration.
    #[default]
    Kmeans,
    /// `value >= t`.
    Fixed(f32),
    /// `value > lower median`.
    Median,
}

impl FromStr for MaskStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(MaskStrategy::Kmeans),
            "median" => Ok(MaskStrategy::Median),
            _ => {
                let t = s
                    .strip_prefix("fixed:")
                    .ok_or_else(|| Error::invalid(format!("unknown mask strategy '{s}'")))?;
                let t: f32 = t
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad fixed threshold '{t}'")))?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::invalid(format!("fixed threshold {t} outside [0, 1]")));
                }
                Ok(MaskStrategy::Fixed(t))
            }
        }
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskStrategy::Kmeans => f.write_str("kmeans"),
            MaskStrategy::Fixed(t) => write!(f, "fixed:{t}"),
            MaskStrategy::Median => f.write_str("median"),
        }
    }
}

/// Everything produced on the way from an LR image to its dilated mask.
#[derive(Debug, Clone)]
pub struct MaskArtifacts {
    pub hf: HighFreqMap,
    pub kmeans: Option<KmeansResult>,
    /// Binarized map before dilation.
    pub raw: BitMask2D,
    pub mask: BitMask2D,
}

pub fn generate_mask(lr: &Tensor, strategy: MaskStrategy, dilation_k: usize) -> Result<MaskArtifacts> {
    let hf = highfreq_map(lr)?;
    let (raw, kmeans) = match strategy {
        MaskStrategy::Kmeans => {
            let km = kmeans2_binarize(&hf, binarize::DEFAULT_MAX_ITER);
            (km.mask.clone(), Some(km))
        }
        MaskStrategy::Fixed(t) => (binarize_fixed(&hf, t), None),
        MaskStrategy::Median => (binarize_median(&hf), None),
    };
    let mask = dilate(&raw, dilation_k)?;
    Ok(MaskArtifacts { hf, kmeans, raw, mask })
}
