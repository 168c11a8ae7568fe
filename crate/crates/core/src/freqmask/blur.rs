use super::HighFreqMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const BT601: [f32; 3] = [0.299, 0.587, 0.114];

pub fn to_luma(img: &Tensor) -> Result<Tensor> {
    if img.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            got: img.channels(),
        });
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = (0..img.plane_len())
        .map(|i| BT601[0] * r[i] + BT601[1] * g[i] + BT601[2] * b[i])
        .collect();
    Ok(Tensor::from_raw(1, img.height(), img.width(), data))
}

/// Normalized 1-D Gaussian taps for an odd `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size.is_multiple_of(2) {
        return Err(Error::invalid(format!("blur size must be odd, got {size}")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("blur sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / z).collect())
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable Gaussian blur with reflect padding, applied per channel.
pub fn gaussian_blur(t: &Tensor, size: usize, sigma: f64) -> Result<Tensor> {
    let kernel = gaussian_kernel(size, sigma)?;
    if size == 1 {
        return Ok(t.clone());
    }
    let r = (size / 2) as isize;
    let (c, h, w) = t.shape();
    let mut tmp = vec![0.0f64; h * w];
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let plane = t.plane(ch);
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &kw)| kw * plane[y * w + reflect(x as isize + k as isize - r, w)] as f64)
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &kw)| kw * tmp[reflect(y as isize + k as isize - r, h) * w + x])
                    .sum();
                out.push(v as f32);
            }
        }
    }
    Ok(Tensor::from_raw(c, h, w, out))
}

/// Blur residual magnitude of the luma channel, divided by its maximum.
///
/// Accepts RGB or single-channel input. A map whose maximum is below 1e-8
/// is returned as all zeros.
pub fn highfreq_map(lr: &Tensor) -> Result<HighFreqMap> {
    let luma = match lr.channels() {
        3 => to_luma(lr)?,
        1 => lr.clone(),
        got => return Err(Error::ChannelMismatch { expected: 3, got }),
    };
    let blurred = gaussian_blur(&luma, 5, 1.0)?;
    let mut values: Vec<f32> = luma
        .data()
        .iter()
        .zip(blurred.data())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let max = values.iter().copied().fold(0.0f32, f32::max);
    if max < 1e-8 {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v / max).min(1.0));
    }
    HighFreqMap::new(lr.height(), lr.width(), values)
}
