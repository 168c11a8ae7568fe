use super::Tensor;
use crate::error::{Error, Result};

/// Depth-to-space: channel `c * r^2 + dy * r + dx` lands at spatial offset
/// `(dy, dx)` of output channel `c`.
pub fn pixel_shuffle(t: &Tensor, r: usize) -> Result<Tensor> {
    let (c, h, w) = t.shape();
    if r == 0 {
        return Err(Error::invalid("shuffle factor must be positive"));
    }
    let rr = r * r;
    if c % rr != 0 {
        return Err(Error::Divisibility {
            what: "channel count",
            value: c,
            by: rr,
        });
    }
    let oc = c / rr;
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0; oc * oh * ow];
    for co in 0..oc {
        for dy in 0..r {
            for dx in 0..r {
                let src = t.plane(co * rr + dy * r + dx);
                for y in 0..h {
                    let dst_row = (co * oh + y * r + dy) * ow;
                    for x in 0..w {
                        out[dst_row + x * r + dx] = src[y * w + x];
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw(oc, oh, ow, out))
}

/// Space-to-depth, the inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(t: &Tensor, r: usize) -> Result<Tensor> {
    let (c, h, w) = t.shape();
    if r == 0 {
        return Err(Error::invalid("shuffle factor must be positive"));
    }
    for (what, value) in [("height", h), ("width", w)] {
        if value % r != 0 {
            return Err(Error::Divisibility { what, value, by: r });
        }
    }
    let (oh, ow) = (h / r, w / r);
    let rr = r * r;
    let mut out = vec![0.0; c * rr * oh * ow];
    for ci in 0..c {
        for dy in 0..r {
            for dx in 0..r {
                let dst = (ci * rr + dy * r + dx) * oh * ow;
                for y in 0..oh {
                    for x in 0..ow {
                        out[dst + y * ow + x] = t.at(ci, y * r + dy, x * r + dx);
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw(c * rr, oh, ow, out))
}

const CUBIC_A: f64 = -0.5;

fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((CUBIC_A * x - 5.0 * CUBIC_A) * x + 8.0 * CUBIC_A) * x - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Contributions of source samples to one output sample along one axis.
#[derive(Debug, Clone)]
pub struct AxisTaps {
    /// Edge-clamped source indices.
    pub indices: Vec<usize>,
    /// Normalized weights, one per index.
    pub weights: Vec<f64>,
}

/// Bicubic (a = -0.5) tap tables for resampling `in_len` samples to
/// `out_len`. Pixel centers are aligned; on downscale the kernel is widened
/// by `in_len / out_len` for anti-aliasing.
pub fn bicubic_axis_taps(in_len: usize, out_len: usize) -> Vec<AxisTaps> {
    let scale = out_len as f64 / in_len as f64;
    let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let support = 2.0 * stretch;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut indices = Vec::new();
            let mut weights = Vec::new();
            for j in lo..=hi {
                let wt = cubic((j as f64 - center) / stretch);
                if wt == 0.0 {
                    continue;
                }
                indices.push(j.clamp(0, in_len as isize - 1) as usize);
                weights.push(wt);
            }
            let sum: f64 = weights.iter().sum();
            for wt in &mut weights {
                *wt /= sum;
            }
            AxisTaps { indices, weights }
        })
        .collect()
}

/// Separable bicubic resize to `round(H * scale) x round(W * scale)`.
pub fn bicubic_resize(t: &Tensor, scale: f64) -> Result<Tensor> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let (c, h, w) = t.shape();
    let oh = ((h as f64 * scale).round() as usize).max(1);
    let ow = ((w as f64 * scale).round() as usize).max(1);
    if (oh, ow) == (h, w) {
        return Ok(t.clone());
    }
    let row_taps = bicubic_axis_taps(h, oh);
    let col_taps = bicubic_axis_taps(w, ow);

    // horizontal pass: (c, h, ow)
    let mut tmp = vec![0.0f64; c * h * ow];
    for ch in 0..c {
        let plane = t.plane(ch);
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (x, taps) in col_taps.iter().enumerate() {
                tmp[(ch * h + y) * ow + x] = taps
                    .indices
                    .iter()
                    .zip(&taps.weights)
                    .map(|(&j, &wt)| row[j] as f64 * wt)
                    .sum();
            }
        }
    }
    let mut out = vec![0.0f32; c * oh * ow];
    for ch in 0..c {
        for (y, taps) in row_taps.iter().enumerate() {
            for x in 0..ow {
                let v: f64 = taps
                    .indices
                    .iter()
                    .zip(&taps.weights)
                    .map(|(&j, &wt)| tmp[(ch * h + j) * ow + x] * wt)
                    .sum();
                out[(ch * oh + y) * ow + x] = v as f32;
            }
        }
    }
    Ok(Tensor::from_raw(c, oh, ow, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shuffle_cases() {
        let t = Tensor::new(4, 1, 1, vec![1., 2., 3., 4.]).unwrap();
        let s = pixel_shuffle(&t, 2).unwrap();
        assert_eq!(s.shape(), (1, 2, 2));
        assert_eq!(s.data(), &[1., 2., 3., 4.]);

        assert_eq!(pixel_shuffle(&t, 1).unwrap(), t);

        let big = Tensor::zeros(16, 5, 7);
        assert_eq!(pixel_shuffle(&big, 4).unwrap().shape(), (1, 20, 28));

        assert!(matches!(
            pixel_shuffle(&Tensor::zeros(3, 2, 2), 2),
            Err(Error::Divisibility { .. })
        ));
    }

    #[test]
    fn resize_identity_and_constant() {
        let t = Tensor::from_fn(2, 5, 6, |c, y, x| (c + y * x) as f32 * 0.1).unwrap();
        assert_eq!(bicubic_resize(&t, 1.0).unwrap(), t);

        let k = Tensor::filled(3, 9, 7, 0.37);
        for scale in [0.25, 0.5, 2.0, 3.0, 4.0, 1.5] {
            let r = bicubic_resize(&k, scale).unwrap();
            assert!(r.data().iter().all(|&v| (v - 0.37).abs() < 1e-6), "scale {scale}");
        }
    }

    #[test]
    fn resize_output_dims() {
        let t = Tensor::zeros(1, 10, 7);
        assert_eq!(bicubic_resize(&t, 0.5).unwrap().shape(), (1, 5, 4));
        assert_eq!(bicubic_resize(&t, 4.0).unwrap().shape(), (1, 40, 28));
        assert!(bicubic_resize(&t, 0.0).is_err());
    }

    #[test]
    fn aligned_samples_reproduce_source() {
        // x3: output i maps to source (i - 1) / 3, integral for i = 1, 4, 7, ...
        let ramp = Tensor::from_fn(1, 1, 12, |_, _, x| x as f32 * 0.5).unwrap();
        let up = bicubic_resize(&ramp, 3.0).unwrap();
        for src in 0..12 {
            assert!((up.at(0, 0, 3 * src + 1) - ramp.at(0, 0, src)).abs() < 1e-6);
        }
    }

    #[test]
    fn upscale_reproduces_linear_ramp_away_from_edges() {
        // Keys' a=-0.5 kernel reproduces polynomials up to degree 2.
        let ramp = Tensor::from_fn(1, 1, 16, |_, _, x| x as f32).unwrap();
        let up = bicubic_resize(&ramp, 2.0).unwrap();
        for i in 6..26 {
            let src = (i as f64 + 0.5) / 2.0 - 0.5;
            assert!((up.at(0, 0, i) as f64 - src).abs() < 1e-5, "i={i}");
        }
    }

    proptest! {
        #[test]
        fn shuffle_roundtrip(c in 1usize..4, r in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u32>()) {
            let t = Tensor::from_fn(c * r * r, h, w, |a, b, d| ((a * 31 + b * 7 + d) as u32 ^ seed) as f32).unwrap();
            let back = pixel_unshuffle(&pixel_shuffle(&t, r).unwrap(), r).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn taps_partition_unity(in_len in 1usize..64, out_len in 1usize..64) {
            for taps in bicubic_axis_taps(in_len, out_len) {
                let s: f64 = taps.weights.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-6);
                prop_assert!(taps.indices.iter().all(|&j| j < in_len));
            }
        }
    }
}
