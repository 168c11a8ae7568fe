use super::gemm::matvec_bias;
use super::Tensor;
use crate::error::{Error, Result};

/// Kernel offsets `(dy, dx)` in the order they appear inside each channel
/// group of an unfolded column.
pub const UNFOLD_OFFSETS: [(isize, isize); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Dense 3x3 kernel, taps laid out `[out, in, 3, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights3x3 {
    out_channels: usize,
    in_channels: usize,
    taps: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvWeights3x3 {
    pub fn new(out_channels: usize, in_channels: usize, taps: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::shape("conv channels must be positive"));
        }
        if taps.len() != out_channels * in_channels * 9 {
            return Err(Error::shape(format!(
                "3x3 taps length {} != {}*{}*9",
                taps.len(),
                out_channels,
                in_channels
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::shape(format!("bias length {} != {}", bias.len(), out_channels)));
        }
        Ok(Self {
            out_channels,
            in_channels,
            taps,
            bias,
        })
    }

    /// Center tap 1 on the diagonal, zero elsewhere.
    pub fn identity(channels: usize) -> Self {
        let mut taps = vec![0.0; channels * channels * 9];
        for c in 0..channels {
            taps[(c * channels + c) * 9 + 4] = 1.0;
        }
        Self::new(channels, channels, taps, vec![0.0; channels]).expect("valid identity")
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn taps(&self) -> &[f32] {
        &self.taps
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    #[inline]
    pub fn tap(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.taps[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }
}

/// Pointwise kernel, taps laid out `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights1x1 {
    out_channels: usize,
    in_channels: usize,
    taps: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvWeights1x1 {
    pub fn new(out_channels: usize, in_channels: usize, taps: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::shape("conv channels must be positive"));
        }
        if taps.len() != out_channels * in_channels {
            return Err(Error::shape(format!(
                "1x1 taps length {} != {}*{}",
                taps.len(),
                out_channels,
                in_channels
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::shape(format!("bias length {} != {}", bias.len(), out_channels)));
        }
        Ok(Self {
            out_channels,
            in_channels,
            taps,
            bias,
        })
    }

    pub fn identity(channels: usize) -> Self {
        let mut taps = vec![0.0; channels * channels];
        for c in 0..channels {
            taps[c * channels + c] = 1.0;
        }
        Self::new(channels, channels, taps, vec![0.0; channels]).expect("valid identity")
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn taps(&self) -> &[f32] {
        &self.taps
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }
}

pub fn pad_zero(t: &Tensor, p: usize) -> Tensor {
    if p == 0 {
        return t.clone();
    }
    let (c, h, w) = t.shape();
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut data = vec![0.0; c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            let src = t.index(ch, y, 0);
            let dst = (ch * ph + y + p) * pw + p;
            data[dst..dst + w].copy_from_slice(&t.data()[src..src + w]);
        }
    }
    Tensor::from_raw(c, ph, pw, data)
}

/// Expands every pixel into its zero-padded 3x3 neighborhood: output
/// channel `c * 9 + k` holds channel `c` shifted by `UNFOLD_OFFSETS[k]`.
pub fn unfold3x3(t: &Tensor) -> Tensor {
    let (c, h, w) = t.shape();
    let mut data = vec![0.0; 9 * c * h * w];
    for ch in 0..c {
        for (k, &(dy, dx)) in UNFOLD_OFFSETS.iter().enumerate() {
            let base = (ch * 9 + k) * h * w;
            for y in 0..h {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for x in 0..w {
                    let sx = x as isize + dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    data[base + y * w + x] = t.at(ch, sy as usize, sx as usize);
                }
            }
        }
    }
    Tensor::from_raw(9 * c, h, w, data)
}

/// Direct zero-padded, stride-1 3x3 cross-correlation.
///
/// This is written independently of [`unfold3x3`] so it can serve as the
/// oracle for the unfold + 1x1 route. Accumulation runs over input
/// channel, then kernel row, then kernel column, which is the same order
/// the unfolded layout produces.
pub fn conv3x3(t: &Tensor, w: &ConvWeights3x3) -> Result<Tensor> {
    let (c, h, wd) = t.shape();
    if c != w.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: w.in_channels(),
            got: c,
        });
    }
    let padded = pad_zero(t, 1);
    let pw = wd + 2;
    let pd = padded.data();
    let mut out = vec![0.0f32; w.out_channels() * h * wd];
    for o in 0..w.out_channels() {
        let bias = w.bias()[o] as f64;
        for y in 0..h {
            for x in 0..wd {
                let mut acc = 0.0f64;
                for i in 0..c {
                    for ky in 0..3 {
                        let row = (i * (h + 2) + y + ky) * pw + x;
                        for kx in 0..3 {
                            acc += pd[row + kx] as f64 * w.tap(o, i, ky, kx) as f64;
                        }
                    }
                }
                out[(o * h + y) * wd + x] = (acc + bias) as f32;
            }
        }
    }
    Ok(Tensor::from_raw(w.out_channels(), h, wd, out))
}

/// Per-pixel matrix-vector product plus bias.
pub fn gemm1x1(t: &Tensor, w: &ConvWeights1x1) -> Result<Tensor> {
    let (c, h, wd) = t.shape();
    if c != w.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: w.in_channels(),
            got: c,
        });
    }
    let hw = h * wd;
    let oc = w.out_channels();
    let mut out = vec![0.0f32; oc * hw];
    let mut column = vec![0.0f32; c];
    let mut result = vec![0.0f32; oc];
    for p in 0..hw {
        for (ch, v) in column.iter_mut().enumerate() {
            *v = t.data()[ch * hw + p];
        }
        matvec_bias(w.taps(), w.bias(), &column, &mut result);
        for (o, &v) in result.iter().enumerate() {
            out[o * hw + p] = v;
        }
    }
    Ok(Tensor::from_raw(oc, h, wd, out))
}

/// Rewrites a 3x3 kernel as the equivalent 1x1 kernel over
/// [`unfold3x3`] columns.
pub fn reshape3x3_to_1x1(w: &ConvWeights3x3) -> ConvWeights1x1 {
    let (oc, ic) = (w.out_channels(), w.in_channels());
    let k = ic * 9;
    let mut taps = vec![0.0; oc * k];
    for o in 0..oc {
        for i in 0..ic {
            for (slot, &(dy, dx)) in UNFOLD_OFFSETS.iter().enumerate() {
                let (ky, kx) = ((dy + 1) as usize, (dx + 1) as usize);
                taps[o * k + i * 9 + slot] = w.tap(o, i, ky, kx);
            }
        }
    }
    ConvWeights1x1::new(oc, k, taps, w.bias().to_vec()).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(c, h, w, |ch, y, x| (ch * h * w + y * w + x + 1) as f32).unwrap()
    }

    #[test]
    fn pad_zero_cases() {
        let t = Tensor::new(1, 1, 1, vec![5.0]).unwrap();
        let p = pad_zero(&t, 1);
        assert_eq!(p.shape(), (1, 3, 3));
        assert_eq!(p.data(), &[0., 0., 0., 0., 5., 0., 0., 0., 0.]);

        let t = Tensor::new(1, 2, 2, vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(pad_zero(&t, 0), t);
        let p = pad_zero(&t, 1);
        #[rustfmt::skip]
        let expected = [
            0., 0., 0., 0.,
            0., 1., 2., 0.,
            0., 3., 4., 0.,
            0., 0., 0., 0.,
        ];
        assert_eq!(p.data(), &expected);
    }

    #[test]
    fn unfold_single_pixel() {
        let t = Tensor::new(1, 1, 1, vec![7.0]).unwrap();
        let u = unfold3x3(&t);
        assert_eq!(u.shape(), (9, 1, 1));
        assert_eq!(u.data(), &[0., 0., 0., 0., 7., 0., 0., 0., 0.]);
    }

    #[test]
    fn unfold_center_column_enumerates_neighborhood() {
        let u = unfold3x3(&seq(1, 3, 3));
        let col: Vec<f32> = (0..9).map(|k| u.at(k, 1, 1)).collect();
        assert_eq!(col, (1..=9).map(|v| v as f32).collect::<Vec<_>>());
    }

    #[test]
    fn unfold_constant_border_counts() {
        let t = Tensor::filled(1, 4, 5, 2.5);
        let u = unfold3x3(&t);
        let interior: Vec<f32> = (0..9).map(|k| u.at(k, 2, 2)).collect();
        assert!(interior.iter().all(|&v| v == 2.5));
        let corner: Vec<f32> = (0..9).map(|k| u.at(k, 0, 0)).collect();
        assert_eq!(corner.iter().filter(|&&v| v == 2.5).count(), 4);
        assert_eq!(corner.iter().filter(|&&v| v == 0.0).count(), 5);
    }

    #[test]
    fn conv_identity_and_bias_only() {
        let t = seq(3, 4, 6);
        assert_eq!(conv3x3(&t, &ConvWeights3x3::identity(3)).unwrap(), t);

        let w = ConvWeights3x3::new(2, 3, vec![0.3; 54], vec![1.5, -2.0]).unwrap();
        let out = conv3x3(&Tensor::zeros(3, 4, 4), &w).unwrap();
        assert!(out.plane(0).iter().all(|&v| v == 1.5));
        assert!(out.plane(1).iter().all(|&v| v == -2.0));
    }

    #[test]
    fn conv_channel_mismatch() {
        let w = ConvWeights3x3::identity(2);
        assert!(matches!(
            conv3x3(&seq(3, 2, 2), &w),
            Err(Error::ChannelMismatch { expected: 2, got: 3 })
        ));
        let w1 = ConvWeights1x1::identity(2);
        assert!(gemm1x1(&seq(3, 2, 2), &w1).is_err());
    }

    #[test]
    fn gemm_cases() {
        let t = seq(4, 3, 2);
        assert_eq!(gemm1x1(&t, &ConvWeights1x1::identity(4)).unwrap(), t);

        let w = ConvWeights1x1::new(1, 4, vec![0.0; 4], vec![0.25]).unwrap();
        assert!(gemm1x1(&t, &w).unwrap().data().iter().all(|&v| v == 0.25));

        let px = Tensor::new(2, 1, 1, vec![1.0, 2.0]).unwrap();
        let w = ConvWeights1x1::new(1, 2, vec![3.0, 4.0], vec![0.5]).unwrap();
        assert_eq!(gemm1x1(&px, &w).unwrap().data(), &[11.5]);
    }

    #[test]
    fn reshape_layout() {
        let id = reshape3x3_to_1x1(&ConvWeights3x3::identity(1));
        assert_eq!(id.taps(), &[0., 0., 0., 0., 1., 0., 0., 0., 0.]);

        let taps: Vec<f32> = (1..=9).map(|v| v as f32).collect();
        let w = ConvWeights3x3::new(1, 1, taps.clone(), vec![0.0]).unwrap();
        let r = reshape3x3_to_1x1(&w);
        assert_eq!(r.in_channels(), 9);
        assert_eq!(r.taps(), taps.as_slice());
    }

    fn tensor_strategy() -> impl Strategy<Value = Tensor> {
        (1usize..=8, 4usize..=16, 4usize..=16).prop_flat_map(|(c, h, w)| {
            prop::collection::vec(-1.0f32..1.0, c * h * w).prop_map(move |d| Tensor::new(c, h, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn conv_equals_unfold_gemm(t in tensor_strategy(), oc in 1usize..=6, seed in any::<u64>()) {
            let ic = t.channels();
            let mut s = seed;
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
            };
            let taps = (0..oc * ic * 9).map(|_| next()).collect();
            let bias = (0..oc).map(|_| next()).collect();
            let w = ConvWeights3x3::new(oc, ic, taps, bias).unwrap();
            let a = conv3x3(&t, &w).unwrap();
            let b = gemm1x1(&unfold3x3(&t), &reshape3x3_to_1x1(&w)).unwrap();
            prop_assert_eq!(a.max_abs_diff(&b).unwrap(), 0.0);
        }

        #[test]
        fn unfold_center_recovers_input(t in tensor_strategy()) {
            let u = unfold3x3(&t);
            for c in 0..t.channels() {
                prop_assert_eq!(u.plane(c * 9 + 4), t.plane(c));
            }
        }
    }
}
