//! Masked 3x3 body blocks expressed as unfold + 1x1 GEMM.
//!
//! The training-mode forward keeps every pixel in the graph and blends
//! with the mask; the inference-mode forward gathers only the masked
//! columns, runs the GEMM on those, and scatters the results back. Both
//! produce the same values:
//!
//! ```text
//! out = act(W . unfold(g)[col masked]) * m + g * (1 - m)
//! ```
//!
//! The output-side `* m` keeps the conv bias from leaking into pruned
//! positions, which is what the gather/scatter path does anyway.

use crate::error::{Error, Result};
use crate::flops::WorkCounter;
use crate::freqmask::BitMask2D;
use crate::tensor::{
    gemm1x1, matvec_bias, reshape3x3_to_1x1, unfold3x3, ConvWeights1x1, ConvWeights3x3, Tensor, UNFOLD_OFFSETS,
};

#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Relu,
    /// One negative slope per output channel.
    Prelu(Vec<f32>),
    None,
}

impl Activation {
    #[inline]
    fn apply(&self, channel: usize, v: f32) -> f32 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Prelu(slopes) => {
                if v >= 0.0 {
                    v
                } else {
                    slopes[channel] * v
                }
            }
            Activation::None => v,
        }
    }

    fn is_identity(&self) -> bool {
        matches!(self, Activation::None)
    }
}

/// What an unfolded column sees at neighbors whose mask bit is 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum NeighborPolicy {
    /// Pruned neighbors contribute zero, so a gathered column only ever
    /// reads masked pixels.
    #[default]
    ZeroPruned,
    /// Columns read the full input; only output positions are pruned.
    ReadAll,
}

/// One masked body layer: a `9 * C_in -> C_out` pointwise GEMM over
/// unfolded columns followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedConvBlock {
    weights: ConvWeights1x1,
    activation: Activation,
    policy: NeighborPolicy,
}

impl MaskedConvBlock {
    pub fn new(weights: ConvWeights1x1, activation: Activation) -> Result<Self> {
        if !weights.in_channels().is_multiple_of(9) {
            return Err(Error::Divisibility {
                what: "masked block input width",
                value: weights.in_channels(),
                by: 9,
            });
        }
        if let Activation::Prelu(slopes) = &activation {
            if slopes.len() != weights.out_channels() {
                return Err(Error::shape(format!(
                    "{} prelu slopes for {} channels",
                    slopes.len(),
                    weights.out_channels()
                )));
            }
        }
        Ok(Self {
            weights,
            activation,
            policy: NeighborPolicy::default(),
        })
    }

    pub fn from_conv3x3(weights: &ConvWeights3x3, activation: Activation) -> Result<Self> {
        Self::new(reshape3x3_to_1x1(weights), activation)
    }

    pub fn with_policy(mut self, policy: NeighborPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn weights(&self) -> &ConvWeights1x1 {
        &self.weights
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn policy(&self) -> NeighborPolicy {
        self.policy
    }

    pub fn in_channels(&self) -> usize {
        self.weights.in_channels() / 9
    }

    pub fn out_channels(&self) -> usize {
        self.weights.out_channels()
    }

    fn check_masked_input(&self, g: &Tensor, m: &BitMask2D) -> Result<()> {
        if g.channels() != self.in_channels() {
            return Err(Error::ChannelMismatch {
                expected: self.in_channels(),
                got: g.channels(),
            });
        }
        if self.in_channels() != self.out_channels() {
            return Err(Error::shape(format!(
                "masked passthrough needs C_in == C_out, block is {} -> {}",
                self.in_channels(),
                self.out_channels()
            )));
        }
        if (m.height(), m.width()) != (g.height(), g.width()) {
            return Err(Error::shape(format!(
                "mask {}x{} vs features {}x{}",
                m.height(),
                m.width(),
                g.height(),
                g.width()
            )));
        }
        Ok(())
    }
}

/// Row-major list of the positions a mask selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatherPlan {
    height: usize,
    width: usize,
    indices: Vec<(usize, usize)>,
}

impl GatherPlan {
    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    pub fn q(&self) -> usize {
        self.indices.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

pub fn build_gather_plan(m: &BitMask2D) -> GatherPlan {
    let mut indices = Vec::with_capacity(m.count_ones());
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(y, x) {
                indices.push((y, x));
            }
        }
    }
    GatherPlan {
        height: m.height(),
        width: m.width(),
        indices,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Masked forward over the whole map (the graph-preserving form).
pub fn block_forward_train(g: &Tensor, blk: &MaskedConvBlock, m: &BitMask2D) -> Result<Tensor> {
    blk.check_masked_input(g, m)?;
    let (c, h, w) = g.shape();
    let hw = h * w;

    let source = match blk.policy {
        NeighborPolicy::ZeroPruned => {
            let mut data = g.data().to_vec();
            for ch in 0..c {
                for (v, &keep) in data[ch * hw..(ch + 1) * hw].iter_mut().zip(m.bits()) {
                    *v *= keep as u8 as f32;
                }
            }
            Tensor::from_raw(c, h, w, data)
        }
        NeighborPolicy::ReadAll => g.clone(),
    };
    let mut columns = unfold3x3(&source).into_data();
    for plane in columns.chunks_mut(hw) {
        for (v, &keep) in plane.iter_mut().zip(m.bits()) {
            *v *= keep as u8 as f32;
        }
    }
    let columns = Tensor::from_raw(9 * c, h, w, columns);
    let conv = gemm1x1(&columns, &blk.weights)?;

    let mut out = conv.into_data();
    for o in 0..blk.out_channels() {
        let src = g.plane(o);
        let plane = &mut out[o * hw..(o + 1) * hw];
        for p in 0..hw {
            let keep = m.bits()[p] as u8 as f32;
            plane[p] = blk.activation.apply(o, plane[p]) * keep + src[p] * (1.0 - keep);
        }
    }
    Ok(Tensor::from_raw(c, h, w, out))
}

pub fn block_forward_infer(g: &Tensor, blk: &MaskedConvBlock, m: &BitMask2D) -> Result<Tensor> {
    let plan = build_gather_plan(m);
    block_forward_infer_with_plan(g, blk, m, &plan, &mut WorkCounter::default())
}

/// Gather / GEMM / scatter over the positions in `plan`. Every other
/// position is copied from `g` untouched.
pub fn block_forward_infer_with_plan(
    g: &Tensor,
    blk: &MaskedConvBlock,
    m: &BitMask2D,
    plan: &GatherPlan,
    work: &mut WorkCounter,
) -> Result<Tensor> {
    blk.check_masked_input(g, m)?;
    if plan.dims() != (m.height(), m.width()) {
        return Err(Error::shape("gather plan was built for a different mask"));
    }
    let (c, h, w) = g.shape();
    let k = 9 * c;
    let oc = blk.out_channels();
    let mut out = g.clone();
    let mut column = vec![0.0f32; k];
    let mut result = vec![0.0f32; oc];
    let zero_pruned = blk.policy == NeighborPolicy::ZeroPruned;

    for &(y, x) in plan.indices() {
        for ch in 0..c {
            let plane = g.plane(ch);
            for (slot, &(dy, dx)) in UNFOLD_OFFSETS.iter().enumerate() {
                let (sy, sx) = (y as isize + dy, x as isize + dx);
                let inside = sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w;
                column[ch * 9 + slot] = if inside && (!zero_pruned || m.get(sy as usize, sx as usize)) {
                    plane[sy as usize * w + sx as usize]
                } else {
                    0.0
                };
            }
        }
        matvec_bias(blk.weights.taps(), blk.weights.bias(), &column, &mut result);
        let dst = out.data_mut();
        for (o, &v) in result.iter().enumerate() {
            dst[(o * h + y) * w + x] = blk.activation.apply(o, v);
        }
    }

    let q = plan.q() as u64;
    work.conv_macs += q * k as u64 * oc as u64;
    work.overhead_ops += q * (k + oc) as u64;
    if !blk.activation.is_identity() {
        work.overhead_ops += q * oc as u64;
    }
    Ok(out)
}

/// Unmasked forward, `act(W . unfold(g))`, used as the dense oracle.
pub fn block_forward_dense(g: &Tensor, blk: &MaskedConvBlock, work: &mut WorkCounter) -> Result<Tensor> {
    if g.channels() != blk.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: blk.in_channels(),
            got: g.channels(),
        });
    }
    let conv = gemm1x1(&unfold3x3(g), &blk.weights)?;
    let (oc, h, w) = conv.shape();
    let hw = h * w;
    let mut data = conv.into_data();
    for (o, plane) in data.chunks_mut(hw).enumerate() {
        for v in plane {
            *v = blk.activation.apply(o, *v);
        }
    }
    work.conv_macs += hw as u64 * blk.weights.in_channels() as u64 * oc as u64;
    if !blk.activation.is_identity() {
        work.overhead_ops += (hw * oc) as u64;
    }
    Ok(Tensor::from_raw(oc, h, w, data))
}

fn check_chain(f: &Tensor, blocks: &[MaskedConvBlock]) -> Result<()> {
    let mut c = f.channels();
    for (i, b) in blocks.iter().enumerate() {
        if b.in_channels() != c {
            return Err(Error::shape(format!(
                "block {i} expects {} channels, previous layer yields {c}",
                b.in_channels()
            )));
        }
        c = b.out_channels();
    }
    Ok(())
}

pub fn run_body_cnn(f: &Tensor, blocks: &[MaskedConvBlock], m: &BitMask2D, mode: Mode) -> Result<Tensor> {
    run_body_cnn_counted(f, blocks, m, mode, &mut WorkCounter::default())
}

/// Applies `blocks` in sequence with one shared mask. In inference mode
/// the gather plan is built once and reused by every block.
pub fn run_body_cnn_counted(
    f: &Tensor,
    blocks: &[MaskedConvBlock],
    m: &BitMask2D,
    mode: Mode,
    work: &mut WorkCounter,
) -> Result<Tensor> {
    check_chain(f, blocks)?;
    let mut x = f.clone();
    match mode {
        Mode::Train => {
            for b in blocks {
                x = block_forward_train(&x, b, m)?;
            }
        }
        Mode::Infer => {
            let plan = build_gather_plan(m);
            for b in blocks {
                x = block_forward_infer_with_plan(&x, b, m, &plan, work)?;
            }
        }
    }
    Ok(x)
}

pub fn run_body_cnn_dense(f: &Tensor, blocks: &[MaskedConvBlock], work: &mut WorkCounter) -> Result<Tensor> {
    check_chain(f, blocks)?;
    let mut x = f.clone();
    for b in blocks {
        x = block_forward_dense(&x, b, work)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::conv3x3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn rand_block(rng: &mut ChaCha8Rng, c: usize, act: usize) -> MaskedConvBlock {
        let taps = (0..c * c * 9).map(|_| rng.random_range(-0.3..0.3)).collect();
        let bias = (0..c).map(|_| rng.random_range(-0.2..0.2)).collect();
        let w = ConvWeights3x3::new(c, c, taps, bias).unwrap();
        let act = match act % 3 {
            0 => Activation::Relu,
            1 => Activation::Prelu((0..c).map(|_| rng.random_range(0.0..0.5)).collect()),
            _ => Activation::None,
        };
        MaskedConvBlock::from_conv3x3(&w, act).unwrap()
    }

    fn rand_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> BitMask2D {
        BitMask2D::from_fn(h, w, |_, _| rng.random_bool(p))
    }

    #[test]
    fn gather_plan_cases() {
        let p = build_gather_plan(&BitMask2D::zeros(3, 3));
        assert_eq!(p.q(), 0);
        let p = build_gather_plan(&BitMask2D::ones(2, 2));
        assert_eq!(p.indices(), &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let p = build_gather_plan(&BitMask2D::from_fn(2, 2, |y, x| y == x));
        assert_eq!(p.q(), 2);
        assert_eq!(p.indices(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn identity_block_all_ones_is_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = rand_tensor(&mut rng, 3, 6, 5);
        let blk = MaskedConvBlock::from_conv3x3(&ConvWeights3x3::identity(3), Activation::None).unwrap();
        let m = BitMask2D::ones(6, 5);
        assert_eq!(block_forward_train(&g, &blk, &m).unwrap(), g);
        assert_eq!(block_forward_infer(&g, &blk, &m).unwrap(), g);
    }

    #[test]
    fn empty_mask_is_passthrough_with_no_work() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = rand_tensor(&mut rng, 4, 7, 7);
        let blk = rand_block(&mut rng, 4, 0);
        let m = BitMask2D::zeros(7, 7);
        assert_eq!(block_forward_train(&g, &blk, &m).unwrap(), g);
        let mut work = WorkCounter::default();
        let out = block_forward_infer_with_plan(&g, &blk, &m, &build_gather_plan(&m), &mut work).unwrap();
        assert_eq!(out, g);
        assert_eq!(work.conv_macs, 0);
    }

    #[test]
    fn single_pixel_mask_touches_one_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = rand_tensor(&mut rng, 2, 5, 6);
        let blk = rand_block(&mut rng, 2, 2);
        let m = BitMask2D::from_fn(5, 6, |y, x| (y, x) == (2, 3));
        let mut work = WorkCounter::default();
        let out = block_forward_infer_with_plan(&g, &blk, &m, &build_gather_plan(&m), &mut work).unwrap();
        assert_eq!(work.conv_macs, 9 * 2 * 2);
        for c in 0..2 {
            for y in 0..5 {
                for x in 0..6 {
                    if (y, x) != (2, 3) {
                        assert_eq!(out.at(c, y, x).to_bits(), g.at(c, y, x).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn full_mask_matches_conv3x3_plus_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = rand_tensor(&mut rng, 3, 8, 9);
        let taps: Vec<f32> = (0..81).map(|_| rng.random_range(-0.5..0.5)).collect();
        let bias: Vec<f32> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
        let w3 = ConvWeights3x3::new(3, 3, taps, bias).unwrap();
        let blk = MaskedConvBlock::from_conv3x3(&w3, Activation::Relu).unwrap();
        let out = block_forward_infer(&g, &blk, &BitMask2D::ones(8, 9)).unwrap();
        let reference = conv3x3(&g, &w3).unwrap().map(|v| v.max(0.0)).unwrap();
        assert_eq!(out.max_abs_diff(&reference).unwrap(), 0.0);
    }

    #[test]
    fn train_equals_infer_both_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..60 {
            let c = rng.random_range(1..=6);
            let (h, w) = (rng.random_range(1..=14), rng.random_range(1..=14));
            let g = rand_tensor(&mut rng, c, h, w);
            let n = rng.random_range(0..=4);
            let policy = if case % 2 == 0 {
                NeighborPolicy::ZeroPruned
            } else {
                NeighborPolicy::ReadAll
            };
            let blocks: Vec<_> = (0..n)
                .map(|i| rand_block(&mut rng, c, case + i).with_policy(policy))
                .collect();
            let m = rand_mask(&mut rng, h, w, 0.4);
            let a = run_body_cnn(&g, &blocks, &m, Mode::Train).unwrap();
            let b = run_body_cnn(&g, &blocks, &m, Mode::Infer).unwrap();
            assert_eq!(a.max_abs_diff(&b).unwrap(), 0.0, "case {case}");
        }
    }

    #[test]
    fn monotone_refinement_agrees_where_both_pruned() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = rand_tensor(&mut rng, 3, 10, 10);
        let blocks: Vec<_> = (0..3).map(|i| rand_block(&mut rng, 3, i)).collect();
        let m1 = rand_mask(&mut rng, 10, 10, 0.2);
        let extra = rand_mask(&mut rng, 10, 10, 0.2);
        let m2 = BitMask2D::from_fn(10, 10, |y, x| m1.get(y, x) || extra.get(y, x));
        let a = run_body_cnn(&g, &blocks, &m1, Mode::Infer).unwrap();
        let b = run_body_cnn(&g, &blocks, &m2, Mode::Infer).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                if !m2.get(y, x) {
                    for c in 0..3 {
                        assert_eq!(a.at(c, y, x), b.at(c, y, x));
                    }
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let blk = MaskedConvBlock::from_conv3x3(&ConvWeights3x3::identity(2), Activation::None).unwrap();
        let g = Tensor::zeros(3, 4, 4);
        assert!(block_forward_infer(&g, &blk, &BitMask2D::ones(4, 4)).is_err());
        let g = Tensor::zeros(2, 4, 4);
        assert!(block_forward_train(&g, &blk, &BitMask2D::ones(4, 5)).is_err());
        let wide = ConvWeights1x1::new(3, 18, vec![0.0; 54], vec![0.0; 3]).unwrap();
        let wide = MaskedConvBlock::new(wide, Activation::None).unwrap();
        assert!(block_forward_infer(&g, &wide, &BitMask2D::ones(4, 4)).is_err());
        assert!(run_body_cnn(&g, &[blk, wide.clone(), wide], &BitMask2D::ones(4, 4), Mode::Infer).is_err());
        let bad = ConvWeights1x1::new(2, 10, vec![0.0; 20], vec![0.0; 2]).unwrap();
        assert!(MaskedConvBlock::new(bad, Activation::None).is_err());
    }
}
