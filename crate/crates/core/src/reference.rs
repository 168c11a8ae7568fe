//! Bundled reference models, seeded weights and the synthetic test corpus.
//!
//! Nothing here is trained. The weights are drawn from a fixed ChaCha
//! stream around a near-identity initialization so that SR output still
//! resembles the input, which keeps PSNR comparisons readable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{ActivationKind, BlockSpec, BodySpec, ModelSpec, TailSpec};
use crate::tensor::{bicubic_resize, Tensor};
use crate::weights::WeightStore;

pub const TINY_CNN_SEED: u64 = 0x5eed_c0de;
pub const TINY_STL_SEED: u64 = 0x5eed_a77e;
pub const CORPUS_SEED: u64 = 0xc0_4905;
pub const CORPUS_HR: usize = 256;
pub const CORPUS_SCALE: usize = 4;

/// C=16, four masked ReLU blocks, x4 with a 3x3 tail.
pub fn tiny_cnn() -> ModelSpec {
    ModelSpec {
        name: "tiny-cnn".into(),
        scale: 4,
        channels: 16,
        body: BodySpec::Cnn {
            blocks: vec![
                BlockSpec {
                    activation: ActivationKind::Relu
                };
                4
            ],
        },
        tail: TailSpec {
            kernel: 3,
            final_conv: false,
        },
    }
}

/// C=32, two attention layers of 4 heads on 8x8 windows, MLP width 256,
/// x4 with a 1x1 tail.
pub fn tiny_stl() -> ModelSpec {
    ModelSpec {
        name: "tiny-stl".into(),
        scale: 4,
        channels: 32,
        body: BodySpec::Stl {
            win: 8,
            heads: 4,
            hidden: 256,
            layers: 2,
        },
        tail: TailSpec {
            kernel: 1,
            final_conv: false,
        },
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, a: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-a..=a)).collect()
}

/// Conv taps `[out, in, k, k]` that copy input channel `src(o)` through
/// the center tap, plus uniform noise of amplitude `noise`.
fn near_identity_conv(
    rng: &mut ChaCha8Rng,
    out_c: usize,
    in_c: usize,
    k: usize,
    noise: f32,
    src: impl Fn(usize) -> Option<usize>,
) -> Vec<f32> {
    let mut w = uniform(rng, out_c * in_c * k * k, noise);
    let center = (k / 2) * k + k / 2;
    for o in 0..out_c {
        if let Some(i) = src(o) {
            w[(o * in_c + i) * k * k + center] += 1.0;
        }
    }
    w
}

/// Deterministic weights for `spec`, covering exactly its required tensors.
pub fn seeded_weights(spec: &ModelSpec, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = spec.channels;
    let mut ws = WeightStore::new();
    for (name, shape) in spec.required_tensors() {
        let n: usize = shape.iter().product();
        let data = if name == "head.weight" {
            near_identity_conv(&mut rng, c, 3, 3, 0.05, |o| (o < 3).then_some(o))
        } else if name == "tail.weight" {
            let rr = spec.scale * spec.scale;
            near_identity_conv(&mut rng, 3 * rr, c, spec.tail.kernel, 0.02, |o| Some(o / rr))
        } else if name == "tail.final.weight" {
            near_identity_conv(&mut rng, 3, 3, 3, 0.02, Some)
        } else if name.ends_with(".prelu") {
            vec![0.25; n]
        } else if name.ends_with("ln1.weight") || name.ends_with("ln2.weight") {
            (0..n).map(|_| 1.0 + rng.random_range(-0.1..=0.1)).collect()
        } else if name.ends_with(".bias") {
            uniform(&mut rng, n, 0.01)
        } else if name.starts_with("body.") && shape.len() == 4 {
            // masked conv block
            near_identity_conv(&mut rng, c, c, 3, 0.03, Some)
        } else {
            // attention / MLP linears, `[out, in]`
            let fan_in = shape[1] as f32;
            uniform(&mut rng, n, 0.5 / fan_in.sqrt())
        };
        ws.insert(name, &shape, &data).expect("unique names, matching lengths");
    }
    ws
}

fn smoothstep(t: f32) -> f32 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[derive(Clone, Copy)]
enum Texture {
    Checker(usize),
    Stripes(usize),
    Noise(usize),
    Rings,
}

struct Patch {
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
    tex: Texture,
    amp: f32,
}

/// Values in `[0, 1]` at HR coordinates.
fn texture_value(tex: Texture, y: usize, x: usize, cells: &[f32], cell_cols: usize) -> f32 {
    match tex {
        Texture::Checker(s) => ((y / s + x / s) % 2) as f32,
        Texture::Stripes(s) => ((x + y / 2) / s % 2) as f32,
        Texture::Noise(s) => cells[(y / s) * cell_cols + x / s],
        Texture::Rings => {
            let (dy, dx) = (y as f32 - 128.0, x as f32 - 128.0);
            0.5 + 0.5 * ((dy * dy + dx * dx).sqrt() * 0.9).sin()
        }
    }
}

fn scene(rng: &mut ChaCha8Rng, patches: &[Patch]) -> Tensor {
    let n = CORPUS_HR;
    let base: [f32; 3] = [
        rng.random_range(0.3..0.6),
        rng.random_range(0.3..0.6),
        rng.random_range(0.3..0.6),
    ];
    let tint: [f32; 3] = [
        rng.random_range(0.6..1.0),
        rng.random_range(0.6..1.0),
        rng.random_range(0.6..1.0),
    ];
    let cell_cols = n;
    let cells: Vec<f32> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut lum = vec![0.0f32; n * n];
    for y in 0..n {
        for x in 0..n {
            // gentle diagonal shading keeps the background non-constant
            lum[y * n + x] = 0.1 * smoothstep((x + y) as f32 / (2 * n) as f32);
        }
    }
    for p in patches {
        for y in p.y0..(p.y0 + p.h).min(n) {
            for x in p.x0..(p.x0 + p.w).min(n) {
                let v = texture_value(p.tex, y, x, &cells, cell_cols);
                lum[y * n + x] += p.amp * (v - 0.5);
            }
        }
    }
    Tensor::from_fn(3, n, n, |c, y, x| (base[c] + tint[c] * lum[y * n + x]).clamp(0.0, 1.0)).expect("finite scene")
}

fn patch(y0: usize, x0: usize, h: usize, w: usize, tex: Texture, amp: f32) -> Patch {
    Patch { y0, x0, h, w, tex, amp }
}

/// Five HR scenes mixing flat shading with textured patches of assorted
/// sizes, in HR pixels.
pub fn corpus_hr() -> Vec<(String, Tensor)> {
    use Texture::*;
    let layouts: [(&str, Vec<Patch>); 5] = [
        (
            "blocks",
            vec![
                patch(0, 0, 96, 96, Checker(8), 0.8),
                patch(136, 24, 56, 72, Noise(4), 0.9),
                patch(40, 150, 44, 90, Stripes(6), 0.8),
                patch(180, 170, 30, 26, Checker(6), 0.8),
            ],
        ),
        (
            "stripes",
            vec![
                patch(8, 8, 120, 100, Stripes(5), 0.8),
                patch(160, 140, 90, 110, Stripes(8), 0.9),
                patch(150, 20, 40, 50, Noise(3), 0.8),
                patch(30, 180, 22, 60, Checker(5), 0.7),
            ],
        ),
        (
            "noise",
            vec![
                patch(64, 64, 128, 128, Noise(4), 0.9),
                patch(10, 10, 34, 40, Noise(6), 0.8),
                patch(200, 196, 50, 54, Checker(7), 0.8),
                patch(14, 206, 40, 28, Stripes(6), 0.8),
            ],
        ),
        (
            "rings",
            vec![
                patch(84, 76, 100, 92, Rings, 0.9),
                patch(0, 0, 64, 180, Stripes(7), 0.7),
                patch(210, 10, 40, 76, Checker(6), 0.8),
                patch(210, 160, 40, 36, Noise(4), 0.9),
            ],
        ),
        (
            "mixed",
            vec![
                patch(20, 120, 100, 130, Checker(9), 0.8),
                patch(140, 10, 100, 90, Noise(5), 0.9),
                patch(160, 160, 44, 36, Stripes(5), 0.8),
                patch(90, 40, 28, 50, Checker(6), 0.8),
            ],
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    layouts
        .into_iter()
        .enumerate()
        .map(|(i, (name, patches))| (format!("{:02}_{name}", i + 1), scene(&mut rng, &patches)))
        .collect()
}

/// The LR corpus: each HR scene bicubic-downscaled by 4 to 64x64, then
/// quantized to 8 bits as it would be on disk.
pub fn corpus_lr() -> Result<Vec<(String, Tensor)>> {
    corpus_hr()
        .into_iter()
        .map(|(name, hr)| {
            let lr = bicubic_resize(&hr, 1.0 / CORPUS_SCALE as f64)?.clamp(0.0, 1.0);
            let q = lr.map(|v| (v * 255.0).round() / 255.0)?;
            Ok((format!("{name}.ppm"), q))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bind;

    #[test]
    fn seeded_weights_bind_cleanly() {
        for (spec, seed) in [(tiny_cnn(), TINY_CNN_SEED), (tiny_stl(), TINY_STL_SEED)] {
            let ws = seeded_weights(&spec, seed);
            let (_, warnings) = bind(&spec, &ws).unwrap();
            assert!(warnings.is_empty());
            assert_eq!(seeded_weights(&spec, seed), ws);
        }
    }

    #[test]
    fn corpus_shape() {
        let corpus = corpus_lr().unwrap();
        assert_eq!(corpus.len(), 5);
        for (_, t) in &corpus {
            assert_eq!(t.shape(), (3, 64, 64));
        }
    }
}
