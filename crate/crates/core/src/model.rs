//! Head/body/tail model assembly and the end-to-end SR pipeline.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops::{self, BodyMask, FlopsReport, WorkCounter};
use crate::freqmask::{generate_mask, window_decision, BitMask2D, MaskArtifacts, MaskStrategy, WindowDecision};
use crate::sparse_cnn::{run_body_cnn_counted, run_body_cnn_dense, Activation, MaskedConvBlock, Mode};
use crate::sparse_transformer::{run_body_stl_counted, run_body_stl_dense, StlWeights};
use crate::tensor::{conv3x3, gemm1x1, pixel_shuffle, ConvWeights1x1, ConvWeights3x3, Tensor};
use crate::weights::WeightStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Prelu,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub activation: ActivationKind,
}

impl BlockSpec {
    /// Elementwise activation work over `q` pixels of `c` channels.
    pub fn activation_ops(&self, q: usize, c: usize) -> u64 {
        match self.activation {
            ActivationKind::None => 0,
            _ => (q * c) as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BodySpec {
    Cnn {
        blocks: Vec<BlockSpec>,
    },
    Stl {
        win: usize,
        heads: usize,
        hidden: usize,
        layers: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailSpec {
    /// 3 or 1.
    pub kernel: usize,
    /// Extra 3x3 conv (3 -> 3) after the pixel shuffle.
    #[serde(default)]
    pub final_conv: bool,
}

/// Architecture description; weights are bound separately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub scale: usize,
    pub channels: usize,
    pub body: BodySpec,
    pub tail: TailSpec,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::binding(format!("model spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.scale) {
            return Err(Error::binding(format!("scale {} not in {{2, 3, 4}}", self.scale)));
        }
        if self.channels == 0 {
            return Err(Error::binding("channels must be positive"));
        }
        if !matches!(self.tail.kernel, 1 | 3) {
            return Err(Error::binding(format!(
                "tail kernel {} must be 1 or 3",
                self.tail.kernel
            )));
        }
        if let BodySpec::Stl { win, heads, hidden, .. } = self.body {
            if win == 0 || heads == 0 || hidden == 0 {
                return Err(Error::binding("attention win, heads and hidden must be positive"));
            }
            if !self.channels.is_multiple_of(heads) {
                return Err(Error::binding(format!(
                    "channels {} not divisible by heads {heads}",
                    self.channels
                )));
            }
        }
        Ok(())
    }

    pub fn is_transformer(&self) -> bool {
        matches!(self.body, BodySpec::Stl { .. })
    }

    /// 5 for convolutional bodies, 11 for attention bodies.
    pub fn default_dilation(&self) -> usize {
        if self.is_transformer() {
            11
        } else {
            5
        }
    }

    /// Every tensor `bind` needs, with its canonical shape.
    pub fn required_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.channels;
        let mut out = vec![
            ("head.weight".to_string(), vec![c, 3, 3, 3]),
            ("head.bias".to_string(), vec![c]),
        ];
        match &self.body {
            BodySpec::Cnn { blocks } => {
                for (i, b) in blocks.iter().enumerate() {
                    out.push((format!("body.{i}.weight"), vec![c, c, 3, 3]));
                    out.push((format!("body.{i}.bias"), vec![c]));
                    if b.activation == ActivationKind::Prelu {
                        out.push((format!("body.{i}.prelu"), vec![c]));
                    }
                }
            }
            BodySpec::Stl { hidden, layers, .. } => {
                for i in 0..*layers {
                    let p = format!("body.{i}");
                    out.extend([
                        (format!("{p}.ln1.weight"), vec![c]),
                        (format!("{p}.ln1.bias"), vec![c]),
                        (format!("{p}.attn.qkv.weight"), vec![3 * c, c]),
                        (format!("{p}.attn.qkv.bias"), vec![3 * c]),
                        (format!("{p}.attn.proj.weight"), vec![c, c]),
                        (format!("{p}.attn.proj.bias"), vec![c]),
                        (format!("{p}.ln2.weight"), vec![c]),
                        (format!("{p}.ln2.bias"), vec![c]),
                        (format!("{p}.mlp.fc1.weight"), vec![*hidden, c]),
                        (format!("{p}.mlp.fc1.bias"), vec![*hidden]),
                        (format!("{p}.mlp.fc2.weight"), vec![c, *hidden]),
                        (format!("{p}.mlp.fc2.bias"), vec![c]),
                    ]);
                }
            }
        }
        let out_c = 3 * self.scale * self.scale;
        let k = self.tail.kernel;
        out.push(("tail.weight".into(), vec![out_c, c, k, k]));
        out.push(("tail.bias".into(), vec![out_c]));
        if self.tail.final_conv {
            out.push(("tail.final.weight".into(), vec![3, 3, 3, 3]));
            out.push(("tail.final.bias".into(), vec![3]));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum Body {
    Cnn(Vec<MaskedConvBlock>),
    Stl(Vec<StlWeights>),
}

#[derive(Debug, Clone)]
enum TailConv {
    K3(ConvWeights3x3),
    K1(ConvWeights1x1),
}

/// A spec with every tensor resolved.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    head: ConvWeights3x3,
    body: Body,
    tail: TailConv,
    final_conv: Option<ConvWeights3x3>,
}

struct Resolver<'a> {
    ws: &'a WeightStore,
    used: std::collections::HashSet<String>,
}

impl Resolver<'_> {
    fn take(&mut self, name: &str, shapes: &[&[usize]]) -> Result<Vec<f32>> {
        let (shape, data) = self
            .ws
            .get(name)
            .ok_or_else(|| Error::binding(format!("missing tensor '{name}'")))?;
        if !shapes.contains(&shape) {
            return Err(Error::binding(format!(
                "tensor '{name}' has shape {shape:?}, expected {:?}",
                shapes[0]
            )));
        }
        self.used.insert(name.to_string());
        Ok(data.to_vec())
    }
}

/// Resolves every tensor `spec` declares. Returns the model plus one
/// warning per stored tensor the spec never asked for.
pub fn bind(spec: &ModelSpec, ws: &WeightStore) -> Result<(Model, Vec<String>)> {
    spec.validate()?;
    let c = spec.channels;
    let mut r = Resolver {
        ws,
        used: Default::default(),
    };
    let conv3 = |r: &mut Resolver, p: &str, o: usize, i: usize| -> Result<ConvWeights3x3> {
        let w = r.take(&format!("{p}.weight"), &[&[o, i, 3, 3]])?;
        let b = r.take(&format!("{p}.bias"), &[&[o]])?;
        ConvWeights3x3::new(o, i, w, b).map_err(|e| Error::binding(format!("{p}: {e}")))
    };

    let head = conv3(&mut r, "head", c, 3)?;
    let body = match &spec.body {
        BodySpec::Cnn { blocks } => {
            let mut out = Vec::with_capacity(blocks.len());
            for (i, b) in blocks.iter().enumerate() {
                let p = format!("body.{i}");
                // stored either as a 3x3 kernel or already reshaped to 1x1 over 9C inputs
                let w = r.take(&format!("{p}.weight"), &[&[c, c, 3, 3], &[c, 9 * c]])?;
                let bias = r.take(&format!("{p}.bias"), &[&[c]])?;
                let act = match b.activation {
                    ActivationKind::Relu => Activation::Relu,
                    ActivationKind::None => Activation::None,
                    ActivationKind::Prelu => Activation::Prelu(r.take(&format!("{p}.prelu"), &[&[c]])?),
                };
                let weights = ConvWeights1x1::new(c, 9 * c, w, bias)?;
                out.push(MaskedConvBlock::new(weights, act)?);
            }
            Body::Cnn(out)
        }
        BodySpec::Stl {
            win,
            heads,
            hidden,
            layers,
        } => {
            let mut out = Vec::with_capacity(*layers);
            for i in 0..*layers {
                let p = format!("body.{i}");
                let mut t = |s: &str, shape: &[usize]| r.take(&format!("{p}.{s}"), &[shape]);
                let w = StlWeights {
                    dim: c,
                    heads: *heads,
                    hidden: *hidden,
                    win: *win,
                    ln1_gamma: t("ln1.weight", &[c])?,
                    ln1_beta: t("ln1.bias", &[c])?,
                    qkv_weight: t("attn.qkv.weight", &[3 * c, c])?,
                    qkv_bias: t("attn.qkv.bias", &[3 * c])?,
                    proj_weight: t("attn.proj.weight", &[c, c])?,
                    proj_bias: t("attn.proj.bias", &[c])?,
                    ln2_gamma: t("ln2.weight", &[c])?,
                    ln2_beta: t("ln2.bias", &[c])?,
                    fc1_weight: t("mlp.fc1.weight", &[*hidden, c])?,
                    fc1_bias: t("mlp.fc1.bias", &[*hidden])?,
                    fc2_weight: t("mlp.fc2.weight", &[c, *hidden])?,
                    fc2_bias: t("mlp.fc2.bias", &[c])?,
                };
                w.validate()?;
                out.push(w);
            }
            Body::Stl(out)
        }
    };
    let out_c = 3 * spec.scale * spec.scale;
    let tail = if spec.tail.kernel == 3 {
        TailConv::K3(conv3(&mut r, "tail", out_c, c)?)
    } else {
        let w = r.take("tail.weight", &[&[out_c, c, 1, 1]])?;
        let b = r.take("tail.bias", &[&[out_c]])?;
        TailConv::K1(ConvWeights1x1::new(out_c, c, w, b)?)
    };
    let final_conv = if spec.tail.final_conv {
        Some(conv3(&mut r, "tail.final", 3, 3)?)
    } else {
        None
    };

    let warnings = ws
        .entries()
        .iter()
        .filter(|e| !r.used.contains(&e.name))
        .map(|e| format!("unused tensor '{}' {:?}", e.name, e.shape))
        .collect();
    Ok((
        Model {
            spec: spec.clone(),
            head,
            body,
            tail,
            final_conv,
        },
        warnings,
    ))
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    /// LR image to `C` feature channels.
    pub fn head_forward(&self, lr: &Tensor) -> Result<Tensor> {
        conv3x3(lr, &self.head)
    }

    /// Features at LR resolution to the final RGB image, unclamped.
    pub fn tail_forward(&self, features: &Tensor) -> Result<Tensor> {
        let up = match &self.tail {
            TailConv::K3(w) => conv3x3(features, w)?,
            TailConv::K1(w) => gemm1x1(features, w)?,
        };
        let hr = pixel_shuffle(&up, self.spec.scale)?;
        match &self.final_conv {
            Some(w) => conv3x3(&hr, w),
            None => Ok(hr),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RunMode {
    #[default]
    Accelerated,
    Dense,
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accelerated" => Ok(RunMode::Accelerated),
            "dense" => Ok(RunMode::Dense),
            _ => Err(Error::invalid(format!("unknown mode '{s}'"))),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Accelerated => "accelerated",
            RunMode::Dense => "dense",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub dilation_k: usize,
    pub sigma: f64,
    pub strategy: MaskStrategy,
    pub mode: RunMode,
}

impl RunConfig {
    pub fn for_model(spec: &ModelSpec) -> Self {
        Self {
            dilation_k: spec.default_dilation(),
            sigma: 0.5,
            strategy: MaskStrategy::default(),
            mode: RunMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilation_k.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "dilation kernel {} must be odd",
                self.dilation_k
            )));
        }
        if !(0.0..=1.5).contains(&self.sigma) {
            return Err(Error::invalid(format!("sigma {} outside [0, 1.5]", self.sigma)));
        }
        Ok(())
    }
}

/// Everything one SR run produces.
#[derive(Debug, Clone)]
pub struct SrOutput {
    pub sr: Tensor,
    pub report: FlopsReport,
    pub mask: MaskArtifacts,
    /// Window decision over the padded grid; attention bodies only.
    pub windows: Option<WindowDecision>,
    /// Body output at LR resolution, before the tail.
    pub features: Tensor,
    pub work: WorkCounter,
}

/// LR image in `[0, 1]` to an SR image in `[0, 1]`.
///
/// The mask is always computed so it can be reported; dense mode then
/// ignores it and runs the body on every position.
pub fn super_resolve(lr: &Tensor, model: &Model, cfg: &RunConfig) -> Result<SrOutput> {
    cfg.validate()?;
    if lr.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            got: lr.channels(),
        });
    }
    let (h, w) = (lr.height(), lr.width());
    let mask = generate_mask(lr, cfg.strategy, cfg.dilation_k)?;
    let head = model.head_forward(lr)?;
    let mut work = WorkCounter::default();
    let dense = cfg.mode == RunMode::Dense;

    let (features, report, windows) = match &model.body {
        Body::Cnn(blocks) => {
            let (features, used) = if dense {
                let f = run_body_cnn_dense(&head, blocks, &mut work)?;
                (f, BitMask2D::ones(h, w))
            } else {
                let f = run_body_cnn_counted(&head, blocks, &mask.mask, Mode::Infer, &mut work)?;
                (f, mask.mask.clone())
            };
            let report = flops::report(&model.spec, h, w, BodyMask::Pixels(&used))?;
            (features, report, None)
        }
        Body::Stl(layers) => {
            let BodySpec::Stl { win, .. } = model.spec.body else {
                unreachable!("bound attention body has an attention spec")
            };
            let (ph, pw) = (h.div_ceil(win) * win, w.div_ceil(win) * win);
            let padded = head.pad_to(ph, pw)?;
            let decision = if dense {
                WindowDecision::all(ph / win, pw / win, win, true)
            } else {
                window_decision(&mask.mask.pad_to(ph, pw)?, win, cfg.sigma)?
            };
            let out = if dense {
                run_body_stl_dense(&padded, layers, &mut work)?
            } else {
                run_body_stl_counted(&padded, layers, &decision, Mode::Infer, &mut work)?
            };
            let report = flops::report(&model.spec, h, w, BodyMask::Windows(&decision))?;
            (out.crop(h, w)?, report, Some(decision))
        }
    };

    let sr = model.tail_forward(&features)?.clamp(0.0, 1.0);
    Ok(SrOutput {
        sr,
        report,
        mask,
        windows,
        features,
        work,
    })
}
