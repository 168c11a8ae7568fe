//! Analytic multiply-accumulate accounting.
//!
//! MACs are the canonical unit; FLOPs are reported as `2 * MACs`. Layer
//! norms, softmax, activations and gather/scatter bookkeeping are tracked
//! as `overhead` and kept out of the headline fraction.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::freqmask::{BitMask2D, WindowDecision};
use crate::model::{BodySpec, ModelSpec};

/// Counts of work actually executed by a forward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkCounter {
    /// Convolution / 1x1 GEMM multiply-adds.
    pub conv_macs: u64,
    /// qkv, attention, projection and MLP multiply-adds.
    pub attn_macs: u64,
    /// Norms, softmax, activations, gather/scatter element touches.
    pub overhead_ops: u64,
}

impl WorkCounter {
    pub fn total_macs(&self) -> u64 {
        self.conv_macs + self.attn_macs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    K3x3,
    K1x1,
}

impl ConvKind {
    pub fn taps(self) -> u64 {
        match self {
            ConvKind::K3x3 => 9,
            ConvKind::K1x1 => 1,
        }
    }
}

pub fn macs_conv(kind: ConvKind, c_in: usize, c_out: usize, h: usize, w: usize) -> u64 {
    (h * w) as u64 * c_in as u64 * c_out as u64 * kind.taps()
}

/// Work of a masked 3x3 layer that processes `q` gathered columns.
pub fn macs_masked_conv(c_in: usize, c_out: usize, q: usize) -> u64 {
    q as u64 * 9 * c_in as u64 * c_out as u64
}

/// Work of one windowed attention layer over `kept_windows` windows.
pub fn macs_stl(dim: usize, heads: usize, hidden: usize, win: usize, kept_windows: usize) -> u64 {
    let (c, n, heads, hidden) = (dim as u64, (win * win) as u64, heads as u64, hidden as u64);
    let head_dim = c / heads;
    let qkv = 3 * n * c * c;
    let attn = 2 * heads * n * n * head_dim;
    let proj = n * c * c;
    let mlp = 2 * n * c * hidden;
    kept_windows as u64 * (qkv + attn + proj + mlp)
}

/// Non-MAC work of one attention layer: two layer norms, softmax, GELU.
pub fn overhead_stl(dim: usize, heads: usize, hidden: usize, win: usize, kept_windows: usize) -> u64 {
    let (c, n, heads, hidden) = (dim as u64, (win * win) as u64, heads as u64, hidden as u64);
    kept_windows as u64 * (2 * n * c + heads * n * n + n * hidden)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerFlops {
    pub name: String,
    pub dense_macs: u64,
    pub sparse_macs: u64,
    pub overhead_ops: u64,
}

impl LayerFlops {
    pub fn fraction(&self) -> f64 {
        if self.dense_macs == 0 {
            1.0
        } else {
            self.sparse_macs as f64 / self.dense_macs as f64
        }
    }
}

/// Per-layer and aggregate dense/sparse MAC counts for one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    pub per_layer: Vec<LayerFlops>,
    pub head_macs: u64,
    pub body_dense_macs: u64,
    pub body_sparse_macs: u64,
    pub tail_macs: u64,
    /// Processed pixels for CNN bodies, or kept-window pixels for
    /// Transformer bodies.
    pub q: u64,
    pub hw: u64,
}

impl FlopsReport {
    pub fn total_dense(&self) -> u64 {
        self.head_macs + self.body_dense_macs + self.tail_macs
    }

    pub fn total_sparse(&self) -> u64 {
        self.head_macs + self.body_sparse_macs + self.tail_macs
    }

    pub fn fraction(&self) -> f64 {
        self.total_sparse() as f64 / self.total_dense() as f64
    }

    /// Share of dense work spent in the body.
    pub fn body_share(&self) -> f64 {
        self.body_dense_macs as f64 / self.total_dense() as f64
    }

    pub fn overhead_ops(&self) -> u64 {
        self.per_layer.iter().map(|l| l.overhead_ops).sum()
    }

    /// `layer,dense_macs,sparse_macs,fraction`, one row per layer and a
    /// final `total` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,dense_macs,sparse_macs,fraction\n");
        for l in &self.per_layer {
            let _ = writeln!(out, "{},{},{},{:.6}", l.name, l.dense_macs, l.sparse_macs, l.fraction());
        }
        let _ = writeln!(
            out,
            "total,{},{},{:.6}",
            self.total_dense(),
            self.total_sparse(),
            self.fraction()
        );
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>14} {:>14} {:>9} {:>12}",
            "layer", "dense MACs", "sparse MACs", "fraction", "overhead"
        );
        for l in &self.per_layer {
            let _ = writeln!(
                out,
                "{:<16} {:>14} {:>14} {:>8.2}% {:>12}",
                l.name,
                l.dense_macs,
                l.sparse_macs,
                100.0 * l.fraction(),
                l.overhead_ops
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>14} {:>14} {:>8.2}% {:>12}",
            "total",
            self.total_dense(),
            self.total_sparse(),
            100.0 * self.fraction(),
            self.overhead_ops()
        );
        let _ = writeln!(
            out,
            "FLOPs (2 x MACs): dense {} / sparse {}",
            2 * self.total_dense(),
            2 * self.total_sparse()
        );
        let _ = writeln!(
            out,
            "body share {:.2}%, processed {} of {} positions",
            100.0 * self.body_share(),
            self.q,
            self.hw
        );
        out
    }
}

/// Which mask drives the body.
#[derive(Debug, Clone, Copy)]
pub enum BodyMask<'a> {
    Pixels(&'a BitMask2D),
    Windows(&'a WindowDecision),
}

/// Analytic report for running `model` on an LR image of `lr_h x lr_w`.
///
/// CNN bodies take a pixel mask of the image size. Transformer bodies take
/// a window decision over the feature map padded to a multiple of the
/// window size.
pub fn report(model: &ModelSpec, lr_h: usize, lr_w: usize, mask: BodyMask<'_>) -> Result<FlopsReport> {
    let c = model.channels;
    let alpha = model.scale;
    let mut per_layer = Vec::new();

    let head_macs = macs_conv(ConvKind::K3x3, 3, c, lr_h, lr_w);
    per_layer.push(LayerFlops {
        name: "head".into(),
        dense_macs: head_macs,
        sparse_macs: head_macs,
        overhead_ops: 0,
    });

    let (mut body_dense, mut body_sparse) = (0u64, 0u64);
    let (q, hw);
    match (&model.body, mask) {
        (BodySpec::Cnn { blocks }, BodyMask::Pixels(m)) => {
            if (m.height(), m.width()) != (lr_h, lr_w) {
                return Err(Error::shape(format!(
                    "mask {}x{} does not match image {}x{}",
                    m.height(),
                    m.width(),
                    lr_h,
                    lr_w
                )));
            }
            q = m.count_ones();
            hw = lr_h * lr_w;
            for (i, blk) in blocks.iter().enumerate() {
                let dense = macs_conv(ConvKind::K3x3, c, c, lr_h, lr_w);
                let sparse = macs_masked_conv(c, c, q);
                // gathered column elements + scattered outputs + activation
                let overhead = q as u64 * (9 * c as u64 + c as u64) + blk.activation_ops(q, c);
                body_dense += dense;
                body_sparse += sparse;
                per_layer.push(LayerFlops {
                    name: format!("body.{i}"),
                    dense_macs: dense,
                    sparse_macs: sparse,
                    overhead_ops: overhead,
                });
            }
        }
        (
            BodySpec::Stl {
                win,
                heads,
                hidden,
                layers,
            },
            BodyMask::Windows(d),
        ) => {
            let (ph, pw) = (lr_h.div_ceil(*win), lr_w.div_ceil(*win));
            if (d.rows(), d.cols(), d.win()) != (ph, pw, *win) {
                return Err(Error::shape(format!(
                    "window grid {}x{} (win {}) does not match image {}x{} with win {}",
                    d.rows(),
                    d.cols(),
                    d.win(),
                    lr_h,
                    lr_w,
                    win
                )));
            }
            let total = d.len();
            let kept = d.kept();
            q = kept * win * win;
            hw = total * win * win;
            for i in 0..*layers {
                let dense = macs_stl(c, *heads, *hidden, *win, total);
                let sparse = macs_stl(c, *heads, *hidden, *win, kept);
                body_dense += dense;
                body_sparse += sparse;
                per_layer.push(LayerFlops {
                    name: format!("body.{i}"),
                    dense_macs: dense,
                    sparse_macs: sparse,
                    overhead_ops: overhead_stl(c, *heads, *hidden, *win, kept),
                });
            }
        }
        (BodySpec::Cnn { .. }, BodyMask::Windows(_)) => {
            return Err(Error::invalid("CNN body needs a pixel mask"));
        }
        (BodySpec::Stl { .. }, BodyMask::Pixels(_)) => {
            return Err(Error::invalid("Transformer body needs a window decision"));
        }
    }

    let tail_kind = if model.tail.kernel == 3 {
        ConvKind::K3x3
    } else {
        ConvKind::K1x1
    };
    let mut tail_macs = macs_conv(tail_kind, c, 3 * alpha * alpha, lr_h, lr_w);
    per_layer.push(LayerFlops {
        name: "tail".into(),
        dense_macs: tail_macs,
        sparse_macs: tail_macs,
        overhead_ops: 0,
    });
    if model.tail.final_conv {
        let f = macs_conv(ConvKind::K3x3, 3, 3, lr_h * alpha, lr_w * alpha);
        tail_macs += f;
        per_layer.push(LayerFlops {
            name: "tail.final".into(),
            dense_macs: f,
            sparse_macs: f,
            overhead_ops: 0,
        });
    }

    Ok(FlopsReport {
        per_layer,
        head_macs,
        body_dense_macs: body_dense,
        body_sparse_macs: body_sparse,
        tail_macs,
        q: q as u64,
        hw: hw as u64,
    })
}
