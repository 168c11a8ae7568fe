//! Non-shifted windowed attention layers with window-level token pruning.
//!
//! Each `win x win` window is one pruning unit. Attention never crosses
//! windows, so dropping a window from the batch cannot change any other
//! window's result; inference simply skips pruned windows and leaves their
//! features untouched.

use crate::error::{Error, Result};
use crate::flops::WorkCounter;
use crate::freqmask::WindowDecision;
use crate::sparse_cnn::Mode;
use crate::tensor::{matvec_bias, Tensor};

pub const LN_EPS: f64 = 1e-5;

/// Parameters of one pre-norm attention layer. Linear weights are
/// row-major `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StlWeights {
    pub dim: usize,
    pub heads: usize,
    pub hidden: usize,
    pub win: usize,
    pub qkv_weight: Vec<f32>,
    pub qkv_bias: Vec<f32>,
    pub proj_weight: Vec<f32>,
    pub proj_bias: Vec<f32>,
    pub ln1_gamma: Vec<f32>,
    pub ln1_beta: Vec<f32>,
    pub ln2_gamma: Vec<f32>,
    pub ln2_beta: Vec<f32>,
    pub fc1_weight: Vec<f32>,
    pub fc1_bias: Vec<f32>,
    pub fc2_weight: Vec<f32>,
    pub fc2_bias: Vec<f32>,
}

impl StlWeights {
    /// All linear weights and biases zero, LN scale 1 and shift 0.
    pub fn zeros(dim: usize, heads: usize, hidden: usize, win: usize) -> Self {
        Self {
            dim,
            heads,
            hidden,
            win,
            qkv_weight: vec![0.0; 3 * dim * dim],
            qkv_bias: vec![0.0; 3 * dim],
            proj_weight: vec![0.0; dim * dim],
            proj_bias: vec![0.0; dim],
            ln1_gamma: vec![1.0; dim],
            ln1_beta: vec![0.0; dim],
            ln2_gamma: vec![1.0; dim],
            ln2_beta: vec![0.0; dim],
            fc1_weight: vec![0.0; hidden * dim],
            fc1_bias: vec![0.0; hidden],
            fc2_weight: vec![0.0; dim * hidden],
            fc2_bias: vec![0.0; dim],
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let (c, hd) = (self.dim, self.hidden);
        if c == 0 || self.heads == 0 || hd == 0 || self.win == 0 {
            return Err(Error::shape("attention dimensions must be positive"));
        }
        if c % self.heads != 0 {
            return Err(Error::Divisibility {
                what: "embedding dim",
                value: c,
                by: self.heads,
            });
        }
        let checks: [(&str, usize, usize); 12] = [
            ("qkv.weight", self.qkv_weight.len(), 3 * c * c),
            ("qkv.bias", self.qkv_bias.len(), 3 * c),
            ("proj.weight", self.proj_weight.len(), c * c),
            ("proj.bias", self.proj_bias.len(), c),
            ("ln1.weight", self.ln1_gamma.len(), c),
            ("ln1.bias", self.ln1_beta.len(), c),
            ("ln2.weight", self.ln2_gamma.len(), c),
            ("ln2.bias", self.ln2_beta.len(), c),
            ("fc1.weight", self.fc1_weight.len(), hd * c),
            ("fc1.bias", self.fc1_bias.len(), hd),
            ("fc2.weight", self.fc2_weight.len(), c * hd),
            ("fc2.bias", self.fc2_bias.len(), c),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::shape(format!("{name}: {got} values, expected {want}")));
            }
        }
        Ok(())
    }
}

/// Features regrouped as `[window, token, channel]`, windows and tokens
/// both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    rows: usize,
    cols: usize,
    win: usize,
    channels: usize,
    tokens: Vec<f32>,
}

impl TokenBatch {
    pub fn n_windows(&self) -> usize {
        self.rows * self.cols
    }

    pub fn tokens_per_window(&self) -> usize {
        self.win * self.win
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn win(&self) -> usize {
        self.win
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Window-grid coordinates of window `i`.
    pub fn origin(&self, i: usize) -> (usize, usize) {
        (i / self.cols, i % self.cols)
    }

    pub fn tokens(&self) -> &[f32] {
        &self.tokens
    }

    pub fn window(&self, i: usize) -> &[f32] {
        let n = self.tokens_per_window() * self.channels;
        &self.tokens[i * n..(i + 1) * n]
    }

    fn window_mut(&mut self, i: usize) -> &mut [f32] {
        let n = self.tokens_per_window() * self.channels;
        &mut self.tokens[i * n..(i + 1) * n]
    }
}

pub fn window_partition(f: &Tensor, win: usize) -> Result<TokenBatch> {
    if win == 0 {
        return Err(Error::invalid("window size must be positive"));
    }
    let (c, h, w) = f.shape();
    for (what, value) in [("feature height", h), ("feature width", w)] {
        if value % win != 0 {
            return Err(Error::Divisibility { what, value, by: win });
        }
    }
    let (rows, cols) = (h / win, w / win);
    let mut tokens = Vec::with_capacity(c * h * w);
    for wy in 0..rows {
        for wx in 0..cols {
            for ty in 0..win {
                for tx in 0..win {
                    let (y, x) = (wy * win + ty, wx * win + tx);
                    for ch in 0..c {
                        tokens.push(f.at(ch, y, x));
                    }
                }
            }
        }
    }
    Ok(TokenBatch {
        rows,
        cols,
        win,
        channels: c,
        tokens,
    })
}

pub fn window_merge(tb: &TokenBatch, h: usize, w: usize) -> Result<Tensor> {
    if (h, w) != (tb.rows * tb.win, tb.cols * tb.win) {
        return Err(Error::shape(format!(
            "{}x{} windows of {} cannot merge into {}x{}",
            tb.rows, tb.cols, tb.win, h, w
        )));
    }
    let c = tb.channels;
    let mut data = vec![0.0f32; c * h * w];
    let mut i = 0;
    for wy in 0..tb.rows {
        for wx in 0..tb.cols {
            for ty in 0..tb.win {
                for tx in 0..tb.win {
                    let (y, x) = (wy * tb.win + ty, wx * tb.win + tx);
                    for ch in 0..c {
                        data[(ch * h + y) * w + x] = tb.tokens[i];
                        i += 1;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw(c, h, w, data))
}

/// Per-token normalization over the channel axis.
pub fn layer_norm(x: &[f32], gamma: &[f32], beta: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    layer_norm_into(x, gamma, beta, &mut out);
    out
}

fn layer_norm_into(x: &[f32], gamma: &[f32], beta: &[f32], out: &mut [f32]) {
    let c = gamma.len();
    for (token, dst) in x.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
        let mean = token.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
        let var = token
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / c as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for i in 0..c {
            dst[i] = ((token[i] as f64 - mean) * inv * gamma[i] as f64 + beta[i] as f64) as f32;
        }
    }
}

fn gelu(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))) as f32
}

/// Row-major `n x in` tokens through a `[out, in]` linear layer.
fn linear(x: &[f32], n: usize, weight: &[f32], bias: &[f32], out: &mut [f32], work: &mut WorkCounter) {
    let (k, o) = (x.len() / n, bias.len());
    for (row, dst) in x.chunks_exact(k).zip(out.chunks_exact_mut(o)) {
        matvec_bias(weight, bias, row, dst);
    }
    work.attn_macs += (n * k * o) as u64;
}

/// Softmax attention probabilities for one head, `n x n` row-major.
fn attention_probs(qkv: &[f32], n: usize, dim: usize, head: usize, head_dim: usize, out: &mut [f64]) {
    let scale = 1.0 / (head_dim as f64).sqrt();
    let stride = 3 * dim;
    for i in 0..n {
        let q = &qkv[i * stride + head * head_dim..][..head_dim];
        let row = &mut out[i * n..(i + 1) * n];
        let mut max = f64::NEG_INFINITY;
        for (j, s) in row.iter_mut().enumerate() {
            let k = &qkv[j * stride + dim + head * head_dim..][..head_dim];
            *s = crate::tensor::dot_f64(q, k) * scale;
            max = max.max(*s);
        }
        let mut z = 0.0;
        for s in row.iter_mut() {
            *s = (*s - max).exp();
            z += *s;
        }
        for s in row.iter_mut() {
            *s /= z;
        }
    }
}

/// Multi-head self-attention within one window of `n` tokens.
fn msa_window(x: &[f32], w: &StlWeights, out: &mut [f32], work: &mut WorkCounter) {
    let c = w.dim;
    let n = x.len() / c;
    let hd = w.head_dim();
    let mut qkv = vec![0.0f32; n * 3 * c];
    linear(x, n, &w.qkv_weight, &w.qkv_bias, &mut qkv, work);

    let mut probs = vec![0.0f64; n * n];
    let mut heads_out = vec![0.0f32; n * c];
    for h in 0..w.heads {
        attention_probs(&qkv, n, c, h, hd, &mut probs);
        for i in 0..n {
            for d in 0..hd {
                let mut acc = 0.0f64;
                for j in 0..n {
                    acc += probs[i * n + j] * qkv[j * 3 * c + 2 * c + h * hd + d] as f64;
                }
                heads_out[i * c + h * hd + d] = acc as f32;
            }
        }
    }
    work.attn_macs += (2 * w.heads * n * n * hd) as u64;
    work.overhead_ops += (w.heads * n * n) as u64;
    linear(&heads_out, n, &w.proj_weight, &w.proj_bias, out, work);
}

fn mlp_window(x: &[f32], w: &StlWeights, out: &mut [f32], work: &mut WorkCounter) {
    let n = x.len() / w.dim;
    let mut hidden = vec![0.0f32; n * w.hidden];
    linear(x, n, &w.fc1_weight, &w.fc1_bias, &mut hidden, work);
    hidden.iter_mut().for_each(|v| *v = gelu(*v));
    work.overhead_ops += (n * w.hidden) as u64;
    linear(&hidden, n, &w.fc2_weight, &w.fc2_bias, out, work);
}

/// Full pre-norm block on one window, in place:
/// `x += MSA(LN1(x)); x += MLP(LN2(x))`.
fn block_window(x: &mut [f32], w: &StlWeights, work: &mut WorkCounter) {
    let n = x.len() / w.dim;
    let mut normed = vec![0.0f32; x.len()];
    let mut delta = vec![0.0f32; x.len()];
    layer_norm_into(x, &w.ln1_gamma, &w.ln1_beta, &mut normed);
    msa_window(&normed, w, &mut delta, work);
    x.iter_mut().zip(&delta).for_each(|(a, b)| *a += b);
    layer_norm_into(x, &w.ln2_gamma, &w.ln2_beta, &mut normed);
    mlp_window(&normed, w, &mut delta, work);
    x.iter_mut().zip(&delta).for_each(|(a, b)| *a += b);
    work.overhead_ops += (2 * n * w.dim) as u64;
}

/// Graph-preserving masked block on one window:
/// `mid = MSA(LN1(x * keep)) + x; out = MLP(LN2(mid * keep)) + mid`.
fn block_window_masked(x: &mut [f32], keep: bool, w: &StlWeights, work: &mut WorkCounter) {
    let k = keep as u8 as f32;
    let n = x.len() / w.dim;
    let mut normed = vec![0.0f32; x.len()];
    let mut delta = vec![0.0f32; x.len()];
    let masked: Vec<f32> = x.iter().map(|&v| v * k).collect();
    layer_norm_into(&masked, &w.ln1_gamma, &w.ln1_beta, &mut normed);
    msa_window(&normed, w, &mut delta, work);
    x.iter_mut().zip(&delta).for_each(|(a, b)| *a += b);
    let masked: Vec<f32> = x.iter().map(|&v| v * k).collect();
    layer_norm_into(&masked, &w.ln2_gamma, &w.ln2_beta, &mut normed);
    mlp_window(&normed, w, &mut delta, work);
    x.iter_mut().zip(&delta).for_each(|(a, b)| *a += b);
    work.overhead_ops += (2 * n * w.dim) as u64;
}

/// Attention over every window of a batch (no pruning, no residual).
pub fn window_msa(tb: &TokenBatch, w: &StlWeights) -> Result<TokenBatch> {
    check_batch(tb, w)?;
    let mut out = tb.clone();
    let mut work = WorkCounter::default();
    for i in 0..tb.n_windows() {
        msa_window(tb.window(i), w, out.window_mut(i), &mut work);
    }
    Ok(out)
}

fn check_batch(tb: &TokenBatch, w: &StlWeights) -> Result<()> {
    w.validate()?;
    if tb.channels != w.dim {
        return Err(Error::ChannelMismatch {
            expected: w.dim,
            got: tb.channels,
        });
    }
    if tb.win != w.win {
        return Err(Error::shape(format!(
            "tokens partitioned with win {} but layer uses {}",
            tb.win, w.win
        )));
    }
    Ok(())
}

fn check_decision(tb: &TokenBatch, mw: &WindowDecision) -> Result<()> {
    if (mw.rows(), mw.cols(), mw.win()) != (tb.rows, tb.cols, tb.win) {
        return Err(Error::shape(format!(
            "window decision {}x{} (win {}) vs token grid {}x{} (win {})",
            mw.rows(),
            mw.cols(),
            mw.win(),
            tb.rows,
            tb.cols,
            tb.win
        )));
    }
    Ok(())
}

/// Runs one layer over a partitioned batch. `Infer` skips windows whose
/// decision bit is 0; `Train` feeds every window through the masked form.
pub fn stl_tokens(
    tb: &mut TokenBatch,
    w: &StlWeights,
    mw: &WindowDecision,
    mode: Mode,
    work: &mut WorkCounter,
) -> Result<()> {
    check_batch(tb, w)?;
    check_decision(tb, mw)?;
    for i in 0..tb.n_windows() {
        match mode {
            Mode::Infer => {
                if mw.keep(i) {
                    block_window(tb.window_mut(i), w, work);
                }
            }
            Mode::Train => block_window_masked(tb.window_mut(i), mw.keep(i), w, work),
        }
    }
    Ok(())
}

pub fn stl_forward_train(f: &Tensor, w: &StlWeights, mw: &WindowDecision) -> Result<Tensor> {
    run_body_stl(f, std::slice::from_ref(w), mw, Mode::Train)
}

pub fn stl_forward_infer(f: &Tensor, w: &StlWeights, mw: &WindowDecision) -> Result<Tensor> {
    run_body_stl(f, std::slice::from_ref(w), mw, Mode::Infer)
}

pub fn run_body_stl(f: &Tensor, layers: &[StlWeights], mw: &WindowDecision, mode: Mode) -> Result<Tensor> {
    run_body_stl_counted(f, layers, mw, mode, &mut WorkCounter::default())
}

/// Sequential layers sharing one window decision. Features must already be
/// a multiple of the window size.
pub fn run_body_stl_counted(
    f: &Tensor,
    layers: &[StlWeights],
    mw: &WindowDecision,
    mode: Mode,
    work: &mut WorkCounter,
) -> Result<Tensor> {
    let Some(first) = layers.first() else {
        return Ok(f.clone());
    };
    if let Some(bad) = layers.iter().find(|l| l.win != first.win) {
        return Err(Error::shape(format!(
            "mixed window sizes {} and {} in one body",
            first.win, bad.win
        )));
    }
    let mut tb = window_partition(f, first.win)?;
    for layer in layers {
        stl_tokens(&mut tb, layer, mw, mode, work)?;
    }
    window_merge(&tb, f.height(), f.width())
}

/// Every window processed; the dense oracle.
pub fn run_body_stl_dense(f: &Tensor, layers: &[StlWeights], work: &mut WorkCounter) -> Result<Tensor> {
    let Some(first) = layers.first() else {
        return Ok(f.clone());
    };
    let (rows, cols) = (f.height() / first.win.max(1), f.width() / first.win.max(1));
    let all = WindowDecision::all(rows.max(1), cols.max(1), first.win, true);
    run_body_stl_counted(f, layers, &all, Mode::Infer, work)
}
