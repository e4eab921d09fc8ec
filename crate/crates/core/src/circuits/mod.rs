//! Linearized attention-only transformer pieces.
//!
//! Residual streams are `seq_len × hidden` matrices and weights act on the
//! right (`resid · W`). Attention patterns are stored rows = query,
//! columns = key.

mod expansion;
mod induction;

pub use expansion::{
    path_expansion_two_layer, two_layer_forward, virtual_head, PathKind, PathTerm, SecondLayer,
};
pub use induction::{
    induction_mass, induction_run, pattern_csv, pattern_pgm, previous_token_pattern,
    toy_induction_pattern, InductionRun, FUTURE_PENALTY,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `sqrt(2/π)` and the cubic coefficient of the tanh GELU.
pub const GELU_C: f64 = 0.7978845608;
pub const GELU_A: f64 = 0.044715;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub seq_len: usize,
    pub vocab: usize,
    pub hidden: usize,
    pub num_heads: usize,
    pub head_size: usize,
    pub mlp_dim: usize,
}

impl ModelDims {
    /// GPT-2 small, context at its 1024 maximum.
    pub fn gpt2_small() -> Self {
        ModelDims {
            seq_len: 1024,
            vocab: 50257,
            hidden: 768,
            num_heads: 12,
            head_size: 64,
            mlp_dim: 3072,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.seq_len,
            self.vocab,
            self.hidden,
            self.num_heads,
            self.head_size,
            self.mlp_dim,
        ];
        if all.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "model dims must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    /// hidden × head_size
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    /// head_size × hidden
    pub w_o: Tensor,
}

impl AttentionHead {
    fn check(&self, hidden: usize) -> Result<()> {
        let hs = self.w_q.shape().get(1).copied().unwrap_or(0);
        for (name, w, want) in [
            ("W_Q", &self.w_q, [hidden, hs]),
            ("W_K", &self.w_k, [hidden, hs]),
            (
                "W_V",
                &self.w_v,
                [hidden, self.w_v.shape().get(1).copied().unwrap_or(0)],
            ),
        ] {
            if w.shape() != want {
                return Err(Error::ShapeMismatch(format!(
                    "{name} is {:?}, expected {want:?}",
                    w.shape()
                )));
            }
        }
        if self.w_o.shape() != [self.w_v.cols(), hidden] {
            return Err(Error::ShapeMismatch(format!(
                "W_O is {:?}, expected [{}, {hidden}]",
                self.w_o.shape(),
                self.w_v.cols()
            )));
        }
        Ok(())
    }

    /// `W_V · W_O`, hidden × hidden.
    pub fn ov(&self) -> Result<Tensor> {
        self.w_v.matmul(&self.w_o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub heads: Vec<AttentionHead>,
}

impl AttentionLayer {
    pub fn new(heads: Vec<AttentionHead>) -> Result<Self> {
        let layer = AttentionLayer { heads };
        layer.check()?;
        Ok(layer)
    }

    /// Uniform `[0, 1)` weights.
    pub fn random<R: Rng + ?Sized>(dims: &ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let (h, s) = (dims.hidden, dims.head_size);
        let heads = (0..dims.num_heads)
            .map(|_| AttentionHead {
                w_q: Tensor::random(&[h, s], rng),
                w_k: Tensor::random(&[h, s], rng),
                w_v: Tensor::random(&[h, s], rng),
                w_o: Tensor::random(&[s, h], rng),
            })
            .collect();
        AttentionLayer::new(heads)
    }

    pub fn hidden(&self) -> usize {
        self.heads[0].w_q.rows()
    }

    fn check(&self) -> Result<()> {
        let first = self
            .heads
            .first()
            .ok_or_else(|| Error::InvalidArgument("attention layer without heads".into()))?;
        first.w_q.expect_order(2)?;
        let hidden = first.w_q.rows();
        self.heads.iter().try_for_each(|h| h.check(hidden))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenHead {
    /// seq_len × seq_len, rows = query.
    pub pattern: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
}

/// Attention with fixed patterns: a linear map on the residual stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenAttention {
    pub heads: Vec<FrozenHead>,
}

impl FrozenAttention {
    /// Checks causal, row-stochastic patterns and consistent value/output shapes.
    pub fn new(heads: Vec<FrozenHead>) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| Error::InvalidArgument("frozen attention without heads".into()))?;
        first.pattern.expect_order(2)?;
        first.w_v.expect_order(2)?;
        let (seq, hidden) = (first.pattern.rows(), first.w_v.rows());
        for h in &heads {
            check_pattern(&h.pattern, seq)?;
            h.w_v.expect_order(2)?;
            h.w_o.expect_order(2)?;
            if h.w_v.rows() != hidden || h.w_o.shape() != [h.w_v.cols(), hidden] {
                return Err(Error::ShapeMismatch(format!(
                    "W_V {:?} / W_O {:?} inconsistent with hidden {hidden}",
                    h.w_v.shape(),
                    h.w_o.shape()
                )));
            }
        }
        Ok(FrozenAttention { heads })
    }

    /// Freeze a layer's value/output weights against given patterns.
    pub fn freeze(layer: &AttentionLayer, patterns: Vec<Tensor>) -> Result<Self> {
        if patterns.len() != layer.heads.len() {
            return Err(Error::ArityMismatch {
                expected: layer.heads.len(),
                got: patterns.len(),
            });
        }
        FrozenAttention::new(
            layer
                .heads
                .iter()
                .zip(patterns)
                .map(|(h, pattern)| FrozenHead {
                    pattern,
                    w_v: h.w_v.clone(),
                    w_o: h.w_o.clone(),
                })
                .collect(),
        )
    }

    /// Random causal row-stochastic patterns with uniform `[0, 1)` weights.
    pub fn random<R: Rng + ?Sized>(dims: &ModelDims, rng: &mut R) -> Result<Self> {
        let layer = AttentionLayer::random(dims, rng)?;
        let patterns = (0..dims.num_heads)
            .map(|_| {
                let logits = Tensor::random_signed(&[dims.seq_len, dims.seq_len], rng);
                softmax_rows_masked(&logits, Mask::Causal)
            })
            .collect();
        FrozenAttention::freeze(&layer, patterns)
    }

    pub fn seq_len(&self) -> usize {
        self.heads[0].pattern.rows()
    }

    pub fn hidden(&self) -> usize {
        self.heads[0].w_v.rows()
    }

    /// True when every head's `W_V · W_O` vanishes, so the layer adds nothing.
    pub fn is_zero_map(&self) -> bool {
        self.heads.iter().all(|h| {
            h.w_v
                .matmul(&h.w_o)
                .map(|m| m.max_abs() == 0.0)
                .unwrap_or(false)
        })
    }
}

fn check_pattern(a: &Tensor, seq: usize) -> Result<()> {
    if a.shape() != [seq, seq] {
        return Err(Error::ShapeMismatch(format!(
            "pattern {:?}, expected [{seq}, {seq}]",
            a.shape()
        )));
    }
    for q in 0..seq {
        let row: f64 = (0..seq).map(|k| a.at(q, k)).sum();
        if (row - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "pattern row {q} sums to {row}"
            )));
        }
        if (q + 1..seq).any(|k| a.at(q, k) != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pattern row {q} attends to the future"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    /// hidden × mlp_dim
    pub w_up: Tensor,
    /// mlp_dim × hidden
    pub w_down: Tensor,
}

impl MlpLayer {
    pub fn random<R: Rng + ?Sized>(dims: &ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        Ok(MlpLayer {
            w_up: Tensor::random(&[dims.hidden, dims.mlp_dim], rng),
            w_down: Tensor::random(&[dims.mlp_dim, dims.hidden], rng),
        })
    }
}

/// One row per token with a single 1 at the token id.
pub fn one_hot_tokens(ids: &[usize], vocab: usize) -> Result<Tensor> {
    if ids.is_empty() || vocab == 0 {
        return Err(Error::InvalidArgument(
            "need at least one token and a nonempty vocabulary".into(),
        ));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
        return Err(Error::IndexOutOfBounds {
            index: vec![bad],
            shape: vec![vocab],
        });
    }
    Ok(Tensor::from_fn(&[ids.len(), vocab], |i| {
        f64::from(u8::from(ids[i[0]] == i[1]))
    }))
}

/// `x · W_E + P`.
pub fn embed(x: &Tensor, w_e: &Tensor, pos: &Tensor) -> Result<Tensor> {
    x.matmul(w_e)?.add(pos)
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Mask {
    /// Future keys get `-∞`.
    Causal,
    /// Keys at or above `diag_offset` columns right of the diagonal are replaced by `-penalty`.
    Additive { penalty: f64, diag_offset: usize },
}

/// Causal masking then softmax over each row.
pub(crate) fn softmax_rows_masked(logits: &Tensor, mask: Mask) -> Tensor {
    let (rows, cols) = (logits.rows(), logits.cols());
    let mut out = logits.clone();
    let d = out.data_mut();
    for q in 0..rows {
        let row = &mut d[q * cols..(q + 1) * cols];
        for (k, v) in row.iter_mut().enumerate() {
            match mask {
                Mask::Causal if k > q => *v = f64::NEG_INFINITY,
                Mask::Additive {
                    penalty,
                    diag_offset,
                } if k >= q + diag_offset => *v = -penalty,
                _ => {}
            }
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

fn default_scale(head: &AttentionHead, scale: Option<f64>) -> f64 {
    scale.unwrap_or_else(|| 1.0 / (head.w_q.cols() as f64).sqrt())
}

/// Pattern with queries read from `q_resid` and keys from `k_resid`.
pub(crate) fn head_pattern(
    q_resid: &Tensor,
    k_resid: &Tensor,
    head: &AttentionHead,
    scale: Option<f64>,
) -> Result<Tensor> {
    let q = q_resid.matmul(&head.w_q)?;
    let k = k_resid.matmul(&head.w_k)?;
    let logits = q.matmul(&k.transpose()?)?.scale(default_scale(head, scale));
    Ok(softmax_rows_masked(&logits, Mask::Causal))
}

/// Per-head causal attention patterns. `scale` defaults to `1/sqrt(head_size)`.
pub fn attention_pattern(
    resid: &Tensor,
    layer: &AttentionLayer,
    scale: Option<f64>,
) -> Result<Vec<Tensor>> {
    resid.expect_order(2)?;
    layer
        .heads
        .iter()
        .map(|h| head_pattern(resid, resid, h, scale))
        .collect()
}

/// `Σ_h A_h · resid · W_V,h · W_O,h` with patterns computed from `resid`.
pub fn attention_forward(
    resid: &Tensor,
    layer: &AttentionLayer,
    scale: Option<f64>,
) -> Result<Tensor> {
    let frozen = FrozenAttention::freeze(layer, attention_pattern(resid, layer, scale)?)?;
    frozen_forward(resid, &frozen)
}

/// `Σ_h A_h · resid · W_V,h · W_O,h`.
pub fn frozen_forward(resid: &Tensor, f: &FrozenAttention) -> Result<Tensor> {
    resid.expect_order(2)?;
    if resid.shape() != [f.seq_len(), f.hidden()] {
        return Err(Error::ShapeMismatch(format!(
            "residual {:?} vs layer [{}, {}]",
            resid.shape(),
            f.seq_len(),
            f.hidden()
        )));
    }
    let mut out = Tensor::zeros(resid.shape());
    for h in &f.heads {
        let term = h.pattern.matmul(&resid.matmul(&h.w_v)?)?.matmul(&h.w_o)?;
        out = out.add(&term)?;
    }
    Ok(out)
}

/// `gelu(resid · W_up) · W_down`, token by token.
pub fn mlp_forward(resid: &Tensor, layer: &MlpLayer) -> Result<Tensor> {
    resid.matmul(&layer.w_up)?.map(gelu).matmul(&layer.w_down)
}

/// `W_1 · W_2 · … · W_n`.
pub fn collapse_linear(layers: &[Tensor]) -> Result<Tensor> {
    let (first, rest) = layers
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("no layers to collapse".into()))?;
    first.expect_order(2)?;
    rest.iter().try_fold(first.clone(), |acc, w| acc.matmul(w))
}

/// Row vector `x` pushed through the layers left to right; `activations[i]`
/// applies GELU after layer `i`.
pub fn dense_forward(x: &Tensor, layers: &[Tensor], activations: &[bool]) -> Result<Tensor> {
    if activations.len() != layers.len() {
        return Err(Error::ArityMismatch {
            expected: layers.len(),
            got: activations.len(),
        });
    }
    x.expect_order(1)?;
    let mut v = x.reshape(&[1, x.len()])?;
    for (w, &act) in layers.iter().zip(activations) {
        v = v.matmul(w)?;
        if act {
            v = v.map(gelu);
        }
    }
    v.reshape(&[v.len()])
}
