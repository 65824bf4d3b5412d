//! History encoders and the dot-product scorer.
//!
//! Frozen item embeddings `e` (dimension `d`) are mapped by a trainable
//! projection `W` (`h x d`). An encoder turns the projected history into a
//! single `h`-vector `u`, and an item scores `<u, W e>`.
//!
//! All parameters live in one flat `Vec<f64>` partitioned into named
//! [`Block`]s, so optimizers, gradient checks and checkpoints treat every
//! encoder the same way.

mod attention;
mod checkpoint;
mod gradcheck;
mod gru;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{grad_check, GradCheckCase, LossTerm};

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, matvec, outer_acc};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    MeanPool,
    GatedRecurrent,
    CausalAttention,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 3] = [
        EncoderKind::MeanPool,
        EncoderKind::GatedRecurrent,
        EncoderKind::CausalAttention,
    ];

    pub fn tag(self) -> u8 {
        match self {
            EncoderKind::MeanPool => 0,
            EncoderKind::GatedRecurrent => 1,
            EncoderKind::CausalAttention => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::MeanPool => "mean_pool",
            EncoderKind::GatedRecurrent => "gated_recurrent",
            EncoderKind::CausalAttention => "causal_attention",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_pool" | "mean" => Ok(EncoderKind::MeanPool),
            "gated_recurrent" | "gru" => Ok(EncoderKind::GatedRecurrent),
            "causal_attention" | "attention" => Ok(EncoderKind::CausalAttention),
            other => Err(Error::invalid("encoder", format!("unknown encoder `{other}`"))),
        }
    }
}

/// A named `rows x cols` slice of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    /// Biases start at zero, everything else is drawn uniformly.
    pub is_bias: bool,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

fn layout(kind: EncoderKind, dim: usize, hidden: usize, max_history: usize) -> Vec<Block> {
    let mut specs: Vec<(&'static str, usize, usize, bool)> = vec![("projection", hidden, dim, false)];
    match kind {
        EncoderKind::MeanPool => {}
        EncoderKind::GatedRecurrent => {
            for (w, u, b) in [("w_z", "u_z", "b_z"), ("w_r", "u_r", "b_r"), ("w_n", "u_n", "b_n")] {
                specs.push((w, hidden, hidden, false));
                specs.push((u, hidden, hidden, false));
                specs.push((b, hidden, 1, true));
            }
            specs.push(("b_hn", hidden, 1, true));
        }
        EncoderKind::CausalAttention => {
            specs.push(("w_q", hidden, hidden, false));
            specs.push(("w_k", hidden, hidden, false));
            specs.push(("w_v", hidden, hidden, false));
            specs.push(("positions", max_history, hidden, false));
        }
    }
    let mut offset = 0;
    specs
        .into_iter()
        .map(|(name, rows, cols, is_bias)| {
            let block = Block {
                name,
                rows,
                cols,
                offset,
                is_bias,
            };
            offset += rows * cols;
            block
        })
        .collect()
}

/// Trainable parameters of the scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    kind: EncoderKind,
    dim: usize,
    hidden: usize,
    max_history: usize,
    blocks: Vec<Block>,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(kind: EncoderKind, dim: usize, hidden: usize, max_history: usize) -> Result<Self> {
        if dim == 0 || hidden == 0 || max_history == 0 {
            return Err(Error::invalid("model shape", "dim, hidden and max_history must be >= 1"));
        }
        let blocks = layout(kind, dim, hidden, max_history);
        let total = blocks.last().map_or(0, |b| b.offset + b.len());
        Ok(ModelParams {
            kind,
            dim,
            hidden,
            max_history,
            blocks,
            values: vec![0.0; total],
        })
    }

    /// Weights uniform in `(-1/sqrt(h), 1/sqrt(h))`, biases zero.
    pub fn init(kind: EncoderKind, dim: usize, hidden: usize, max_history: usize, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(kind, dim, hidden, max_history)?;
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut rng = seed::rng(seed, &[seed::stream::INIT]);
        for block in params.blocks.clone() {
            if block.is_bias {
                continue;
            }
            for v in &mut params.values[block.range()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(params)
    }

    pub fn from_values(
        kind: EncoderKind,
        dim: usize,
        hidden: usize,
        max_history: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut params = Self::zeros(kind, dim, hidden, max_history)?;
        if values.len() != params.values.len() {
            return Err(Error::Dimension {
                expected: params.values.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter"));
        }
        params.values = values;
        Ok(params)
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn max_history(&self) -> usize {
        self.max_history
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, name: &str) -> &[f64] {
        let b = self.blocks.iter().find(|b| b.name == name).expect("unknown block");
        &self.values[b.range()]
    }

    pub fn block_mut(&mut self, name: &str) -> &mut [f64] {
        let b = *self.blocks.iter().find(|b| b.name == name).expect("unknown block");
        &mut self.values[b.range()]
    }

    pub(crate) fn block_range(&self, name: &str) -> std::ops::Range<usize> {
        self.blocks.iter().find(|b| b.name == name).expect("unknown block").range()
    }

    pub fn zero_grad(&self) -> GradientBundle {
        GradientBundle {
            values: vec![0.0; self.values.len()],
        }
    }

    /// `W e`.
    pub fn project(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(embedding)?;
        let mut out = vec![0.0; self.hidden];
        matvec(self.block("projection"), self.hidden, self.dim, embedding, &mut out);
        Ok(out)
    }

    fn check_dim(&self, embedding: &[f64]) -> Result<()> {
        if embedding.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: embedding.len(),
            });
        }
        Ok(())
    }
}

/// Gradient of a scalar with respect to every parameter, in the layout of
/// the [`ModelParams`] it was produced from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub values: Vec<f64>,
}

impl GradientBundle {
    pub fn add_assign(&mut self, other: &GradientBundle) {
        crate::linalg::axpy(1.0, &other.values, &mut self.values);
    }
}

/// The encoder output `Emb(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEmbedding {
    pub vector: Vec<f64>,
}

/// Intermediate values of a forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    embeddings: Vec<Vec<f64>>,
    projected: Vec<Vec<f64>>,
    inner: InnerTape,
}

#[derive(Debug, Clone)]
enum InnerTape {
    MeanPool,
    Gru(gru::GruTape),
    Attention(attention::AttentionTape),
}

/// Encode a history of item embeddings, oldest first.
pub fn encode_history(history: &[&[f64]], params: &ModelParams) -> Result<HistoryEmbedding> {
    forward(history, params).map(|(e, _)| e)
}

pub fn forward(history: &[&[f64]], params: &ModelParams) -> Result<(HistoryEmbedding, Tape)> {
    if history.is_empty() {
        return Err(Error::Empty("history"));
    }
    if params.kind == EncoderKind::CausalAttention && history.len() > params.max_history {
        return Err(Error::invalid(
            "history",
            format!(
                "length {} exceeds max_history {}",
                history.len(),
                params.max_history
            ),
        ));
    }
    let projected = history
        .iter()
        .map(|e| params.project(e))
        .collect::<Result<Vec<_>>>()?;
    let h = params.hidden;
    let (vector, inner) = match params.kind {
        EncoderKind::MeanPool => {
            let mut u = vec![0.0; h];
            for x in &projected {
                crate::linalg::axpy(1.0 / projected.len() as f64, x, &mut u);
            }
            (u, InnerTape::MeanPool)
        }
        EncoderKind::GatedRecurrent => {
            let (u, tape) = gru::forward(params, &projected);
            (u, InnerTape::Gru(tape))
        }
        EncoderKind::CausalAttention => {
            let (u, tape) = attention::forward(params, &projected);
            (u, InnerTape::Attention(tape))
        }
    };
    let tape = Tape {
        embeddings: history.iter().map(|e| e.to_vec()).collect(),
        projected,
        inner,
    };
    Ok((HistoryEmbedding { vector }, tape))
}

/// Accumulate `d_out^T d Emb(s) / d theta` into `grad`.
pub fn backward(params: &ModelParams, tape: &Tape, d_out: &[f64], grad: &mut GradientBundle) {
    let n = tape.projected.len();
    let h = params.hidden;
    let d_inputs: Vec<Vec<f64>> = match &tape.inner {
        InnerTape::MeanPool => vec![d_out.iter().map(|g| g / n as f64).collect(); n],
        InnerTape::Gru(t) => gru::backward(params, t, &tape.projected, d_out, grad),
        InnerTape::Attention(t) => attention::backward(params, t, &tape.projected, d_out, grad),
    };
    let proj = params.block_range("projection");
    for (dx, e) in d_inputs.iter().zip(&tape.embeddings) {
        debug_assert_eq!(dx.len(), h);
        outer_acc(&mut grad.values[proj.clone()], dx, e);
    }
}

/// `<Emb(history), W item>`.
pub fn score(history: &[&[f64]], item: &[f64], params: &ModelParams) -> Result<f64> {
    let u = encode_history(history, params)?;
    Ok(dot(&u.vector, &params.project(item)?))
}

/// Accumulate the gradient of `weight * <u, W item>` with respect to `u`
/// into `d_u` and with respect to `W` into `grad`.
pub(crate) fn score_backward(
    params: &ModelParams,
    u: &[f64],
    item: &[f64],
    projected_item: &[f64],
    weight: f64,
    d_u: &mut [f64],
    grad: &mut GradientBundle,
) {
    if weight == 0.0 {
        return;
    }
    crate::linalg::axpy(weight, projected_item, d_u);
    let proj = params.block_range("projection");
    let scaled: Vec<f64> = u.iter().map(|x| weight * x).collect();
    outer_acc(&mut grad.values[proj], &scaled, item);
}
