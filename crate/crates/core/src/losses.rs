//! Training objective: `L = L_ranking + alpha * L_item + beta * L_user`.
//!
//! * `L_ranking`: sampled softmax cross-entropy of the positive against its
//!   negatives.
//! * `L_item`: `|f(s, i') - f(s, i)|`, where `i'` is the other copy of the
//!   positive.
//! * `L_user`: `|f(s', i) - f(s, i)| + H(softmax(Emb(s'))) + H(softmax(Emb(s)))`,
//!   where `s'` swaps every history item for its other copy.
//!
//! Every term is summed over the batch unless mean reduction is requested.

use serde::{Deserialize, Serialize};

use crate::data::{PairedCorpus, TrainInstance};
use crate::encoders::{backward, forward, score_backward, GradientBundle, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::{dot, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebiasCoefficients {
    pub alpha: f64,
    pub beta: f64,
}

impl DebiasCoefficients {
    pub const NONE: DebiasCoefficients = DebiasCoefficients { alpha: 0.0, beta: 0.0 };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (field, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(DebiasCoefficients { alpha, beta })
    }

    pub fn is_none(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }
}

impl Default for DebiasCoefficients {
    fn default() -> Self {
        Self::NONE
    }
}

/// Sign of the entropy terms inside `L_user`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyDirection {
    /// Entropy is added to the minimized loss.
    #[default]
    Minimize,
    /// Entropy is subtracted, so training pushes it up.
    Maximize,
}

impl EntropyDirection {
    fn sign(self) -> f64 {
        match self {
            EntropyDirection::Minimize => 1.0,
            EntropyDirection::Maximize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossOptions {
    pub entropy: EntropyDirection,
    /// Divide batch sums by the batch size.
    pub mean_reduction: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ranking: f64,
    pub debias_item: f64,
    pub debias_user: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, other: &LossBreakdown) {
        self.ranking += other.ranking;
        self.debias_item += other.debias_item;
        self.debias_user += other.debias_user;
        self.total += other.total;
    }

    pub fn scale(&mut self, s: f64) {
        self.ranking *= s;
        self.debias_item *= s;
        self.debias_user *= s;
        self.total *= s;
    }
}

/// Per-term weights applied when forming `total` and its gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights {
    pub ranking: f64,
    pub item: f64,
    pub user: f64,
}

impl From<DebiasCoefficients> for TermWeights {
    fn from(c: DebiasCoefficients) -> Self {
        TermWeights {
            ranking: 1.0,
            item: c.alpha,
            user: c.beta,
        }
    }
}

/// Embeddings for one training example. The rewritten parts are the other
/// copies of the positive and of each history item.
#[derive(Debug, Clone)]
pub struct LossExample<'a> {
    pub history: Vec<&'a [f64]>,
    pub rewritten_history: Option<Vec<&'a [f64]>>,
    pub positive: &'a [f64],
    pub rewritten_positive: Option<&'a [f64]>,
    pub negatives: Vec<&'a [f64]>,
}

impl<'a> LossExample<'a> {
    pub fn from_instance(instance: &TrainInstance, corpus: &'a PairedCorpus) -> Result<Self> {
        let emb = |id| corpus.embedding(id);
        let history = instance.history.iter().map(|&id| emb(id)).collect::<Result<Vec<_>>>()?;
        let rewritten_history = instance
            .history
            .iter()
            .map(|&id| corpus.counterpart(id).and_then(emb))
            .collect::<Result<Vec<_>>>()?;
        Ok(LossExample {
            history,
            rewritten_history: Some(rewritten_history),
            positive: emb(instance.positive)?,
            rewritten_positive: Some(emb(corpus.counterpart(instance.positive)?)?),
            negatives: instance.negatives.iter().map(|&id| emb(id)).collect::<Result<_>>()?,
        })
    }
}

/// `-log(exp(s+) / (exp(s+) + sum exp(s-)))`, max-shifted.
pub fn ranking_loss(positive: f64, negatives: &[f64]) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Empty("negative scores"));
    }
    if !positive.is_finite() || negatives.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score"));
    }
    let max = negatives.iter().copied().fold(positive, f64::max);
    let sum: f64 = (positive - max).exp() + negatives.iter().map(|s| (s - max).exp()).sum::<f64>();
    Ok(max + sum.ln() - positive)
}

/// Shannon entropy (nats) of `softmax(v)`, with `0 log 0 = 0`.
pub fn entropy(v: &[f64]) -> f64 {
    softmax(v)
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// `dH/dv_k = -p_k (ln p_k + H)`.
fn entropy_grad(v: &[f64]) -> Vec<f64> {
    let p = softmax(v);
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    p.iter()
        .map(|&pk| if pk > 0.0 { -pk * (pk.ln() + h) } else { 0.0 })
        .collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn missing(what: &'static str) -> Error {
    Error::invalid(what, "example has no rewritten counterpart")
}

/// Loss of one example and, if `grad` is given, its gradient accumulated
/// into it. Only terms with a nonzero weight are evaluated; the others read 0
/// in the breakdown.
pub fn example_loss(
    ex: &LossExample<'_>,
    params: &ModelParams,
    weights: TermWeights,
    options: LossOptions,
    grad: Option<&mut GradientBundle>,
) -> Result<LossBreakdown> {
    evaluate(ex, params, weights, options, grad, false)
}

/// Every term of one example that its data allows, regardless of weight.
pub fn example_breakdown(
    ex: &LossExample<'_>,
    params: &ModelParams,
    weights: TermWeights,
    options: LossOptions,
) -> Result<LossBreakdown> {
    evaluate(ex, params, weights, options, None, true)
}

fn evaluate(
    ex: &LossExample<'_>,
    params: &ModelParams,
    weights: TermWeights,
    options: LossOptions,
    mut grad: Option<&mut GradientBundle>,
    all_terms: bool,
) -> Result<LossBreakdown> {
    let (u, tape) = forward(&ex.history, params)?;
    let u = u.vector;
    let h = params.hidden();
    let mut du = vec![0.0; h];
    let mut out = LossBreakdown::default();

    let v_pos = params.project(ex.positive)?;
    let s_pos = dot(&u, &v_pos);

    if weights.ranking != 0.0 || (all_terms && !ex.negatives.is_empty()) {
        let v_neg = ex.negatives.iter().map(|e| params.project(e)).collect::<Result<Vec<_>>>()?;
        let s_neg: Vec<f64> = v_neg.iter().map(|v| dot(&u, v)).collect();
        out.ranking = ranking_loss(s_pos, &s_neg)?;
        if let Some(g) = grad.as_deref_mut() {
            let mut all = Vec::with_capacity(s_neg.len() + 1);
            all.push(s_pos);
            all.extend_from_slice(&s_neg);
            let p = softmax(&all);
            let w = weights.ranking;
            score_backward(params, &u, ex.positive, &v_pos, w * (p[0] - 1.0), &mut du, g);
            for ((e, v), pj) in ex.negatives.iter().zip(&v_neg).zip(&p[1..]) {
                score_backward(params, &u, e, v, w * pj, &mut du, g);
            }
        }
    }

    match ex.rewritten_positive {
        Some(e_rw) if weights.item != 0.0 || all_terms => {
            let v_rw = params.project(e_rw)?;
            let diff = dot(&u, &v_rw) - s_pos;
            out.debias_item = diff.abs();
            if let Some(g) = grad.as_deref_mut() {
                let w = weights.item * sign(diff);
                score_backward(params, &u, e_rw, &v_rw, w, &mut du, g);
                score_backward(params, &u, ex.positive, &v_pos, -w, &mut du, g);
            }
        }
        None if weights.item != 0.0 => return Err(missing("rewritten positive")),
        _ => {}
    }

    match &ex.rewritten_history {
        Some(rw) if weights.user != 0.0 || all_terms => {
            if rw.len() != ex.history.len() {
                return Err(Error::Dimension {
                    expected: ex.history.len(),
                    found: rw.len(),
                });
            }
            let (u_rw, tape_rw) = forward(rw, params)?;
            let u_rw = u_rw.vector;
            let diff = dot(&u_rw, &v_pos) - s_pos;
            let es = options.entropy.sign();
            out.debias_user = diff.abs() + es * (entropy(&u_rw) + entropy(&u));
            if let Some(g) = grad.as_deref_mut() {
                if weights.user != 0.0 {
                    let w = weights.user;
                    let sd = w * sign(diff);
                    let mut du_rw = vec![0.0; h];
                    score_backward(params, &u_rw, ex.positive, &v_pos, sd, &mut du_rw, g);
                    score_backward(params, &u, ex.positive, &v_pos, -sd, &mut du, g);
                    crate::linalg::axpy(w * es, &entropy_grad(&u_rw), &mut du_rw);
                    crate::linalg::axpy(w * es, &entropy_grad(&u), &mut du);
                    backward(params, &tape_rw, &du_rw, g);
                }
            }
        }
        None if weights.user != 0.0 => return Err(missing("rewritten history")),
        _ => {}
    }

    if let Some(g) = grad {
        backward(params, &tape, &du, g);
    }
    out.total = weights.ranking * out.ranking + weights.item * out.debias_item + weights.user * out.debias_user;
    Ok(out)
}

/// Batch loss with optional gradient, summed in index order.
pub fn batch_loss(
    batch: &[LossExample<'_>],
    params: &ModelParams,
    weights: TermWeights,
    options: LossOptions,
    mut grad: Option<&mut GradientBundle>,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = LossBreakdown::default();
    for ex in batch {
        total.add(&example_loss(ex, params, weights, options, grad.as_deref_mut())?);
    }
    if options.mean_reduction {
        let s = 1.0 / batch.len() as f64;
        total.scale(s);
        if let Some(g) = grad {
            g.values.iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok(total)
}

/// `sum |f(s, i') - f(s, i)|` over the batch.
pub fn debias_item_loss(batch: &[LossExample<'_>], params: &ModelParams) -> Result<f64> {
    let mut total = 0.0;
    for ex in batch {
        let rw = ex.rewritten_positive.ok_or_else(|| missing("rewritten positive"))?;
        let history = crate::encoders::encode_history(&ex.history, params)?;
        let a = dot(&history.vector, &params.project(rw)?);
        let b = dot(&history.vector, &params.project(ex.positive)?);
        total += (a - b).abs();
    }
    Ok(total)
}

/// `sum |f(s', i) - f(s, i)| + H(softmax(Emb(s'))) + H(softmax(Emb(s)))`.
pub fn debias_user_loss(batch: &[LossExample<'_>], params: &ModelParams) -> Result<f64> {
    let mut total = 0.0;
    for ex in batch {
        let rw = ex.rewritten_history.as_ref().ok_or_else(|| missing("rewritten history"))?;
        if rw.len() != ex.history.len() {
            return Err(Error::Dimension {
                expected: ex.history.len(),
                found: rw.len(),
            });
        }
        let u = crate::encoders::encode_history(&ex.history, params)?.vector;
        let u_rw = crate::encoders::encode_history(rw, params)?.vector;
        let v = params.project(ex.positive)?;
        total += (dot(&u_rw, &v) - dot(&u, &v)).abs() + entropy(&u_rw) + entropy(&u);
    }
    Ok(total)
}

/// Full breakdown: every term is evaluated even when its coefficient is 0.
pub fn total_loss(
    batch: &[LossExample<'_>],
    params: &ModelParams,
    coeffs: DebiasCoefficients,
    options: LossOptions,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = LossBreakdown::default();
    for ex in batch {
        total.add(&example_breakdown(ex, params, coeffs.into(), options)?);
    }
    if options.mean_reduction {
        total.scale(1.0 / batch.len() as f64);
    }
    Ok(total)
}
