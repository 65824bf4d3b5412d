//! Central finite-difference verification of the analytic gradients.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EncoderKind, ModelParams};
use crate::error::{Error, Result};
use crate::losses::{batch_loss, DebiasCoefficients, LossExample, LossOptions, TermWeights};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossTerm {
    Ranking,
    DebiasItem,
    DebiasUser,
    Total(DebiasCoefficients),
}

impl LossTerm {
    fn weights(self) -> TermWeights {
        match self {
            LossTerm::Ranking => TermWeights { ranking: 1.0, item: 0.0, user: 0.0 },
            LossTerm::DebiasItem => TermWeights { ranking: 0.0, item: 1.0, user: 0.0 },
            LossTerm::DebiasUser => TermWeights { ranking: 0.0, item: 0.0, user: 1.0 },
            LossTerm::Total(c) => c.into(),
        }
    }
}

/// A loss evaluated on a random batch at random parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckCase {
    pub kind: EncoderKind,
    pub dim: usize,
    pub hidden: usize,
    pub term: LossTerm,
    pub options: LossOptions,
    pub batch_size: usize,
    pub negatives: usize,
    pub max_history: usize,
    /// Longest history drawn; shorter ones leave later positional rows unused.
    pub history_len: usize,
}

impl GradCheckCase {
    pub fn new(kind: EncoderKind, dim: usize, hidden: usize, term: LossTerm) -> Self {
        GradCheckCase {
            kind,
            dim,
            hidden,
            term,
            options: LossOptions::default(),
            batch_size: 2,
            negatives: 4,
            max_history: 10,
            history_len: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

struct Batch {
    histories: Vec<Vec<Vec<f64>>>,
    rewritten: Vec<Vec<Vec<f64>>>,
    positives: Vec<Vec<f64>>,
    rewritten_positives: Vec<Vec<f64>>,
    negatives: Vec<Vec<Vec<f64>>>,
}

impl Batch {
    fn random(case: &GradCheckCase, rng: &mut seed::Rng) -> Self {
        let d = case.dim;
        let vec_ = |rng: &mut seed::Rng| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let mut b = Batch {
            histories: vec![],
            rewritten: vec![],
            positives: vec![],
            rewritten_positives: vec![],
            negatives: vec![],
        };
        let shift = |e: &[f64], rng: &mut seed::Rng| -> Vec<f64> {
            e.iter().map(|x| x + rng.random_range(-0.4..0.4)).collect()
        };
        for _ in 0..case.batch_size {
            let len = rng.random_range(1..=case.history_len.min(case.max_history));
            let hist: Vec<Vec<f64>> = (0..len).map(|_| vec_(rng)).collect();
            b.rewritten.push(hist.iter().map(|e| shift(e, rng)).collect());
            b.histories.push(hist);
            let pos = vec_(rng);
            b.rewritten_positives.push(shift(&pos, rng));
            b.positives.push(pos);
            b.negatives.push((0..case.negatives).map(|_| vec_(rng)).collect());
        }
        b
    }

    fn examples(&self) -> Vec<LossExample<'_>> {
        (0..self.positives.len())
            .map(|k| LossExample {
                history: self.histories[k].iter().map(Vec::as_slice).collect(),
                rewritten_history: Some(self.rewritten[k].iter().map(Vec::as_slice).collect()),
                positive: &self.positives[k],
                rewritten_positive: Some(&self.rewritten_positives[k]),
                negatives: self.negatives[k].iter().map(Vec::as_slice).collect(),
            })
            .collect()
    }
}

/// Compare analytic gradients with central differences on every parameter
/// coordinate. Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(case: &GradCheckCase, eps: f64, seed: u64) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid("eps", format!("{eps} outside [1e-7, 1e-3]")));
    }
    let mut rng = seed::rng(seed, &[0x6763]);
    let mut params = ModelParams::zeros(case.kind, case.dim, case.hidden, case.max_history)?;
    for v in &mut params.values {
        *v = rng.random_range(-0.6..0.6);
    }
    let batch = Batch::random(case, &mut rng);
    let examples = batch.examples();
    let weights = case.term.weights();

    let mut grad = params.zero_grad();
    batch_loss(&examples, &params, weights, case.options, Some(&mut grad))?;

    let mut numeric = vec![0.0; params.len()];
    let mut max_rel: f64 = 0.0;
    for k in 0..params.len() {
        let orig = params.values[k];
        params.values[k] = orig + eps;
        let plus = batch_loss(&examples, &params, weights, case.options, None)?.total;
        params.values[k] = orig - eps;
        let minus = batch_loss(&examples, &params, weights, case.options, None)?.total;
        params.values[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("loss at probe point"));
        }
        let n = (plus - minus) / (2.0 * eps);
        numeric[k] = n;
        let a = grad.values[k];
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        analytic: grad.values,
        numeric,
    })
}
