//! One single-head causal self-attention layer; only the last position's
//! output is kept. Inputs get a learned offset per absolute position.

use super::{GradientBundle, ModelParams};
use crate::linalg::{dot, matvec, matvec_t_acc, outer_acc, softmax};

#[derive(Debug, Clone)]
pub(super) struct AttentionTape {
    /// Projected input plus positional offset.
    x: Vec<Vec<f64>>,
    q: Vec<f64>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

pub(super) fn forward(params: &ModelParams, inputs: &[Vec<f64>]) -> (Vec<f64>, AttentionTape) {
    let hd = params.hidden;
    let positions = params.block("positions");
    let x: Vec<Vec<f64>> = inputs
        .iter()
        .enumerate()
        .map(|(t, xt)| {
            xt.iter()
                .zip(&positions[t * hd..(t + 1) * hd])
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect();
    let apply = |name: &str, v: &[f64]| {
        let mut out = vec![0.0; hd];
        matvec(params.block(name), hd, hd, v, &mut out);
        out
    };
    let last = x.len() - 1;
    let q = apply("w_q", &x[last]);
    let k: Vec<Vec<f64>> = x.iter().map(|xt| apply("w_k", xt)).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|xt| apply("w_v", xt)).collect();
    let scale = 1.0 / (hd as f64).sqrt();
    let logits: Vec<f64> = k.iter().map(|kj| dot(&q, kj) * scale).collect();
    let weights = softmax(&logits);
    let mut out = vec![0.0; hd];
    for (a, vj) in weights.iter().zip(&v) {
        crate::linalg::axpy(*a, vj, &mut out);
    }
    (out, AttentionTape { x, q, k, v, weights })
}

pub(super) fn backward(
    params: &ModelParams,
    tape: &AttentionTape,
    inputs: &[Vec<f64>],
    d_out: &[f64],
    grad: &mut GradientBundle,
) -> Vec<Vec<f64>> {
    let hd = params.hidden;
    let n = inputs.len();
    let last = n - 1;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dx = vec![vec![0.0; hd]; n];

    let d_weights: Vec<f64> = tape.v.iter().map(|vj| dot(d_out, vj)).collect();
    let mean: f64 = tape.weights.iter().zip(&d_weights).map(|(a, g)| a * g).sum();
    let d_logits: Vec<f64> = tape
        .weights
        .iter()
        .zip(&d_weights)
        .map(|(a, g)| a * (g - mean))
        .collect();

    let mut dq = vec![0.0; hd];
    let (wk, wv) = (params.block_range("w_k"), params.block_range("w_v"));
    for j in 0..n {
        let dv: Vec<f64> = d_out.iter().map(|g| g * tape.weights[j]).collect();
        outer_acc(&mut grad.values[wv.clone()], &dv, &tape.x[j]);
        matvec_t_acc(params.block("w_v"), hd, hd, &dv, &mut dx[j]);

        crate::linalg::axpy(d_logits[j] * scale, &tape.k[j], &mut dq);
        let dk: Vec<f64> = tape.q.iter().map(|qv| qv * d_logits[j] * scale).collect();
        outer_acc(&mut grad.values[wk.clone()], &dk, &tape.x[j]);
        matvec_t_acc(params.block("w_k"), hd, hd, &dk, &mut dx[j]);
    }
    outer_acc(&mut grad.values[params.block_range("w_q")], &dq, &tape.x[last]);
    matvec_t_acc(params.block("w_q"), hd, hd, &dq, &mut dx[last]);

    let pos = params.block_range("positions");
    for (t, dxt) in dx.iter().enumerate() {
        crate::linalg::axpy(1.0, dxt, &mut grad.values[pos.start + t * hd..pos.start + (t + 1) * hd]);
    }
    dx
}
