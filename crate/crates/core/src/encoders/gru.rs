//! Single gated recurrent cell, zero initial state.
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)
//! r  = sigmoid(W_r x + U_r h + b_r)
//! n  = tanh(W_n x + b_n + r * (U_n h + b_hn))
//! h' = (1 - z) * n + z * h
//! ```

use super::{GradientBundle, ModelParams};
use crate::linalg::{matvec, matvec_t_acc, outer_acc, sigmoid};

#[derive(Debug, Clone)]
pub(super) struct GruTape {
    steps: Vec<Step>,
}

#[derive(Debug, Clone)]
struct Step {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    /// `U_n h + b_hn`
    c: Vec<f64>,
    n: Vec<f64>,
}

fn affine(params: &ModelParams, w: &str, u: &str, b: &str, x: &[f64], h: &[f64]) -> Vec<f64> {
    let hd = params.hidden;
    let mut out = vec![0.0; hd];
    let mut tmp = vec![0.0; hd];
    matvec(params.block(w), hd, hd, x, &mut out);
    matvec(params.block(u), hd, hd, h, &mut tmp);
    for ((o, t), bias) in out.iter_mut().zip(&tmp).zip(params.block(b)) {
        *o += t + bias;
    }
    out
}

pub(super) fn forward(params: &ModelParams, inputs: &[Vec<f64>]) -> (Vec<f64>, GruTape) {
    let hd = params.hidden;
    let mut h = vec![0.0; hd];
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let z: Vec<f64> = affine(params, "w_z", "u_z", "b_z", x, &h).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = affine(params, "w_r", "u_r", "b_r", x, &h).into_iter().map(sigmoid).collect();
        let mut c = vec![0.0; hd];
        matvec(params.block("u_n"), hd, hd, &h, &mut c);
        for (ci, b) in c.iter_mut().zip(params.block("b_hn")) {
            *ci += b;
        }
        let mut a_n = vec![0.0; hd];
        matvec(params.block("w_n"), hd, hd, x, &mut a_n);
        let n: Vec<f64> = (0..hd)
            .map(|k| (a_n[k] + params.block("b_n")[k] + r[k] * c[k]).tanh())
            .collect();
        let h_next: Vec<f64> = (0..hd).map(|k| (1.0 - z[k]) * n[k] + z[k] * h[k]).collect();
        steps.push(Step {
            h_prev: std::mem::replace(&mut h, h_next),
            z,
            r,
            c,
            n,
        });
    }
    (h, GruTape { steps })
}

/// Returns the gradient with respect to each input; parameter gradients are
/// accumulated into `grad`.
pub(super) fn backward(
    params: &ModelParams,
    tape: &GruTape,
    inputs: &[Vec<f64>],
    d_out: &[f64],
    grad: &mut GradientBundle,
) -> Vec<Vec<f64>> {
    let hd = params.hidden;
    let range = |name: &str| params.block_range(name);
    let mut d_inputs = vec![vec![0.0; hd]; inputs.len()];
    let mut dh = d_out.to_vec();
    for (t, step) in tape.steps.iter().enumerate().rev() {
        let x = &inputs[t];
        let mut dh_prev: Vec<f64> = (0..hd).map(|k| dh[k] * step.z[k]).collect();
        let da_n: Vec<f64> = (0..hd)
            .map(|k| dh[k] * (1.0 - step.z[k]) * (1.0 - step.n[k] * step.n[k]))
            .collect();
        let da_z: Vec<f64> = (0..hd)
            .map(|k| dh[k] * (step.h_prev[k] - step.n[k]) * step.z[k] * (1.0 - step.z[k]))
            .collect();
        let da_r: Vec<f64> = (0..hd)
            .map(|k| da_n[k] * step.c[k] * step.r[k] * (1.0 - step.r[k]))
            .collect();
        let dc: Vec<f64> = (0..hd).map(|k| da_n[k] * step.r[k]).collect();

        let dx = &mut d_inputs[t];
        for (da, w, u, b) in [
            (&da_z, "w_z", "u_z", "b_z"),
            (&da_r, "w_r", "u_r", "b_r"),
        ] {
            outer_acc(&mut grad.values[range(w)], da, x);
            outer_acc(&mut grad.values[range(u)], da, &step.h_prev);
            crate::linalg::axpy(1.0, da, &mut grad.values[range(b)]);
            matvec_t_acc(params.block(w), hd, hd, da, dx);
            matvec_t_acc(params.block(u), hd, hd, da, &mut dh_prev);
        }
        outer_acc(&mut grad.values[range("w_n")], &da_n, x);
        crate::linalg::axpy(1.0, &da_n, &mut grad.values[range("b_n")]);
        matvec_t_acc(params.block("w_n"), hd, hd, &da_n, dx);
        outer_acc(&mut grad.values[range("u_n")], &dc, &step.h_prev);
        crate::linalg::axpy(1.0, &dc, &mut grad.values[range("b_hn")]);
        matvec_t_acc(params.block("u_n"), hd, hd, &dc, &mut dh_prev);
        dh = dh_prev;
    }
    d_inputs
}
