#![allow(dead_code)]

use hds_core::autodiff::{Tape, Tensor, Var};

/// Central finite differences of a scalar function of several tensors.
pub fn finite_diff(
    f: &dyn Fn(&[Tensor<f64>]) -> f64,
    inputs: &[Tensor<f64>],
    step: f64,
) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[i].numel());
        for j in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            let x = inputs[i].data()[j];
            let h = step * x.abs().max(1.0);
            plus[i].data_mut()[j] = x + h;
            minus[i].data_mut()[j] = x - h;
            g.push((f(&plus) - f(&minus)) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Reverse-mode gradients of `build` evaluated on fresh leaves.
pub fn reverse_grad(
    build: &dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
    inputs: &[Tensor<f64>],
) -> (f64, Vec<Vec<f64>>) {
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let root = build(&tape, &vars);
    let grads = tape.backward(root).unwrap();
    let gs = vars.iter().map(|v| grads.wrt(*v).data().to_vec()).collect();
    (root.item(), gs)
}

pub fn value_of(
    build: &dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
    inputs: &[Tensor<f64>],
) -> f64 {
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    build(&tape, &vars).item()
}

/// Max over components of |a-b| / max(|a|,|b|), counting |a-b| < abs_tol as a match.
pub fn max_rel_err(a: &[Vec<f64>], b: &[Vec<f64>], abs_tol: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        for (&p, &q) in x.iter().zip(y) {
            let d = (p - q).abs();
            if d < abs_tol {
                continue;
            }
            worst = worst.max(d / p.abs().max(q.abs()));
        }
    }
    worst
}

/// Compare reverse mode to finite differences; returns the worst relative error.
pub fn gradcheck(
    build: &dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
    inputs: &[Tensor<f64>],
    step: f64,
    abs_tol: f64,
) -> f64 {
    let (_, rev) = reverse_grad(build, inputs);
    let fd = finite_diff(&|xs| value_of(build, xs), inputs, step);
    max_rel_err(&rev, &fd, abs_tol)
}
