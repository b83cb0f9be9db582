#![allow(dead_code)]
//! One gradient-check case per tape primitive. Inputs are drawn away from
//! kinks and singularities so central differences are well conditioned.

use hds_core::autodiff::{concat, stack, Tape, Tensor, Var};
use rand::{Rng, RngCore};

pub type Build = for<'t> fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>;

pub struct Case {
    pub name: &'static str,
    pub shapes: &'static [&'static [usize]],
    /// Sampling domain for inputs.
    pub domain: Domain,
    pub build: Build,
}

#[derive(Clone, Copy)]
pub enum Domain {
    Real,
    Positive,
    AwayFromZero,
}

fn sample(rng: &mut dyn RngCore, d: Domain) -> f64 {
    match d {
        Domain::Real => rng.random_range(-2.0..2.0),
        Domain::Positive => rng.random_range(0.2..3.0),
        Domain::AwayFromZero => {
            let m = rng.random_range(0.1..2.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        }
    }
}

pub fn draw_inputs(case: &Case, rng: &mut dyn RngCore) -> Vec<Tensor<f64>> {
    case.shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let data = (0..n).map(|_| sample(rng, case.domain)).collect();
            Tensor::from_vec(s, data).unwrap()
        })
        .collect()
}

/// Weighted sum with fixed irregular weights so every output element matters.
fn wsum<'t>(tape: &'t Tape<f64>, v: Var<'t, f64>) -> Var<'t, f64> {
    let shape = v.shape();
    let n = v.numel();
    let w: Vec<f64> = (0..n).map(|i| 0.3 + 0.17 * ((i * 7 + 3) % 11) as f64).collect();
    let w = tape.constant(Tensor::from_vec(&shape, w).unwrap());
    (v * w).sum()
}

pub fn cases() -> Vec<Case> {
    vec![
        Case { name: "add", shapes: &[&[3, 4], &[3, 4]], domain: Domain::Real, build: |t, x| wsum(t, x[0] + x[1]) },
        Case { name: "add_broadcast", shapes: &[&[3, 4], &[3, 1]], domain: Domain::Real, build: |t, x| wsum(t, x[0] + x[1]) },
        Case { name: "sub", shapes: &[&[2, 5], &[5]], domain: Domain::Real, build: |t, x| wsum(t, x[0] - x[1]) },
        Case { name: "mul", shapes: &[&[4, 3], &[1, 3]], domain: Domain::Real, build: |t, x| wsum(t, x[0] * x[1]) },
        Case { name: "div", shapes: &[&[3, 3], &[3, 3]], domain: Domain::AwayFromZero, build: |t, x| wsum(t, x[0] / x[1]) },
        Case { name: "neg", shapes: &[&[5]], domain: Domain::Real, build: |t, x| wsum(t, -x[0]) },
        Case { name: "exp", shapes: &[&[6]], domain: Domain::Real, build: |t, x| wsum(t, x[0].exp()) },
        Case { name: "log", shapes: &[&[6]], domain: Domain::Positive, build: |t, x| wsum(t, x[0].ln()) },
        Case { name: "tanh", shapes: &[&[6]], domain: Domain::Real, build: |t, x| wsum(t, x[0].tanh()) },
        Case { name: "relu", shapes: &[&[6]], domain: Domain::AwayFromZero, build: |t, x| wsum(t, x[0].relu()) },
        Case { name: "softplus", shapes: &[&[6]], domain: Domain::Real, build: |t, x| wsum(t, x[0].softplus()) },
        Case { name: "sigmoid", shapes: &[&[6]], domain: Domain::Real, build: |t, x| wsum(t, x[0].sigmoid()) },
        Case { name: "pow", shapes: &[&[4], &[4]], domain: Domain::Positive, build: |t, x| wsum(t, x[0].pow(x[1])) },
        Case { name: "powf", shapes: &[&[4]], domain: Domain::Positive, build: |t, x| wsum(t, x[0].powf(2.5)) },
        Case { name: "scalar_affine", shapes: &[&[4]], domain: Domain::Real, build: |t, x| wsum(t, x[0].mul_scalar(-1.7).add_scalar(0.3)) },
        Case { name: "sum", shapes: &[&[3, 2]], domain: Domain::Real, build: |_, x| x[0].exp().sum() },
        Case { name: "mean", shapes: &[&[3, 2]], domain: Domain::Real, build: |_, x| x[0].tanh().mean() },
        Case { name: "sum_axis", shapes: &[&[3, 4, 2]], domain: Domain::Real, build: |t, x| wsum(t, x[0].exp().sum_axis(1).unwrap()) },
        Case { name: "logsumexp", shapes: &[&[3, 5]], domain: Domain::Real, build: |t, x| wsum(t, x[0].logsumexp_axis(1).unwrap()) },
        Case { name: "logsumexp_all", shapes: &[&[7]], domain: Domain::Real, build: |_, x| x[0].logsumexp() },
        Case { name: "matmul", shapes: &[&[3, 4], &[4, 2]], domain: Domain::Real, build: |t, x| wsum(t, x[0].matmul(x[1]).unwrap()) },
        Case { name: "conv1d", shapes: &[&[2, 3, 11], &[4, 3, 3]], domain: Domain::Real, build: |t, x| wsum(t, x[0].conv1d(x[1], 2).unwrap()) },
        Case { name: "avg_pool1d", shapes: &[&[2, 3, 9]], domain: Domain::Real, build: |t, x| wsum(t, x[0].exp().avg_pool1d(2).unwrap()) },
        Case { name: "concat", shapes: &[&[2, 3], &[2, 1]], domain: Domain::Real, build: |t, x| wsum(t, concat(&[x[0].exp(), x[1]], 1).unwrap()) },
        Case { name: "stack", shapes: &[&[2, 3], &[2, 3]], domain: Domain::Real, build: |t, x| wsum(t, stack(&[x[0], x[1].tanh()], 1).unwrap()) },
        Case { name: "slice", shapes: &[&[3, 5]], domain: Domain::Real, build: |t, x| wsum(t, x[0].exp().slice(1, 1, 3).unwrap()) },
        Case { name: "reshape", shapes: &[&[2, 6]], domain: Domain::Real, build: |t, x| wsum(t, x[0].tanh().reshape(&[3, 4]).unwrap()) },
        Case { name: "broadcast_to", shapes: &[&[3, 1]], domain: Domain::Real, build: |t, x| wsum(t, x[0].exp().broadcast_to(&[2, 3, 4]).unwrap()) },
    ]
}

/// Random composite of {exp, log, mul, add, tanh, softplus} over five scalars.
pub fn random_composite<'t>(tape: &'t Tape<f64>, x: &[Var<'t, f64>], recipe: &[u8]) -> Var<'t, f64> {
    let mut acc = x[0];
    for (i, &r) in recipe.iter().enumerate() {
        let other = x[(i + 1) % x.len()];
        acc = match r % 6 {
            0 => acc.tanh().exp(),
            1 => (acc.square().add_scalar(1.0)).ln(),
            2 => acc * other,
            3 => acc + other,
            4 => acc.tanh(),
            _ => acc.softplus(),
        };
    }
    let _ = tape;
    acc
}

pub fn rng_recipe(rng: &mut dyn RngCore, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..6u8)).collect()
}
