//! Declarative expression graphs evaluated onto a tape against named inputs.

use std::collections::HashMap;

use super::ops;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Input(String),
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    MatMul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Tanh(Box<Expr>),
    Relu(Box<Expr>),
    Softplus(Box<Expr>),
    Sum(Box<Expr>),
    Mean(Box<Expr>),
    LogSumExp(Box<Expr>),
    StopGradient(Box<Expr>),
    Concat(Vec<Expr>, usize),
}

impl Expr {
    pub fn input(name: &str) -> Self {
        Expr::Input(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, o: Expr) -> Self {
        Expr::Add(Box::new(self), Box::new(o))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, o: Expr) -> Self {
        Expr::Mul(Box::new(self), Box::new(o))
    }

    pub fn unary(self, f: fn(Box<Expr>) -> Expr) -> Self {
        f(Box::new(self))
    }
}

/// Evaluate `expr`, binding every input as a differentiable leaf.
/// Returns the root and the leaf created for each input name.
pub fn forward<'t, T: Scalar>(
    tape: &'t Tape<T>,
    expr: &Expr,
    inputs: &HashMap<String, Tensor<T>>,
) -> Result<(Var<'t, T>, HashMap<String, Var<'t, T>>)> {
    let mut leaves = HashMap::new();
    let root = eval(tape, expr, inputs, &mut leaves)?;
    Ok((root, leaves))
}

fn eval<'t, T: Scalar>(
    tape: &'t Tape<T>,
    e: &Expr,
    inputs: &HashMap<String, Tensor<T>>,
    leaves: &mut HashMap<String, Var<'t, T>>,
) -> Result<Var<'t, T>> {
    let mut go = |x: &Expr| eval(tape, x, inputs, leaves);
    Ok(match e {
        Expr::Input(name) => {
            if let Some(v) = leaves.get(name) {
                return Ok(*v);
            }
            let t = inputs.get(name).ok_or_else(|| Error::UnboundInput(name.clone()))?;
            let v = tape.param(name, t.clone());
            leaves.insert(name.clone(), v);
            v
        }
        Expr::Const(c) => tape.scalar_const(T::lit(*c)),
        Expr::Add(a, b) => {
            let a = go(a)?;
            a.try_add(go(b)?)?
        }
        Expr::Sub(a, b) => {
            let a = go(a)?;
            a.try_sub(go(b)?)?
        }
        Expr::Mul(a, b) => {
            let a = go(a)?;
            a.try_mul(go(b)?)?
        }
        Expr::Div(a, b) => {
            let a = go(a)?;
            a.try_div(go(b)?)?
        }
        Expr::Pow(a, b) => {
            let a = go(a)?;
            a.try_pow(go(b)?)?
        }
        Expr::MatMul(a, b) => {
            let a = go(a)?;
            a.matmul(go(b)?)?
        }
        Expr::Neg(a) => -go(a)?,
        Expr::Exp(a) => go(a)?.exp(),
        Expr::Log(a) => go(a)?.ln(),
        Expr::Tanh(a) => go(a)?.tanh(),
        Expr::Relu(a) => go(a)?.relu(),
        Expr::Softplus(a) => go(a)?.softplus(),
        Expr::Sum(a) => go(a)?.sum(),
        Expr::Mean(a) => go(a)?.mean(),
        Expr::LogSumExp(a) => go(a)?.logsumexp(),
        Expr::StopGradient(a) => go(a)?.stop_gradient(),
        Expr::Concat(parts, axis) => {
            let vs = parts.iter().map(&mut go).collect::<Result<Vec<_>>>()?;
            ops::concat(&vs, *axis)?
        }
    })
}
