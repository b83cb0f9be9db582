//! Gaussian likelihood, the importance-weighted bound and the surrogates
//! whose gradients give the DReG and naive IWAE estimators.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Arith, GateId, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Gradient estimator for the bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Dreg,
    Naive,
}

/// Per-element Gaussian log-density `−½[ln(2πσ²) + (y−m)²/σ²]`.
pub fn gaussian_log_density<T: Scalar, A: Arith<T>>(y: A, m: A, var: A) -> A {
    let r = y - m;
    let ln2pi = T::lit((2.0 * std::f64::consts::PI).ln());
    (r * r / var + var.ln().add_s(ln2pi)).mul_s(T::lit(-0.5))
}

/// Sum of Gaussian log-densities over matching arrays of observations, means
/// and variances.
pub fn gaussian_loglik<T: Scalar>(y: &[T], m: &[T], var: &[T]) -> Result<T> {
    if y.len() != m.len() || y.len() != var.len() {
        return Err(Error::Invalid(format!(
            "likelihood sizes differ: {} observations, {} means, {} variances",
            y.len(),
            m.len(),
            var.len()
        )));
    }
    if let Some(i) = var.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::Invalid(format!("variance {} at element {i} is not positive", var[i])));
    }
    let mut total = T::zero();
    for ((&y, &m), &v) in y.iter().zip(m).zip(var) {
        total = total + gaussian_log_density(y, m, v);
    }
    Ok(total)
}

/// `logsumexp(logw) − ln K`.
pub fn iwae_bound<T: Scalar>(logw: &[T]) -> Result<T> {
    if logw.is_empty() {
        return Err(Error::Invalid("IWAE bound needs at least one sample".into()));
    }
    Ok(scalar::logsumexp(logw) - T::lit(logw.len() as f64).ln())
}

/// Self-normalised importance weights `softmax(logw)`.
pub fn normalised_weights<T: Scalar>(logw: &[T]) -> Vec<T> {
    let m = logw.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logw.iter().map(|&l| (l - m).exp()).collect();
    let total: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// One instance's importance samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImportanceSampleSet<T> {
    pub log_lik: Vec<T>,
    pub log_prior: Vec<T>,
    pub log_q: Vec<T>,
}

impl<T: Scalar> ImportanceSampleSet<T> {
    pub fn log_weights(&self) -> Vec<T> {
        self.log_lik
            .iter()
            .zip(&self.log_prior)
            .zip(&self.log_q)
            .map(|((&l, &p), &q)| l + p - q)
            .collect()
    }

    pub fn bound(&self) -> Result<T> {
        iwae_bound(&self.log_weights())
    }
}

/// Row-wise bound of a `[B, K]` log-weight tensor, shape `[B]`.
pub fn iwae_bound_rows<'t, T: Scalar>(logw: Var<'t, T>) -> Result<Var<'t, T>> {
    let k = *logw.shape().last().ok_or_else(|| Error::Invalid("scalar log-weights".into()))?;
    Ok(logw.logsumexp_axis(logw.shape().len() - 1)?.add_scalar(-T::lit(k as f64).ln()))
}

/// Row-wise normalised weights of a `[B, K]` tensor.
pub fn normalised_weight_rows<T: Scalar>(logw: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = logw.shape().to_vec();
    let k = *shape.last().ok_or_else(|| Error::Invalid("scalar log-weights".into()))?;
    let mut out = Vec::with_capacity(logw.numel());
    for row in logw.data().chunks(k.max(1)) {
        out.extend(normalised_weights(row));
    }
    Tensor::from_vec(&shape, out)
}

/// DReG surrogate `Σ_b Σ_k stop(w̃_bk)·logw_bk`.
///
/// `gate` must sit on every reparameterised base sample, and `logw` must have
/// been built with the variational parameters stopped inside `log q`. Binding
/// the gate to `w̃` makes the encoder path carry `w̃²`, while parameters
/// reaching `logw` directly see `w̃`.
pub fn dreg_surrogate<'t, T: Scalar>(logw: Var<'t, T>, gate: GateId) -> Result<Var<'t, T>> {
    let tape = logw.tape();
    let w = normalised_weight_rows(&logw.value())?;
    tape.bind_gate(gate, w.clone());
    Ok((tape.constant(w) * logw).sum())
}

/// Naive surrogate: the summed bounds themselves.
pub fn naive_surrogate<'t, T: Scalar>(logw: Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(iwae_bound_rows(logw)?.sum())
}
