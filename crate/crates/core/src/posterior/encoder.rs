//! Individual-level encoder: strided conv over time, relu, average pool,
//! then a bias-free tanh layer over `[features; log1p(u); g]` and two linear
//! heads for means and log-stds.

use serde::{Deserialize, Serialize};

use crate::autodiff::{concat, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub filters: usize,
    pub width: usize,
    pub stride: usize,
    pub pool: usize,
    pub hidden: usize,
    pub l2: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { filters: 10, width: 5, stride: 2, pool: 2, hidden: 50, l2: 1e-4 }
    }
}

impl EncoderConfig {
    /// Flattened conv feature count for a series of length `t`.
    pub fn feature_len(&self, t: usize) -> Result<usize> {
        if self.filters == 0 || self.width == 0 || self.stride == 0 || self.pool == 0 || self.hidden == 0 {
            return Err(Error::Config("encoder sizes must be positive".into()));
        }
        if t < self.width {
            return Err(Error::Invalid(format!(
                "series of length {t} is shorter than the filter width {}",
                self.width
            )));
        }
        let conv = (t - self.width) / self.stride + 1;
        let pooled = conv / self.pool;
        if pooled == 0 {
            return Err(Error::Invalid(format!("series of length {t} is shorter than the receptive field")));
        }
        Ok(self.filters * pooled)
    }

    /// `(name, shape)` of every encoder tensor.
    pub fn param_shapes(&self, t: usize, n_group: usize, n_i: usize) -> Result<Vec<(String, Vec<usize>)>> {
        let d = self.feature_len(t)? + 2 + n_group;
        let h = self.hidden;
        Ok(vec![
            ("phi.ind.conv_w".into(), vec![self.filters, 4, self.width]),
            ("phi.ind.conv_b".into(), vec![1, self.filters, 1]),
            ("phi.ind.w".into(), vec![d, h]),
            ("phi.ind.mean_w".into(), vec![h, n_i]),
            ("phi.ind.mean_b".into(), vec![1, n_i]),
            ("phi.ind.lstd_w".into(), vec![h, n_i]),
            ("phi.ind.lstd_b".into(), vec![1, n_i]),
        ])
    }

    /// Names of the weights that carry the L2 penalty.
    pub fn penalised() -> [&'static str; 4] {
        ["phi.ind.conv_w", "phi.ind.w", "phi.ind.mean_w", "phi.ind.lstd_w"]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars<'t, T: Scalar> {
    pub conv_w: Var<'t, T>,
    pub conv_b: Var<'t, T>,
    pub w: Var<'t, T>,
    pub mean_w: Var<'t, T>,
    pub mean_b: Var<'t, T>,
    pub lstd_w: Var<'t, T>,
    pub lstd_b: Var<'t, T>,
}

impl<'t, T: Scalar> EncoderVars<'t, T> {
    pub fn from_lookup(mut get: impl FnMut(&str) -> Option<Var<'t, T>>) -> Result<Self> {
        let mut one = |k: &str| get(k).ok_or_else(|| Error::Invalid(format!("missing parameter `{k}`")));
        Ok(Self {
            conv_w: one("phi.ind.conv_w")?,
            conv_b: one("phi.ind.conv_b")?,
            w: one("phi.ind.w")?,
            mean_w: one("phi.ind.mean_w")?,
            mean_b: one("phi.ind.mean_b")?,
            lstd_w: one("phi.ind.lstd_w")?,
            lstd_b: one("phi.ind.lstd_b")?,
        })
    }

    /// `y`: `[B, 4, T]` scaled signals; `u`: `[B, 2]` already log1p'd; `g`:
    /// `[B, G]`. Returns `(means, log_stds)`, each `[B, n_I]`.
    pub fn encode(&self, cfg: &EncoderConfig, y: Var<'t, T>, u: Var<'t, T>, g: Var<'t, T>) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let shape = y.shape();
        if shape.len() != 3 || shape[1] != 4 {
            return Err(Error::Invalid(format!("encoder expects [B, 4, T], got {shape:?}")));
        }
        cfg.feature_len(shape[2])?;
        let b = shape[0];
        let conv = y.conv1d(self.conv_w, cfg.stride)?.try_add(self.conv_b)?.relu();
        let pooled = conv.avg_pool1d(cfg.pool)?;
        let n = pooled.numel() / b;
        let feats = pooled.reshape(&[b, n])?;
        let x = concat(&[feats, u, g], 1)?;
        let h = x.matmul(self.w)?.tanh();
        let mean = h.matmul(self.mean_w)?.try_add(self.mean_b)?;
        let lstd = h.matmul(self.lstd_w)?.try_add(self.lstd_b)?;
        Ok((mean, lstd))
    }
}
