//! Block-conditional mean-field posterior over population, group and
//! individual latents, plus the prior densities they are scored against.
//!
//! Every latent has an underlying Gaussian "base" value. Positive latents are
//! log-normal (`z = exp(base)`); their densities carry the `-ln z = -base`
//! Jacobian. Batched code works on one `[B, K]` tensor of base values per
//! latent dimension.

mod encoder;

pub use encoder::{EncoderConfig, EncoderVars};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Arith, GateId, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Population,
    Group,
    Individual,
}

impl Block {
    pub fn tag(self) -> char {
        match self {
            Block::Population => 'P',
            Block::Group => 'G',
            Block::Individual => 'I',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Normal,
    Lognormal,
}

/// Prior for one latent; `mean` and `std` describe the underlying Gaussian
/// (of `ln z` for log-normal latents).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub block: Block,
    pub kind: DistKind,
    pub mean: f64,
    pub std: f64,
}

impl PriorSpec {
    pub fn standard(block: Block) -> Self {
        Self { block, kind: DistKind::Normal, mean: 0.0, std: 1.0 }
    }

    pub fn positive(&self) -> bool {
        self.kind == DistKind::Lognormal
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentSpec {
    pub name: String,
    pub prior: PriorSpec,
}

impl LatentSpec {
    pub fn block(&self) -> Block {
        self.prior.block
    }

    pub fn positive(&self) -> bool {
        self.prior.positive()
    }
}

/// Ordered latent dimensions, grouped by block.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LatentLayout {
    pub specs: Vec<LatentSpec>,
}

impl LatentLayout {
    pub fn new(specs: Vec<LatentSpec>) -> Result<Self> {
        for (i, s) in specs.iter().enumerate() {
            if specs[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::Config(format!("duplicate latent `{}`", s.name)));
            }
            if !(s.prior.std > 0.0) || !s.prior.mean.is_finite() || !s.prior.std.is_finite() {
                return Err(Error::Config(format!("prior for `{}` needs finite mean and std > 0", s.name)));
            }
        }
        Ok(Self { specs })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Indices of the dims in `block`, in layout order.
    pub fn block(&self, block: Block) -> Vec<usize> {
        (0..self.specs.len()).filter(|&i| self.specs[i].block() == block).collect()
    }

    pub fn count(&self, block: Block) -> usize {
        self.specs.iter().filter(|s| s.block() == block).count()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    /// Position of latent `i` within its own block.
    pub fn block_position(&self, i: usize) -> usize {
        let b = self.specs[i].block();
        self.specs[..i].iter().filter(|s| s.block() == b).count()
    }
}

/// Variational parameters of one latent dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimParams<T> {
    pub mean: T,
    pub log_std: T,
    pub block: Block,
    pub positive: bool,
}

impl<T: Scalar> DimParams<T> {
    pub fn std(&self) -> T {
        self.log_std.exp()
    }
}

pub type VariationalParams<T> = Vec<DimParams<T>>;

/// Sampled latents split by block (natural scale: positive dims are `exp(base)`).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LatentBlocks<T> {
    pub population: Vec<T>,
    pub group: Vec<T>,
    pub individual: Vec<T>,
}

impl<T: Copy> LatentBlocks<T> {
    pub fn push(&mut self, block: Block, v: T) {
        match block {
            Block::Population => self.population.push(v),
            Block::Group => self.group.push(v),
            Block::Individual => self.individual.push(v),
        }
    }

    /// Values in layout order given the block tags used to build them.
    pub fn flatten(&self, blocks: &[Block]) -> Vec<T> {
        let (mut p, mut g, mut i) = (0, 0, 0);
        blocks
            .iter()
            .map(|b| match b {
                Block::Population => {
                    p += 1;
                    self.population[p - 1]
                }
                Block::Group => {
                    g += 1;
                    self.group[g - 1]
                }
                Block::Individual => {
                    i += 1;
                    self.individual[i - 1]
                }
            })
            .collect()
    }
}

/// Log-density of `N(mean, exp(log_std)^2)` at `x`.
pub fn normal_log_density<T: Scalar, A: Arith<T>>(x: A, mean: A, log_std: A) -> A {
    let z = (x - mean) / log_std.exp();
    let c = T::lit(-0.5 * (2.0 * std::f64::consts::PI).ln());
    (z * z).mul_s(T::lit(-0.5)) - log_std.add_s(-c)
}

/// Log-density of a latent from its base value; log-normal dims include the
/// `-ln z` Jacobian.
pub fn latent_log_density<T: Scalar, A: Arith<T>>(base: A, mean: A, log_std: A, positive: bool) -> A {
    let lp = normal_log_density(base, mean, log_std);
    if positive {
        lp - base
    } else {
        lp
    }
}

pub fn population_params<T: Scalar>(r: &[T], v: &[T]) -> VariationalParams<T> {
    r.iter()
        .zip(v)
        .map(|(&mean, &log_std)| DimParams { mean, log_std, block: Block::Population, positive: false })
        .collect()
}

/// Check that `g` is a concatenation of one-hot blocks of the given sizes.
pub fn validate_group_code<T: Scalar>(g: &[T], block_sizes: &[usize]) -> Result<()> {
    let total: usize = block_sizes.iter().sum();
    if g.len() != total {
        return Err(Error::GroupCode(format!("length {} but blocks sum to {total}", g.len())));
    }
    let mut off = 0;
    for (s, &k) in block_sizes.iter().enumerate() {
        let part = &g[off..off + k];
        let ones = part.iter().filter(|&&x| x == T::one()).count();
        let zeros = part.iter().filter(|&&x| x == T::zero()).count();
        if ones != 1 || zeros != k - 1 {
            return Err(Error::GroupCode(format!("block {s} is not one-hot")));
        }
        off += k;
    }
    Ok(())
}

fn dot<T: Scalar>(g: &[T], col: impl Iterator<Item = T>) -> T {
    let mut acc = T::zero();
    for (&a, b) in g.iter().zip(col) {
        acc = acc + a * b;
    }
    acc
}

/// Group factor: dimension `m` has mean `ν_m·g` and log-std `η_m·g`, where
/// `nu` and `eta` are `[G, n_G]` row-major.
pub fn group_params<T: Scalar>(
    g: &[T],
    block_sizes: &[usize],
    nu: &[T],
    eta: &[T],
    n_g: usize,
) -> Result<VariationalParams<T>> {
    validate_group_code(g, block_sizes)?;
    if nu.len() != g.len() * n_g || eta.len() != g.len() * n_g {
        return Err(Error::Invalid("group parameter tables have the wrong size".into()));
    }
    Ok((0..n_g)
        .map(|m| DimParams {
            mean: dot(g, nu.iter().skip(m).step_by(n_g).copied()),
            log_std: dot(g, eta.iter().skip(m).step_by(n_g).copied()),
            block: Block::Group,
            positive: false,
        })
        .collect())
}

/// Reparameterised draw: `mean + std·ε`, exponentiated for positive dims.
pub fn sample_latents<T: Scalar>(params: &[DimParams<T>], noise: &[T]) -> Result<LatentBlocks<T>> {
    if params.len() != noise.len() {
        return Err(Error::Invalid(format!("{} noise values for {} dims", noise.len(), params.len())));
    }
    let mut out = LatentBlocks { population: vec![], group: vec![], individual: vec![] };
    for (p, &e) in params.iter().zip(noise) {
        let base = p.mean + p.std() * e;
        out.push(p.block, if p.positive { base.exp() } else { base });
    }
    Ok(out)
}

/// `log q(z)` for natural-scale `z` in layout order.
pub fn log_q<T: Scalar>(z: &[T], params: &[DimParams<T>]) -> Result<T> {
    if z.len() != params.len() {
        return Err(Error::Invalid(format!("{} values for {} dims", z.len(), params.len())));
    }
    let mut total = T::zero();
    for (i, (&z, p)) in z.iter().zip(params).enumerate() {
        let base = if p.positive {
            if !(z > T::zero()) {
                return Err(Error::Invalid(format!("dim {i} is log-normal but z = {z}")));
            }
            z.ln()
        } else {
            z
        };
        total = total + latent_log_density(base, p.mean, p.log_std, p.positive);
    }
    Ok(total)
}

/// `log p(z)` for natural-scale `z` under the layout's priors.
pub fn log_prior<T: Scalar>(z: &[T], layout: &LatentLayout) -> Result<T> {
    let params: Vec<_> = layout
        .specs
        .iter()
        .map(|s| DimParams {
            mean: T::lit(s.prior.mean),
            log_std: T::lit(s.prior.std.ln()),
            block: s.block(),
            positive: s.positive(),
        })
        .collect();
    log_q(z, &params)
}

/// Decoder-side group conditioning of one dim's base value:
/// `base·exp(w1·g) + w2·g`, applied to `ln z` for positive dims.
pub fn condition_group_latent<T: Scalar>(z: T, g: &[T], w1: &[T], w2: &[T], positive: bool) -> T {
    let scale = dot(g, w1.iter().copied()).exp();
    let shift = dot(g, w2.iter().copied());
    if positive {
        (z.ln() * scale + shift).exp()
    } else {
        z * scale + shift
    }
}

/// Batched Gaussian factor for one latent dimension. `mean`/`log_std`
/// broadcast against the `[B, K]` noise.
#[derive(Clone, Copy, Debug)]
pub struct DimVars<'t, T: Scalar> {
    pub mean: Var<'t, T>,
    pub log_std: Var<'t, T>,
    pub positive: bool,
}

impl<'t, T: Scalar> DimVars<'t, T> {
    /// Base sample `mean + exp(log_std)·ε`. With a gate the backward signal
    /// into the variational parameters is rescaled (used by DReG).
    pub fn sample_base(&self, eps: Var<'t, T>, gate: Option<GateId>) -> Var<'t, T> {
        let base = self.mean + self.log_std.exp() * eps;
        match gate {
            Some(g) => base.grad_gate(g),
            None => base,
        }
    }

    /// `log q(base)`; with `stop_params` only the path through `base` is
    /// differentiable.
    pub fn log_density(&self, base: Var<'t, T>, stop_params: bool) -> Var<'t, T> {
        let (m, s) = if stop_params {
            (self.mean.stop_gradient(), self.log_std.stop_gradient())
        } else {
            (self.mean, self.log_std)
        };
        latent_log_density(base, m, s, self.positive)
    }
}

/// Prior log-density of a batched base value.
pub fn prior_log_density<'t, T: Scalar>(tape: &'t Tape<T>, base: Var<'t, T>, prior: &PriorSpec) -> Var<'t, T> {
    let m = tape.scalar_const(T::lit(prior.mean));
    let s = tape.scalar_const(T::lit(prior.std.ln()));
    latent_log_density(base, m, s, prior.positive())
}
