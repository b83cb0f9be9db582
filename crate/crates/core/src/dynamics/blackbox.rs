//! Neural right-hand sides: `dx/dt = ω1⁺ − x ⊙ ω2⁺` and `dv/dt = ω3⁺ − v ⊙ ω4⁺`,
//! each ω⁺ a softplus-output MLP with one tanh hidden layer over `[state; Ψ]`.
//!
//! States are passed as one tensor per component, all of the same shape
//! (typically `[B, K]`). The Ψ projection of the first layer does not change
//! during a simulation and is computed once in [`BlackBoxNets::prepare`].

use serde::{Deserialize, Serialize};

use crate::autodiff::{stack, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackBoxConfig {
    pub n_states: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub n_p: usize,
    pub n_g: usize,
    pub n_i: usize,
}

fn default_hidden() -> usize {
    25
}

impl Default for BlackBoxConfig {
    fn default() -> Self {
        Self { n_states: 5, hidden: 25, n_p: 5, n_g: 2, n_i: 5 }
    }
}

impl BlackBoxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states < 4 {
            return Err(Error::Config(format!(
                "black-box model needs at least 4 states, got {}",
                self.n_states
            )));
        }
        if self.hidden == 0 {
            return Err(Error::Config("black-box hidden width must be positive".into()));
        }
        Ok(())
    }

    /// `(name, shape)` of every θ tensor, given the Ψ width.
    pub fn param_shapes(&self, n_psi: usize, time_varying: bool) -> Vec<(String, Vec<usize>)> {
        let (m, h) = (self.n_states, self.hidden);
        let mut out = Vec::new();
        let mut net = |name: &str, n_in: usize, n_out: usize| {
            out.push((format!("theta.bb.{name}.w1"), vec![n_in + n_psi, h]));
            out.push((format!("theta.bb.{name}.b1"), vec![1, h]));
            out.push((format!("theta.bb.{name}.w2"), vec![h, n_out]));
            out.push((format!("theta.bb.{name}.b2"), vec![1, n_out]));
        };
        net("omega1", m, m);
        net("omega2", m, m);
        if time_varying {
            net("omega3", 4 + m, 4);
            net("omega4", 4 + m, 4);
        }
        out.push(("theta.bb.x_init".into(), vec![1, m]));
        if time_varying {
            out.push(("theta.bb.v_init".into(), vec![1, 4]));
        }
        out
    }
}

/// One ω⁺ network's parameters.
#[derive(Clone, Copy, Debug)]
pub struct Network<'t, T: Scalar> {
    pub w1: Var<'t, T>,
    pub b1: Var<'t, T>,
    pub w2: Var<'t, T>,
    pub b2: Var<'t, T>,
}

impl<'t, T: Scalar> Network<'t, T> {
    fn lookup(name: &str, get: &mut impl FnMut(&str) -> Option<Var<'t, T>>) -> Result<Self> {
        let mut one = |part: &str| {
            let key = format!("theta.bb.{name}.{part}");
            get(&key).ok_or_else(|| Error::Invalid(format!("missing parameter `{key}`")))
        };
        Ok(Self { w1: one("w1")?, b1: one("b1")?, w2: one("w2")?, b2: one("b2")? })
    }

    fn prepare(&self, n_state: usize, psi: Var<'t, T>) -> Result<PreparedNetwork<'t, T>> {
        let n_in = self.w1.shape()[0];
        let w_state = self.w1.slice(0, 0, n_state)?;
        let w_psi = self.w1.slice(0, n_state, n_in - n_state)?;
        let psi_proj = psi.matmul(w_psi)?.try_add(self.b1)?;
        Ok(PreparedNetwork { w_state, psi_proj, w2: self.w2, b2: self.b2 })
    }
}

#[derive(Clone, Copy, Debug)]
struct PreparedNetwork<'t, T: Scalar> {
    w_state: Var<'t, T>,
    psi_proj: Var<'t, T>,
    w2: Var<'t, T>,
    b2: Var<'t, T>,
}

impl<'t, T: Scalar> PreparedNetwork<'t, T> {
    /// `softplus(tanh(s W_s + Ψ W_Ψ + b1) W2 + b2)` for an `[N, n_state]` input.
    fn eval(&self, s: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = s.matmul(self.w_state)?.try_add(self.psi_proj)?.tanh();
        Ok(h.matmul(self.w2)?.try_add(self.b2)?.softplus())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BlackBoxNets<'t, T: Scalar> {
    pub omega1: Network<'t, T>,
    pub omega2: Network<'t, T>,
    pub noise: Option<(Network<'t, T>, Network<'t, T>)>,
}

impl<'t, T: Scalar> BlackBoxNets<'t, T> {
    pub fn from_lookup(
        time_varying: bool,
        mut get: impl FnMut(&str) -> Option<Var<'t, T>>,
    ) -> Result<Self> {
        let omega1 = Network::lookup("omega1", &mut get)?;
        let omega2 = Network::lookup("omega2", &mut get)?;
        let noise = if time_varying {
            Some((Network::lookup("omega3", &mut get)?, Network::lookup("omega4", &mut get)?))
        } else {
            None
        };
        Ok(Self { omega1, omega2, noise })
    }

    /// Fix Ψ for one simulation. `psi` holds one tensor per Ψ entry, each
    /// broadcastable to `shape`.
    pub fn prepare(&self, psi: &[Var<'t, T>], shape: &[usize]) -> Result<PreparedNets<'t, T>> {
        let tape = self.omega1.w1.tape();
        let n: usize = shape.iter().product();
        let psi = columns(tape, psi, shape)?;
        let m = self.omega2.w2.shape()[1];
        let noise = match &self.noise {
            Some((a, b)) => Some((a.prepare(4 + m, psi)?, b.prepare(4 + m, psi)?)),
            None => None,
        };
        Ok(PreparedNets {
            omega1: self.omega1.prepare(m, psi)?,
            omega2: self.omega2.prepare(m, psi)?,
            noise,
            shape: shape.to_vec(),
            n,
        })
    }
}

/// Stack per-entry tensors into an `[N, len]` matrix, N = prod(shape).
fn columns<'t, T: Scalar>(tape: &'t Tape<T>, parts: &[Var<'t, T>], shape: &[usize]) -> Result<Var<'t, T>> {
    let n: usize = shape.iter().product();
    if parts.is_empty() {
        return Ok(tape.constant(Tensor::zeros(&[n, 0])));
    }
    let full: Vec<_> = parts
        .iter()
        .map(|p| if p.shape() == shape { Ok(*p) } else { p.broadcast_to(shape) })
        .collect::<Result<_>>()?;
    let axis = shape.len();
    stack(&full, axis)?.reshape(&[n, parts.len()])
}

#[derive(Clone, Debug)]
pub struct PreparedNets<'t, T: Scalar> {
    omega1: PreparedNetwork<'t, T>,
    omega2: PreparedNetwork<'t, T>,
    noise: Option<(PreparedNetwork<'t, T>, PreparedNetwork<'t, T>)>,
    shape: Vec<usize>,
    n: usize,
}

impl<'t, T: Scalar> PreparedNets<'t, T> {
    fn split(&self, m: Var<'t, T>, k: usize) -> Result<Vec<Var<'t, T>>> {
        (0..k).map(|j| m.slice(1, j, 1)?.reshape(&self.shape)).collect()
    }

    /// `ω1⁺(x, Ψ) − x ⊙ ω2⁺(x, Ψ)`.
    pub fn rhs_x(&self, x: &[Var<'t, T>]) -> Result<Vec<Var<'t, T>>> {
        let tape = x[0].tape();
        let s = columns(tape, x, &self.shape)?;
        let prod = self.split(self.omega1.eval(s)?, x.len())?;
        let deg = self.split(self.omega2.eval(s)?, x.len())?;
        Ok(x.iter().zip(prod.iter().zip(&deg)).map(|(&x, (&p, &d))| p - x * d).collect())
    }

    /// `ω3⁺(v, x, Ψ) − v ⊙ ω4⁺(v, x, Ψ)`.
    pub fn rhs_v(&self, v: &[Var<'t, T>], x: &[Var<'t, T>]) -> Result<Vec<Var<'t, T>>> {
        let (n3, n4) = self
            .noise
            .as_ref()
            .ok_or_else(|| Error::Invalid("noise networks not configured".into()))?;
        let tape = x[0].tape();
        let all: Vec<_> = v.iter().chain(x).copied().collect();
        let s = columns(tape, &all, &self.shape)?;
        let prod = self.split(n3.eval(s)?, v.len())?;
        let deg = self.split(n4.eval(s)?, v.len())?;
        Ok(v.iter().zip(prod.iter().zip(&deg)).map(|(&v, (&p, &d))| p - v * d).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }
}
