//! The generative model and its amortised posterior assembled on one tape
//! per micro-batch: parameter layout and initialisation, the batched
//! importance-weighted objective and posterior predictive summaries.

mod params;

pub use params::{ParamStore, ParamVars};

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{GateId, Tape, Tensor, Var};
use crate::config::{ExperimentConfig, InitialDensity, NoiseKind, OBSERVED_DENSITY_FLOOR};
use crate::data::{CassetteCatalog, Instance};
use crate::dynamics::whitebox::{self, Kinetics, WhiteBoxParams};
use crate::dynamics::{observe, BlackBoxConfig, BlackBoxNets, ModelKind, SIGNALS};
use crate::error::{Error, Result};
use crate::objective::{self, Estimator};
use crate::posterior::{prior_log_density, Block, DimVars, EncoderConfig, EncoderVars, LatentLayout};
use crate::solver::{simulate, simulate_with_noise, TimeGrid};

type V<'t> = Var<'t, f64>;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Map from a latent's value to the model parameter it stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// `1 + z`, for Hill coefficients.
    OnePlus,
    /// `sigmoid(z)`, for leak fractions.
    Logistic,
}

impl Transform {
    fn for_name(name: &str) -> Self {
        match name {
            "n_R" | "n_S" => Transform::OnePlus,
            "eps76" | "eps81" => Transform::Logistic,
            _ => Transform::Identity,
        }
    }

    fn apply<'t>(self, z: V<'t>) -> V<'t> {
        match self {
            Transform::Identity => z,
            Transform::OnePlus => z.add_scalar(1.0),
            Transform::Logistic => z.sigmoid(),
        }
    }

    pub fn apply_f64(self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::OnePlus => 1.0 + z,
            Transform::Logistic => crate::scalar::sigmoid(z),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub kind: ModelKind,
    pub noise: NoiseKind,
    pub initial_density: InitialDensity,
    pub layout: LatentLayout,
    pub transforms: Vec<Transform>,
    pub fixed: BTreeMap<String, f64>,
    pub encoder: EncoderConfig,
    pub blackbox: BlackBoxConfig,
    pub catalog: CassetteCatalog,
    pub grid: TimeGrid<f64>,
    /// Per-signal scale: encoder input normaliser and unit of the noise latents.
    pub scale: [f64; 4],
}

/// How gradients are to be taken through one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pass {
    /// Values only.
    Eval,
    Train(Estimator),
}

/// Tape nodes of one batched forward pass.
pub struct Forward<'t> {
    /// `[B, K]` log-weights.
    pub logw: V<'t>,
    /// DReG gate on the base samples, when training with DReG.
    pub gate: Option<GateId>,
    /// Latent states per time, each `[B, K]`.
    pub states: Vec<Vec<V<'t>>>,
    /// Predicted signal means per time, each `[B, K]`.
    pub signals: Vec<[V<'t>; 4]>,
    /// Observation variances per time, each broadcastable to `[B, K]`.
    pub variances: Vec<[V<'t>; 4]>,
}

/// Posterior predictive summary and bound for one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub bound: f64,
    pub mean: [Vec<f64>; 4],
    pub std: [Vec<f64>; 4],
    /// Largest self-normalised weight.
    pub max_weight: f64,
}

impl Model {
    /// Build from a config, the dataset's common time grid and per-signal
    /// scales (normally the training-set maxima).
    pub fn new(cfg: &ExperimentConfig, catalog: CassetteCatalog, times: Vec<f64>, scale: [f64; 4]) -> Result<Self> {
        cfg.validate()?;
        if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Invalid(format!("signal scales must be positive, got {scale:?}")));
        }
        let layout = cfg.layout()?;
        let transforms = match cfg.model.kind {
            ModelKind::Whitebox => layout.specs.iter().map(|s| Transform::for_name(&s.name)).collect(),
            ModelKind::Blackbox => vec![Transform::Identity; layout.len()],
        };
        let grid = TimeGrid::new(times, cfg.model.substeps)?;
        let m = Self {
            kind: cfg.model.kind,
            noise: cfg.model.noise,
            initial_density: cfg.model.initial_density,
            layout,
            transforms,
            fixed: cfg.model.fixed.clone(),
            encoder: cfg.encoder.clone(),
            blackbox: cfg.model.blackbox.clone(),
            catalog,
            grid,
            scale,
        };
        if m.layout.count(Block::Individual) > 0 {
            m.encoder.feature_len(m.grid.len())?;
        }
        Ok(m)
    }

    pub fn n_times(&self) -> usize {
        self.grid.len()
    }

    fn psi_len(&self) -> usize {
        self.layout.len() - self.n_sigma() + 2 + self.catalog.code_len()
    }

    fn n_sigma(&self) -> usize {
        self.layout.specs.iter().filter(|s| s.name.starts_with("sigma_")).count()
    }

    /// `(name, shape)` of every parameter tensor.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let (np, ng, ni) = (
            self.layout.count(Block::Population),
            self.layout.count(Block::Group),
            self.layout.count(Block::Individual),
        );
        let g = self.catalog.code_len();
        let mut out = Vec::new();
        if np > 0 {
            out.push(("q.pop.mean".to_string(), vec![1, np]));
            out.push(("q.pop.log_std".to_string(), vec![1, np]));
        }
        if ng > 0 {
            for n in ["q.group.nu", "q.group.eta", "theta.group.w1", "theta.group.w2"] {
                out.push((n.to_string(), vec![g, ng]));
            }
        }
        if ni > 0 {
            out.extend(self.encoder.param_shapes(self.n_times(), g, ni)?);
        }
        if self.kind == ModelKind::Blackbox {
            out.extend(self.blackbox.param_shapes(self.psi_len(), self.noise == NoiseKind::TimeVarying));
        }
        Ok(out)
    }

    /// Initial parameters: variational means at the prior means, standard
    /// deviations at `min(prior std, 0.1)`, small random network weights.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Result<ParamStore> {
        let init_lstd = |i: usize| self.layout.specs[i].prior.std.min(0.1).ln();
        let n_blocks = self.catalog.blocks.len() as f64;
        let mut store = ParamStore::default();
        for (name, shape) in self.param_shapes()? {
            let numel: usize = shape.iter().product();
            let mut normal = |sd: f64| -> Tensor<f64> {
                let d = (0..numel).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
                Tensor::from_vec(&shape, d).expect("shape")
            };
            let block_fill = |f: &dyn Fn(usize) -> f64, block: Block| {
                let idx = self.layout.block(block);
                let data = (0..numel).map(|k| f(idx[k % idx.len()])).collect();
                Tensor::from_vec(&shape, data).expect("shape")
            };
            let t = match name.as_str() {
                "q.pop.mean" => block_fill(&|i| self.layout.specs[i].prior.mean, Block::Population),
                "q.pop.log_std" => block_fill(&init_lstd, Block::Population),
                "q.group.nu" => block_fill(&|i| self.layout.specs[i].prior.mean / n_blocks, Block::Group),
                "q.group.eta" => block_fill(&|i| init_lstd(i) / n_blocks, Block::Group),
                "phi.ind.mean_b" => block_fill(&|i| self.layout.specs[i].prior.mean, Block::Individual),
                "phi.ind.lstd_b" => block_fill(&init_lstd, Block::Individual),
                "phi.ind.conv_w" => normal((1.0 / (4 * self.encoder.width) as f64).sqrt()),
                "phi.ind.w" => normal((1.0 / shape[0] as f64).sqrt()),
                "phi.ind.mean_w" | "phi.ind.lstd_w" => normal(0.01 / (shape[0] as f64).sqrt()),
                n if n.starts_with("theta.bb.") && n.ends_with(".w1") => normal((1.0 / shape[0] as f64).sqrt()),
                n if n.starts_with("theta.bb.") && n.ends_with(".w2") => normal(0.1 / (shape[0] as f64).sqrt()),
                _ => Tensor::zeros(&shape),
            };
            store.insert(&name, t);
        }
        Ok(store)
    }

    /// Standard-normal draws, one `[B, K]` tensor per latent dimension.
    pub fn draw_noise<R: Rng>(&self, rng: &mut R, b: usize, k: usize) -> Vec<Tensor<f64>> {
        (0..self.layout.len())
            .map(|_| {
                let d = (0..b * k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                Tensor::from_vec(&[b, k], d).expect("shape")
            })
            .collect()
    }

    fn check_instance(&self, inst: &Instance) -> Result<()> {
        if inst.times != self.grid.times() {
            return Err(Error::Invalid(format!("instance `{}` does not use the model's time grid", inst.id)));
        }
        if inst.g.len() != self.catalog.code_len() {
            return Err(Error::GroupCode(format!("instance `{}` has a code of the wrong length", inst.id)));
        }
        Ok(())
    }

    /// Batched forward pass. `eps` holds one `[B, K]` noise tensor per latent.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape<f64>,
        params: &ParamVars<'t>,
        batch: &[&Instance],
        eps: &[Tensor<f64>],
        pass: Pass,
    ) -> Result<Forward<'t>> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::Invalid("empty batch".into()));
        }
        if eps.len() != self.layout.len() {
            return Err(Error::Invalid(format!("{} noise tensors for {} latents", eps.len(), self.layout.len())));
        }
        let k = eps.first().map_or(1, |e| e.shape()[1]);
        for inst in batch {
            self.check_instance(inst)?;
        }
        let t_len = self.n_times();
        let gl = self.catalog.code_len();
        let bk = [b, k];

        let g = tape.constant(Tensor::from_vec(&[b, gl], batch.iter().flat_map(|i| i.g.clone()).collect())?);
        let u_log: Vec<f64> = batch.iter().flat_map(|i| i.u.map(f64::ln_1p)).collect();
        let u = tape.constant(Tensor::from_vec(&[b, 2], u_log.clone())?);

        let (gate, stop) = match pass {
            Pass::Eval => (None, false),
            Pass::Train(Estimator::Dreg) => (Some(tape.new_gate()), true),
            Pass::Train(Estimator::Naive) => (None, false),
        };

        // Variational factors per block.
        let pop = match (params.get("q.pop.mean"), params.get("q.pop.log_std")) {
            (Some(m), Some(s)) => Some((m, s)),
            _ => None,
        };
        let group = if self.layout.count(Block::Group) > 0 {
            let nu = g.matmul(params.req("q.group.nu")?)?;
            let eta = g.matmul(params.req("q.group.eta")?)?;
            let scale = g.matmul(params.req("theta.group.w1")?)?.exp();
            let shift = g.matmul(params.req("theta.group.w2")?)?;
            Some((nu, eta, scale, shift))
        } else {
            None
        };
        let ind = if self.layout.count(Block::Individual) > 0 {
            let mut y = Vec::with_capacity(b * 4 * t_len);
            for inst in batch {
                for (s, row) in inst.y.iter().enumerate() {
                    y.extend(row.iter().map(|v| v / self.scale[s]));
                }
            }
            let y = tape.constant(Tensor::from_vec(&[b, 4, t_len], y)?);
            let enc = EncoderVars::from_lookup(|n| params.get(n))?;
            Some(enc.encode(&self.encoder, y, u, g)?)
        } else {
            None
        };

        let zero = tape.constant(Tensor::zeros(&bk));
        let mut log_q = zero;
        let mut log_p = zero;
        let mut values: BTreeMap<&str, V<'t>> = BTreeMap::new();
        let mut psi = Vec::new();
        for (i, spec) in self.layout.specs.iter().enumerate() {
            let j = self.layout.block_position(i);
            let col = |x: V<'t>| x.slice(1, j, 1);
            let (mean, log_std) = match spec.block() {
                Block::Population => {
                    let (m, s) = pop.ok_or_else(|| Error::Invalid("population parameters missing".into()))?;
                    (col(m)?, col(s)?)
                }
                Block::Group => {
                    let (nu, eta, _, _) = group.as_ref().expect("group block present");
                    (col(*nu)?, col(*eta)?)
                }
                Block::Individual => {
                    let (m, s) = ind.as_ref().expect("individual block present");
                    (col(*m)?, col(*s)?)
                }
            };
            let dim = DimVars { mean, log_std, positive: spec.positive() };
            let base = dim.sample_base(tape.constant(eps[i].clone()), gate);
            log_q = log_q + dim.log_density(base, stop);
            log_p = log_p + prior_log_density(tape, base, &spec.prior);
            let base = match (&group, spec.block()) {
                (Some((_, _, scale, shift)), Block::Group) => base * col(*scale)? + col(*shift)?,
                _ => base,
            };
            let z = if spec.positive() { base.exp() } else { base };
            let value = self.transforms[i].apply(z);
            if !spec.name.starts_with("sigma_") {
                psi.push(value);
            }
            values.insert(spec.name.as_str(), value);
        }
        for (name, v) in &self.fixed {
            values.insert(name.as_str(), tape.scalar_const(*v));
        }

        let first_od = tape.constant(Tensor::from_vec(
            &[b, 1],
            batch.iter().map(|i| i.y[0][0].max(OBSERVED_DENSITY_FLOOR)).collect(),
        )?);
        let (states, var_traj) = match self.kind {
            ModelKind::Whitebox => {
                let p = WhiteBoxParams::try_from_fn(|n| values.get(n).copied())?;
                let c6 = tape.constant(Tensor::from_vec(&[b, 1], batch.iter().map(|i| i.u[0]).collect())?);
                let c12 = tape.constant(Tensor::from_vec(&[b, 1], batch.iter().map(|i| i.u[1]).collect())?);
                let kin = Kinetics::new(p, c6, c12);
                let c0 = match self.initial_density {
                    InitialDensity::Latent => values
                        .get("c0")
                        .copied()
                        .ok_or_else(|| Error::Invalid("c0 missing".into()))?
                        .broadcast_to(&bk)?,
                    InitialDensity::Observed => first_od.broadcast_to(&bk)?,
                };
                let mut x0 = vec![zero; whitebox::N_STATES];
                x0[whitebox::C] = c0;
                (simulate(|t, x: &[V<'t>]| kin.rhs(t, x), x0, &self.grid)?.states, None)
            }
            ModelKind::Blackbox => {
                for j in 0..2 {
                    psi.push(tape.constant(Tensor::from_vec(&[b, 1], u_log.iter().skip(j).step_by(2).copied().collect())?));
                }
                for j in 0..gl {
                    psi.push(g.slice(1, j, 1)?);
                }
                let tv = self.noise == NoiseKind::TimeVarying;
                let nets = BlackBoxNets::from_lookup(tv, |n| params.get(n))?.prepare(&psi, &bk)?;
                let x_init = params.req("theta.bb.x_init")?.softplus();
                let mut x0 = vec![first_od.broadcast_to(&bk)?];
                for j in 1..self.blackbox.n_states {
                    x0.push(x_init.slice(1, j, 1)?.broadcast_to(&bk)?);
                }
                let rhs_x = |_: f64, x: &[V<'t>]| nets.rhs_x(x).expect("black-box state shapes are fixed");
                if tv {
                    let v_init = params.req("theta.bb.v_init")?.softplus();
                    let v0 = (0..4).map(|j| v_init.slice(1, j, 1)?.broadcast_to(&bk)).collect::<Result<Vec<_>>>()?;
                    let (xs, vs) = simulate_with_noise(
                        |t, x: &[V<'t>], _v: &[V<'t>]| rhs_x(t, x),
                        |_, v: &[V<'t>], x: &[V<'t>]| nets.rhs_v(v, x).expect("black-box noise shapes are fixed"),
                        x0,
                        v0,
                        &self.grid,
                    )?;
                    (xs.states, Some(vs.states))
                } else {
                    (simulate(rhs_x, x0, &self.grid)?.states, None)
                }
            }
        };

        let signals: Vec<[V<'t>; 4]> = states.iter().map(|x| observe(x, self.kind)).collect::<Result<_>>()?;
        let y_at = |s: usize, t: usize| -> Result<V<'t>> {
            Ok(tape.constant(Tensor::from_vec(&[b, 1], batch.iter().map(|i| i.y[s][t]).collect())?))
        };
        let mut log_lik = zero;
        let variances: Vec<[V<'t>; 4]> = match var_traj {
            Some(vs) => {
                for (t, (m, v)) in signals.iter().zip(&vs).enumerate() {
                    for s in 0..4 {
                        log_lik = log_lik + objective::gaussian_log_density::<f64, _>(y_at(s, t)?, m[s], v[s]);
                    }
                }
                vs.into_iter().map(|v| [v[0], v[1], v[2], v[3]]).collect()
            }
            None => {
                let mut var = [zero; 4];
                for (s, name) in SIGNALS.iter().enumerate() {
                    let key = format!("sigma_{name}");
                    let sigma = *values
                        .get(key.as_str())
                        .ok_or_else(|| Error::Invalid(format!("{key} missing")))?;
                    let v = sigma.square().mul_scalar(self.scale[s] * self.scale[s]);
                    let mut ss = zero;
                    for (t, m) in signals.iter().enumerate() {
                        ss = ss + (y_at(s, t)? - m[s]).square();
                    }
                    let ll = (ss / v + v.ln().add_scalar(LN_2PI).mul_scalar(t_len as f64)).mul_scalar(-0.5);
                    log_lik = log_lik + ll;
                    var[s] = v;
                }
                vec![var; t_len]
            }
        };
        let logw = log_lik + log_p - log_q;
        Ok(Forward { logw, gate, states, signals, variances })
    }

    /// Surrogate whose gradient is the chosen estimator of the gradient of
    /// the summed per-instance bounds, plus the `[B]` bound values.
    pub fn surrogate<'t>(&self, fwd: &Forward<'t>, estimator: Estimator) -> Result<(V<'t>, Vec<f64>)> {
        let bounds = objective::iwae_bound_rows(fwd.logw)?.value().data().to_vec();
        let s = match (estimator, fwd.gate) {
            (Estimator::Dreg, Some(gate)) => objective::dreg_surrogate(fwd.logw, gate)?,
            (Estimator::Dreg, None) => return Err(Error::Invalid("DReG needs a gated forward pass".into())),
            (Estimator::Naive, _) => objective::naive_surrogate(fwd.logw)?,
        };
        Ok((s, bounds))
    }

    /// Gradient of the summed bounds of `batch` (estimator applied), in
    /// parameter order, and the per-instance bounds.
    pub fn batch_gradients(
        &self,
        params: &ParamStore,
        batch: &[&Instance],
        eps: &[Tensor<f64>],
        estimator: Estimator,
    ) -> Result<(Vec<f64>, Vec<Tensor<f64>>)> {
        let tape = Tape::new();
        let vars = params.on_tape(&tape);
        let fwd = self.forward(&tape, &vars, batch, eps, Pass::Train(estimator))?;
        let (s, bounds) = self.surrogate(&fwd, estimator)?;
        if let Some(i) = bounds.iter().position(|b| !b.is_finite()) {
            return Err(Error::Numerical(format!("non-finite bound for instance `{}`", batch[i].id)));
        }
        let grads = tape.backward(s)?;
        let out = vars.iter().map(|(_, v)| grads.wrt(v)).collect();
        Ok((bounds, out))
    }

    /// L2 penalty over the encoder weights and its gradient, in parameter order.
    pub fn l2_penalty(&self, params: &ParamStore) -> (f64, Vec<Tensor<f64>>) {
        let lam = self.encoder.l2;
        let mut total = 0.0;
        let grads = params
            .iter()
            .map(|(n, t)| {
                if lam > 0.0 && EncoderConfig::penalised().contains(&n) {
                    total += lam * t.data().iter().map(|v| v * v).sum::<f64>();
                    t.map(|v| 2.0 * lam * v)
                } else {
                    Tensor::zeros(t.shape())
                }
            })
            .collect();
        (total, grads)
    }

    /// Bounds and posterior predictive summaries with `k` importance samples
    /// drawn `chunk` at a time. The predictive includes observation noise.
    pub fn predict<R: Rng>(
        &self,
        params: &ParamStore,
        batch: &[&Instance],
        k: usize,
        chunk: usize,
        rng: &mut R,
    ) -> Result<Vec<Prediction>> {
        let b = batch.len();
        let t_len = self.n_times();
        let mut logw: Vec<Vec<f64>> = vec![Vec::with_capacity(k); b];
        // [instance][signal][time] -> per-sample (mean, variance)
        let mut samples: Vec<Vec<Vec<Vec<(f64, f64)>>>> = vec![vec![vec![Vec::with_capacity(k); t_len]; 4]; b];
        let mut done = 0;
        while done < k {
            let kc = chunk.min(k - done);
            let eps = self.draw_noise(rng, b, kc);
            let tape = Tape::new();
            let vars = params.on_tape(&tape);
            let fwd = self.forward(&tape, &vars, batch, &eps, Pass::Eval)?;
            let lw = fwd.logw.value();
            for (n, row) in lw.data().chunks(kc).enumerate() {
                logw[n].extend_from_slice(row);
            }
            for t in 0..t_len {
                for s in 0..4 {
                    let v = fwd.variances[t][s].value().broadcast_to(&[b, kc])?;
                    let m = fwd.signals[t][s].value();
                    for n in 0..b {
                        for j in 0..kc {
                            let i = n * kc + j;
                            samples[n][s][t].push((m.data()[i], v.data()[i]));
                        }
                    }
                }
            }
            done += kc;
        }
        let mut out = Vec::with_capacity(b);
        for n in 0..b {
            let bound = objective::iwae_bound(&logw[n])?;
            let w = objective::normalised_weights(&logw[n]);
            let mut mean: [Vec<f64>; 4] = Default::default();
            let mut std: [Vec<f64>; 4] = Default::default();
            for s in 0..4 {
                for t in 0..t_len {
                    let (mut m1, mut m2) = (0.0, 0.0);
                    for (wk, (m, v)) in w.iter().zip(&samples[n][s][t]) {
                        m1 += wk * m;
                        m2 += wk * (m * m + v);
                    }
                    mean[s].push(m1);
                    std[s].push((m2 - m1 * m1).max(0.0).sqrt());
                }
            }
            let max_weight = w.iter().copied().fold(0.0, f64::max);
            out.push(Prediction { bound, mean, std, max_weight });
        }
        Ok(out)
    }

    /// Posterior means of the group-level parameters for a device code,
    /// including the decoder conditioning, in layout order.
    pub fn group_posterior_means(&self, params: &ParamStore, g: &[f64]) -> Result<Vec<(String, f64)>> {
        crate::posterior::validate_group_code(g, &self.catalog.block_sizes())?;
        let get = |n: &str| params.get(n).ok_or_else(|| Error::Invalid(format!("missing parameter `{n}`")));
        let (nu, eta, w1, w2) = (get("q.group.nu")?, get("q.group.eta")?, get("theta.group.w1")?, get("theta.group.w2")?);
        let ng = nu.shape()[1];
        let dot = |t: &Tensor<f64>, j: usize| g.iter().enumerate().fold(0.0, |acc, (r, &gr)| acc + gr * t.data()[r * ng + j]);
        let mut out = Vec::new();
        for i in self.layout.block(Block::Group) {
            let j = self.layout.block_position(i);
            let spec = &self.layout.specs[i];
            let (mu, sd, s, shift) = (dot(nu, j), dot(eta, j).exp(), dot(w1, j).exp(), dot(w2, j));
            let v = if spec.positive() {
                (s * mu + shift + 0.5 * s * s * sd * sd).exp()
            } else {
                s * mu + shift
            };
            out.push((spec.name.clone(), self.transforms[i].apply_f64(v)));
        }
        Ok(out)
    }
}
