#![allow(dead_code)]
//! Measurements shared by the integration tests and the acceptance report.

use hds_core::autodiff::{Tape, Tensor};
use hds_core::config::ExperimentConfig;
use hds_core::data::{synth_generate, CassetteCatalog, Dataset, SynthSpec};
use hds_core::model::{Model, ParamStore};
use hds_core::objective::Estimator;
use hds_core::solver::{simulate, TimeGrid};
use hds_core::training::build_model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Absolute error at t = 1 of Heun on x' = -x, x(0) = 1, for h = 1/8 .. 1/64.
pub fn heun_decay_errors() -> Vec<(f64, f64)> {
    [8usize, 16, 32, 64]
        .iter()
        .map(|&n| {
            let grid = TimeGrid::new(vec![0.0, 1.0], n).unwrap();
            let traj = simulate(|_, x: &[f64]| vec![-x[0]], vec![1.0], &grid).unwrap();
            (1.0 / n as f64, (traj.component(0)[1] - (-1.0f64).exp()).abs())
        })
        .collect()
}

/// Independent scalar oracle for one binding fraction.
pub fn hill_oracle(c6: f64, c12: f64, k6: f64, k12: f64, n: f64) -> f64 {
    let a = k6 * c6;
    let b = k12 * c12;
    (a.powf(n) + b.powf(n)) / (1.0 + a + b).powf(n)
}

pub fn response_oracle(r: f64, s: f64, b_r: f64, b_s: f64, k_gr: f64, k_gs: f64, eps: f64) -> f64 {
    let num = eps + k_gr * r.powi(2) * b_r + k_gs * s.powi(2) * b_s;
    let den = 1.0 + k_gr * r.powi(2) * b_r + k_gs * s.powi(2) * b_s;
    num / den
}

/// Epidemic-style three-state system integrated over 20 Heun steps;
/// returns the worst relative error of the gradient of a weighted final
/// state with respect to `(a, b, x0)` over `points` random draws.
pub fn three_state_gradcheck(points: usize, seed: u64) -> f64 {
    fn loss<'t>(inp: &[f64], tape: Option<&'t Tape<f64>>) -> (f64, Vec<f64>) {
        let grid = TimeGrid::equispaced(0.0, 2.0, 11, 2).unwrap();
        let w = [0.7, -1.3, 0.4];
        match tape {
            None => {
                let rhs = |_: f64, x: &[f64]| {
                    let (a, b) = (inp[0], inp[1]);
                    vec![-a * x[0] * x[1], a * x[0] * x[1] - b * x[1], b * x[1]]
                };
                let tr = simulate(rhs, inp[2..5].to_vec(), &grid).unwrap();
                let last = tr.states.last().unwrap();
                (last.iter().zip(w).map(|(x, w)| x * w).sum(), vec![])
            }
            Some(t) => {
                let v: Vec<_> = inp.iter().map(|&x| t.scalar_var(x)).collect();
                let (a, b) = (v[0], v[1]);
                let rhs = |_: f64, x: &[hds_core::autodiff::Var<'t, f64>]| {
                    vec![-(a * x[0] * x[1]), a * x[0] * x[1] - b * x[1], b * x[1]]
                };
                let tr = simulate(rhs, v[2..5].to_vec(), &grid).unwrap();
                let last = tr.states.last().unwrap();
                let mut out = last[0].mul_scalar(w[0]);
                for i in 1..3 {
                    out = out + last[i].mul_scalar(w[i]);
                }
                let g = t.backward(out).unwrap();
                (out.item(), v.iter().map(|&x| g.wrt(x).item()).collect())
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let inp: Vec<f64> = vec![
            rng.random_range(0.5..2.0),
            rng.random_range(0.1..1.0),
            rng.random_range(0.5..1.0),
            rng.random_range(0.05..0.5),
            rng.random_range(0.0..0.2),
        ];
        let tape = Tape::new();
        let (_, rev) = loss(&inp, Some(&tape));
        for i in 0..inp.len() {
            let h = 1e-6 * inp[i].abs().max(1.0);
            let (mut p, mut m) = (inp.clone(), inp.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (loss(&p, None).0 - loss(&m, None).0) / (2.0 * h);
            let d = (fd - rev[i]).abs();
            if d > 1e-12 {
                worst = worst.max(d / fd.abs().max(rev[i].abs()));
            }
        }
    }
    worst
}

/// Small white-box problem: one device, two treatments, a short grid.
pub fn small_whitebox() -> (ExperimentConfig, Dataset, Model) {
    let spec = SynthSpec {
        devices: vec!["R33-S34".into()],
        c6: vec![5.0],
        c12: vec![50.0],
        n_times: 8,
        t_end: 12.0,
        ..Default::default()
    };
    let (d, _) = synth_generate(&spec, &CassetteCatalog::default(), 4).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.model.substeps = 2;
    let model = build_model(&cfg, &d, &[0, 1]).unwrap();
    (cfg, d, model)
}

fn perturbed(base: &ParamStore, dir: &ParamStore, h: f64) -> ParamStore {
    let mut p = base.clone();
    for (t, (_, d)) in p.tensors_mut().zip(dir.iter()) {
        for (v, dv) in t.data_mut().iter_mut().zip(d.data()) {
            *v += h * dv;
        }
    }
    p
}

/// Directional-derivative check of the summed instance bounds of the
/// white-box model with frozen noise, at `points` random parameter points.
pub fn whitebox_objective_gradcheck(points: usize, seed: u64) -> f64 {
    let (_, d, model) = small_whitebox();
    let batch: Vec<_> = d.instances.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = model.init_params(&mut rng).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let eps = model.draw_noise(&mut rng, batch.len(), 3);
        let mut noise = |scale: f64| {
            let mut p = ParamStore::default();
            for (n, t) in init.iter() {
                let v = (0..t.numel()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                p.insert(n, Tensor::from_vec(t.shape(), v).unwrap());
            }
            p
        };
        let shift = noise(0.05);
        let dir = noise(1.0);
        let at = perturbed(&init, &shift, 1.0);
        let f = |p: &ParamStore| -> f64 {
            model.batch_gradients(p, &batch, &eps, Estimator::Naive).unwrap().0.iter().sum()
        };
        let (_, g) = model.batch_gradients(&at, &batch, &eps, Estimator::Naive).unwrap();
        let rev: f64 = g.iter().zip(dir.iter()).map(|(g, (_, d))| g.data().iter().zip(d.data()).map(|(a, b)| a * b).sum::<f64>()).sum();
        let h = 1e-6;
        let fd = (f(&perturbed(&at, &dir, h)) - f(&perturbed(&at, &dir, -h))) / (2.0 * h);
        worst = worst.max((fd - rev).abs() / fd.abs().max(rev.abs()));
    }
    worst
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Worst absolute difference between the library's binding fractions and
/// response functions and the scalar oracles over `draws` random draws.
pub fn formula_oracle_error(draws: usize, seed: u64) -> f64 {
    use hds_core::dynamics::{binding_fractions, response};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let c6 = if rng.random_bool(0.1) { 0.0 } else { log_uniform(&mut rng, 0.1, 5000.0) };
        let c12 = if rng.random_bool(0.1) { 0.0 } else { log_uniform(&mut rng, 0.1, 5000.0) };
        let k: Vec<f64> = (0..4).map(|_| log_uniform(&mut rng, 1e-4, 1.0)).collect();
        let (n_r, n_s) = (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0));
        let (b_r, b_s) = binding_fractions(c6, c12, k[0], k[1], k[2], k[3], n_r, n_s);
        worst = worst.max((b_r - hill_oracle(c6, c12, k[0], k[1], n_r)).abs());
        worst = worst.max((b_s - hill_oracle(c6, c12, k[2], k[3], n_s)).abs());
        let (r, s) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        let (kgr, kgs) = (log_uniform(&mut rng, 1e-3, 10.0), log_uniform(&mut rng, 1e-3, 10.0));
        let eps = rng.random_range(0.001..0.999);
        let f = response(r, s, b_r, b_s, kgr, kgs, eps);
        worst = worst.max((f - response_oracle(r, s, b_r, b_s, kgr, kgs, eps)).abs());
    }
    worst
}

/// Zero signal gives no binding and zero receivers give the leak, exactly.
pub fn formula_boundaries_exact() -> bool {
    use hds_core::dynamics::{binding_fractions, response};
    let mut ok = true;
    for n in [1.0, 1.7, 2.0, 3.5] {
        let (b_r, b_s) = binding_fractions(0.0, 0.0, 0.3, 0.02, 1.5, 0.8, n, n + 0.5);
        ok &= b_r == 0.0 && b_s == 0.0;
    }
    for eps in [1e-6, 0.05, 0.5, 0.999] {
        ok &= response(0.0, 0.0, 0.7, 0.2, 3.0, 4.0, eps) == eps;
    }
    ok
}

/// Smallest latent state value over every instance, sample and grid time.
pub fn min_state(model: &Model, params: &ParamStore, instances: &[&hds_core::data::Instance], k: usize, seed: u64) -> f64 {
    use hds_core::model::Pass;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = model.draw_noise(&mut rng, instances.len(), k);
    let tape = Tape::new();
    let vars = params.on_tape(&tape);
    let fwd = model.forward(&tape, &vars, instances, &eps, Pass::Eval).unwrap();
    fwd.states
        .iter()
        .flatten()
        .flat_map(|v| v.value().data().to_vec())
        .fold(f64::INFINITY, f64::min)
}

/// Every instance sits in exactly one fold, fold sizes differ by at most
/// one, and so do each device's counts across folds.
pub fn partition_is_valid(d: &Dataset, folds: &hds_core::data::Folds) -> bool {
    let n = folds.n_folds;
    if folds.assignment.len() != d.len() || folds.assignment.iter().any(|&f| f >= n) {
        return false;
    }
    let mut seen = vec![0usize; d.len()];
    for f in 0..n {
        let s = folds.split(f);
        if s.train.len() + s.test.len() != d.len() || s.test.iter().any(|i| s.train.contains(i)) {
            return false;
        }
        for &i in &s.test {
            seen[i] += 1;
        }
    }
    let spread = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap();
    if seen.iter().any(|&c| c != 1) || spread(&folds.sizes()) > 1 {
        return false;
    }
    d.devices().iter().all(|dev| {
        let mut per = vec![0usize; n];
        for (i, inst) in d.instances.iter().enumerate() {
            if &inst.device == dev {
                per[folds.assignment[i]] += 1;
            }
        }
        spread(&per) <= 1
    })
}
