#![allow(dead_code)]
//! One-dimensional conjugate model: z ~ N(0, 1), y | z ~ N(z, 1), scored
//! under q(z) = N(mu, exp(log_std)²).

use hds_core::autodiff::{Tape, Tensor};
use hds_core::objective::{dreg_surrogate, gaussian_log_density, iwae_bound_rows, naive_surrogate, Estimator};
use hds_core::posterior::{prior_log_density, Block, DimVars, PriorSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const Y: f64 = 1.3;
/// Deliberately off the exact posterior N(0.65, 0.5).
pub const PHI: [f64; 2] = [0.4, -0.1];

/// ln N(y; 0, 2).
pub fn log_evidence() -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * 2.0).ln() + Y * Y / 2.0)
}

/// Closed-form E_q[ln p(y, z) − ln q(z)].
pub fn elbo(phi: [f64; 2]) -> f64 {
    let (m, s2) = (phi[0], (2.0 * phi[1]).exp());
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let prior = -0.5 * (ln2pi + m * m + s2);
    let lik = -0.5 * (ln2pi + (Y - m) * (Y - m) + s2);
    let entropy = 0.5 * (ln2pi + 1.0) + phi[1];
    prior + lik + entropy
}

/// IWAE bound for one set of noise draws and, when `est` is given, its
/// gradient with respect to `phi = (mu, log_std)`.
pub fn bound_and_grad(phi: [f64; 2], eps: &[f64], est: Option<Estimator>) -> (f64, [f64; 2]) {
    let tape = Tape::new();
    let mean = tape.param("mu", Tensor::scalar(phi[0]));
    let log_std = tape.param("log_std", Tensor::scalar(phi[1]));
    let dim = DimVars { mean, log_std, positive: false };
    let e = tape.constant(Tensor::from_vec(&[1, eps.len()], eps.to_vec()).unwrap());
    let gate = matches!(est, Some(Estimator::Dreg)).then(|| tape.new_gate());
    let base = dim.sample_base(e, gate);
    let prior = prior_log_density(&tape, base, &PriorSpec::standard(Block::Population));
    let lik = gaussian_log_density(tape.scalar_const(Y), base, tape.scalar_const(1.0));
    let logw = prior + lik - dim.log_density(base, gate.is_some());
    let bound = iwae_bound_rows(logw).unwrap().item();
    let surrogate = match est {
        None => return (bound, [0.0; 2]),
        Some(Estimator::Dreg) => dreg_surrogate(logw, gate.unwrap()).unwrap(),
        Some(Estimator::Naive) => naive_surrogate(logw).unwrap(),
    };
    let g = tape.backward(surrogate).unwrap();
    (bound, [g.wrt(mean).item(), g.wrt(log_std).item()])
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn variance(xs: &[f64]) -> f64 {
    let se = mean_se(xs).1;
    se * se * xs.len() as f64
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Mean bound and its standard error for each `K` over `reps` independent sets.
pub fn bound_by_k(ks: &[usize], reps: usize, seed: u64) -> Vec<(usize, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ks.iter()
        .map(|&k| {
            let b: Vec<f64> = (0..reps).map(|_| bound_and_grad(PHI, &normals(&mut rng, k), None).0).collect();
            let (m, se) = mean_se(&b);
            (k, m, se)
        })
        .collect()
}

/// Per component of phi: mean and standard error of (DReG − stochastic
/// central difference) over `sets` noise sets of size `k`, each pair sharing
/// its noise.
pub fn dreg_minus_fd(sets: usize, k: usize, seed: u64) -> [(f64, f64); 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut diffs = [Vec::with_capacity(sets), Vec::with_capacity(sets)];
    for _ in 0..sets {
        let eps = normals(&mut rng, k);
        let (_, g) = bound_and_grad(PHI, &eps, Some(Estimator::Dreg));
        for j in 0..2 {
            let (mut p, mut m) = (PHI, PHI);
            p[j] += h;
            m[j] -= h;
            let fd = (bound_and_grad(p, &eps, None).0 - bound_and_grad(m, &eps, None).0) / (2.0 * h);
            diffs[j].push(g[j] - fd);
        }
    }
    [mean_se(&diffs[0]), mean_se(&diffs[1])]
}

/// Empirical variance per component of phi for the DReG and naive
/// estimators on the same noise sets.
pub fn estimator_variances(sets: usize, k: usize, seed: u64) -> ([f64; 2], [f64; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = [Vec::new(), Vec::new()];
    let mut n = [Vec::new(), Vec::new()];
    for _ in 0..sets {
        let eps = normals(&mut rng, k);
        let gd = bound_and_grad(PHI, &eps, Some(Estimator::Dreg)).1;
        let gn = bound_and_grad(PHI, &eps, Some(Estimator::Naive)).1;
        for j in 0..2 {
            d[j].push(gd[j]);
            n[j].push(gn[j]);
        }
    }
    ([variance(&d[0]), variance(&d[1])], [variance(&n[0]), variance(&n[1])])
}

/// Shifting every log-weight by a representable constant leaves the
/// normalised weights bitwise unchanged and moves the bound by the constant
/// up to the rounding of the final addition. Returns the worst bound
/// discrepancy in units of that rounding allowance, or `None` if any weight
/// changed.
pub fn shift_equivariance(cases: usize, seed: u64) -> Option<f64> {
    use hds_core::objective::{iwae_bound, normalised_weights};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let k = rng.random_range(1..200);
        let logw: Vec<f64> = (0..k).map(|_| rng.random_range(-50_000i32..50_000) as f64 / 1024.0).collect();
        let c = rng.random_range(-1000i32..1000) as f64;
        let shifted: Vec<f64> = logw.iter().map(|l| l + c).collect();
        if normalised_weights(&logw) != normalised_weights(&shifted) {
            return None;
        }
        let (a, b) = (iwae_bound(&logw).unwrap(), iwae_bound(&shifted).unwrap());
        let allowance = 2.0 * f64::EPSILON * (a.abs() + b.abs() + c.abs());
        worst = worst.max((b - a - c).abs() / allowance);
    }
    Some(worst)
}
