//! Fixed-step Heun (explicit trapezoid) integration.
//!
//! The integrator is written against [`Arith`], so the same code runs on plain
//! scalars and on tape variables; in the latter case every stage is recorded
//! and the trajectory is differentiable end to end.

use crate::autodiff::Arith;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Variances produced by [`simulate_with_noise`] are floored here.
pub const VARIANCE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid<T> {
    obs_times: Vec<T>,
    substeps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(obs_times: Vec<T>, substeps: usize) -> Result<Self> {
        if obs_times.is_empty() {
            return Err(Error::TimeGrid("no observation times".into()));
        }
        if substeps == 0 {
            return Err(Error::TimeGrid("substeps must be at least 1".into()));
        }
        if let Some(i) = obs_times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::TimeGrid(format!(
                "times not strictly increasing at index {}",
                i + 1
            )));
        }
        if obs_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::TimeGrid("non-finite time".into()));
        }
        Ok(Self { obs_times, substeps })
    }

    /// `n` equispaced points on `[t0, t1]`.
    pub fn equispaced(t0: T, t1: T, n: usize, substeps: usize) -> Result<Self> {
        if n < 2 {
            return Self::new(vec![t0], substeps);
        }
        let dt = (t1 - t0) / T::lit((n - 1) as f64);
        let times = (0..n).map(|i| t0 + dt * T::lit(i as f64)).collect();
        Self::new(times, substeps)
    }

    pub fn times(&self) -> &[T] {
        &self.obs_times
    }

    pub fn len(&self) -> usize {
        self.obs_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs_times.is_empty()
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn with_substeps(&self, substeps: usize) -> Result<Self> {
        Self::new(self.obs_times.clone(), substeps)
    }
}

/// States sampled on the observation grid: `states[t][i]` is component `i`
/// at `obs_times[t]`.
#[derive(Clone, Debug)]
pub struct Trajectory<A> {
    pub states: Vec<Vec<A>>,
}

impl<A: Copy> Trajectory<A> {
    /// Time series of component `i`.
    pub fn component(&self, i: usize) -> Vec<A> {
        self.states.iter().map(|s| s[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn axpy<T: Scalar, A: Arith<T>>(x: &[A], h: T, k: &[A]) -> Vec<A> {
    x.iter().zip(k).map(|(&x, &k)| x + k.mul_s(h)).collect()
}

fn trapezoid<T: Scalar, A: Arith<T>>(x: &[A], h: T, k1: &[A], k2: &[A]) -> Vec<A> {
    let half = h * T::lit(0.5);
    x.iter()
        .zip(k1.iter().zip(k2))
        .map(|(&x, (&a, &b))| x + (a + b).mul_s(half))
        .collect()
}

fn check_finite<T: Scalar, A: Arith<T>>(x: &[A], step: usize) -> Result<()> {
    match x.iter().position(|v| !v.all_finite()) {
        Some(component) => Err(Error::NonFinite { step, component }),
        None => Ok(()),
    }
}

/// One Heun step of size `h` from `(t, x)`.
pub fn heun_step<T, A, F>(rhs: &mut F, t: T, x: &[A], h: T) -> Vec<A>
where
    T: Scalar,
    A: Arith<T>,
    F: FnMut(T, &[A]) -> Vec<A>,
{
    let k1 = rhs(t, x);
    let pred = axpy(x, h, &k1);
    let k2 = rhs(t + h, &pred);
    trapezoid(x, h, &k1, &k2)
}

/// Integrate `dx/dt = rhs(t, x)` from `x0` at the first grid time. The
/// returned trajectory includes `x0` as its first column.
pub fn simulate<T, A, F>(mut rhs: F, x0: Vec<A>, grid: &TimeGrid<T>) -> Result<Trajectory<A>>
where
    T: Scalar,
    A: Arith<T>,
    F: FnMut(T, &[A]) -> Vec<A>,
{
    check_finite(&x0, 0)?;
    let times = grid.times();
    let mut states = Vec::with_capacity(times.len());
    let mut x = x0;
    let mut step = 0;
    states.push(x.clone());
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / T::lit(grid.substeps() as f64);
        for j in 0..grid.substeps() {
            let t = w[0] + h * T::lit(j as f64);
            x = heun_step(&mut rhs, t, &x, h);
            step += 1;
            check_finite(&x, step)?;
        }
        states.push(x.clone());
    }
    Ok(Trajectory { states })
}

/// Integrate `[x; v]` jointly with one Heun scheme, where
/// `dx/dt = rhs_x(t, x, v)` and `dv/dt = rhs_v(t, v, x)`. The returned
/// variance trajectory is floored at [`VARIANCE_FLOOR`].
pub fn simulate_with_noise<T, A, FX, FV>(
    mut rhs_x: FX,
    mut rhs_v: FV,
    x0: Vec<A>,
    v0: Vec<A>,
    grid: &TimeGrid<T>,
) -> Result<(Trajectory<A>, Trajectory<A>)>
where
    T: Scalar,
    A: Arith<T>,
    FX: FnMut(T, &[A], &[A]) -> Vec<A>,
    FV: FnMut(T, &[A], &[A]) -> Vec<A>,
{
    let nx = x0.len();
    let mut joint = |t: T, s: &[A]| {
        let (x, v) = s.split_at(nx);
        let mut d = rhs_x(t, x, v);
        d.extend(rhs_v(t, v, x));
        d
    };
    let mut s0 = x0;
    s0.extend(v0);
    let traj = simulate(&mut joint, s0, grid)?;
    let floor = T::lit(VARIANCE_FLOOR);
    let mut xs = Vec::with_capacity(traj.len());
    let mut vs = Vec::with_capacity(traj.len());
    for s in traj.states {
        let (x, v) = s.split_at(nx);
        xs.push(x.to_vec());
        vs.push(v.iter().map(|&v| v.floor_at(floor)).collect());
    }
    Ok((Trajectory { states: xs }, Trajectory { states: vs }))
}
