//! Lag-logistic growth with two receiver circuits driving CFP and YFP.

use crate::autodiff::Arith;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const N_STATES: usize = 8;
pub const STATE_NAMES: [&str; N_STATES] = ["c", "RFP", "CFP", "YFP", "R", "S", "F480", "F530"];

pub const C: usize = 0;
pub const RFP: usize = 1;
pub const CFP: usize = 2;
pub const YFP: usize = 3;
pub const R: usize = 4;
pub const S: usize = 5;
pub const F480: usize = 6;
pub const F530: usize = 7;

pub const INDIVIDUAL: [&str; 4] = ["r", "K", "t_lag", "r_c"];
pub const GROUP: [&str; 2] = ["a_R", "a_S"];
pub const POPULATION: [&str; 21] = [
    "d_RFP", "d_CFP", "d_YFP", "d_R", "d_S", "a_CFP", "a_YFP", "a_480", "a_530", "K_R6", "K_R12",
    "K_S6", "K_S12", "n_R", "n_S", "K_GR76", "K_GS76", "K_GR81", "K_GS81", "eps76", "eps81",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WhiteBoxParams<A> {
    pub r: A,
    pub k: A,
    pub t_lag: A,
    pub r_c: A,
    pub a_r: A,
    pub a_s: A,
    pub d_rfp: A,
    pub d_cfp: A,
    pub d_yfp: A,
    pub d_r: A,
    pub d_s: A,
    pub a_cfp: A,
    pub a_yfp: A,
    pub a_480: A,
    pub a_530: A,
    pub k_r6: A,
    pub k_r12: A,
    pub k_s6: A,
    pub k_s12: A,
    pub n_r: A,
    pub n_s: A,
    pub k_gr76: A,
    pub k_gs76: A,
    pub k_gr81: A,
    pub k_gs81: A,
    pub eps76: A,
    pub eps81: A,
}

impl<A: Copy> WhiteBoxParams<A> {
    /// All parameter names, individual then group then population.
    pub fn names() -> impl Iterator<Item = &'static str> {
        INDIVIDUAL.into_iter().chain(GROUP).chain(POPULATION)
    }

    /// Build from a lookup by name; fails on the first missing name.
    pub fn try_from_fn(mut f: impl FnMut(&str) -> Option<A>) -> Result<Self> {
        let mut get = |n: &str| f(n).ok_or_else(|| Error::Invalid(format!("missing white-box parameter `{n}`")));
        Ok(Self {
            r: get("r")?,
            k: get("K")?,
            t_lag: get("t_lag")?,
            r_c: get("r_c")?,
            a_r: get("a_R")?,
            a_s: get("a_S")?,
            d_rfp: get("d_RFP")?,
            d_cfp: get("d_CFP")?,
            d_yfp: get("d_YFP")?,
            d_r: get("d_R")?,
            d_s: get("d_S")?,
            a_cfp: get("a_CFP")?,
            a_yfp: get("a_YFP")?,
            a_480: get("a_480")?,
            a_530: get("a_530")?,
            k_r6: get("K_R6")?,
            k_r12: get("K_R12")?,
            k_s6: get("K_S6")?,
            k_s12: get("K_S12")?,
            n_r: get("n_R")?,
            n_s: get("n_S")?,
            k_gr76: get("K_GR76")?,
            k_gs76: get("K_GS76")?,
            k_gr81: get("K_GR81")?,
            k_gs81: get("K_GS81")?,
            eps76: get("eps76")?,
            eps81: get("eps81")?,
        })
    }

    pub fn get(&self, name: &str) -> Option<A> {
        Some(match name {
            "r" => self.r,
            "K" => self.k,
            "t_lag" => self.t_lag,
            "r_c" => self.r_c,
            "a_R" => self.a_r,
            "a_S" => self.a_s,
            "d_RFP" => self.d_rfp,
            "d_CFP" => self.d_cfp,
            "d_YFP" => self.d_yfp,
            "d_R" => self.d_r,
            "d_S" => self.d_s,
            "a_CFP" => self.a_cfp,
            "a_YFP" => self.a_yfp,
            "a_480" => self.a_480,
            "a_530" => self.a_530,
            "K_R6" => self.k_r6,
            "K_R12" => self.k_r12,
            "K_S6" => self.k_s6,
            "K_S12" => self.k_s12,
            "n_R" => self.n_r,
            "n_S" => self.n_s,
            "K_GR76" => self.k_gr76,
            "K_GS76" => self.k_gs76,
            "K_GR81" => self.k_gr81,
            "K_GS81" => self.k_gs81,
            "eps76" => self.eps76,
            "eps81" => self.eps81,
            _ => return None,
        })
    }
}

impl<T: Scalar> WhiteBoxParams<T> {
    /// Positivity, Hill-coefficient and leak-fraction constraints.
    pub fn validate(&self) -> Result<()> {
        for name in Self::names() {
            let v = self.get(name).unwrap();
            if !v.is_finite() {
                return Err(Error::Invalid(format!("{name} is not finite")));
            }
            let ok = match name {
                "n_R" | "n_S" => v >= T::one(),
                "eps76" | "eps81" => v > T::zero() && v < T::one(),
                _ => v > T::zero(),
            };
            if !ok {
                return Err(Error::Invalid(format!("{name} = {v} is out of range")));
            }
        }
        Ok(())
    }
}

/// Specific growth rate `r (1 - c/K) / (1 + exp(-4 (t - t_lag)))`.
pub fn growth_rate<T: Scalar, A: Arith<T>>(c: A, t: T, r: A, k: A, t_lag: A) -> A {
    let lag = t_lag.rsub_s(t).mul_s(T::lit(4.0)).sigmoid();
    r * (c / k).rsub_s(T::one()) * lag
}

fn hill_fraction<T: Scalar, A: Arith<T>>(k6: A, k12: A, n: A, c6: A, c12: A) -> A {
    let x6 = k6 * c6;
    let x12 = k12 * c12;
    (x6.pow(n) + x12.pow(n)) / (x6 + x12).add_s(T::one()).pow(n)
}

/// Fractions of R and S receivers bound by signal, `(B_R, B_S)`.
#[allow(clippy::too_many_arguments)]
pub fn binding_fractions<T: Scalar, A: Arith<T>>(
    c6: A,
    c12: A,
    k_r6: A,
    k_r12: A,
    k_s6: A,
    k_s12: A,
    n_r: A,
    n_s: A,
) -> (A, A) {
    (
        hill_fraction(k_r6, k_r12, n_r, c6, c12),
        hill_fraction(k_s6, k_s12, n_s, c6, c12),
    )
}

/// Promoter response `(eps + K_GR R^2 B_R + K_GS S^2 B_S) / (1 + K_GR R^2 B_R + K_GS S^2 B_S)`.
#[allow(clippy::too_many_arguments)]
pub fn response<T: Scalar, A: Arith<T>>(r: A, s: A, b_r: A, b_s: A, k_gr: A, k_gs: A, eps: A) -> A {
    response_from_activity(r * r * b_r, s * s * b_s, k_gr, k_gs, eps)
}

fn response_from_activity<T: Scalar, A: Arith<T>>(act_r: A, act_s: A, k_gr: A, k_gs: A, eps: A) -> A {
    let drive = k_gr * act_r + k_gs * act_s;
    (eps + drive) / drive.add_s(T::one())
}

/// Time-invariant parts of the right-hand side for one parameter set and
/// treatment, computed once per simulation.
#[derive(Clone, Copy, Debug)]
pub struct Kinetics<A> {
    pub params: WhiteBoxParams<A>,
    pub b_r: A,
    pub b_s: A,
    syn_cfp: A,
    syn_yfp: A,
    syn_r: A,
    syn_s: A,
    syn_480: A,
    syn_530: A,
}

impl<A: Copy> Kinetics<A> {
    pub fn new<T: Scalar>(params: WhiteBoxParams<A>, c6: A, c12: A) -> Self
    where
        A: Arith<T>,
    {
        let p = params;
        let (b_r, b_s) = binding_fractions(c6, c12, p.k_r6, p.k_r12, p.k_s6, p.k_s12, p.n_r, p.n_s);
        Self {
            params,
            b_r,
            b_s,
            syn_cfp: p.a_cfp * p.r_c,
            syn_yfp: p.a_yfp * p.r_c,
            syn_r: p.a_r * p.r_c,
            syn_s: p.a_s * p.r_c,
            syn_480: p.a_480 * p.r_c,
            syn_530: p.a_530 * p.r_c,
        }
    }

    pub fn rhs<T: Scalar>(&self, t: T, x: &[A]) -> Vec<A>
    where
        A: Arith<T>,
    {
        let p = &self.params;
        let gamma = growth_rate(x[C], t, p.r, p.k, p.t_lag);
        let act_r = x[R] * x[R] * self.b_r;
        let act_s = x[S] * x[S] * self.b_s;
        let f76 = response_from_activity(act_r, act_s, p.k_gr76, p.k_gs76, p.eps76);
        let f81 = response_from_activity(act_r, act_s, p.k_gr81, p.k_gs81, p.eps81);
        vec![
            gamma * x[C],
            p.r_c - (p.d_rfp + gamma) * x[RFP],
            self.syn_cfp * f76 - (p.d_cfp + gamma) * x[CFP],
            self.syn_yfp * f81 - (p.d_yfp + gamma) * x[YFP],
            self.syn_r - (p.d_r + gamma) * x[R],
            self.syn_s - (p.d_s + gamma) * x[S],
            self.syn_480 - gamma * x[F480],
            self.syn_530 - gamma * x[F530],
        ]
    }
}

/// Time derivative of the eight white-box states under treatment `u = [C6, C12]`.
pub fn whitebox_rhs<T: Scalar, A: Arith<T>>(state: &[A], t: T, p: &WhiteBoxParams<A>, u: [A; 2]) -> Vec<A> {
    Kinetics::new(*p, u[0], u[1]).rhs(t, state)
}
