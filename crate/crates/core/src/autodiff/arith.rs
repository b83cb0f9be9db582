//! Arithmetic shared by plain scalars and tape variables, so model equations
//! are written once and evaluated either directly or under differentiation.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::Var;
use crate::scalar::{self, Scalar};

pub trait Arith<T: Scalar>:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn relu(self) -> Self;
    fn pow(self, exponent: Self) -> Self;
    fn add_s(self, c: T) -> Self;
    fn mul_s(self, c: T) -> Self;
    /// `c - self`
    fn rsub_s(self, c: T) -> Self;
    fn floor_at(self, floor: T) -> Self;
    fn all_finite(&self) -> bool;

    fn square(self) -> Self {
        self * self
    }
}

impl<T: Scalar> Arith<T> for T {
    fn exp(self) -> Self {
        num_traits::Float::exp(self)
    }
    fn ln(self) -> Self {
        num_traits::Float::ln(self)
    }
    fn tanh(self) -> Self {
        num_traits::Float::tanh(self)
    }
    fn sigmoid(self) -> Self {
        scalar::sigmoid(self)
    }
    fn softplus(self) -> Self {
        scalar::softplus(self)
    }
    fn relu(self) -> Self {
        self.max(T::zero())
    }
    fn pow(self, exponent: Self) -> Self {
        self.powf(exponent)
    }
    fn add_s(self, c: T) -> Self {
        self + c
    }
    fn mul_s(self, c: T) -> Self {
        self * c
    }
    fn rsub_s(self, c: T) -> Self {
        c - self
    }
    fn floor_at(self, floor: T) -> Self {
        floor + (self - floor).max(T::zero())
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl<'t, T: Scalar> Arith<T> for Var<'t, T> {
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn tanh(self) -> Self {
        Var::tanh(self)
    }
    fn sigmoid(self) -> Self {
        Var::sigmoid(self)
    }
    fn softplus(self) -> Self {
        Var::softplus(self)
    }
    fn relu(self) -> Self {
        Var::relu(self)
    }
    fn pow(self, exponent: Self) -> Self {
        Var::pow(self, exponent)
    }
    fn add_s(self, c: T) -> Self {
        self.add_scalar(c)
    }
    fn mul_s(self, c: T) -> Self {
        self.mul_scalar(c)
    }
    fn rsub_s(self, c: T) -> Self {
        self.rsub_scalar(c)
    }
    fn floor_at(self, floor: T) -> Self {
        Var::floor_at(self, floor)
    }
    fn all_finite(&self) -> bool {
        self.value().is_finite()
    }
}
