pub mod autodiff;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod objective;
pub mod posterior;
pub mod report;
pub mod scalar;
pub mod solver;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision.
pub type Real = f64;
pub type Tape = autodiff::Tape<Real>;
pub type Tensor = autodiff::Tensor<Real>;
pub type Var<'t> = autodiff::Var<'t, Real>;
