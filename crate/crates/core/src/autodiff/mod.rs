//! Reverse-mode automatic differentiation over dense arrays.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s; [`Tape::backward`]
//! sweeps the record once in reverse. A tape is single-owner (`!Sync`), so
//! parallel evaluation uses one tape per worker over shared read-only
//! parameter values.

mod arith;
mod expr;
mod ops;
mod tape;
mod tensor;

pub use arith::Arith;
pub use expr::{forward, Expr};
pub use ops::{broadcast_result, concat, stack};
pub use tape::{GateId, Gradients, Tape, Var};
pub use tensor::Tensor;
