//! Right-hand sides and observer processes for the mechanistic (white-box)
//! and neural (black-box) models.

pub mod blackbox;
pub mod observer;
pub mod whitebox;

pub use blackbox::{BlackBoxConfig, BlackBoxNets, Network, PreparedNets};
pub use observer::{observe, ModelKind, SIGNALS};
pub use whitebox::{binding_fractions, growth_rate, response, whitebox_rhs, Kinetics, WhiteBoxParams};
