use serde::{Deserialize, Serialize};

use super::whitebox::{C, CFP, F480, F530, N_STATES, RFP, YFP};
use crate::autodiff::Arith;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Observed signals, in row order.
pub const SIGNALS: [&str; 4] = ["OD", "RFP", "YFP", "CFP"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Whitebox,
    Blackbox,
}

/// Mean of the four signals from a state vector.
pub fn observe<T: Scalar, A: Arith<T>>(x: &[A], kind: ModelKind) -> Result<[A; 4]> {
    match kind {
        ModelKind::Whitebox => {
            if x.len() < N_STATES {
                return Err(Error::Invalid(format!(
                    "white-box observer needs {N_STATES} states, got {}",
                    x.len()
                )));
            }
            let c = x[C];
            Ok([c, c * x[RFP], c * (x[YFP] + x[F530]), c * (x[CFP] + x[F480])])
        }
        ModelKind::Blackbox => {
            if x.len() < 4 {
                return Err(Error::Invalid(format!(
                    "black-box observer needs at least 4 states, got {}",
                    x.len()
                )));
            }
            Ok([x[0], x[0] * x[1], x[0] * x[2], x[0] * x[3]])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let mut x = [0.7; 8];
        x[C] = 0.0;
        assert_eq!(observe(&x, ModelKind::Whitebox).unwrap(), [0.0; 4]);

        let mut x = [0.0; 8];
        x[C] = 2.0;
        x[YFP] = 1.0;
        x[F530] = 0.5;
        assert_eq!(observe(&x, ModelKind::Whitebox).unwrap()[2], 3.0);

        let y = observe(&[1.0, 2.0, 3.0, 4.0, 9.0], ModelKind::Blackbox).unwrap();
        assert_eq!(y, [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn too_few_states() {
        assert!(observe(&[1.0; 3], ModelKind::Blackbox).is_err());
        assert!(observe(&[1.0; 5], ModelKind::Whitebox).is_err());
    }
}
