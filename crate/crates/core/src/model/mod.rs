//! Grid-forming inverter on an infinite bus: parameters, state layout,
//! right-hand side and its derivatives.

pub mod dual;
pub mod linearize;
pub mod params;
pub mod rhs;
pub mod state;

use thiserror::Error;

pub use linearize::{jacobian, linearize, param_jacobian, LinearizationBundle};
pub use params::{Block, Param, ParameterSet, Unit, N_PARAMS};
pub use rhs::{outputs, rhs, rhs_generic, rhs_unchecked, rotate_dq, Outputs};
pub use state::{idx, wrap_angle, LineModel, StateVector, STATE_NAMES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state has {got} entries, line model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state entry {0} is not finite")]
    NonFiniteInput(&'static str),
    #[error("derivative {0} is not finite")]
    NonFiniteDerivative(&'static str),
    #[error("invalid parameter {param}: {reason}")]
    InvalidParameter {
        param: &'static str,
        reason: &'static str,
    },
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
}
