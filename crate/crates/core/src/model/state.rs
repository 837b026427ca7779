use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Transmission line representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineModel {
    /// Algebraic impedance relation; line currents are eliminated.
    Static,
    /// First-order line current dynamics appended as two extra states.
    Dynamic,
}

impl LineModel {
    pub const BOTH: [LineModel; 2] = [LineModel::Static, LineModel::Dynamic];

    pub fn dim(self) -> usize {
        match self {
            LineModel::Static => 11,
            LineModel::Dynamic => 13,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LineModel::Static => "static",
            LineModel::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for LineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LineModel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" | "s" => Ok(LineModel::Static),
            "dynamic" | "d" => Ok(LineModel::Dynamic),
            _ => Err(ModelError::Parse(format!("unknown line model '{s}'"))),
        }
    }
}

/// State indices.
pub mod idx {
    pub const P_TILDE: usize = 0;
    pub const Q_TILDE: usize = 1;
    pub const THETA: usize = 2;
    pub const BETA_D: usize = 3;
    pub const BETA_Q: usize = 4;
    pub const GAMMA_D: usize = 5;
    pub const GAMMA_Q: usize = 6;
    pub const V_CD: usize = 7;
    pub const V_CQ: usize = 8;
    pub const I_TD: usize = 9;
    pub const I_TQ: usize = 10;
    /// Global-frame line current, dynamic line only.
    pub const I_GD: usize = 11;
    pub const I_GQ: usize = 12;
}

pub const STATE_NAMES: [&str; 13] = [
    "p_tilde", "q_tilde", "theta", "beta_d", "beta_q", "gamma_d", "gamma_q", "v_cD", "v_cQ",
    "i_td", "i_tq", "i_gD", "i_gQ",
];

/// Dynamic state of the inverter (and line, for the dynamic variant).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub DVector<f64>);

impl StateVector {
    pub fn zeros(line: LineModel) -> Self {
        StateVector(DVector::zeros(line.dim()))
    }

    pub fn from_slice(v: &[f64]) -> Self {
        StateVector(DVector::from_column_slice(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn names(&self) -> &'static [&'static str] {
        &STATE_NAMES[..self.len()]
    }

    pub fn p_tilde(&self) -> f64 {
        self.0[idx::P_TILDE]
    }

    pub fn q_tilde(&self) -> f64 {
        self.0[idx::Q_TILDE]
    }

    pub fn theta(&self) -> f64 {
        self.0[idx::THETA]
    }

    pub fn check(&self, line: LineModel) -> Result<(), ModelError> {
        if self.len() != line.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: line.dim(),
                got: self.len(),
            });
        }
        if let Some(i) = self.0.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput(STATE_NAMES[i.min(12)]));
        }
        Ok(())
    }

    /// Copy with θ wrapped into (−π, π].
    pub fn normalized(&self) -> Self {
        let mut s = self.clone();
        s.0[idx::THETA] = wrap_angle(s.0[idx::THETA]);
        s
    }

    /// Max-norm distance treating θ modulo 2π.
    pub fn distance(&self, other: &StateVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .enumerate()
            .map(|(i, (a, b))| {
                if i == idx::THETA {
                    wrap_angle(a - b).abs()
                } else {
                    (a - b).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}
