use std::fmt;
use std::str::FromStr;

use super::ModelError;

/// Parameter index, in nomenclature order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    PStar,
    QStar,
    Omega0,
    V0,
    KP,
    KQ,
    OmegaPc,
    OmegaQc,
    OmegaB,
    KVcP,
    KVcI,
    KCcF,
    KCcP,
    KCcI,
    KVcF,
    Rf,
    Cf,
    Lf,
    VgD,
    VgQ,
    R,
    X,
}

/// Which side of the controllable/uncontrollable split a parameter sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Controllable,
    Uncontrollable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    PerUnit,
    /// Stored in p.u., reported in percent.
    Percent,
    RadPerSec,
}

impl Unit {
    pub fn scale(self) -> f64 {
        match self {
            Unit::Percent => 100.0,
            _ => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Unit::PerUnit => "p.u.",
            Unit::Percent => "%",
            Unit::RadPerSec => "rad/s",
        }
    }
}

pub const N_PARAMS: usize = 22;

impl Param {
    pub const ALL: [Param; N_PARAMS] = [
        Param::PStar,
        Param::QStar,
        Param::Omega0,
        Param::V0,
        Param::KP,
        Param::KQ,
        Param::OmegaPc,
        Param::OmegaQc,
        Param::OmegaB,
        Param::KVcP,
        Param::KVcI,
        Param::KCcF,
        Param::KCcP,
        Param::KCcI,
        Param::KVcF,
        Param::Rf,
        Param::Cf,
        Param::Lf,
        Param::VgD,
        Param::VgQ,
        Param::R,
        Param::X,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::PStar => "p_star",
            Param::QStar => "q_star",
            Param::Omega0 => "omega0",
            Param::V0 => "V0",
            Param::KP => "K_P",
            Param::KQ => "K_Q",
            Param::OmegaPc => "omega_pc",
            Param::OmegaQc => "omega_qc",
            Param::OmegaB => "omega_b",
            Param::KVcP => "K_VC_P",
            Param::KVcI => "K_VC_I",
            Param::KCcF => "K_CC_F",
            Param::KCcP => "K_CC_P",
            Param::KCcI => "K_CC_I",
            Param::KVcF => "K_VC_F",
            Param::Rf => "R_f",
            Param::Cf => "C_f",
            Param::Lf => "L_f",
            Param::VgD => "v_gD",
            Param::VgQ => "v_gQ",
            Param::R => "R",
            Param::X => "X",
        }
    }

    pub fn nominal(self) -> f64 {
        match self {
            Param::PStar => 1.0,
            Param::QStar => 0.5,
            Param::Omega0 => 1.0,
            Param::V0 => 1.0,
            Param::KP => 0.018,
            Param::KQ => 0.0001,
            Param::OmegaPc => 332.8,
            Param::OmegaQc => 732.8,
            Param::OmegaB => 2.0 * std::f64::consts::PI * 50.0,
            Param::KVcP => 1.0,
            Param::KVcI => 1.16,
            Param::KCcF => 0.0,
            Param::KCcP => 2.5,
            Param::KCcI => 1.19,
            Param::KVcF => 1.0,
            Param::Rf => 0.0072,
            Param::Cf => 0.3,
            Param::Lf => 0.05,
            Param::VgD => 1.0,
            Param::VgQ => 0.0,
            Param::R => 0.02,
            Param::X => 0.2,
        }
    }

    pub fn block(self) -> Block {
        match self {
            Param::KVcP
            | Param::KVcI
            | Param::KVcF
            | Param::KCcP
            | Param::KCcI
            | Param::KCcF
            | Param::KP
            | Param::KQ
            | Param::Omega0
            | Param::V0
            | Param::PStar
            | Param::QStar => Block::Controllable,
            _ => Block::Uncontrollable,
        }
    }

    pub fn unit(self) -> Unit {
        match self {
            Param::KP | Param::KQ => Unit::Percent,
            Param::OmegaPc | Param::OmegaQc | Param::OmegaB => Unit::RadPerSec,
            _ => Unit::PerUnit,
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.iter().copied().find(|p| p.name() == name)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl serde::Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for Param {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Param::from_name(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown parameter '{s}'")))
    }
}

impl FromStr for Param {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Param::from_name(s).ok_or_else(|| ModelError::UnknownParameter(s.to_string()))
    }
}

/// The full model/control parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSet {
    values: [f64; N_PARAMS],
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::nominal()
    }
}

impl ParameterSet {
    pub fn nominal() -> Self {
        let mut values = [0.0; N_PARAMS];
        for p in Param::ALL {
            values[p.index()] = p.nominal();
        }
        Self { values }
    }

    pub fn from_array(values: [f64; N_PARAMS]) -> Result<Self, ModelError> {
        let set = Self { values };
        set.validate()?;
        Ok(set)
    }

    #[inline]
    pub fn get(&self, p: Param) -> f64 {
        self.values[p.index()]
    }

    pub fn set(&mut self, p: Param, v: f64) {
        self.values[p.index()] = v;
    }

    pub fn with(mut self, p: Param, v: f64) -> Self {
        self.values[p.index()] = v;
        self
    }

    #[inline]
    pub fn as_array(&self) -> &[f64; N_PARAMS] {
        &self.values
    }

    /// Line impedance magnitude, derived from R and X.
    pub fn z(&self) -> f64 {
        self.get(Param::R).hypot(self.get(Param::X))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for p in Param::ALL {
            if !self.get(p).is_finite() {
                return Err(ModelError::InvalidParameter {
                    param: p.name(),
                    reason: "not finite",
                });
            }
        }
        for p in [Param::Lf, Param::Cf, Param::OmegaB, Param::OmegaPc, Param::OmegaQc] {
            if self.get(p) <= 0.0 {
                return Err(ModelError::InvalidParameter {
                    param: p.name(),
                    reason: "must be positive",
                });
            }
        }
        if self.z() <= 0.0 {
            return Err(ModelError::InvalidParameter {
                param: "Z",
                reason: "line impedance must be nonzero",
            });
        }
        Ok(())
    }

    /// Serializes as `name = value` lines in nomenclature order. Values use
    /// the shortest representation that parses back to the same `f64`.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for p in Param::ALL {
            out.push_str(&format!("{} = {:?}\n", p.name(), self.get(p)));
        }
        out
    }

    /// Parses a flat `name = value` file on top of the nominal set.
    pub fn from_kv_str(text: &str) -> Result<Self, ModelError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ModelError::Parse(e.to_string()))?;
        let mut set = Self::nominal();
        for (key, value) in &table {
            let p = Param::from_name(key)
                .ok_or_else(|| ModelError::UnknownParameter(key.clone()))?;
            let v = value
                .as_float()
                .or_else(|| value.as_integer().map(|i| i as f64))
                .ok_or_else(|| ModelError::Parse(format!("{key}: expected a number")))?;
            set.set(p, v);
        }
        set.validate()?;
        Ok(set)
    }

    /// Indices of the controllable and uncontrollable blocks.
    pub fn partition() -> (Vec<Param>, Vec<Param>) {
        Param::ALL
            .iter()
            .copied()
            .partition(|p| p.block() == Block::Controllable)
    }
}
