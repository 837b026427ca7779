//! Scenario files: TOML with `[scenario]`, `[params]`, `[scan]`,
//! `[simulate]` and `[estimate]` sections.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::hopf::Direction;
use crate::model::{LineModel, Param, ParameterSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source_name: Option<String>,
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            source_name: None,
            line: None,
            field: None,
            message: message.into(),
        }
    }

    pub fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    pub fn at(mut self, line: Option<usize>) -> Self {
        self.line = line;
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = &self.source_name {
            write!(f, "{s}:")?;
        }
        if let Some(l) = self.line {
            write!(f, "{l}:")?;
        }
        if self.source_name.is_some() || self.line.is_some() {
            f.write_str(" ")?;
        }
        if let Some(k) = &self.field {
            write!(f, "{k}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Equilibrium,
    Scan,
    Margin,
    NormalVector,
    Sensitivity,
    Heatmap,
    Simulate,
    TableI,
    TableIV,
    CompareLines,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Equilibrium => "equilibrium",
            Task::Scan => "scan",
            Task::Margin => "margin",
            Task::NormalVector => "nvec",
            Task::Sensitivity => "sens",
            Task::Heatmap => "heatmap",
            Task::Simulate => "simulate",
            Task::TableI => "table1",
            Task::TableIV => "table4",
            Task::CompareLines => "compare-lines",
        }
    }

    pub const ALL: [Task; 10] = [
        Task::Equilibrium,
        Task::Scan,
        Task::Margin,
        Task::NormalVector,
        Task::Sensitivity,
        Task::Heatmap,
        Task::Simulate,
        Task::TableI,
        Task::TableIV,
        Task::CompareLines,
    ];
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task '{s}'"))
    }
}

/// Scan overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanConfig {
    pub param: Option<Param>,
    pub direction: Option<Direction>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub rel_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub t_end: f64,
    pub dt: f64,
    pub window: f64,
    pub rtol: f64,
    /// Initial θ offset from the equilibrium.
    pub perturbation: f64,
    /// Parameter moved to its Hopf value (located on the nominal set)
    /// before the `[params]` overrides are applied.
    pub at_hopf: Option<(Param, Direction)>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            t_end: 200.0,
            dt: 0.01,
            window: 20.0,
            rtol: 1e-8,
            perturbation: 1e-3,
            at_hopf: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateConfig {
    pub control: Option<Param>,
    /// New values of the control parameter.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub task: Option<Task>,
    pub line: Option<LineModel>,
    pub params: ParameterSet,
    pub scan: ScanConfig,
    pub simulate: SimulateConfig,
    pub estimate: EstimateConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<RawScenario>,
    params: Option<toml::Table>,
    scan: Option<RawScan>,
    simulate: Option<RawSimulate>,
    estimate: Option<RawEstimate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    task: Option<String>,
    line: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    param: Option<String>,
    direction: Option<String>,
    lower: Option<f64>,
    upper: Option<f64>,
    rel_step: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    t_end: Option<f64>,
    dt: Option<f64>,
    window: Option<f64>,
    rtol: Option<f64>,
    perturbation: Option<f64>,
    hopf_param: Option<String>,
    hopf_direction: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimate {
    control: Option<String>,
    values: Option<Vec<f64>>,
}

/// 1-based line of `key = ...` inside `[section]`.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if let Some(h) = l.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            current = h.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_param(text: &str, section: &str, key: &str, v: &str) -> Result<Param, ConfigError> {
    Param::from_name(v).ok_or_else(|| {
        ConfigError::new(format!("unknown parameter '{v}'"))
            .field(format!("{section}.{key}"))
            .at(key_line(text, section, key))
    })
}

fn parse_direction(text: &str, section: &str, key: &str, v: &str) -> Result<Direction, ConfigError> {
    v.parse().map_err(|_| {
        ConfigError::new(format!("direction must be up or down, got '{v}'"))
            .field(format!("{section}.{key}"))
            .at(key_line(text, section, key))
    })
}

fn positive(text: &str, section: &str, key: &str, v: Option<f64>) -> Result<Option<f64>, ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(ConfigError::new(format!("must be positive, got {x}"))
            .field(format!("{section}.{key}"))
            .at(key_line(text, section, key))),
        _ => Ok(v),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            ConfigError::new(e.message().trim().to_string()).at(line)
        })?;
        let mut sc = Scenario::default();

        if let Some(s) = raw.scenario {
            if let Some(t) = s.task {
                sc.task = Some(t.parse().map_err(|m: String| {
                    ConfigError::new(m).field("scenario.task").at(key_line(text, "scenario", "task"))
                })?);
            }
            if let Some(l) = s.line {
                sc.line = Some(l.parse().map_err(|_| {
                    ConfigError::new(format!("line must be static or dynamic, got '{l}'"))
                        .field("scenario.line")
                        .at(key_line(text, "scenario", "line"))
                })?);
            }
        }

        if let Some(table) = raw.params {
            for (key, value) in &table {
                let p = Param::from_name(key).ok_or_else(|| {
                    ConfigError::new(format!("unknown parameter '{key}'"))
                        .field(format!("params.{key}"))
                        .at(key_line(text, "params", key))
                })?;
                let v = value
                    .as_float()
                    .or_else(|| value.as_integer().map(|i| i as f64))
                    .ok_or_else(|| {
                        ConfigError::new("expected a number")
                            .field(format!("params.{key}"))
                            .at(key_line(text, "params", key))
                    })?;
                sc.params.set(p, v);
            }
            sc.params
                .validate()
                .map_err(|e| ConfigError::new(e.to_string()).field("params"))?;
        }

        if let Some(s) = raw.scan {
            sc.scan = ScanConfig {
                param: s.param.as_deref().map(|v| parse_param(text, "scan", "param", v)).transpose()?,
                direction: s
                    .direction
                    .as_deref()
                    .map(|v| parse_direction(text, "scan", "direction", v))
                    .transpose()?,
                lower: s.lower,
                upper: positive(text, "scan", "upper", s.upper)?,
                rel_step: positive(text, "scan", "rel_step", s.rel_step)?,
            };
            if let (Some(lo), Some(hi)) = (sc.scan.lower, sc.scan.upper) {
                if lo >= hi {
                    return Err(ConfigError::new("lower must be below upper")
                        .field("scan.lower")
                        .at(key_line(text, "scan", "lower")));
                }
            }
        }

        if let Some(s) = raw.simulate {
            let d = SimulateConfig::default();
            let at_hopf = match (s.hopf_param, s.hopf_direction) {
                (Some(p), dir) => {
                    let p = parse_param(text, "simulate", "hopf_param", &p)?;
                    let dir = match dir {
                        Some(d) => parse_direction(text, "simulate", "hopf_direction", &d)?,
                        None => match crate::hopf::scan_plan(p) {
                            crate::hopf::ScanPlan::Single(d) => d,
                            _ => {
                                return Err(ConfigError::new("hopf_direction is required for this parameter")
                                    .field("simulate.hopf_direction")
                                    .at(key_line(text, "simulate", "hopf_param")))
                            }
                        },
                    };
                    Some((p, dir))
                }
                (None, Some(_)) => {
                    return Err(ConfigError::new("hopf_direction given without hopf_param")
                        .field("simulate.hopf_direction")
                        .at(key_line(text, "simulate", "hopf_direction")))
                }
                (None, None) => None,
            };
            sc.simulate = SimulateConfig {
                t_end: positive(text, "simulate", "t_end", s.t_end)?.unwrap_or(d.t_end),
                dt: positive(text, "simulate", "dt", s.dt)?.unwrap_or(d.dt),
                window: positive(text, "simulate", "window", s.window)?.unwrap_or(d.window),
                rtol: positive(text, "simulate", "rtol", s.rtol)?.unwrap_or(d.rtol),
                perturbation: s.perturbation.unwrap_or(d.perturbation),
                at_hopf,
            };
        }

        if let Some(e) = raw.estimate {
            sc.estimate = EstimateConfig {
                control: e
                    .control
                    .as_deref()
                    .map(|v| parse_param(text, "estimate", "control", v))
                    .transpose()?,
                values: e.values.unwrap_or_default(),
            };
        }
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source_name: Some(name.clone()),
            line: None,
            field: None,
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|mut e| {
            e.source_name = Some(name);
            e
        })
    }
}
