//! Scenario configuration, task orchestration and artifact emission.

pub mod config;
pub mod format;
pub mod tables;

use serde::Serialize;
use thiserror::Error;

use crate::equilibrium::{nominal_equilibrium, EquilibriumError};
use crate::hopf::{eigen_analysis, scan_to_hopf, Direction, HopfError, HopfPoint, ScanOptions, Stability};
use crate::model::{outputs, Block, LineModel, Param, ParameterSet};
use crate::normal::{display_sensitivity, normal_vector, NormalError};
use crate::simulate::{classify, integrate, perturb_theta, Classification, IntegratorOptions, SimError, Trajectory};

pub use config::{ConfigError, Scenario, Task};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Bad command line, configuration or input report.
    pub const CONFIG: i32 = 2;
    /// The requested scan found no Hopf bifurcation.
    pub const NO_BIFURCATION: i32 = 3;
    /// Newton, eigen-analysis, normal vector or integration failed.
    pub const NUMERICAL: i32 = 4;
    /// Reading or writing files failed.
    pub const IO: i32 = 5;
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("mismatched reports: {0}")]
    MismatchedReports(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Hopf(#[from] HopfError),
    #[error(transparent)]
    Normal(#[from] NormalError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<std::io::Error> for ReportError {
    fn from(e: std::io::Error) -> Self {
        ReportError::Io(e.to_string())
    }
}

impl ReportError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Config(_) | ReportError::Usage(_) | ReportError::MismatchedReports(_) => exit::CONFIG,
            ReportError::Io(_) => exit::IO,
            ReportError::Hopf(HopfError::NoBifurcation { .. })
            | ReportError::Normal(NormalError::Hopf(HopfError::NoBifurcation { .. })) => exit::NO_BIFURCATION,
            _ => exit::NUMERICAL,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Named {
    pub name: String,
    pub value: f64,
}

fn named(name: &str, value: f64) -> Named {
    Named {
        name: name.to_string(),
        value,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumRecord {
    pub line: LineModel,
    pub state: Vec<Named>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub p: f64,
    pub q: f64,
    pub vc_mag: f64,
    pub omega: f64,
    /// (re, im) pairs sorted by decreasing real part.
    pub eigenvalues: Vec<[f64; 2]>,
    pub max_real_part: f64,
    pub stability: Stability,
}

pub fn equilibrium_record(params: &ParameterSet, line: LineModel) -> Result<EquilibriumRecord, ReportError> {
    let eq = nominal_equilibrium(params, line)?;
    let sp = eigen_analysis(&eq.state, params, line)?;
    let o = outputs(&eq.state, params, line);
    Ok(EquilibriumRecord {
        line,
        state: eq
            .state
            .names()
            .iter()
            .zip(eq.state.as_slice())
            .map(|(n, v)| named(n, *v))
            .collect(),
        residual_norm: eq.residual_norm,
        iterations: eq.iterations,
        p: o.p,
        q: o.q,
        vc_mag: o.vc_mag,
        omega: o.omega,
        eigenvalues: sp.eigenvalues.iter().map(|e| [e.re, e.im]).collect(),
        max_real_part: sp.max_real_part,
        stability: sp.classify(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRecord {
    pub param: Param,
    pub direction: Direction,
    pub line: LineModel,
    pub unit: &'static str,
    pub origin: f64,
    pub lambda_star: f64,
    pub margin: f64,
    /// `lambda_star` and `margin` in reporting units.
    pub lambda_star_display: f64,
    pub margin_display: f64,
    pub omega_star: f64,
    pub mu_re: f64,
    pub transversality: f64,
    pub right_residual: f64,
    pub left_residual: f64,
    pub bracket: [f64; 2],
    pub steps: usize,
}

pub fn scan_record(h: &HopfPoint) -> ScanRecord {
    let s = h.param.unit().scale();
    ScanRecord {
        param: h.param,
        direction: h.direction,
        line: h.line,
        unit: h.param.unit().label(),
        origin: h.origin,
        lambda_star: h.value(),
        margin: h.margin(),
        lambda_star_display: h.value() * s,
        margin_display: h.margin() * s,
        omega_star: h.omega_star,
        mu_re: h.mu.re,
        transversality: h.transversality,
        right_residual: h.right_residual,
        left_residual: h.left_residual,
        bracket: [h.bracket.0, h.bracket.1],
        steps: h.steps,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginRecord {
    pub param: Param,
    pub direction: Direction,
    pub line: LineModel,
    pub margin: f64,
    pub margin_display: f64,
    pub unit: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalEntry {
    pub param: Param,
    pub block: &'static str,
    pub normal: f64,
    pub raw: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalRecord {
    pub cause: Param,
    pub direction: Direction,
    pub line: LineModel,
    pub lambda_star: f64,
    pub omega_star: f64,
    pub beta: f64,
    pub entries: Vec<NormalEntry>,
}

pub fn normal_record(h: &HopfPoint) -> Result<NormalRecord, ReportError> {
    let n = normal_vector(h)?;
    Ok(NormalRecord {
        cause: h.param,
        direction: h.direction,
        line: h.line,
        lambda_star: h.value(),
        omega_star: h.omega_star,
        beta: n.beta,
        entries: Param::ALL
            .iter()
            .map(|&p| NormalEntry {
                param: p,
                block: match p.block() {
                    Block::Controllable => "controllable",
                    Block::Uncontrollable => "uncontrollable",
                },
                normal: n.component(p),
                raw: n.raw[p.index()],
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SensEntry {
    pub control: Param,
    /// Δ^{C|I} in p.u.
    pub sensitivity: f64,
    pub sensitivity_display: f64,
    /// dΔ/dλ_C for the margin along the scan direction.
    pub margin_sensitivity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub control_value: f64,
    pub estimated_margin: f64,
    pub true_margin: Option<f64>,
    /// true − estimated
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensRecord {
    pub cause: Param,
    pub direction: Direction,
    pub line: LineModel,
    pub lambda_star: f64,
    pub margin: f64,
    pub sensitivities: Vec<SensEntry>,
    pub control: Option<Param>,
    pub estimates: Vec<EstimateRow>,
}

/// Sensitivities at `h` and, for `control`, estimated against re-scanned
/// margins at each value in `values`.
pub fn sens_record(
    h: &HopfPoint,
    control: Option<Param>,
    values: &[f64],
    params: &ParameterSet,
    opts: &ScanOptions,
) -> Result<SensRecord, ReportError> {
    let n = normal_vector(h)?;
    let cols: Vec<Param> = match control {
        Some(c) => vec![c],
        None => Param::ALL.to_vec(),
    };
    let sensitivities = cols
        .iter()
        .map(|&c| {
            let s = n.sensitivity(h.param, c)?;
            Ok(SensEntry {
                control: c,
                sensitivity: s,
                sensitivity_display: display_sensitivity(h.param, c, s),
                margin_sensitivity: n.margin_sensitivity(h.param, h.direction, c)?,
            })
        })
        .collect::<Result<Vec<_>, NormalError>>()?;
    let mut estimates = Vec::new();
    if let Some(c) = control {
        let ms = n.margin_sensitivity(h.param, h.direction, c)?;
        let old = params.get(c);
        for &v in values {
            let est = crate::normal::first_order_margin(h.margin(), ms, v - old);
            let truth = match scan_to_hopf(&params.with(c, v), h.line, h.param, h.direction, opts) {
                Ok(t) => Some(t.margin()),
                Err(HopfError::NoBifurcation { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            estimates.push(EstimateRow {
                control_value: v,
                estimated_margin: est,
                true_margin: truth,
                error: truth.map(|t| t - est),
            });
        }
    }
    Ok(SensRecord {
        cause: h.param,
        direction: h.direction,
        line: h.line,
        lambda_star: h.value(),
        margin: h.margin(),
        sensitivities,
        control,
        estimates,
    })
}

pub fn estimates_csv(r: &SensRecord) -> String {
    let rows: Vec<Vec<String>> = r
        .estimates
        .iter()
        .map(|e| {
            vec![
                format::fmt_sig9(e.control_value),
                format::fmt_sig9(e.estimated_margin),
                format::opt_sig9(e.true_margin),
                format::opt_sig9(e.error),
            ]
        })
        .collect();
    format::to_csv(&["control_value", "estimated_margin", "true_margin", "error"], &rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRecord {
    pub line: LineModel,
    /// Parameter moved to its Hopf value, with that value.
    pub hopf: Option<(Param, f64)>,
    pub omega_star: Option<f64>,
    pub classification: Classification,
    pub samples: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Runs the simulate task of a scenario.
pub fn run_simulation(
    sc: &Scenario,
    line: LineModel,
    opts: &ScanOptions,
) -> Result<(SimulationRecord, Trajectory), ReportError> {
    let cfg = &sc.simulate;
    let mut params = sc.params;
    let mut hopf = None;
    let mut omega_star = None;
    if let Some((p, d)) = cfg.at_hopf {
        // located on the nominal set; the overrides then act on top of it
        let h = scan_to_hopf(&ParameterSet::nominal(), line, p, d, opts)?;
        params.set(p, h.value());
        hopf = Some((p, h.value()));
        omega_star = Some(h.omega_star);
    }
    let eq = nominal_equilibrium(&params, line)?;
    let x0 = perturb_theta(&eq.state, cfg.perturbation);
    let iopts = IntegratorOptions::default().with_rtol(cfg.rtol).sampled(cfg.dt);
    let traj = integrate(&x0, &params, line, (0.0, cfg.t_end), &iopts)?;
    let classification = classify(&traj, cfg.window)?;
    Ok((
        SimulationRecord {
            line,
            hopf,
            omega_star,
            classification,
            samples: traj.len(),
            accepted_steps: traj.accepted_steps,
            rejected_steps: traj.rejected_steps,
        },
        traj,
    ))
}

/// Time, every state, p and ‖v_c‖.
pub fn trajectory_csv(t: &Trajectory) -> String {
    let names = &crate::model::STATE_NAMES[..t.line.dim()];
    let mut header = vec!["time"];
    header.extend_from_slice(names);
    header.extend(["p", "vc_mag"]);
    let rows: Vec<Vec<String>> = (0..t.len())
        .map(|i| {
            let mut r = vec![format::fmt_sig9(t.times[i])];
            r.extend(t.states[i].as_slice().iter().map(|v| format::fmt_sig9(*v)));
            r.push(format::fmt_sig9(t.p[i]));
            r.push(format::fmt_sig9(t.vc_mag[i]));
            r
        })
        .collect();
    format::to_csv(&header, &rows)
}
