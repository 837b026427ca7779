//! Hopf detection along one-parameter scans and single-parameter margins.

pub mod spectrum;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{
    branch_tangent, nominal_equilibrium, solve_equilibrium, EquilibriumError,
};
use crate::model::{jacobian, LineModel, ModelError, Param, ParameterSet, StateVector};

pub use spectrum::{
    eigen_analysis, eigen_residuals, eigenpair, EigenPair, Spectrum, Stability, HOPF_TOL, IMAG_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }

    pub fn arrow(self) -> &'static str {
        match self {
            Direction::Up => "↑",
            Direction::Down => "↓",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Direction {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "up" | "+" => Ok(Direction::Up),
            "down" | "-" => Ok(Direction::Down),
            _ => Err(ModelError::Parse(format!("direction must be up or down, got '{s}'"))),
        }
    }
}

/// How a parameter is treated in the margin table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanPlan {
    /// Not scanned ("-").
    Excluded,
    /// The destabilizing direction is known.
    Single(Direction),
    /// No known Hopf; both directions are searched.
    Both,
}

/// The parameters of the margin table, in table order.
pub const TABLE_PARAMS: [Param; 19] = [
    Param::Rf,
    Param::Lf,
    Param::Cf,
    Param::OmegaPc,
    Param::OmegaQc,
    Param::KP,
    Param::KQ,
    Param::KVcP,
    Param::KVcI,
    Param::KVcF,
    Param::KCcP,
    Param::KCcI,
    Param::KCcF,
    Param::Omega0,
    Param::V0,
    Param::PStar,
    Param::QStar,
    Param::X,
    Param::R,
];

pub fn scan_plan(param: Param) -> ScanPlan {
    use Direction::*;
    match param {
        Param::Omega0 | Param::V0 => ScanPlan::Excluded,
        Param::Rf | Param::Lf | Param::Cf | Param::KP | Param::KQ => ScanPlan::Single(Up),
        Param::KVcI | Param::KVcF | Param::KCcF => ScanPlan::Single(Up),
        Param::OmegaPc | Param::KVcP | Param::KCcP | Param::X => ScanPlan::Single(Down),
        _ => ScanPlan::Both,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoBifurcationReason {
    /// Reached the end of the bracket with a stable equilibrium.
    BracketExhausted { limit: f64 },
    /// Continuation failed (fold or loss of solvability).
    BranchLost { value: f64 },
    /// Stability lost through a real eigenvalue.
    RealCrossing { value: f64 },
}

impl fmt::Display for NoBifurcationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BracketExhausted { limit } => write!(f, "bracket exhausted at {limit:.6e}"),
            Self::BranchLost { value } => write!(f, "equilibrium branch lost near {value:.6e}"),
            Self::RealCrossing { value } => write!(f, "real eigenvalue crossed near {value:.6e}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HopfError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error("eigen-analysis failed: {0}")]
    EigenFailure(String),
    #[error("starting point is not stable (max Re = {max_real_part:.3e})")]
    NominalUnstable { max_real_part: f64 },
    #[error("no Hopf bifurcation in {param} ({direction}): {reason}")]
    NoBifurcation {
        param: Param,
        direction: Direction,
        reason: NoBifurcationReason,
    },
    #[error("eigenvalue collision in {param} at {value:.9e}: next eigenvalue at Re = {other_real:.3e}")]
    EigenvalueCollision {
        param: Param,
        value: f64,
        other_real: f64,
    },
    #[error("crossing in {param} at {value:.9e} is not transversal (dτ/dλ = {slope:.3e})")]
    NonTransversal { param: Param, value: f64, slope: f64 },
    #[error("Hopf refinement stalled at |τ| = {tau:.3e}")]
    RefinementStalled { tau: f64 },
    #[error("eigenpair residual {residual:.3e} exceeds tolerance")]
    Residual { residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Geometric step as a fraction of the current value.
    pub rel_step: f64,
    /// Smallest absolute step.
    pub abs_step: f64,
    /// Open lower and closed upper end of the scan range; `None` uses
    /// [`default_bracket`].
    pub bracket: Option<(f64, f64)>,
    /// Refinement target on |τ|.
    pub tau_target: f64,
    /// Largest |τ| accepted at termination.
    pub tau_tol: f64,
    pub eps_sep: f64,
    pub min_transversality: f64,
    /// Eigenpair residual bound.
    pub residual_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            rel_step: 0.02,
            abs_step: 1e-6,
            bracket: None,
            tau_target: 1e-10,
            tau_tol: 1e-8,
            eps_sep: 1e-4,
            min_transversality: 1e-6,
            residual_tol: 1e-8,
        }
    }
}

/// Default scan range (0, max(20·|nominal|, 5)].
pub fn default_bracket(param: Param) -> (f64, f64) {
    (0.0, (20.0 * param.nominal().abs()).max(5.0))
}

/// A located Hopf bifurcation.
#[derive(Debug, Clone)]
pub struct HopfPoint {
    pub param: Param,
    pub direction: Direction,
    pub line: LineModel,
    /// Parameter value where the scan started.
    pub origin: f64,
    pub lambda_star: ParameterSet,
    pub x_star: StateVector,
    /// Critical eigenvalue, upper member of the pair.
    pub mu: Complex64,
    pub omega_star: f64,
    pub v: DVector<Complex64>,
    pub w: DVector<Complex64>,
    pub spectrum: Spectrum,
    /// Final bracket (τ < 0 at `.0`, τ > 0 at `.1`, in scan order).
    pub bracket: (f64, f64),
    pub tau_bracket: (f64, f64),
    /// Finite-difference dτ/dλ.
    pub transversality: f64,
    pub right_residual: f64,
    pub left_residual: f64,
    pub steps: usize,
}

impl HopfPoint {
    pub fn value(&self) -> f64 {
        self.lambda_star.get(self.param)
    }

    /// |λ*_i − λ0_i| from the scan origin.
    pub fn margin(&self) -> f64 {
        margin_from(self, self.origin)
    }
}

/// |λ*_i − λ0| for an arbitrary reference value.
pub fn margin_from(h: &HopfPoint, lambda0: f64) -> f64 {
    (h.value() - lambda0).abs()
}

/// Equilibrium at `value`, predicted along the branch tangent from `(from, x)`.
fn equilibrium_at(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    from: f64,
    x: &StateVector,
    value: f64,
) -> Result<StateVector, EquilibriumError> {
    let base = params.with(param, from);
    let guess = match branch_tangent(x.as_slice(), &base, line, param) {
        Some(t) if t.iter().all(|v| v.is_finite()) => StateVector(&x.0 + t * (value - from)),
        _ => x.clone(),
    };
    let target = params.with(param, value);
    match solve_equilibrium(&target, line, &guess) {
        Ok(r) => Ok(r.state),
        Err(_) => solve_equilibrium(&target, line, x).map(|r| r.state),
    }
}

#[derive(Debug, Clone)]
struct Sample {
    value: f64,
    state: StateVector,
    spectrum: Spectrum,
}

impl Sample {
    fn tau(&self) -> f64 {
        self.spectrum.tau().unwrap_or(f64::NEG_INFINITY)
    }
}

fn sample(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    value: f64,
    state: StateVector,
) -> Result<Sample, HopfError> {
    let p = params.with(param, value);
    let spectrum = Spectrum::from_matrix(&jacobian(state.as_slice(), &p, line), HOPF_TOL)?;
    Ok(Sample {
        value,
        state,
        spectrum,
    })
}

/// Marches `param` from its value in `params` until the first complex pair
/// crosses into the right half plane, then refines and validates the
/// crossing.
pub fn scan_to_hopf(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    direction: Direction,
    opts: &ScanOptions,
) -> Result<HopfPoint, HopfError> {
    let start = nominal_equilibrium(params, line)?;
    scan_from(params, line, param, direction, opts, start.state)
}

/// As [`scan_to_hopf`], starting Newton from a known equilibrium.
pub fn scan_from(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    direction: Direction,
    opts: &ScanOptions,
    start: StateVector,
) -> Result<HopfPoint, HopfError> {
    let origin = params.get(param);
    let (lo, hi) = opts.bracket.unwrap_or_else(|| default_bracket(param));
    let start = solve_equilibrium(params, line, &start)?.state;
    let mut prev = sample(params, line, param, origin, start)?;
    if prev.spectrum.max_real_part >= 0.0 {
        return Err(HopfError::NominalUnstable {
            max_real_part: prev.spectrum.max_real_part,
        });
    }
    let no_bif = |reason| HopfError::NoBifurcation {
        param,
        direction,
        reason,
    };
    let sgn = direction.sign();
    let mut steps = 0usize;
    loop {
        let limit = if sgn > 0.0 { hi } else { lo };
        if (limit - prev.value) * sgn <= opts.abs_step * 0.5 {
            return Err(no_bif(NoBifurcationReason::BracketExhausted { limit }));
        }
        let full = (opts.rel_step * prev.value.abs()).max(opts.abs_step);
        let mut h = full;
        let next = loop {
            let mut target = prev.value + sgn * h;
            // open lower end: stay strictly inside
            if sgn < 0.0 && target <= lo {
                target = lo + (prev.value - lo) * 0.5;
                if prev.value - target < opts.abs_step * 0.5 {
                    return Err(no_bif(NoBifurcationReason::BracketExhausted { limit: lo }));
                }
            }
            if sgn > 0.0 && target > hi {
                target = hi;
            }
            match equilibrium_at(params, line, param, prev.value, &prev.state, target) {
                Ok(x) => break sample(params, line, param, target, x)?,
                Err(_) => {
                    h *= 0.5;
                    if h < full * 1e-6 {
                        return Err(no_bif(NoBifurcationReason::BranchLost { value: prev.value }));
                    }
                }
            }
        };
        steps += 1;
        if next.spectrum.max_real_part >= 0.0 {
            let real_unstable = next.spectrum.max_real_eigenvalue().is_some_and(|r| r >= 0.0);
            if real_unstable || next.tau() < 0.0 {
                return Err(no_bif(NoBifurcationReason::RealCrossing { value: next.value }));
            }
            let mut point = refine(params, line, param, direction, opts, prev, next)?;
            point.origin = origin;
            point.steps = steps;
            return Ok(point);
        }
        prev = next;
    }
}

/// Illinois regula falsi on τ between a stable and an unstable sample.
fn refine(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    direction: Direction,
    opts: &ScanOptions,
    mut neg: Sample,
    mut pos: Sample,
) -> Result<HopfPoint, HopfError> {
    let (mut fa, mut fb) = (neg.tau(), pos.tau());
    let mut best = if fa.abs() <= fb.abs() { neg.clone() } else { pos.clone() };
    let mut side = 0i8;
    for _ in 0..200 {
        if best.tau().abs() <= opts.tau_target {
            break;
        }
        let width = (pos.value - neg.value).abs();
        if width <= 4.0 * f64::EPSILON * neg.value.abs().max(pos.value.abs()).max(1e-300) {
            break;
        }
        let mut m = (neg.value * fb - pos.value * fa) / (fb - fa);
        let lo = neg.value.min(pos.value);
        let hi = neg.value.max(pos.value);
        if !m.is_finite() || m <= lo || m >= hi {
            m = 0.5 * (neg.value + pos.value);
        }
        let near = if (m - neg.value).abs() < (m - pos.value).abs() { &neg } else { &pos };
        let x = equilibrium_at(params, line, param, near.value, &near.state, m)?;
        let s = sample(params, line, param, m, x)?;
        let t = s.tau();
        if t.abs() < best.tau().abs() {
            best = s.clone();
        }
        if t < 0.0 {
            neg = s;
            fa = t;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            pos = s;
            fb = t;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    if best.tau().abs() > opts.tau_tol {
        return Err(HopfError::RefinementStalled { tau: best.tau() });
    }
    let bracket = (neg.value, pos.value);
    let tau_bracket = (neg.tau(), pos.tau());
    build_point(params, line, param, direction, opts, best, bracket, tau_bracket)
}

#[allow(clippy::too_many_arguments)]
fn build_point(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    direction: Direction,
    opts: &ScanOptions,
    s: Sample,
    bracket: (f64, f64),
    tau_bracket: (f64, f64),
) -> Result<HopfPoint, HopfError> {
    let value = s.value;
    let lambda_star = params.with(param, value);
    let mu0 = s
        .spectrum
        .leading_pair()
        .ok_or_else(|| HopfError::EigenFailure("no complex pair at crossing".into()))?;

    // separation of the remaining spectrum
    let mut rest = s.spectrum.eigenvalues.clone();
    for target in [mu0, mu0.conj()] {
        if let Some(i) = rest
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).norm().total_cmp(&(b.1 - target).norm()))
            .map(|(i, _)| i)
        {
            rest.remove(i);
        }
    }
    let other_real = rest.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    if other_real > -opts.eps_sep || mu0.im <= opts.eps_sep {
        return Err(HopfError::EigenvalueCollision {
            param,
            value,
            other_real,
        });
    }

    let a = jacobian(s.state.as_slice(), &lambda_star, line);
    let pair = eigenpair(&a, mu0)?;
    let omega_star = pair.value.im;
    let (right_residual, left_residual) =
        eigen_residuals(&a, &pair, Complex64::new(0.0, omega_star));
    let worst = right_residual.max(left_residual);
    if !(worst <= opts.residual_tol) {
        return Err(HopfError::Residual { residual: worst });
    }

    let transversality = tau_slope(params, line, param, &s)?;
    if transversality.abs() < opts.min_transversality {
        return Err(HopfError::NonTransversal {
            param,
            value,
            slope: transversality,
        });
    }

    Ok(HopfPoint {
        param,
        direction,
        line,
        origin: value,
        lambda_star,
        x_star: s.state.clone(),
        mu: pair.value,
        omega_star,
        v: pair.right,
        w: pair.left,
        spectrum: s.spectrum,
        bracket,
        tau_bracket,
        transversality,
        right_residual,
        left_residual,
        steps: 0,
    })
}

/// Central difference of τ in the scanned parameter.
fn tau_slope(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    s: &Sample,
) -> Result<f64, HopfError> {
    let h = 1e-5 * s.value.abs().max(1e-2);
    let mut t = [0.0; 2];
    for (slot, sign) in t.iter_mut().zip([1.0, -1.0]) {
        let v = s.value + sign * h;
        let x = equilibrium_at(params, line, param, s.value, &s.state, v)?;
        *slot = sample(params, line, param, v, x)?.tau();
    }
    Ok((t[0] - t[1]) / (2.0 * h))
}

/// Relocates a Hopf point after other parameters changed slightly.
///
/// `params` carries the perturbed values and the old λ* for `param`;
/// `guess` is the old x*. The bracket is found by stepping outward from
/// the guess in whichever direction brings τ towards zero.
pub fn locate_hopf_near(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    direction: Direction,
    guess: &StateVector,
    opts: &ScanOptions,
) -> Result<HopfPoint, HopfError> {
    let v0 = params.get(param);
    let x0 = solve_equilibrium(params, line, guess)?.state;
    let s0 = sample(params, line, param, v0, x0)?;
    let t0 = s0.tau();
    if t0.abs() <= opts.tau_target {
        let mut p = build_point(params, line, param, direction, opts, s0, (v0, v0), (t0, t0))?;
        p.origin = v0;
        return Ok(p);
    }
    let slope = tau_slope(params, line, param, &s0)?;
    if slope == 0.0 || !slope.is_finite() {
        return Err(HopfError::NonTransversal {
            param,
            value: v0,
            slope,
        });
    }
    // step towards τ = 0 along the local slope
    let toward = if t0 < 0.0 { slope.signum() } else { -slope.signum() };
    let mut h = (1.5 * t0.abs() / slope.abs()).max(1e-9 * v0.abs().max(1.0));
    let mut prev = s0;
    for _ in 0..60 {
        let v = prev.value + toward * h;
        let x = equilibrium_at(params, line, param, prev.value, &prev.state, v)?;
        let s = sample(params, line, param, v, x)?;
        if (s.tau() < 0.0) != (prev.tau() < 0.0) {
            let (neg, pos) = if s.tau() < 0.0 { (s, prev) } else { (prev, s) };
            let mut p = refine(params, line, param, direction, opts, neg, pos)?;
            p.origin = v0;
            return Ok(p);
        }
        prev = s;
        h *= 2.0;
    }
    Err(HopfError::NoBifurcation {
        param,
        direction,
        reason: NoBifurcationReason::BracketExhausted { limit: prev.value },
    })
}

/// Single-parameter stability margin |λ*_i − λ0_i|.
pub fn margin(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    direction: Direction,
    opts: &ScanOptions,
) -> Result<f64, HopfError> {
    scan_to_hopf(params, line, param, direction, opts).map(|h| h.margin())
}
