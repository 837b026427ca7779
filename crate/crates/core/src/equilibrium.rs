//! Equilibria of f(x, λ) = 0 and their natural-parameter continuation.

use nalgebra::DVector;
use thiserror::Error;

use crate::model::{
    idx, jacobian, param_jacobian, rhs_unchecked, LineModel, ModelError, Param, ParameterSet,
    StateVector,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("Newton step undefined: singular Jacobian")]
    SingularJacobian,
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("equilibrium branch lost in {param} near {value}")]
    BranchLost { param: Param, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Convergence threshold on ‖f‖∞.
    pub tolerance: f64,
    /// Smallest Armijo damping factor before the step is taken regardless.
    pub min_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            tolerance: 1e-10,
            min_damping: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub state: StateVector,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Initial guess from the lossless power-angle relation and steady-state
/// balance of the controller integrators.
pub fn flat_start(params: &ParameterSet, line: LineModel) -> StateVector {
    let g = |p: Param| params.get(p);
    let v0 = g(Param::V0);
    let vg = g(Param::VgD).hypot(g(Param::VgQ)).max(1e-6);
    let s = (g(Param::PStar) * g(Param::X) / (v0 * vg)).clamp(-0.95, 0.95);
    let theta = s.asin() + g(Param::VgQ).atan2(g(Param::VgD));

    let mut x = StateVector::zeros(line);
    let v = &mut x.0;
    v[idx::P_TILDE] = g(Param::PStar);
    v[idx::Q_TILDE] = g(Param::QStar);
    v[idx::THETA] = theta;
    let (sn, cs) = theta.sin_cos();
    let (vd, vq) = (v0 * cs, v0 * sn);
    v[idx::V_CD] = vd;
    v[idx::V_CQ] = vq;

    let (r, xl) = (g(Param::R), g(Param::X));
    let z2 = r * r + xl * xl;
    let (dd, dq) = (vd - g(Param::VgD), vq - g(Param::VgQ));
    let (igd, igq) = (r / z2 * dd + xl / z2 * dq, r / z2 * dq - xl / z2 * dd);
    let omega = g(Param::Omega0);
    // capacitor balance in the global frame, then rotate to the local frame
    let (itd_g, itq_g) = (igd - omega * g(Param::Cf) * vq, igq + omega * g(Param::Cf) * vd);
    let itd = itd_g * cs + itq_g * sn;
    let itq = -itd_g * sn + itq_g * cs;
    v[idx::I_TD] = itd;
    v[idx::I_TQ] = itq;

    let igd_loc = igd * cs + igq * sn;
    let igq_loc = -igd * sn + igq * cs;
    let v_cd_loc = v0;
    // q̃ = q* in the guess, so the droop reference is V0
    let v_ref_d = v0;
    let safe_div = |a: f64, b: f64| if b.abs() > 1e-12 { a / b } else { 0.0 };
    v[idx::BETA_D] = safe_div(
        itd - g(Param::KVcF) * igd_loc - g(Param::KVcP) * (v_ref_d - v_cd_loc),
        g(Param::KVcI),
    );
    v[idx::BETA_Q] = safe_div(
        itq - g(Param::KVcF) * igq_loc - omega * g(Param::Cf) * v_cd_loc,
        g(Param::KVcI),
    );
    v[idx::GAMMA_D] = safe_div(
        v_cd_loc * (1.0 - g(Param::KCcF)) + g(Param::Rf) * itd,
        g(Param::KCcI),
    );
    v[idx::GAMMA_Q] = safe_div(g(Param::Rf) * itq, g(Param::KCcI));
    if line == LineModel::Dynamic {
        v[idx::I_GD] = igd;
        v[idx::I_GQ] = igq;
    }
    x
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

/// Damped Newton with Armijo backtracking on ‖f‖², returning the raw
/// (unwrapped) iterate.
fn newton(
    x0: &[f64],
    params: &ParameterSet,
    line: LineModel,
    opts: &NewtonOptions,
) -> Result<(DVector<f64>, f64, usize), EquilibriumError> {
    let mut x = DVector::from_column_slice(x0);
    let mut f = rhs_unchecked(x.as_slice(), params, line);
    let mut norm = inf_norm(&f);
    for it in 0..=opts.max_iterations {
        if !norm.is_finite() {
            break;
        }
        if norm <= opts.tolerance {
            return Ok((x, norm, it));
        }
        if it == opts.max_iterations {
            break;
        }
        let jac = jacobian(x.as_slice(), params, line);
        let step = jac
            .lu()
            .solve(&(-&f))
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .ok_or(EquilibriumError::SingularJacobian)?;
        let phi = f.norm_squared();
        let mut alpha = 1.0;
        loop {
            let trial = &x + &step * alpha;
            let ft = rhs_unchecked(trial.as_slice(), params, line);
            let accept = ft.norm_squared() <= (1.0 - 1e-4 * alpha) * phi;
            if accept || alpha * 0.5 < opts.min_damping {
                x = trial;
                f = ft;
                norm = inf_norm(&f);
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(EquilibriumError::NoConvergence {
        iterations: opts.max_iterations,
        residual: norm,
    })
}

/// Solves f(x, λ) = 0 starting from `guess`.
pub fn solve_equilibrium(
    params: &ParameterSet,
    line: LineModel,
    guess: &StateVector,
) -> Result<EquilibriumResult, EquilibriumError> {
    solve_equilibrium_with(params, line, guess, &NewtonOptions::default())
}

pub fn solve_equilibrium_with(
    params: &ParameterSet,
    line: LineModel,
    guess: &StateVector,
    opts: &NewtonOptions,
) -> Result<EquilibriumResult, EquilibriumError> {
    guess.check(line)?;
    params.validate()?;
    let (x, residual, iterations) = newton(guess.as_slice(), params, line, opts)?;
    Ok(EquilibriumResult {
        state: StateVector(x).normalized(),
        residual_norm: residual,
        converged: true,
        iterations,
    })
}

/// Equilibrium connected to the flat start.
pub fn nominal_equilibrium(
    params: &ParameterSet,
    line: LineModel,
) -> Result<EquilibriumResult, EquilibriumError> {
    solve_equilibrium(params, line, &flat_start(params, line))
}

/// Step control for natural-parameter continuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    pub initial: f64,
    pub min: f64,
    pub max: f64,
}

impl StepPolicy {
    /// Steps scaled to the distance being covered.
    pub fn for_span(span: f64) -> Self {
        let span = span.abs().max(1e-12);
        Self {
            initial: span / 50.0,
            min: span * 1e-9,
            max: span / 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub value: f64,
    pub equilibrium: EquilibriumResult,
}

/// dx*/dλ_k = −f_x⁻¹ f_λ e_k at an equilibrium.
pub fn branch_tangent(
    x: &[f64],
    params: &ParameterSet,
    line: LineModel,
    param: Param,
) -> Option<DVector<f64>> {
    let jac = jacobian(x, params, line);
    let col = param_jacobian(x, params, line).column(param.index()).into_owned();
    jac.lu().solve(&(-col))
}

/// Tracks x = u(λ) from the current value of `param` to `target`.
///
/// The first point is the equilibrium at the starting value. Steps halve on
/// Newton failure and grow after successes; a step below `policy.min`
/// reports `BranchLost`.
pub fn continue_equilibrium(
    params: &ParameterSet,
    line: LineModel,
    param: Param,
    target: f64,
    policy: StepPolicy,
    start: Option<&StateVector>,
) -> Result<Vec<BranchPoint>, EquilibriumError> {
    let first = match start {
        Some(s) => solve_equilibrium(params, line, s)?,
        None => nominal_equilibrium(params, line)?,
    };
    let mut value = params.get(param);
    let dir = (target - value).signum();
    let mut x = first.state.0.clone();
    let mut branch = vec![BranchPoint {
        value,
        equilibrium: first,
    }];
    let mut h = policy.initial.abs().min(policy.max);
    let mut current = *params;
    while (target - value) * dir > 0.0 {
        let step = h.min((target - value).abs());
        let next = value + dir * step;
        let trial_params = current.with(param, next);
        let guess = match branch_tangent(x.as_slice(), &current, line, param) {
            Some(t) => &x + t * (next - value),
            None => x.clone(),
        };
        match newton(guess.as_slice(), &trial_params, line, &NewtonOptions::default()) {
            Ok((xn, residual, iterations)) => {
                value = next;
                current = trial_params;
                x = xn;
                branch.push(BranchPoint {
                    value,
                    equilibrium: EquilibriumResult {
                        state: StateVector(x.clone()).normalized(),
                        residual_norm: residual,
                        converged: true,
                        iterations,
                    },
                });
                h = (h * 1.5).min(policy.max);
            }
            Err(_) => {
                h *= 0.5;
                if h < policy.min {
                    return Err(EquilibriumError::BranchLost { param, value });
                }
            }
        }
    }
    Ok(branch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_static_equilibrium_pins_frequency() {
        let params = ParameterSet::nominal();
        let eq = nominal_equilibrium(&params, LineModel::Static).unwrap();
        assert!(eq.converged);
        assert!(eq.residual_norm <= 1e-10);
        assert!((eq.state.p_tilde() - params.get(Param::PStar)).abs() <= 1e-9);
        // Q–V droop holds: v_cd = V0 + K_Q (q* − q̃) with v_cq = 0
        let s = eq.state.as_slice();
        let (sn, cs) = s[idx::THETA].sin_cos();
        let v_cd = s[idx::V_CD] * cs + s[idx::V_CQ] * sn;
        let v_cq = -s[idx::V_CD] * sn + s[idx::V_CQ] * cs;
        let v_ref = 1.0 + params.get(Param::KQ) * (0.5 - eq.state.q_tilde());
        assert!((v_cd - v_ref).abs() < 1e-10);
        assert!(v_cq.abs() < 1e-10);
    }

    #[test]
    fn dynamic_line_shares_the_static_equilibrium() {
        let params = ParameterSet::nominal();
        let s = nominal_equilibrium(&params, LineModel::Static).unwrap().state;
        let d = nominal_equilibrium(&params, LineModel::Dynamic).unwrap().state;
        for i in 0..11 {
            assert!((s.0[i] - d.0[i]).abs() < 1e-9, "state {i}");
        }
        let (r, x) = (0.02, 0.2);
        let z2: f64 = r * r + x * x;
        let (dd, dq) = (s.0[idx::V_CD] - 1.0, s.0[idx::V_CQ]);
        assert!((d.0[idx::I_GD] - (r / z2 * dd + x / z2 * dq)).abs() < 1e-9);
        assert!((d.0[idx::I_GQ] - (r / z2 * dq - x / z2 * dd)).abs() < 1e-9);
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        // all-zero integral and proportional gains leave the integrator rows empty
        let params = ParameterSet::nominal()
            .with(Param::KVcI, 0.0)
            .with(Param::KCcI, 0.0)
            .with(Param::KVcP, 0.0)
            .with(Param::KVcF, 0.0)
            .with(Param::KCcP, 0.0);
        let mut g = flat_start(&params, LineModel::Static);
        g.0[idx::BETA_D] = 1.0;
        let err = solve_equilibrium(&params, LineModel::Static, &g).unwrap_err();
        assert_eq!(err, EquilibriumError::SingularJacobian);
    }

    #[test]
    fn no_convergence_with_tiny_budget() {
        let params = ParameterSet::nominal();
        let mut g = flat_start(&params, LineModel::Static);
        g.0[idx::THETA] += 0.3;
        let opts = NewtonOptions {
            max_iterations: 1,
            ..Default::default()
        };
        let err = solve_equilibrium_with(&params, LineModel::Static, &g, &opts).unwrap_err();
        assert!(matches!(err, EquilibriumError::NoConvergence { iterations: 1, .. }));
    }

    #[test]
    fn continuation_in_x_keeps_power_pinned() {
        let params = ParameterSet::nominal();
        let branch = continue_equilibrium(
            &params,
            LineModel::Static,
            Param::X,
            0.1,
            StepPolicy::for_span(0.1),
            None,
        )
        .unwrap();
        assert!(branch.len() > 5);
        assert!((branch.last().unwrap().value - 0.1).abs() < 1e-15);
        for pt in &branch {
            assert!((pt.equilibrium.state.p_tilde() - 1.0).abs() <= 1e-9);
            assert!(pt.equilibrium.residual_norm <= 1e-10);
        }
    }

    #[test]
    fn continuation_reports_lost_branch_past_fold() {
        // the power transfer limit of the line bounds p*
        let params = ParameterSet::nominal();
        let err = continue_equilibrium(
            &params,
            LineModel::Static,
            Param::PStar,
            20.0,
            StepPolicy::for_span(19.0),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, EquilibriumError::BranchLost { param: Param::PStar, .. }));
    }
}
