//! Closed-form ODE right-hand side of the droop-controlled inverter on an
//! infinite bus, with all algebraic variables eliminated.

use nalgebra::DVector;

use super::dual::Real;
use super::params::{Param, ParameterSet, N_PARAMS};
use super::state::{idx, LineModel, StateVector};
use super::ModelError;

/// Applies the dq → DQ rotation R(θ).
pub fn rotate_dq(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

#[inline]
fn par<T: Real>(p: &[T; N_PARAMS], which: Param) -> T {
    p[which.index()]
}

/// Line current in the global frame: the impedance relation for the static
/// line, the two extra states for the dynamic line.
#[inline]
fn line_current<T: Real>(x: &[T], p: &[T; N_PARAMS], line: LineModel) -> (T, T) {
    match line {
        LineModel::Static => {
            let r = par(p, Param::R);
            let xl = par(p, Param::X);
            let z2 = r * r + xl * xl;
            let dd = x[idx::V_CD] - par(p, Param::VgD);
            let dq = x[idx::V_CQ] - par(p, Param::VgQ);
            (r / z2 * dd + xl / z2 * dq, r / z2 * dq - xl / z2 * dd)
        }
        LineModel::Dynamic => (x[idx::I_GD], x[idx::I_GQ]),
    }
}

/// Algebraic signals reconstructed from a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outputs {
    pub p: f64,
    pub q: f64,
    pub vc_mag: f64,
    pub omega: f64,
}

pub fn outputs(x: &StateVector, params: &ParameterSet, line: LineModel) -> Outputs {
    let x = x.as_slice();
    let p = params.as_array();
    let (ig_d_glob, ig_q_glob) = line_current(x, p, line);
    let (vd, vq) = (x[idx::V_CD], x[idx::V_CQ]);
    Outputs {
        // rotation invariant, so global components can be used directly
        p: vd * ig_d_glob + vq * ig_q_glob,
        q: vq * ig_d_glob - vd * ig_q_glob,
        vc_mag: vd.hypot(vq),
        omega: p[Param::Omega0.index()]
            + p[Param::KP.index()] * (p[Param::PStar.index()] - x[idx::P_TILDE]),
    }
}

/// Evaluates ẋ = f(x, λ) for any scalar type. `x` must have `line.dim()`
/// entries and `out` the same length.
pub fn rhs_generic<T: Real>(x: &[T], p: &[T; N_PARAMS], line: LineModel, out: &mut [T]) {
    let one = T::cst(1.0);
    let (s, c) = (x[idx::THETA].sin(), x[idx::THETA].cos());
    let (v_cd_g, v_cq_g) = (x[idx::V_CD], x[idx::V_CQ]);
    let (i_td, i_tq) = (x[idx::I_TD], x[idx::I_TQ]);
    let p_tilde = x[idx::P_TILDE];
    let q_tilde = x[idx::Q_TILDE];

    let c_f = par(p, Param::Cf);
    let l_f = par(p, Param::Lf);
    let k_p = par(p, Param::KP);
    let omega0 = par(p, Param::Omega0);

    // frames
    let (i_gd_g, i_gq_g) = line_current(x, p, line);
    let i_gd = i_gd_g * c + i_gq_g * s;
    let i_gq = -i_gd_g * s + i_gq_g * c;
    let v_cd = v_cd_g * c + v_cq_g * s;
    let v_cq = -v_cd_g * s + v_cq_g * c;
    let i_td_g = i_td * c - i_tq * s;
    let i_tq_g = i_td * s + i_tq * c;

    let p_out = v_cd * i_gd + v_cq * i_gq;
    let q_out = v_cq * i_gd - v_cd * i_gq;

    // droop
    let d_omega = k_p * (par(p, Param::PStar) - p_tilde);
    let omega = omega0 + d_omega;
    let v_ref_d = par(p, Param::V0) + par(p, Param::KQ) * (par(p, Param::QStar) - q_tilde);
    let v_ref_q = T::cst(0.0);

    // voltage loop
    let k_vc_f = par(p, Param::KVcF);
    let k_vc_p = par(p, Param::KVcP);
    let k_vc_i = par(p, Param::KVcI);
    let i_ref_d = k_vc_f * i_gd + k_vc_p * (v_ref_d - v_cd) + k_vc_i * x[idx::BETA_D]
        - v_cq * omega * c_f;
    let i_ref_q = k_vc_f * i_gq + k_vc_p * (v_ref_q - v_cq) + k_vc_i * x[idx::BETA_Q]
        + v_cd * omega * c_f;

    // current loop
    let k_cc_f = par(p, Param::KCcF);
    let k_cc_p = par(p, Param::KCcP);
    let k_cc_i = par(p, Param::KCcI);
    let v_td = k_cc_f * v_cd + k_cc_p * (i_ref_d - i_td) + k_cc_i * x[idx::GAMMA_D]
        - i_tq * omega * l_f;
    let v_tq = k_cc_f * v_cq + k_cc_p * (i_ref_q - i_tq) + k_cc_i * x[idx::GAMMA_Q]
        + i_td * omega * l_f;

    let r_f = par(p, Param::Rf);
    let w_pc = par(p, Param::OmegaPc);
    let w_qc = par(p, Param::OmegaQc);

    out[idx::P_TILDE] = -w_pc * p_tilde + p_out * w_pc;
    out[idx::Q_TILDE] = -w_qc * q_tilde + q_out * w_qc;
    out[idx::THETA] = par(p, Param::OmegaB) * d_omega;
    out[idx::BETA_D] = v_ref_d - v_cd;
    out[idx::BETA_Q] = v_ref_q - v_cq;
    out[idx::GAMMA_D] = i_ref_d - i_td;
    out[idx::GAMMA_Q] = i_ref_q - i_tq;
    out[idx::V_CD] = omega * v_cq_g + one / c_f * (i_td_g - i_gd_g);
    out[idx::V_CQ] = -omega * v_cd_g + one / c_f * (i_tq_g - i_gq_g);
    // the R_f drop acts on the converter (filter inductor) current
    out[idx::I_TD] = omega * i_tq + (v_td - v_cd) / l_f - r_f / l_f * i_td;
    out[idx::I_TQ] = -omega * i_td + (v_tq - v_cq) / l_f - r_f / l_f * i_tq;

    if line == LineModel::Dynamic {
        let r = par(p, Param::R);
        let l = par(p, Param::X);
        // infinite bus: steady-state frequency is omega0, in rad/s
        let w_ss = omega0 * par(p, Param::OmegaB);
        let (i_d, i_q) = (x[idx::I_GD], x[idx::I_GQ]);
        out[idx::I_GD] = w_ss / l * (v_cd_g - par(p, Param::VgD)) - r / l * w_ss * i_d
            + omega0 * w_ss * i_q;
        out[idx::I_GQ] = w_ss / l * (v_cq_g - par(p, Param::VgQ)) - r / l * w_ss * i_q
            - omega0 * w_ss * i_d;
    }
}

/// ẋ = f(x, λ) with input validation.
pub fn rhs(
    state: &StateVector,
    params: &ParameterSet,
    line: LineModel,
) -> Result<DVector<f64>, ModelError> {
    state.check(line)?;
    Ok(rhs_unchecked(state.as_slice(), params, line))
}

/// ẋ without validation, for inner loops that already checked their input.
pub fn rhs_unchecked(x: &[f64], params: &ParameterSet, line: LineModel) -> DVector<f64> {
    let mut out = DVector::zeros(line.dim());
    rhs_generic(x, params.as_array(), line, out.as_mut_slice());
    out
}
