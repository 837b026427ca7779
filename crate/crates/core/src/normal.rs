//! Normal vector of the Hopf hypersurface and margin sensitivities.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hopf::{scan_to_hopf, Direction, HopfError, HopfPoint, ScanOptions};
use crate::model::{linearize, Block, LineModel, LinearizationBundle, ModelError, Param, ParameterSet, N_PARAMS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hopf(#[from] HopfError),
    #[error("state Jacobian is singular at the bifurcation point")]
    SingularAtBifurcation,
    #[error("normal vector is degenerate (raw norm {norm:.3e})")]
    DegenerateNormal { norm: f64 },
    #[error("surface is tangential to {param} (N component {component:.3e})")]
    TangentialDirection { param: Param, component: f64 },
}

/// Smallest admissible raw normal norm.
pub const MIN_NORMAL_NORM: f64 = 1e-12;
/// Smallest admissible |N_I| for sensitivities.
pub const MIN_COMPONENT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalVector {
    /// dμ/dλ_k of the critical eigenvalue, one entry per parameter.
    pub gradient: Vec<Complex64>,
    /// Re dμ/dλ, the unnormalized normal.
    pub raw: DVector<f64>,
    /// β > 0 with ‖β raw‖ = 1.
    pub beta: f64,
    pub unit: DVector<f64>,
}

impl NormalVector {
    pub fn component(&self, p: Param) -> f64 {
        self.unit[p.index()]
    }

    /// (N_uc, N_c) in nomenclature order within each block.
    pub fn partition(&self) -> (Vec<f64>, Vec<f64>) {
        let (c, uc) = ParameterSet::partition();
        let pick = |ps: Vec<Param>| ps.into_iter().map(|p| self.component(p)).collect();
        (pick(uc), pick(c))
    }

    /// Δ^{C|I} = −N_C / N_I. Equal to −1 on the diagonal.
    pub fn sensitivity(&self, cause: Param, control: Param) -> Result<f64, NormalError> {
        let ni = self.component(cause);
        if ni.abs() < MIN_COMPONENT {
            return Err(NormalError::TangentialDirection {
                param: cause,
                component: ni,
            });
        }
        Ok(-self.component(control) / ni)
    }

    /// dΔ/dλ_C for the margin measured along `direction` in `cause`.
    pub fn margin_sensitivity(
        &self,
        cause: Param,
        direction: Direction,
        control: Param,
    ) -> Result<f64, NormalError> {
        Ok(self.sensitivity(cause, control)? / direction.sign())
    }
}

/// dμ/dλ_k for every parameter at a Hopf point, from the eigenvectors
/// (wᴴv = 1) and the derivative bundle.
pub fn eigenvalue_gradient(
    bundle: &LinearizationBundle,
    v: &DVector<Complex64>,
    w: &DVector<Complex64>,
) -> Result<Vec<Complex64>, NormalError> {
    let lu = bundle.f_x.clone().lu();
    // u_k = f_x⁻¹ f_λ e_k for all k in one factorization
    let u: DMatrix<f64> = lu
        .solve(&bundle.f_lambda)
        .ok_or(NormalError::SingularAtBifurcation)?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(NormalError::SingularAtBifurcation);
    }
    Ok((0..N_PARAMS)
        .map(|k| {
            let uk = u.column(k).into_owned();
            bundle.mixed_form(w, v, k) - bundle.hessian_form(w, v, &uk)
        })
        .collect())
}

/// Normal vector from raw ingredients.
pub fn normal_vector_raw(
    bundle: &LinearizationBundle,
    v: &DVector<Complex64>,
    w: &DVector<Complex64>,
) -> Result<NormalVector, NormalError> {
    let gradient = eigenvalue_gradient(bundle, v, w)?;
    let raw = DVector::from_iterator(N_PARAMS, gradient.iter().map(|g| g.re));
    let norm = raw.norm();
    if !(norm >= MIN_NORMAL_NORM) {
        return Err(NormalError::DegenerateNormal { norm });
    }
    let beta = 1.0 / norm;
    Ok(NormalVector {
        gradient,
        unit: &raw * beta,
        raw,
        beta,
    })
}

pub fn normal_vector(h: &HopfPoint) -> Result<NormalVector, NormalError> {
    let bundle = linearize(&h.x_star, &h.lambda_star, h.line)?;
    normal_vector_raw(&bundle, &h.v, &h.w)
}

/// Δ^{C|I} at a Hopf point located by scanning `cause`.
pub fn sensitivity(h: &HopfPoint, control: Param) -> Result<f64, NormalError> {
    normal_vector(h)?.sensitivity(h.param, control)
}

/// Δ̂_new = Δ_old + (dΔ/dλ_C) δC.
pub fn first_order_margin(delta_old: f64, margin_sensitivity: f64, delta_c: f64) -> f64 {
    delta_old + margin_sensitivity * delta_c
}

/// First-order margin in `h.param` after changing `control` by `delta_c`.
pub fn estimate_margin(h: &HopfPoint, control: Param, delta_c: f64) -> Result<f64, NormalError> {
    let n = normal_vector(h)?;
    let s = n.margin_sensitivity(h.param, h.direction, control)?;
    Ok(first_order_margin(h.margin(), s, delta_c))
}

/// Rows of the influence table, in table order.
pub const CAUSE_ROWS: [(Param, Option<Direction>); 14] = [
    (Param::KP, Some(Direction::Up)),
    (Param::KQ, Some(Direction::Up)),
    (Param::OmegaPc, Some(Direction::Down)),
    (Param::KVcP, Some(Direction::Down)),
    (Param::KVcI, Some(Direction::Up)),
    (Param::KVcF, Some(Direction::Up)),
    (Param::KCcP, Some(Direction::Down)),
    (Param::KCcI, None),
    (Param::KCcF, Some(Direction::Up)),
    (Param::Rf, Some(Direction::Up)),
    (Param::Lf, Some(Direction::Up)),
    (Param::Cf, Some(Direction::Up)),
    (Param::X, Some(Direction::Down)),
    (Param::R, None),
];

/// Controls eligible as mitigation: the controller gains.
pub fn control_candidates(cause: Param) -> Vec<Param> {
    Param::ALL
        .into_iter()
        .filter(|p| p.block() == Block::Controllable)
        .filter(|p| !matches!(p, Param::Omega0 | Param::V0 | Param::PStar | Param::QStar))
        .filter(|p| *p != cause)
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityRow {
    pub cause: Param,
    pub direction: Option<Direction>,
    pub hopf_value: Option<f64>,
    pub omega_star: Option<f64>,
    /// Unit normal, one entry per parameter.
    pub normal: Option<Vec<f64>>,
    /// Δ^{C|I} for every column parameter.
    pub sensitivities: Option<Vec<f64>>,
    /// `sensitivities` divided by the row's max |entry|.
    pub heatmap: Option<Vec<f64>>,
    pub best_control: Option<Param>,
    /// Δ^{C|I} of the best control, p.u.
    pub best_sensitivity: Option<f64>,
    /// Same, in reporting units.
    pub best_sensitivity_display: Option<f64>,
    /// Why the row is missing.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub line: LineModel,
    pub columns: Vec<Param>,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityReport {
    pub fn row(&self, cause: Param) -> Option<&SensitivityRow> {
        self.rows.iter().find(|r| r.cause == cause)
    }
}

/// Divides by the max |entry|.
pub fn row_normalize(values: &[f64]) -> Vec<f64> {
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return values.to_vec();
    }
    values.iter().map(|v| v / m).collect()
}

/// Converts a p.u. sensitivity to reporting units (percent for the droop
/// gains).
pub fn display_sensitivity(cause: Param, control: Param, pu: f64) -> f64 {
    pu * cause.unit().scale() / control.unit().scale()
}

/// argmax |Δ^{C|I}| in reporting units over the candidate controls.
/// Returns the control and its p.u. sensitivity.
pub fn best_control(cause: Param, sensitivities: &[f64]) -> Option<(Param, f64)> {
    control_candidates(cause)
        .into_iter()
        .map(|c| (c, sensitivities[c.index()]))
        .filter(|(_, s)| s.is_finite())
        .max_by(|a, b| {
            let da = display_sensitivity(cause, a.0, a.1).abs();
            let db = display_sensitivity(cause, b.0, b.1).abs();
            da.total_cmp(&db)
        })
}

fn missing(cause: Param, direction: Option<Direction>, note: String) -> SensitivityRow {
    SensitivityRow {
        cause,
        direction,
        hopf_value: None,
        omega_star: None,
        normal: None,
        sensitivities: None,
        heatmap: None,
        best_control: None,
        best_sensitivity: None,
        best_sensitivity_display: None,
        note: Some(note),
    }
}

/// Sensitivity row for one located Hopf point.
pub fn sensitivity_row(h: &HopfPoint) -> Result<SensitivityRow, NormalError> {
    let n = normal_vector(h)?;
    let s: Vec<f64> = Param::ALL
        .iter()
        .map(|&c| n.sensitivity(h.param, c))
        .collect::<Result<_, _>>()?;
    let best = best_control(h.param, &s);
    Ok(SensitivityRow {
        cause: h.param,
        direction: Some(h.direction),
        hopf_value: Some(h.value()),
        omega_star: Some(h.omega_star),
        normal: Some(n.unit.iter().copied().collect()),
        heatmap: Some(row_normalize(&s)),
        sensitivities: Some(s),
        best_control: best.map(|b| b.0),
        best_sensitivity: best.map(|b| b.1),
        best_sensitivity_display: best.map(|b| display_sensitivity(h.param, b.0, b.1)),
        note: None,
    })
}

/// All influence-table rows for one line model, computed in parallel.
pub fn full_sensitivity_matrix(
    params: &ParameterSet,
    line: LineModel,
    opts: &ScanOptions,
) -> SensitivityReport {
    let rows = CAUSE_ROWS
        .par_iter()
        .map(|&(cause, direction)| {
            let Some(dir) = direction else {
                return missing(cause, None, "no Hopf bifurcation".into());
            };
            match scan_to_hopf(params, line, cause, dir, opts) {
                Ok(h) => sensitivity_row(&h).unwrap_or_else(|e| missing(cause, direction, e.to_string())),
                Err(e) => missing(cause, direction, e.to_string()),
            }
        })
        .collect();
    SensitivityReport {
        line,
        columns: Param::ALL.to_vec(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hopf::scan_to_hopf;

    fn x_point(line: LineModel) -> HopfPoint {
        scan_to_hopf(&ParameterSet::nominal(), line, Param::X, Direction::Down, &ScanOptions::default()).unwrap()
    }

    #[test]
    fn unit_norm_and_destabilizing_sign() {
        let h = x_point(LineModel::Static);
        let n = normal_vector(&h).unwrap();
        assert!((n.unit.norm() - 1.0).abs() < 1e-14);
        assert!(n.beta > 0.0);
        // decreasing X destabilizes
        assert!(n.component(Param::X) < 0.0);
        // the scan's own slope agrees with the exact derivative
        let exact = n.raw[Param::X.index()];
        assert!((exact - h.transversality).abs() <= 1e-3 * exact.abs(), "{exact} {}", h.transversality);
    }

    #[test]
    fn self_sensitivity_is_minus_one() {
        let h = x_point(LineModel::Static);
        let n = normal_vector(&h).unwrap();
        for p in [Param::X, Param::KP, Param::Rf] {
            assert_eq!(n.sensitivity(p, p).unwrap(), -1.0);
        }
        let s = sensitivity(&h, Param::KVcF).unwrap();
        assert!(s > 0.0, "{s}");
    }

    #[test]
    fn zero_step_keeps_the_margin() {
        let h = x_point(LineModel::Dynamic);
        assert_eq!(estimate_margin(&h, Param::KVcF, 0.0).unwrap(), h.margin());
    }

    #[test]
    fn best_control_compares_in_reporting_units() {
        let mut s = vec![0.0; N_PARAMS];
        // 3 p.u. per p.u. of K_P is 0.03 per percent
        s[Param::KP.index()] = 3.0;
        s[Param::KVcF.index()] = -0.5;
        let (c, v) = best_control(Param::X, &s).unwrap();
        assert_eq!((c, v), (Param::KVcF, -0.5));
        assert_eq!(display_sensitivity(Param::KP, Param::KVcF, -0.3), -30.0);
    }

    #[test]
    fn row_normalization_bounds() {
        let r = row_normalize(&[0.5, -2.0, 1.0]);
        assert_eq!(r, vec![0.25, -1.0, 0.5]);
        assert_eq!(row_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn candidates_exclude_setpoints_and_cause() {
        let c = control_candidates(Param::KQ);
        assert_eq!(c.len(), 7);
        assert!(!c.contains(&Param::KQ) && !c.contains(&Param::PStar));
        assert_eq!(control_candidates(Param::X).len(), 8);
    }

    #[test]
    fn tangential_cause_is_reported() {
        let n = NormalVector {
            gradient: vec![Complex64::new(0.0, 0.0); N_PARAMS],
            raw: DVector::from_element(N_PARAMS, 0.0),
            beta: 1.0,
            unit: DVector::from_fn(N_PARAMS, |i, _| if i == Param::X.index() { 1.0 } else { 0.0 }),
        };
        assert!(matches!(n.sensitivity(Param::KP, Param::X), Err(NormalError::TangentialDirection { .. })));
    }
}
