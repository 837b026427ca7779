//! Independent oracles shared by the integration tests and the acceptance
//! binary. Nothing here calls the closed-form rhs derivatives; the DAE
//! evaluator is written from the algebraic/differential split directly.
#![allow(dead_code)]

use hopfmargin::equilibrium::nominal_equilibrium;
use hopfmargin::hopf::{locate_hopf_near, HopfPoint, ScanOptions};
use hopfmargin::model::{rhs_unchecked, LineModel, Param, ParameterSet, StateVector, N_PARAMS};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// algebraic unknowns
const W: usize = 0; // ω
const DW: usize = 1; // Δω
const VREF_D: usize = 2;
const IREF_D: usize = 3;
const IREF_Q: usize = 4;
const VT_D: usize = 5;
const VT_Q: usize = 6;
const IG_D: usize = 7; // local frame
const IG_Q: usize = 8;
const IT_DG: usize = 9; // global frame
const IT_QG: usize = 10;
const VC_D: usize = 11; // local frame
const VC_Q: usize = 12;
const P: usize = 13;
const Q: usize = 14;
const IG_DG: usize = 15; // static line only
const IG_QG: usize = 16;
const Z2: usize = 17;

fn n_alg(line: LineModel) -> usize {
    match line {
        LineModel::Static => 18,
        LineModel::Dynamic => 15,
    }
}

/// Algebraic residual g(x, y) in the controller's sign convention.
fn residual(x: &[f64], y: &[f64], pr: &ParameterSet, line: LineModel) -> Vec<f64> {
    let g = |p: Param| pr.get(p);
    let (s, c) = x[2].sin_cos();
    let (vcd_g, vcq_g) = (x[7], x[8]);
    let (itd, itq) = (x[9], x[10]);
    let (igd_g, igq_g) = match line {
        LineModel::Static => (y[IG_DG], y[IG_QG]),
        LineModel::Dynamic => (x[11], x[12]),
    };
    let vref_q = 0.0;
    let mut r = vec![
        y[W] - g(Param::Omega0) - y[DW],
        y[DW] - g(Param::KP) * (g(Param::PStar) - x[0]),
        y[VREF_D] - g(Param::V0) - g(Param::KQ) * (g(Param::QStar) - x[1]),
        y[IREF_D] - g(Param::KVcF) * y[IG_D] - g(Param::KVcP) * (y[VREF_D] - y[VC_D]) - g(Param::KVcI) * x[3]
            + y[VC_Q] * y[W] * g(Param::Cf),
        y[IREF_Q] - g(Param::KVcF) * y[IG_Q] - g(Param::KVcP) * (vref_q - y[VC_Q]) - g(Param::KVcI) * x[4]
            - y[VC_D] * y[W] * g(Param::Cf),
        y[VT_D] - g(Param::KCcF) * y[VC_D] - g(Param::KCcP) * (y[IREF_D] - itd) - g(Param::KCcI) * x[5]
            + itq * y[W] * g(Param::Lf),
        y[VT_Q] - g(Param::KCcF) * y[VC_Q] - g(Param::KCcP) * (y[IREF_Q] - itq) - g(Param::KCcI) * x[6]
            - itd * y[W] * g(Param::Lf),
        y[IG_D] - igd_g * c - igq_g * s,
        y[IG_Q] + igd_g * s - igq_g * c,
        itd - y[IT_DG] * c - y[IT_QG] * s,
        itq + y[IT_DG] * s - y[IT_QG] * c,
        y[VC_D] - vcd_g * c - vcq_g * s,
        y[VC_Q] + vcd_g * s - vcq_g * c,
        y[P] - y[VC_D] * y[IG_D] - y[VC_Q] * y[IG_Q],
        y[Q] - y[VC_Q] * y[IG_D] + y[VC_D] * y[IG_Q],
    ];
    if line == LineModel::Static {
        let (rl, xl) = (g(Param::R), g(Param::X));
        let (dd, dq) = (vcd_g - g(Param::VgD), vcq_g - g(Param::VgQ));
        r.push(y[IG_DG] - rl / y[Z2] * dd - xl / y[Z2] * dq);
        r.push(y[IG_QG] - rl / y[Z2] * dq + xl / y[Z2] * dd);
        r.push(y[Z2] - rl * rl - xl * xl);
    }
    r
}

/// Solves g(x, y) = 0 for y by Newton with a difference Jacobian.
pub fn solve_algebraic(x: &[f64], pr: &ParameterSet, line: LineModel) -> Vec<f64> {
    let m = n_alg(line);
    let mut y = vec![0.0; m];
    y[W] = 1.0;
    if line == LineModel::Static {
        y[Z2] = 1.0;
    }
    for _ in 0..60 {
        let r = residual(x, &y, pr, line);
        let rn = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let h = 1e-7 * y[j].abs().max(1.0);
            let mut yp = y.clone();
            yp[j] += h;
            let mut ym = y.clone();
            ym[j] -= h;
            let (rp, rm) = (residual(x, &yp, pr, line), residual(x, &ym, pr, line));
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let step = jac.lu().solve(&DVector::from_vec(r)).expect("algebraic Jacobian singular");
        for j in 0..m {
            y[j] -= step[j];
        }
        if rn < 1e-15 && step.amax() < 1e-15 {
            break;
        }
    }
    y
}

/// ẋ from the differential equations with the algebraic variables solved
/// numerically.
pub fn dae_rhs(x: &[f64], pr: &ParameterSet, line: LineModel) -> Vec<f64> {
    let y = solve_algebraic(x, pr, line);
    let g = |p: Param| pr.get(p);
    let (igd_g, igq_g) = match line {
        LineModel::Static => (y[IG_DG], y[IG_QG]),
        LineModel::Dynamic => (x[11], x[12]),
    };
    let (cf, lf, rf) = (g(Param::Cf), g(Param::Lf), g(Param::Rf));
    let mut f = vec![
        -g(Param::OmegaPc) * x[0] + y[P] * g(Param::OmegaPc),
        -g(Param::OmegaQc) * x[1] + y[Q] * g(Param::OmegaQc),
        g(Param::OmegaB) * y[DW],
        y[VREF_D] - y[VC_D],
        0.0 - y[VC_Q],
        y[IREF_D] - x[9],
        y[IREF_Q] - x[10],
        y[W] * x[8] + (y[IT_DG] - igd_g) / cf,
        -y[W] * x[7] + (y[IT_QG] - igq_g) / cf,
        y[W] * x[10] + (y[VT_D] - y[VC_D]) / lf - rf / lf * x[9],
        -y[W] * x[9] + (y[VT_Q] - y[VC_Q]) / lf - rf / lf * x[10],
    ];
    if line == LineModel::Dynamic {
        let (r, l, w0) = (g(Param::R), g(Param::X), g(Param::Omega0));
        let wss = w0 * g(Param::OmegaB);
        f.push(wss / l * (x[7] - g(Param::VgD)) - r / l * wss * x[11] + w0 * wss * x[12]);
        f.push(wss / l * (x[8] - g(Param::VgQ)) - r / l * wss * x[12] - w0 * wss * x[11]);
    }
    f
}

/// Random state scattered around the nominal equilibrium and a parameter
/// set within ±10% of nominal (zero entries stay small).
pub fn random_point(rng: &mut StdRng, line: LineModel) -> (Vec<f64>, ParameterSet) {
    let nominal = ParameterSet::nominal();
    let x0 = nominal_equilibrium(&nominal, line).unwrap().state;
    let mut x: Vec<f64> = x0.as_slice().to_vec();
    for (i, v) in x.iter_mut().enumerate() {
        let spread = if i == 2 { 0.5 } else { 0.2 };
        *v += rng.random_range(-spread..spread);
    }
    let mut p = nominal;
    for q in Param::ALL {
        let v = p.get(q);
        let nv = if v == 0.0 {
            rng.random_range(0.0..0.05)
        } else {
            v * rng.random_range(0.9..1.1)
        };
        p.set(q, nv);
    }
    (x, p)
}

pub fn param_step(p: &ParameterSet, k: Param) -> f64 {
    1e-5 * p.get(k).abs().max(1e-2)
}

pub fn fd_jacobian(x: &[f64], p: &ParameterSet, line: LineModel) -> DMatrix<f64> {
    let n = x.len();
    let mut j = DMatrix::zeros(n, n);
    for c in 0..n {
        let h = 1e-6 * x[c].abs().max(1.0);
        let mut xp = x.to_vec();
        xp[c] += h;
        let mut xm = x.to_vec();
        xm[c] -= h;
        let d = (rhs_unchecked(&xp, p, line) - rhs_unchecked(&xm, p, line)) / (2.0 * h);
        j.set_column(c, &d);
    }
    j
}

pub fn fd_param_jacobian(x: &[f64], p: &ParameterSet, line: LineModel) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(x.len(), N_PARAMS);
    for k in Param::ALL {
        let h = param_step(p, k);
        let pp = p.with(k, p.get(k) + h);
        let pm = p.with(k, p.get(k) - h);
        let d = (rhs_unchecked(x, &pp, line) - rhs_unchecked(x, &pm, line)) / (2.0 * h);
        j.set_column(k.index(), &d);
    }
    j
}

/// Second differences of the rhs: Hessians per component, state × state.
pub fn fd_hessians(x: &[f64], p: &ParameterSet, line: LineModel) -> Vec<DMatrix<f64>> {
    let n = x.len();
    let mut out = vec![DMatrix::zeros(n, n); n];
    let hs: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    for a in 0..n {
        for b in a..n {
            let eval = |sa: f64, sb: f64| {
                let mut y = x.to_vec();
                y[a] += sa * hs[a];
                y[b] += sb * hs[b];
                rhs_unchecked(&y, p, line)
            };
            let d = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hs[a] * hs[b]);
            for i in 0..n {
                out[i][(a, b)] = d[i];
                out[i][(b, a)] = d[i];
            }
        }
    }
    out
}

/// Mixed second differences ∂²f_i/∂x_j∂λ_k at (j, k).
pub fn fd_mixed(x: &[f64], p: &ParameterSet, line: LineModel) -> Vec<DMatrix<f64>> {
    let n = x.len();
    let mut out = vec![DMatrix::zeros(n, N_PARAMS); n];
    for j in 0..n {
        let hx = 1e-4 * x[j].abs().max(1.0);
        for k in Param::ALL {
            let hp = 1e2 * param_step(p, k);
            let eval = |sx: f64, sp: f64| {
                let mut y = x.to_vec();
                y[j] += sx * hx;
                let q = p.with(k, p.get(k) + sp * hp);
                rhs_unchecked(&y, &q, line)
            };
            let d = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * hx * hp);
            for i in 0..n {
                out[i][(j, k.index())] = d[i];
            }
        }
    }
    out
}

/// max |A − B| / max |B|.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax();
    if scale == 0.0 {
        return a.amax();
    }
    (a - b).amax() / scale
}

/// Parameters that may be nudged when probing the Hopf surface.
pub fn tangent_params(cause: Param) -> Vec<Param> {
    Param::ALL
        .into_iter()
        .filter(|&p| p != cause && p != Param::Omega0 && p != Param::V0 && p != Param::OmegaB)
        .collect()
}

/// Difference tangent of the Hopf surface: move the other parameters along
/// a random direction (scaled by magnitude) by ±eps and re-locate the
/// bifurcation value of `h.param`. Returned in raw parameter coordinates.
pub fn surface_tangent(h: &HopfPoint, rng: &mut StdRng, eps: f64, opts: &ScanOptions) -> DVector<f64> {
    let base = h.lambda_star;
    let others = tangent_params(h.param);
    let mut dir = DVector::zeros(N_PARAMS);
    for &k in &others {
        dir[k.index()] = rng.random_range(-1.0..1.0) * base.get(k).abs().max(1e-2);
    }
    let relocate = |s: f64| {
        let mut q = base;
        for &k in &others {
            q.set(k, base.get(k) + s * eps * dir[k.index()]);
        }
        let p = locate_hopf_near(&q, h.line, h.param, h.direction, &h.x_star, opts).expect("relocate");
        p.lambda_star
    };
    let (plus, minus) = (relocate(1.0), relocate(-1.0));
    DVector::from_iterator(
        N_PARAMS,
        Param::ALL.iter().map(|&k| (plus.get(k) - minus.get(k)) / (2.0 * eps)),
    )
}

/// Difference tangent residual |N·t| / ‖t‖ for a unit normal.
pub fn tangent_residual(unit: &DVector<f64>, t: &DVector<f64>) -> f64 {
    unit.dot(t).abs() / t.norm()
}

pub fn state(x: &[f64]) -> StateVector {
    StateVector::from_slice(x)
}

/// Every Hopf point reachable from the influence-table rows.
pub fn all_hopf_points(line: LineModel, opts: &ScanOptions) -> Vec<HopfPoint> {
    use hopfmargin::hopf::scan_to_hopf;
    use hopfmargin::normal::CAUSE_ROWS;
    let p = ParameterSet::nominal();
    CAUSE_ROWS
        .iter()
        .filter_map(|&(cause, dir)| dir.and_then(|d| scan_to_hopf(&p, line, cause, d, opts).ok()))
        .collect()
}
