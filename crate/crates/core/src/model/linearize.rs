use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::dual::{Dual, HyperDual, Real};
use super::params::{ParameterSet, N_PARAMS};
use super::rhs::rhs_generic;
use super::state::{LineModel, StateVector};
use super::ModelError;

/// First and second derivatives of f at one point.
///
/// `f_xx[i]` is the (symmetric) Hessian of component i with respect to the
/// state; `f_xlambda[i]` holds ∂²f_i/∂x_j∂λ_k at `(j, k)`.
#[derive(Debug, Clone)]
pub struct LinearizationBundle {
    pub x: StateVector,
    pub params: ParameterSet,
    pub line: LineModel,
    pub f_x: DMatrix<f64>,
    pub f_lambda: DMatrix<f64>,
    pub f_xx: Vec<DMatrix<f64>>,
    pub f_xlambda: Vec<DMatrix<f64>>,
}

fn lift<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&a| T::cst(a)).collect()
}

fn lift_params<T: Real>(p: &ParameterSet) -> [T; N_PARAMS] {
    let mut out = [T::cst(0.0); N_PARAMS];
    for (o, &v) in out.iter_mut().zip(p.as_array()) {
        *o = T::cst(v);
    }
    out
}

/// Exact state Jacobian f_x.
pub fn jacobian(x: &[f64], params: &ParameterSet, line: LineModel) -> DMatrix<f64> {
    let n = line.dim();
    let p = lift_params::<Dual>(params);
    let mut xs = lift::<Dual>(x);
    let mut out = vec![Dual::cst(0.0); n];
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        xs[j].eps = 1.0;
        rhs_generic(&xs, &p, line, &mut out);
        for i in 0..n {
            jac[(i, j)] = out[i].eps;
        }
        xs[j].eps = 0.0;
    }
    jac
}

/// Exact parameter Jacobian f_λ.
pub fn param_jacobian(x: &[f64], params: &ParameterSet, line: LineModel) -> DMatrix<f64> {
    let n = line.dim();
    let mut p = lift_params::<Dual>(params);
    let xs = lift::<Dual>(x);
    let mut out = vec![Dual::cst(0.0); n];
    let mut jac = DMatrix::zeros(n, N_PARAMS);
    for k in 0..N_PARAMS {
        p[k].eps = 1.0;
        rhs_generic(&xs, &p, line, &mut out);
        for i in 0..n {
            jac[(i, k)] = out[i].eps;
        }
        p[k].eps = 0.0;
    }
    jac
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<(), ModelError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFiniteDerivative(what))
    }
}

/// Evaluates every derivative object needed by the normal-vector formula.
pub fn linearize(
    state: &StateVector,
    params: &ParameterSet,
    line: LineModel,
) -> Result<LinearizationBundle, ModelError> {
    state.check(line)?;
    params.validate()?;
    let n = line.dim();
    let x = state.as_slice();

    let f_x = jacobian(x, params, line);
    check_finite(&f_x, "f_x")?;
    let f_lambda = param_jacobian(x, params, line);
    check_finite(&f_lambda, "f_lambda")?;

    let mut f_xx = vec![DMatrix::zeros(n, n); n];
    let mut f_xlambda = vec![DMatrix::zeros(n, N_PARAMS); n];
    let mut out = vec![HyperDual::cst(0.0); n];

    let p_const = lift_params::<HyperDual>(params);
    let mut xs = lift::<HyperDual>(x);
    for j in 0..n {
        for k in j..n {
            xs[j].e1 = 1.0;
            xs[k].e2 = 1.0;
            rhs_generic(&xs, &p_const, line, &mut out);
            for i in 0..n {
                f_xx[i][(j, k)] = out[i].e12;
                f_xx[i][(k, j)] = out[i].e12;
            }
            xs[j].e1 = 0.0;
            xs[k].e2 = 0.0;
        }
    }

    let mut p = lift_params::<HyperDual>(params);
    for j in 0..n {
        xs[j].e1 = 1.0;
        for k in 0..N_PARAMS {
            p[k].e2 = 1.0;
            rhs_generic(&xs, &p, line, &mut out);
            for i in 0..n {
                f_xlambda[i][(j, k)] = out[i].e12;
            }
            p[k].e2 = 0.0;
        }
        xs[j].e1 = 0.0;
    }
    for m in f_xx.iter() {
        check_finite(m, "f_xx")?;
    }
    for m in f_xlambda.iter() {
        check_finite(m, "f_xlambda")?;
    }

    Ok(LinearizationBundle {
        x: state.clone(),
        params: *params,
        line,
        f_x,
        f_lambda,
        f_xx,
        f_xlambda,
    })
}

impl LinearizationBundle {
    pub fn dim(&self) -> usize {
        self.f_x.nrows()
    }

    /// Complex bilinear form Σ_i conj(w_i) Σ_jl H_i[j,l] v_j u_l for the
    /// state Hessian contracted with a real direction `u`.
    pub fn hessian_form(&self, w: &DVector<Complex64>, v: &DVector<Complex64>, u: &DVector<f64>) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, h) in self.f_xx.iter().enumerate() {
            let hu = h * u;
            let s: Complex64 = v.iter().zip(hu.iter()).map(|(vj, &huj)| vj * huj).sum();
            acc += w[i].conj() * s;
        }
        acc
    }

    /// Σ_i conj(w_i) Σ_j ∂²f_i/∂x_j∂λ_k v_j.
    pub fn mixed_form(&self, w: &DVector<Complex64>, v: &DVector<Complex64>, k: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, m) in self.f_xlambda.iter().enumerate() {
            let s: Complex64 = (0..v.len()).map(|j| v[j] * m[(j, k)]).sum();
            acc += w[i].conj() * s;
        }
        acc
    }
}
