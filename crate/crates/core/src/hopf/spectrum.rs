//! Eigen-analysis of the state Jacobian at an equilibrium.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::Serialize;

use super::HopfError;
use crate::model::{jacobian, LineModel, ParameterSet, StateVector};

/// Eigenvalues with |Im| at or below this are treated as real.
pub const IMAG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Critical,
    Unstable,
}

/// Full spectrum of f_x, sorted by decreasing real part (ties by decreasing
/// imaginary part, so a conjugate pair lists the upper member first).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
    /// Index of the upper member of the unique complex pair whose real part
    /// lies within the Hopf tolerance.
    pub critical_pair_index: Option<usize>,
}

impl Spectrum {
    pub fn from_matrix(a: &DMatrix<f64>, hopf_tol: f64) -> Result<Self, HopfError> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(HopfError::EigenFailure("matrix has non-finite entries".into()));
        }
        let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| HopfError::EigenFailure("Schur iteration did not converge".into()))?;
        let mut eigenvalues: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(|a, b| {
            b.re.partial_cmp(&a.re)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
        });
        let max_real_part = eigenvalues.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        let near: Vec<usize> = eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, e)| e.im > IMAG_TOL && e.re.abs() <= hopf_tol)
            .map(|(i, _)| i)
            .collect();
        let critical_pair_index = if near.len() == 1 { Some(near[0]) } else { None };
        Ok(Self {
            eigenvalues,
            max_real_part,
            critical_pair_index,
        })
    }

    /// Largest real part among complex (non-real) eigenvalues, the Hopf test
    /// function.
    pub fn tau(&self) -> Option<f64> {
        self.eigenvalues
            .iter()
            .filter(|e| e.im.abs() > IMAG_TOL)
            .map(|e| e.re)
            .reduce(f64::max)
    }

    /// Upper member of the rightmost complex pair.
    pub fn leading_pair(&self) -> Option<Complex64> {
        self.eigenvalues
            .iter()
            .filter(|e| e.im > IMAG_TOL)
            .copied()
            .reduce(|a, b| if b.re > a.re { b } else { a })
    }

    /// Largest real part among real eigenvalues.
    pub fn max_real_eigenvalue(&self) -> Option<f64> {
        self.eigenvalues
            .iter()
            .filter(|e| e.im.abs() <= IMAG_TOL)
            .map(|e| e.re)
            .reduce(f64::max)
    }

    pub fn classify(&self) -> Stability {
        if self.critical_pair_index.is_some() {
            Stability::Critical
        } else if self.max_real_part < 0.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    }
}

/// Default |Re μ| threshold for flagging a critical pair.
pub const HOPF_TOL: f64 = 1e-6;

/// Spectrum of f_x at `state`.
pub fn eigen_analysis(
    state: &StateVector,
    params: &ParameterSet,
    line: LineModel,
) -> Result<Spectrum, HopfError> {
    state.check(line)?;
    Spectrum::from_matrix(&jacobian(state.as_slice(), params, line), HOPF_TOL)
}

/// Right/left eigenvectors for a simple eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    /// ‖v‖ = 1, largest-magnitude entry real and positive.
    pub right: DVector<Complex64>,
    /// Scaled so that wᴴv = 1.
    pub left: DVector<Complex64>,
}

fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|v| Complex64::new(v, 0.0))
}

fn inverse_iteration(
    a: &DMatrix<Complex64>,
    shift: Complex64,
    iterations: usize,
) -> Result<DVector<Complex64>, HopfError> {
    let n = a.nrows();
    let shifted = a - DMatrix::<Complex64>::identity(n, n) * shift;
    let lu = shifted.lu();
    // deterministic start with no special structure
    let mut x = DVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * (i % 3) as f64));
    for _ in 0..iterations {
        let y = lu
            .solve(&x)
            .ok_or_else(|| HopfError::EigenFailure("shifted matrix is singular".into()))?;
        let nrm = y.norm();
        if !nrm.is_finite() || nrm == 0.0 {
            return Err(HopfError::EigenFailure("inverse iteration broke down".into()));
        }
        x = y / Complex64::new(nrm, 0.0);
    }
    Ok(x)
}

/// Computes the eigenpair nearest `estimate` by inverse iteration, refines
/// the eigenvalue with the two-sided Rayleigh quotient, and fixes the phase
/// and normalization.
pub fn eigenpair(a: &DMatrix<f64>, estimate: Complex64) -> Result<EigenPair, HopfError> {
    let ac = to_complex(a);
    let scale = a.norm().max(1.0);
    let mut mu = estimate;
    let mut right = DVector::zeros(a.nrows());
    let mut left = DVector::zeros(a.nrows());
    for _ in 0..3 {
        let shift = mu + Complex64::new(scale * 1e-13, scale * 1e-13);
        right = inverse_iteration(&ac, shift, 3)?;
        left = inverse_iteration(&ac.transpose(), shift.conj(), 3)?;
        let num = left.adjoint() * &ac * &right;
        let den = left.adjoint() * &right;
        if den[(0, 0)].norm() < 1e-14 {
            return Err(HopfError::EigenFailure("left and right eigenvectors are orthogonal".into()));
        }
        mu = num[(0, 0)] / den[(0, 0)];
    }

    // phase: largest-magnitude entry real positive
    let (imax, _) = right
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bm), (i, z)| if z.norm() > bm { (i, z.norm()) } else { (bi, bm) });
    let phase = right[imax] / Complex64::new(right[imax].norm(), 0.0);
    right /= phase;
    right[imax] = Complex64::new(right[imax].norm(), 0.0);
    let nrm = right.norm();
    right /= Complex64::new(nrm, 0.0);
    let whv = (left.adjoint() * &right)[(0, 0)];
    left /= whv.conj();
    Ok(EigenPair {
        value: mu,
        right,
        left,
    })
}

/// ‖A v − μ v‖ and ‖wᴴA − μ wᴴ‖.
pub fn eigen_residuals(a: &DMatrix<f64>, pair: &EigenPair, mu: Complex64) -> (f64, f64) {
    let ac = to_complex(a);
    let r = &ac * &pair.right - &pair.right * mu;
    let l = pair.left.adjoint() * &ac - pair.left.adjoint() * mu;
    (r.norm(), l.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::nominal_equilibrium;

    fn rotation_block() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                -0.5, 3.0, 0.0, 0.0, //
                -4.0 / 3.0, -0.5, 1.0, 0.0, //
                0.0, 0.0, -3.0, 0.2, //
                0.0, 0.0, 0.0, -1.0,
            ],
        )
    }

    #[test]
    fn spectrum_sorted_and_conjugate_closed() {
        let s = Spectrum::from_matrix(&rotation_block(), HOPF_TOL).unwrap();
        assert_eq!(s.eigenvalues.len(), 4);
        assert!((s.eigenvalues[0] - Complex64::new(-0.5, 2.0)).norm() < 1e-12);
        assert!((s.eigenvalues[1] - Complex64::new(-0.5, -2.0)).norm() < 1e-12);
        assert_eq!(s.max_real_part, s.eigenvalues[0].re);
        assert_eq!(s.classify(), Stability::Stable);
        assert!((s.tau().unwrap() + 0.5).abs() < 1e-12);
        assert!((s.max_real_eigenvalue().unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenpair_normalization() {
        let a = rotation_block();
        let p = eigenpair(&a, Complex64::new(-0.5, 2.0)).unwrap();
        assert!((p.right.norm() - 1.0).abs() < 1e-14);
        let whv = (p.left.adjoint() * &p.right)[(0, 0)];
        assert!((whv - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        let (rr, rl) = eigen_residuals(&a, &p, p.value);
        assert!(rr < 1e-12 && rl < 1e-12);
        let big = p.right.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let lead = p.right.iter().find(|z| z.norm() >= big * (1.0 - 1e-12)).unwrap();
        assert!(lead.im == 0.0 && lead.re > 0.0);
    }

    #[test]
    fn nominal_system_is_stable_and_conjugate_symmetric() {
        let params = ParameterSet::nominal();
        for line in LineModel::BOTH {
            let eq = nominal_equilibrium(&params, line).unwrap();
            let s = eigen_analysis(&eq.state, &params, line).unwrap();
            assert!(s.max_real_part < 0.0, "{line}: {}", s.max_real_part);
            for e in &s.eigenvalues {
                let partner = s.eigenvalues.iter().map(|c| (c - e.conj()).norm()).fold(f64::MAX, f64::min);
                assert!(partner < 1e-9 * e.norm().max(1.0));
            }
        }
    }

    #[test]
    fn non_finite_matrix_is_an_eigen_failure() {
        let mut a = rotation_block();
        a[(0, 0)] = f64::NAN;
        assert!(matches!(Spectrum::from_matrix(&a, HOPF_TOL), Err(HopfError::EigenFailure(_))));
    }
}
