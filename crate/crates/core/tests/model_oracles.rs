mod common;

use common::*;
use hopfmargin::equilibrium::nominal_equilibrium;
use hopfmargin::model::{linearize, rhs_unchecked, rotate_dq, LineModel, ParameterSet};
use hopfmargin::simulate::{integrate, IntegratorOptions};
use proptest::prelude::*;

#[test]
fn closed_form_rhs_matches_dae() {
    for (seed, line) in [(1, LineModel::Static), (2, LineModel::Dynamic)] {
        let mut r = rng(seed);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let (x, p) = random_point(&mut r, line);
            let a = rhs_unchecked(&x, &p, line);
            let b = dae_rhs(&x, &p, line);
            for (u, v) in a.iter().zip(&b) {
                worst = worst.max((u - v).abs() / v.abs().max(1.0));
            }
        }
        assert!(worst <= 1e-10, "{line}: worst mismatch {worst:e}");
    }
}

#[test]
fn derivatives_match_central_differences() {
    for (seed, line) in [(11, LineModel::Static), (12, LineModel::Dynamic)] {
        let mut r = rng(seed);
        for _ in 0..50 {
            let (x, p) = random_point(&mut r, line);
            let b = linearize(&state(&x), &p, line).unwrap();
            let e = rel_diff(&fd_jacobian(&x, &p, line), &b.f_x);
            assert!(e <= 1e-5, "f_x {e:e}");
            let e = rel_diff(&fd_param_jacobian(&x, &p, line), &b.f_lambda);
            assert!(e <= 1e-5, "f_lambda {e:e}");
            for (fd, ex) in fd_hessians(&x, &p, line).iter().zip(&b.f_xx) {
                let e = rel_diff(fd, ex);
                assert!(e <= 1e-5, "f_xx {e:e}");
            }
            for (fd, ex) in fd_mixed(&x, &p, line).iter().zip(&b.f_xlambda) {
                let e = rel_diff(fd, ex);
                assert!(e <= 1e-5, "f_xlambda {e:e}");
            }
        }
    }
}

#[test]
fn equilibrium_is_a_fixed_point_of_the_simulator() {
    let p = ParameterSet::nominal();
    for line in LineModel::BOTH {
        let x0 = nominal_equilibrium(&p, line).unwrap().state;
        let opts = IntegratorOptions::default().sampled(0.5);
        let tr = integrate(&x0, &p, line, (0.0, 20.0), &opts).unwrap();
        let drift = tr
            .states
            .iter()
            .map(|s| s.distance(&x0))
            .fold(0.0f64, f64::max);
        assert!(drift <= 10.0 * opts.rtol, "{line}: drift {drift:e}");
    }
}

proptest! {
    #[test]
    fn rotation_preserves_norm(theta in -10.0f64..10.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let r = rotate_dq(theta, [a, b]);
        let n0 = a.hypot(b);
        prop_assert!((r[0].hypot(r[1]) - n0).abs() <= 1e-14 * n0.max(1.0));
    }
}
