//! Time-domain integration (Dormand–Prince 5(4)) and trajectory
//! classification.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::model::{idx, outputs, rhs_unchecked, LineModel, ModelError, ParameterSet, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step size underflow at t = {t:.6e}")]
    StepUnderflow { t: f64 },
    #[error("non-finite state at t = {t:.6e}")]
    NonFiniteState { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t:.6e}")]
    TooManySteps { max_steps: usize, t: f64 },
    #[error("window {window} needs a trajectory longer than {needed}, got {duration}")]
    WindowTooLong {
        window: f64,
        needed: f64,
        duration: f64,
    },
    #[error("invalid option: {0}")]
    InvalidOption(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Output spacing; `None` records every accepted step.
    pub dt_out: Option<f64>,
    pub h_init: Option<f64>,
    pub max_steps: usize,
    /// Stop early once ‖x‖∞ exceeds this.
    pub stop_norm: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            dt_out: None,
            h_init: None,
            max_steps: 5_000_000,
            stop_norm: Some(1e4),
        }
    }
}

impl IntegratorOptions {
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self.atol = rtol * 1e-2;
        self
    }

    pub fn sampled(mut self, dt: f64) -> Self {
        self.dt_out = Some(dt);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub line: LineModel,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Active power p(t).
    pub p: Vec<f64>,
    /// ‖v_c‖(t).
    pub vc_mag: Vec<f64>,
    /// Integration stopped at `stop_norm`.
    pub halted: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn last_state(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least one sample")
    }

    fn push(&mut self, t: f64, x: DVector<f64>, params: &ParameterSet) {
        let s = StateVector(x);
        let o = outputs(&s, params, self.line);
        self.times.push(t);
        self.p.push(o.p);
        self.vc_mag.push(o.vc_mag);
        self.states.push(s);
    }
}

// Dormand–Prince tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Interpolant over one accepted step.
struct Dense {
    t: f64,
    h: f64,
    r: [DVector<f64>; 5],
}

impl Dense {
    fn eval(&self, t: f64) -> DVector<f64> {
        let s = (t - self.t) / self.h;
        let s1 = 1.0 - s;
        &self.r[0] + (&self.r[1] + (&self.r[2] + (&self.r[3] + &self.r[4] * s1) * s) * s1) * s
    }
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<(), SimError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SimError::NonFiniteState { t })
    }
}

/// Integrates ẋ = f(x, λ) over `t_span` from `x0`.
pub fn integrate(
    x0: &StateVector,
    params: &ParameterSet,
    line: LineModel,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory, SimError> {
    x0.check(line)?;
    params.validate()?;
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(SimError::InvalidOption("t_span must be increasing"));
    }
    if !(opts.rtol > 0.0) || !(opts.atol > 0.0) {
        return Err(SimError::InvalidOption("tolerances must be positive"));
    }
    if let Some(dt) = opts.dt_out {
        if !(dt > 0.0) {
            return Err(SimError::InvalidOption("output spacing must be positive"));
        }
    }
    let f = |x: &DVector<f64>| rhs_unchecked(x.as_slice(), params, line);

    let mut traj = Trajectory {
        line,
        times: Vec::new(),
        states: Vec::new(),
        p: Vec::new(),
        vc_mag: Vec::new(),
        halted: false,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let mut t = t0;
    let mut y = x0.0.clone();
    traj.push(t, y.clone(), params);
    let mut next_out = 1usize;

    let mut k1 = f(&y);
    check_finite(&k1, t)?;
    let scale = |a: &DVector<f64>, b: &DVector<f64>| {
        a.zip_map(b, |u, v| opts.atol + opts.rtol * u.abs().max(v.abs()))
    };
    let mut h = opts.h_init.unwrap_or_else(|| {
        // Hairer's starting step heuristic
        let sc = scale(&y, &y);
        let d0 = (y.component_div(&sc)).norm() / (y.len() as f64).sqrt();
        let d1 = (k1.component_div(&sc)).norm() / (y.len() as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(t1 - t0)
    });
    let h_floor = 1e-14 * t0.abs().max(t1.abs()).max(1.0);

    while t < t1 {
        if traj.accepted_steps + traj.rejected_steps >= opts.max_steps {
            return Err(SimError::TooManySteps {
                max_steps: opts.max_steps,
                t,
            });
        }
        if h < h_floor {
            return Err(SimError::StepUnderflow { t });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        let k2 = f(&(&y + &k1 * (h * A21)));
        let k3 = f(&(&y + (&k1 * A31 + &k2 * A32) * h));
        let k4 = f(&(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h));
        let k5 = f(&(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
        let k6 = f(&(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h));
        let y_new = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
        let k7 = f(&y_new);
        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
        let sc = scale(&y, &y_new);
        let err = err_vec.component_div(&sc).norm() / (y.len() as f64).sqrt();

        if !err.is_finite() {
            traj.rejected_steps += 1;
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            let ydiff = &y_new - &y;
            let bspl = &k1 * h - &ydiff;
            let dense = Dense {
                t,
                h,
                r: [
                    y.clone(),
                    ydiff.clone(),
                    bspl.clone(),
                    &ydiff - &k7 * h - &bspl,
                    (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h,
                ],
            };
            let t_new = if last { t1 } else { t + h };
            check_finite(&y_new, t_new)?;
            match opts.dt_out {
                Some(dt) => loop {
                    let ts = t0 + next_out as f64 * dt;
                    if ts > t_new * (1.0 + 1e-15) || ts > t1 {
                        break;
                    }
                    let ys = if (ts - t_new).abs() <= 1e-12 * dt { y_new.clone() } else { dense.eval(ts) };
                    traj.push(ts, ys, params);
                    next_out += 1;
                },
                None => traj.push(t_new, y_new.clone(), params),
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            traj.accepted_steps += 1;
            if let Some(limit) = opts.stop_norm {
                if y.amax() > limit {
                    if opts.dt_out.is_some() && traj.times.last() != Some(&t) {
                        traj.push(t, y.clone(), params);
                    }
                    traj.halted = true;
                    break;
                }
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            traj.rejected_steps += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(traj)
}

/// Initial condition for onset tests: equilibrium with θ shifted by `delta`.
pub fn perturb_theta(x: &StateVector, delta: f64) -> StateVector {
    let mut y = x.clone();
    y.0[idx::THETA] += delta;
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryClass {
    Converged,
    Oscillating,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub class: TrajectoryClass,
    /// max |p − mean| over the terminal window.
    pub amplitude: f64,
    pub mean: f64,
    /// Angular frequency estimated from mean crossings, rad per time unit.
    pub frequency: Option<f64>,
}

pub const CONVERGED_AMPLITUDE: f64 = 1e-6;
pub const DIVERGED_NORM: f64 = 1e3;

/// Classifies the terminal `window` of a trajectory.
pub fn classify(traj: &Trajectory, window: f64) -> Result<Classification, SimError> {
    if traj.states.iter().any(|s| s.0.amax() > DIVERGED_NORM) {
        return Ok(Classification {
            class: TrajectoryClass::Diverged,
            amplitude: f64::INFINITY,
            mean: f64::NAN,
            frequency: None,
        });
    }
    let duration = traj.duration();
    if !(window > 0.0) || duration <= 2.0 * window {
        return Err(SimError::WindowTooLong {
            window,
            needed: 2.0 * window,
            duration,
        });
    }
    let t_end = *traj.times.last().unwrap();
    let start = traj.times.partition_point(|&t| t < t_end - window);
    let ts = &traj.times[start..];
    let ps = &traj.p[start..];
    let mean = ps.iter().sum::<f64>() / ps.len() as f64;
    let amplitude = ps.iter().fold(0.0f64, |a, p| a.max((p - mean).abs()));
    if amplitude < CONVERGED_AMPLITUDE {
        return Ok(Classification {
            class: TrajectoryClass::Converged,
            amplitude,
            mean,
            frequency: None,
        });
    }
    Ok(Classification {
        class: TrajectoryClass::Oscillating,
        amplitude,
        mean,
        frequency: crossing_frequency(ts, ps, mean),
    })
}

/// Angular frequency from interpolated crossings of `level`.
pub fn crossing_frequency(ts: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    let mut crossings = Vec::new();
    for i in 1..ys.len() {
        let (a, b) = (ys[i - 1] - level, ys[i] - level);
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            let s = a / (a - b);
            crossings.push(ts[i - 1] + s * (ts[i] - ts[i - 1]));
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    let span = crossings.last().unwrap() - crossings.first().unwrap();
    // consecutive crossings are half a period apart
    let half_periods = (crossings.len() - 1) as f64;
    Some(std::f64::consts::PI * half_periods / span)
}

/// Local maxima of |y − level| and their times.
pub fn peaks(ts: &[f64], ys: &[f64], level: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..ys.len().saturating_sub(1) {
        let (a, b, c) = ((ys[i - 1] - level).abs(), (ys[i] - level).abs(), (ys[i + 1] - level).abs());
        if b > a && b >= c {
            out.push((ts[i], b));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::nominal_equilibrium;

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let params = ParameterSet::nominal();
        for line in LineModel::BOTH {
            let eq = nominal_equilibrium(&params, line).unwrap();
            let opts = IntegratorOptions::default();
            let tr = integrate(&eq.state, &params, line, (0.0, 5.0), &opts).unwrap();
            for s in &tr.states {
                assert!(s.distance(&eq.state) <= 10.0 * opts.rtol, "{line}");
            }
            assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn dense_output_hits_requested_times() {
        let params = ParameterSet::nominal();
        let eq = nominal_equilibrium(&params, LineModel::Static).unwrap();
        let x0 = perturb_theta(&eq.state, 1e-3);
        let tr = integrate(&x0, &params, LineModel::Static, (0.0, 1.0), &IntegratorOptions::default().sampled(0.01)).unwrap();
        assert_eq!(tr.len(), 101);
        assert!((tr.times[37] - 0.37).abs() < 1e-15);
        // p is recomputed from the states
        let o = outputs(&tr.states[50], &params, LineModel::Static);
        assert_eq!(o.p, tr.p[50]);
    }

    #[test]
    fn constant_trajectory_converges() {
        let params = ParameterSet::nominal();
        let eq = nominal_equilibrium(&params, LineModel::Static).unwrap();
        let tr = integrate(&eq.state, &params, LineModel::Static, (0.0, 3.0), &IntegratorOptions::default().sampled(0.01)).unwrap();
        let c = classify(&tr, 1.0).unwrap();
        assert_eq!(c.class, TrajectoryClass::Converged);
        assert!(matches!(classify(&tr, 2.0), Err(SimError::WindowTooLong { .. })));
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> Trajectory {
        let mut tr = Trajectory {
            line: LineModel::Static,
            times: vec![],
            states: vec![],
            p: vec![],
            vc_mag: vec![],
            halted: false,
            accepted_steps: 0,
            rejected_steps: 0,
        };
        for i in 0..=2000 {
            let t = i as f64 * 0.01;
            let mut s = StateVector::zeros(LineModel::Static);
            s.0[idx::P_TILDE] = f(t);
            tr.times.push(t);
            tr.p.push(f(t));
            tr.vc_mag.push(1.0);
            tr.states.push(s);
        }
        tr
    }

    #[test]
    fn linear_growth_diverges() {
        let tr = synthetic(|t| 100.0 * t);
        assert_eq!(classify(&tr, 5.0).unwrap().class, TrajectoryClass::Diverged);
    }

    #[test]
    fn sine_frequency_is_recovered() {
        let tr = synthetic(|t| 1.0 + 0.01 * (3.0 * t).sin());
        let c = classify(&tr, 8.0).unwrap();
        assert_eq!(c.class, TrajectoryClass::Oscillating);
        assert!((c.frequency.unwrap() - 3.0).abs() < 0.03);
    }

    #[test]
    fn rejects_bad_span() {
        let params = ParameterSet::nominal();
        let x = StateVector::zeros(LineModel::Static);
        let err = integrate(&x, &params, LineModel::Static, (1.0, 0.0), &IntegratorOptions::default()).unwrap_err();
        assert!(matches!(err, SimError::InvalidOption(_)));
    }
}
