//! Lyapunov functions along `(u, v)` trajectories.
//!
//! - `V1(t, u, v) = u^2/2 + u ∫_{t0}^t s f(s, v) ds`, nonincreasing when
//!   `v f <= 0` and `∂f/∂v <= 0`.
//! - `V2(t, u, v) = u^2/2 + t^3 ∫_0^v f(t, s) ds`, nonincreasing when
//!   `v [3 f + t ∂f/∂t] <= 0`.
//!
//! Monitors check discrete nonincrease on a grid of trajectory samples. The
//! allowed increase between two grid points is the quadrature error of both
//! values, plus ten times the local integration error propagated through
//! the gradient of `V`, plus a rounding floor.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::numerics::{integrate_finite_budget, integrate_tail_with, QuadTol, TailOptions, DEFAULT_MAX_PANELS};
use crate::problem::{IvpSpec, Nonlinearity};
use crate::transform::UvState;

/// Upper bound on monitor grid points.
pub const MAX_MONITOR_POINTS: usize = 2000;

/// Safety factor on propagated local integration error.
pub const INTEGRATION_SLACK_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub value: f64,
    pub quad_error: f64,
    /// `|∂V/∂u|` and `|∂V/∂v|` at the sample, for error propagation.
    pub grad: [f64; 2],
    /// Sum of magnitudes of the terms of `V`, for the rounding floor.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub t_prev: f64,
    pub t_next: f64,
    pub increase: f64,
    pub allowed_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub function: &'static str,
    pub grid_points: usize,
    pub violations: Vec<Violation>,
    /// Largest step-to-step increase (negative when `V` strictly decreased everywhere).
    pub max_increase: f64,
    pub passed: bool,
    /// `max_k |V(t_k) - V(t_0)|` and whether every such drift stayed within
    /// the slack accumulated up to `t_k`.
    pub max_drift: f64,
    pub drift_within_slack: bool,
    #[serde(skip)]
    pub values: Vec<LyapunovSample>,
    #[serde(skip)]
    pub cumulative_slack: Vec<f64>,
}

fn integrate(h: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, tol: QuadTol) -> Result<(f64, f64)> {
    let r = integrate_finite_budget(h, lo, hi, tol, DEFAULT_MAX_PANELS)?;
    // a non-converged result still carries its (larger) error estimate
    Ok((r.value, r.abs_error_estimate))
}

/// `∫_a^b` that also accepts `b < a`.
fn signed_integral(h: impl FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: QuadTol) -> Result<(f64, f64)> {
    if b >= a {
        integrate(h, a, b, tol)
    } else {
        let (value, err) = integrate(h, b, a, tol)?;
        Ok((-value, err))
    }
}

/// `V1` at a state, with the inner integral taken at fixed `v = s.v`.
pub fn v1(nl: &Nonlinearity, t0: f64, s: UvState, quad_tol: QuadTol) -> Result<LyapunovSample> {
    if s.t < t0 {
        return Err(Error::Precondition(format!("V1 needs t >= t0, got t = {} < {t0}", s.t)));
    }
    let (q, q_err) = integrate(|r| Ok(r * nl.f(r, s.v)?), t0, s.t, quad_tol)?;
    let (dq, _) = integrate(|r| Ok(r * nl.df_dv(r, s.v)?), t0, s.t, quad_tol)?;
    let half_sq = 0.5 * s.u * s.u;
    Ok(LyapunovSample {
        t: s.t,
        value: half_sq + s.u * q,
        quad_error: s.u.abs() * q_err,
        grad: [(s.u + q).abs(), (s.u * dq).abs()],
        scale: half_sq + (s.u * q).abs(),
    })
}

/// `V2` at a state.
pub fn v2(nl: &Nonlinearity, s: UvState, quad_tol: QuadTol) -> Result<LyapunovSample> {
    let (w, w_err) = signed_integral(|r| nl.f(s.t, r), 0.0, s.v, quad_tol)?;
    let t3 = s.t.powi(3);
    let half_sq = 0.5 * s.u * s.u;
    Ok(LyapunovSample {
        t: s.t,
        value: half_sq + t3 * w,
        quad_error: t3 * w_err,
        grad: [s.u.abs(), (t3 * nl.f(s.t, s.v)?).abs()],
        scale: half_sq + (t3 * w).abs(),
    })
}

/// Indices of the samples monitors evaluate: every sample when there are at
/// most `cap`, otherwise the samples closest to `cap` log-uniform times.
/// The first and last samples are always included.
pub fn monitor_grid(traj: &Trajectory, cap: usize) -> Vec<usize> {
    let samples = traj.samples();
    let n = samples.len();
    if n <= cap.max(2) {
        return (0..n).collect();
    }
    let (la, lb) = (traj.t0().ln(), traj.t_last().ln());
    let mut out: Vec<usize> = Vec::with_capacity(cap);
    for k in 0..cap {
        let target = (la + (lb - la) * k as f64 / (cap - 1) as f64).exp();
        let i = samples.partition_point(|s| s.state.t < target).min(n - 1);
        let i = if i > 0 && (samples[i - 1].state.t - target).abs() <= (samples[i].state.t - target).abs() {
            i - 1
        } else {
            i
        };
        if out.last() != Some(&i) {
            out.push(i);
        }
    }
    if out[0] != 0 {
        out.insert(0, 0);
    }
    if *out.last().unwrap() != n - 1 {
        out.push(n - 1);
    }
    out
}

fn monitor<F>(name: &'static str, traj: &Trajectory, mut eval: F) -> Result<MonotonicityReport>
where
    F: FnMut(UvState) -> Result<LyapunovSample>,
{
    let samples = traj.samples();
    let grid = monitor_grid(traj, MAX_MONITOR_POINTS);
    let values: Vec<LyapunovSample> = grid.iter().map(|&i| eval(samples[i].state)).collect::<Result<_>>()?;

    let mut violations = Vec::new();
    let mut max_increase = f64::NEG_INFINITY;
    let mut cumulative = 0.0;
    let mut cumulative_slack = vec![0.0];
    let mut max_drift: f64 = 0.0;
    let mut drift_ok = true;

    for (w, idx) in values.windows(2).zip(grid.windows(2)) {
        let (a, b) = (&w[0], &w[1]);
        let local: [f64; 2] = samples[idx[0] + 1..=idx[1]]
            .iter()
            .fold([0.0; 2], |acc, s| [acc[0] + s.error[0], acc[1] + s.error[1]]);
        let propagated = a.grad[0].max(b.grad[0]) * local[0] + a.grad[1].max(b.grad[1]) * local[1];
        let rounding = 8.0 * f64::EPSILON * (a.scale + b.scale);
        let slack = a.quad_error + b.quad_error + INTEGRATION_SLACK_FACTOR * propagated + rounding;
        let increase = b.value - a.value;
        max_increase = max_increase.max(increase);
        if increase > slack {
            violations.push(Violation {
                t_prev: a.t,
                t_next: b.t,
                increase,
                allowed_slack: slack,
            });
        }
        cumulative += slack;
        cumulative_slack.push(cumulative);
        let drift = (b.value - values[0].value).abs();
        max_drift = max_drift.max(drift);
        // the initial value carries its own quadrature error
        if drift > cumulative + values[0].quad_error {
            drift_ok = false;
        }
    }

    Ok(MonotonicityReport {
        function: name,
        grid_points: values.len(),
        passed: violations.is_empty(),
        violations,
        max_increase: if values.len() > 1 { max_increase } else { 0.0 },
        max_drift,
        drift_within_slack: drift_ok,
        values,
        cumulative_slack,
    })
}

pub fn monitor_v1(nl: &Nonlinearity, ivp: &IvpSpec, traj: &Trajectory, quad_tol: QuadTol) -> Result<MonotonicityReport> {
    monitor("V1", traj, |s| v1(nl, ivp.t0, s, quad_tol))
}

pub fn monitor_v2(nl: &Nonlinearity, traj: &Trajectory, quad_tol: QuadTol) -> Result<MonotonicityReport> {
    monitor("V2", traj, |s| v2(nl, s, quad_tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSample {
    pub t: f64,
    pub abs_u: f64,
    pub y: f64,
    pub z: f64,
    pub bound_4yc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundChainReport {
    pub c: f64,
    /// `K = ∫_{t0}^∞ s a(s) ds`, when the tail converged.
    pub k: Option<f64>,
    /// Largest `|u| / (4 (y + c))` over the grid.
    pub max_ratio: f64,
    /// `|u(t)| < 4 (y(t) + c)` at every grid point.
    pub passed: bool,
    /// `y(t) <= K g(z(t))` at every grid point; `None` without a finite `K`.
    pub y_bound_passed: Option<bool>,
    #[serde(skip)]
    pub samples: Vec<BoundSample>,
}

/// Check `|u| < 4 (y + c)` with `y(t) = g(|v(t)|) ∫_{t0}^t s a(s) ds`, and
/// `y <= K g(z)` with `z(t) = 1 + |v0| + ∫_{t0}^t |u(s)|/s^2 ds` (trapezoid
/// over all accepted samples).
pub fn bound_chain(nl: &Nonlinearity, ivp: &IvpSpec, traj: &Trajectory, quad_tol: QuadTol) -> Result<BoundChainReport> {
    let env = nl
        .envelope()
        .ok_or_else(|| Error::Precondition("bound chain needs an envelope (a, g)".into()))?;
    let d = ivp.derived_constants();
    let samples = traj.samples();

    let k = integrate_tail_with(
        |s| Ok(s * (env.a)(s)?),
        ivp.t0,
        &TailOptions {
            rel_tol: quad_tol.rel,
            abs_tol: quad_tol.abs,
            ..TailOptions::default()
        },
    )?
    .value();

    let mut z = Vec::with_capacity(samples.len());
    let mut acc = 1.0 + d.v0.abs();
    z.push(acc);
    for w in samples.windows(2) {
        let (a, b) = (w[0].state, w[1].state);
        acc += 0.5 * (b.t - a.t) * (a.u.abs() / (a.t * a.t) + b.u.abs() / (b.t * b.t));
        z.push(acc);
    }

    let grid = monitor_grid(traj, MAX_MONITOR_POINTS);
    let mut weight = 0.0;
    let mut prev_t = ivp.t0;
    let mut out = Vec::with_capacity(grid.len());
    let mut passed = true;
    let mut y_ok = true;
    let mut max_ratio: f64 = 0.0;
    for &i in &grid {
        let s = samples[i].state;
        weight += integrate(|r| Ok(r * (env.a)(r)?), prev_t, s.t, quad_tol)?.0;
        prev_t = s.t;
        let y = weight * (env.g)(s.v.abs())?;
        let bound = 4.0 * (y + d.c);
        passed &= s.u.abs() < bound;
        max_ratio = max_ratio.max(s.u.abs() / bound);
        if let Some(k) = k {
            let gz = (env.g)(z[i])?;
            y_ok &= y <= k * gz * (1.0 + 1e-9);
        }
        out.push(BoundSample {
            t: s.t,
            abs_u: s.u.abs(),
            y,
            z: z[i],
            bound_4yc: bound,
        });
    }

    Ok(BoundChainReport {
        c: d.c,
        k,
        max_ratio,
        passed,
        y_bound_passed: k.map(|_| y_ok),
        samples: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate as run, IntegrationConfig, Termination};
    use crate::problem::{fn1, EmdenFowlerCoeff};
    use approx::assert_abs_diff_eq;

    fn tol() -> QuadTol {
        QuadTol::new(1e-10, 1e-15)
    }

    fn ef(n: u32, a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Nonlinearity {
        EmdenFowlerCoeff::new(n, fn1(move |t| Ok(a(t)))).unwrap().to_nonlinearity()
    }

    #[test]
    fn v1_examples() {
        let demo = ef(2, |t| -t.powi(-6));
        assert_eq!(v1(&demo, 1.0, UvState::new(5.0, 0.0, 0.7), tol()).unwrap().value, 0.0);
        assert_eq!(v1(&Nonlinearity::zero(), 1.0, UvState::new(5.0, 3.0, 1.0), tol()).unwrap().value, 4.5);
        let s = v1(&demo, 100.0, UvState::new(200.0, 1.0, 0.5), tol()).unwrap();
        assert_abs_diff_eq!(s.value, 0.5 - 6.25e-4, epsilon = 1e-13);
        assert!(v1(&demo, 100.0, UvState::new(50.0, 1.0, 0.5), tol()).is_err());
    }

    #[test]
    fn v1_second_term_is_linear_in_u() {
        let demo = ef(2, |t| -t.powi(-6));
        let (t, u, v) = (300.0, 0.3, -0.8);
        let a = v1(&demo, 100.0, UvState::new(t, u, v), tol()).unwrap().value - 0.5 * u * u;
        let b = v1(&demo, 100.0, UvState::new(t, 2.0 * u, v), tol()).unwrap().value - 2.0 * u * u;
        assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-15);
    }

    #[test]
    fn v2_examples() {
        let caligo = ef(1, |t| t.powi(-4));
        assert_eq!(v2(&caligo, UvState::new(3.0, 1.5, 0.0), tol()).unwrap().value, 1.125);
        let s = v2(&caligo, UvState::new(3.0, 1.0, 2.0), tol()).unwrap();
        assert_abs_diff_eq!(s.value, 2.5, epsilon = 1e-13);
        let neg = v2(&caligo, UvState::new(3.0, 1.0, -2.0), tol()).unwrap();
        assert_abs_diff_eq!(neg.value, 2.5, epsilon = 1e-13);
        assert_eq!(v2(&Nonlinearity::zero(), UvState::new(9.0, 2.0, 5.0), tol()).unwrap().value, 2.0);
    }

    #[test]
    fn free_motion_monitors_pass() {
        let ivp = IvpSpec::new(1.0, 1.0, 2.0).unwrap();
        let nl = Nonlinearity::zero();
        let traj = run(&nl, &ivp, &IntegrationConfig::with_horizon(100.0)).unwrap();
        let r1 = monitor_v1(&nl, &ivp, &traj, tol()).unwrap();
        let r2 = monitor_v2(&nl, &traj, tol()).unwrap();
        assert!(r1.passed && r2.passed);
        assert_eq!(r1.max_drift, 0.0);
        assert_eq!(r2.max_drift, 0.0);

        let chain = bound_chain(&nl, &ivp, &traj, tol()).unwrap();
        assert!(chain.passed);
        assert_eq!(chain.k, Some(0.0));
        assert!(chain.samples.iter().all(|s| s.y == 0.0));
    }

    #[test]
    fn theorem1_demo_monitor_and_sign_flipped_control() {
        let ivp = IvpSpec::new(100.0, 50.0, 0.0).unwrap();
        let cfg = IntegrationConfig::with_horizon(1e5);
        let demo = ef(2, |t| -t.powi(-6));
        let traj = run(&demo, &ivp, &cfg).unwrap();
        let report = monitor_v1(&demo, &ivp, &traj, tol()).unwrap();
        assert!(report.passed, "{:?}", &report.violations[..report.violations.len().min(3)]);

        let flipped = ef(2, |t| t.powi(-6));
        let traj = run(&flipped, &ivp, &cfg).unwrap();
        let report = monitor_v1(&flipped, &ivp, &traj, tol()).unwrap();
        assert!(!report.passed);
        assert!(report.max_increase > 0.0);
    }

    #[test]
    fn caligo_equality_conserves_v2() {
        let nl = ef(1, |t| t.powi(-4));
        let ivp = IvpSpec::new(1.0, 0.3, 0.5).unwrap();
        let traj = run(&nl, &ivp, &IntegrationConfig::with_horizon(1e4)).unwrap();
        let r = monitor_v2(&nl, &traj, tol()).unwrap();
        assert!(r.passed && r.drift_within_slack, "{r:?}");
        let d = ivp.derived_constants();
        assert_eq!(r.values[0].value, 0.5 * (d.u0 * d.u0 + d.v0 * d.v0));
    }

    #[test]
    fn strict_caligo_v2_nonincreasing() {
        let nl = ef(1, |t| t.powf(-4.5));
        let ivp = IvpSpec::new(1.0, 0.3, 0.5).unwrap();
        let traj = run(&nl, &ivp, &IntegrationConfig::with_horizon(1e4)).unwrap();
        assert!(monitor_v2(&nl, &traj, tol()).unwrap().passed);
    }

    #[test]
    fn bound_chain_needs_envelope() {
        let nl = Nonlinearity::new(crate::problem::fn2(|_, _| Ok(0.0)));
        let ivp = IvpSpec::new(1.0, 1.0, 2.0).unwrap();
        let traj = run(&nl, &ivp, &IntegrationConfig::with_horizon(10.0)).unwrap();
        assert!(matches!(bound_chain(&nl, &ivp, &traj, tol()), Err(Error::Precondition(_))));
    }

    #[test]
    fn growth_instance_bound_chain_is_informational() {
        let nl = ef(2, |t| -2.0 * t.powi(-6));
        let ivp = IvpSpec::new(1.0, 1.0, 2.0).unwrap();
        let traj = run(&nl, &ivp, &IntegrationConfig::with_horizon(100.0)).unwrap();
        assert_eq!(traj.termination, Termination::ReachedHorizon);
        let chain = bound_chain(&nl, &ivp, &traj, tol()).unwrap();
        assert!(chain.max_ratio.is_finite() && chain.max_ratio > 0.0);
    }

    #[test]
    fn grid_is_capped_and_log_uniform() {
        let states: Vec<UvState> = (0..10_000).map(|i| UvState::new(1.0 + i as f64, 0.0, 0.0)).collect();
        let traj = Trajectory::from_states(states, Termination::ReachedHorizon).unwrap();
        let g = monitor_grid(&traj, 100);
        assert!(g.len() <= 102);
        assert_eq!(g[0], 0);
        assert_eq!(*g.last().unwrap(), 9_999);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
