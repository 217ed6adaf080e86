//! Numerical checks of the sufficient conditions for asymptotically linear
//! behaviour.
//!
//! Pointwise sign conditions over `[t0, ∞) × ℝ` cannot be decided by
//! sampling. They are checked on a finite [`SamplingGrid`] and a `Holds`
//! verdict records that grid. Improper integrals go through
//! [`integrate_tail_with`], whose three-valued verdict surfaces as
//! `Inconclusive` instead of a guess. Threshold comparisons report
//! `margin = rhs - lhs` and only hold when the margin clears ten times the
//! summed quadrature error.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::numerics::{integrate_tail_with, TailKind, TailOptions, TailVerdict};
use crate::problem::{EmdenFowlerCoeff, IvpSpec, Nonlinearity};

/// Relative tolerance for sign conditions built from closed-form values.
pub const SIGN_TOL_EXACT: f64 = 64.0 * f64::EPSILON;
/// Relative tolerance when a finite-difference derivative is involved.
pub const SIGN_TOL_FD: f64 = 1e-7;
/// Threshold margins must exceed this multiple of the quadrature error.
pub const MARGIN_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub point: BTreeMap<String, f64>,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Logarithmic,
}

/// Sampling grid: `t_count` times in `[t_min, t_max]` and `v_count` values
/// evenly spaced in `[-v_max, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub t_count: usize,
    pub spacing: Spacing,
    pub v_max: f64,
    pub v_count: usize,
}

pub const MIN_GRID_COUNT: usize = 16;

impl SamplingGrid {
    /// 256 log-spaced times on `[t0, 1e6 t0]` and 128 values on `[-10, 10]`.
    pub fn default_for(t0: f64) -> Self {
        SamplingGrid {
            t_min: t0,
            t_max: 1e6 * t0,
            t_count: 256,
            spacing: Spacing::Logarithmic,
            v_max: 10.0,
            v_count: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_count < MIN_GRID_COUNT || self.v_count < MIN_GRID_COUNT {
            return Err(Error::invalid(format!(
                "sampling grid needs at least {MIN_GRID_COUNT} points per axis"
            )));
        }
        if !(self.t_min >= 1.0 && self.t_max > self.t_min && self.t_max.is_finite()) {
            return Err(Error::invalid("sampling grid needs 1 <= t_min < t_max < ∞"));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::invalid("sampling grid needs 0 < v_max < ∞"));
        }
        Ok(())
    }

    pub fn t_points(&self) -> Vec<f64> {
        let n = self.t_count;
        (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.t_min + s * (self.t_max - self.t_min),
                    Spacing::Logarithmic => self.t_min * (self.t_max / self.t_min).powf(s),
                }
            })
            .collect()
    }

    pub fn v_points(&self) -> Vec<f64> {
        let n = self.v_count;
        (0..n)
            .map(|i| -self.v_max + 2.0 * self.v_max * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionVerdict {
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub computed: BTreeMap<String, f64>,
    /// Grid a sampled verdict was established on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<SamplingGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConditionVerdict {
    fn new(name: &str, status: Status) -> Self {
        ConditionVerdict {
            name: name.to_string(),
            status,
            witness: None,
            computed: BTreeMap::new(),
            grid: None,
            note: None,
        }
    }

    fn inconclusive(name: &str, note: impl Into<String>) -> Self {
        ConditionVerdict {
            note: Some(note.into()),
            ..ConditionVerdict::new(name, Status::Inconclusive)
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.computed.insert(key.to_string(), value);
        self
    }

    pub fn holds(&self) -> bool {
        self.status == Status::Holds
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.computed.get(key).copied()
    }
}

fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Find a verdict by name.
pub fn find<'a>(verdicts: &'a [ConditionVerdict], name: &str) -> Option<&'a ConditionVerdict> {
    verdicts.iter().find(|v| v.name == name)
}

/// Quantity evaluated at a grid point: the value that must be `<= 0`, the
/// magnitude scale its rounding error is measured against, and the labelled
/// parts reported in a witness.
struct Probe {
    value: f64,
    scale: f64,
    parts: Vec<(&'static str, f64)>,
}

/// Sampled check of `value(point) <= 0` with a relative rounding allowance.
fn sampled_nonpositive<P, F>(name: &str, points: P, grid: &SamplingGrid, rel_tol: f64, mut probe: F) -> ConditionVerdict
where
    P: IntoIterator<Item = (f64, f64)>,
    F: FnMut(f64, f64) -> Result<Probe>,
{
    let mut worst: Option<(f64, f64, f64, Probe)> = None;
    let mut max_value = f64::NEG_INFINITY;
    let mut count = 0usize;
    for (t, v) in points {
        let p = match probe(t, v) {
            Ok(p) => p,
            Err(e) => return ConditionVerdict::inconclusive(name, format!("evaluation failed at t={t}, v={v}: {e}")),
        };
        count += 1;
        max_value = max_value.max(p.value);
        let excess = p.value - rel_tol * p.scale;
        if excess > 0.0 && worst.as_ref().is_none_or(|w| excess > w.2) {
            worst = Some((t, v, excess, p));
        }
    }
    let mut verdict = match worst {
        None => ConditionVerdict::new(name, Status::Holds),
        Some((t, v, _, p)) => {
            let mut values = map(&p.parts);
            values.insert("value".into(), p.value);
            ConditionVerdict {
                witness: Some(Witness {
                    point: map(&[("t", t), ("v", v)]),
                    values,
                }),
                ..ConditionVerdict::new(name, Status::Fails)
            }
        }
    };
    verdict.grid = Some(*grid);
    verdict
        .with("max_value", max_value)
        .with("points", count as f64)
        .with("rel_tol", rel_tol)
}

fn plane(grid: &SamplingGrid, skip_zero_v: bool) -> Vec<(f64, f64)> {
    let vs = grid.v_points();
    grid.t_points()
        .into_iter()
        .flat_map(|t| vs.iter().map(move |&v| (t, v)))
        .filter(|&(_, v)| !(skip_zero_v && v == 0.0))
        .collect()
}

fn t_line(grid: &SamplingGrid) -> Vec<(f64, f64)> {
    grid.t_points().into_iter().map(|t| (t, 0.0)).collect()
}

fn tail_verdict(name: &str, tail: &TailVerdict, label: &str) -> ConditionVerdict {
    match tail.kind {
        TailKind::Convergent {
            value,
            abs_error_estimate,
        } => ConditionVerdict::new(name, Status::Holds)
            .with(label, value)
            .with("abs_error_estimate", abs_error_estimate),
        TailKind::Divergent => {
            let last = tail.last().expect("divergence needs evidence");
            ConditionVerdict {
                witness: Some(Witness {
                    point: map(&[("horizon", last.horizon)]),
                    values: map(&[("partial_integral", last.partial)]),
                }),
                note: Some("partial integrals keep growing over the doubling schedule".into()),
                ..ConditionVerdict::new(name, Status::Fails)
            }
        }
        TailKind::Inconclusive => {
            let mut v = ConditionVerdict::inconclusive(name, "tail integral neither settled nor clearly diverged");
            if let Some(last) = tail.last() {
                v = v.with("last_horizon", last.horizon).with("last_partial", last.partial);
            }
            v
        }
    }
}

fn threshold_status(margin: f64, error: f64, strict: bool) -> Status {
    let noise = MARGIN_FACTOR * error;
    let clears = if strict { margin > 0.0 } else { margin >= 0.0 };
    let breaks = if strict { margin <= 0.0 } else { margin < 0.0 };
    if clears && margin.abs() >= noise && !(strict && margin <= noise) {
        Status::Holds
    } else if breaks && margin.abs() >= noise {
        Status::Fails
    } else {
        Status::Inconclusive
    }
}

fn threshold_verdict(name: &str, lhs: f64, rhs: f64, error: f64, strict: bool, witness_point: BTreeMap<String, f64>) -> ConditionVerdict {
    let margin = rhs - lhs;
    let status = threshold_status(margin, error, strict);
    let mut v = ConditionVerdict::new(name, status)
        .with("lhs", lhs)
        .with("rhs", rhs)
        .with("margin", margin)
        .with("quad_error", error);
    if status == Status::Fails {
        v.witness = Some(Witness {
            point: witness_point,
            values: map(&[("lhs", lhs), ("rhs", rhs)]),
        });
    }
    if status == Status::Inconclusive {
        v.note = Some("margin is within ten times the quadrature error".into());
    }
    v
}

/// Threshold `(4/t0)(K + c/g(1)) < ∫_{1+|v0|}^∞ dξ/g(ξ)` with `K = ∫_{t0}^∞ t a(t) dt`.
pub fn theorem1_threshold(nl: &Nonlinearity, ivp: &IvpSpec, tails: &TailOptions) -> ConditionVerdict {
    const NAME: &str = "threshold";
    let Some(env) = nl.envelope() else {
        return ConditionVerdict::inconclusive(NAME, "no envelope (a, g) supplied");
    };
    let d = ivp.derived_constants();
    let k_tail = match integrate_tail_with(|t| Ok(t * (env.a)(t)?), ivp.t0, tails) {
        Ok(v) => v,
        Err(e) => return ConditionVerdict::inconclusive(NAME, format!("K quadrature failed: {e}")),
    };
    let rhs_tail = match integrate_tail_with(|xi| Ok(1.0 / (env.g)(xi)?), 1.0 + d.v0.abs(), tails) {
        Ok(v) => v,
        Err(e) => return ConditionVerdict::inconclusive(NAME, format!("rhs quadrature failed: {e}")),
    };
    let g1 = match (env.g)(1.0) {
        Ok(g) if g > 0.0 => g,
        Ok(g) => return ConditionVerdict::inconclusive(NAME, format!("g(1) = {g} is not positive")),
        Err(e) => return ConditionVerdict::inconclusive(NAME, format!("g(1) failed: {e}")),
    };
    let (Some(k), Some(k_err)) = (k_tail.value(), k_tail.error_estimate()) else {
        return ConditionVerdict::inconclusive(NAME, "K = ∫ t a(t) dt did not converge")
            .with("c", d.c)
            .with("g1", g1);
    };
    let (Some(rhs), Some(rhs_err)) = (rhs_tail.value(), rhs_tail.error_estimate()) else {
        return ConditionVerdict::inconclusive(NAME, "∫ dξ/g(ξ) did not converge")
            .with("K", k)
            .with("c", d.c)
            .with("g1", g1);
    };
    let lhs = 4.0 / ivp.t0 * (k + d.c / g1);
    let err = 4.0 / ivp.t0 * k_err + rhs_err;
    threshold_verdict(
        NAME,
        lhs,
        rhs,
        err,
        true,
        map(&[("t0", ivp.t0), ("u0", d.u0), ("v0", d.v0)]),
    )
    .with("K", k)
    .with("K_error", k_err)
    .with("c", d.c)
    .with("g1", g1)
    .with("u0", d.u0)
    .with("v0", d.v0)
}

/// Sign, envelope and integrability conditions plus the threshold for the
/// general theorem with `v f <= 0`, `∂f/∂v <= 0`.
pub fn check_theorem1(nl: &Nonlinearity, ivp: &IvpSpec, grid: &SamplingGrid, tails: &TailOptions) -> Result<Vec<ConditionVerdict>> {
    grid.validate()?;
    let pts = plane(grid, false);
    let mut out = Vec::with_capacity(7);

    out.push(sampled_nonpositive("sign_vf", pts.iter().copied(), grid, SIGN_TOL_EXACT, |t, v| {
        let f = nl.f(t, v)?;
        Ok(Probe {
            value: v * f,
            scale: (v * f).abs(),
            parts: vec![("f", f)],
        })
    }));

    let dfdv_tol = if nl.has_df_dv() { SIGN_TOL_EXACT } else { SIGN_TOL_FD };
    let mut dfdv = sampled_nonpositive("sign_dfdv", pts.iter().copied(), grid, dfdv_tol, |t, v| {
        let d = nl.df_dv(t, v)?;
        // a finite difference is only accurate relative to the size of f nearby
        let scale = if nl.has_df_dv() { d.abs() } else { d.abs() + nl.f(t, v)?.abs() };
        Ok(Probe {
            value: d,
            scale,
            parts: vec![("df_dv", d)],
        })
    });
    if !nl.has_df_dv() {
        dfdv.note = Some("∂f/∂v by central differences".into());
    }
    out.push(dfdv);

    let Some(env) = nl.envelope() else {
        for name in ["envelope", "g_admissible", "K_finite", "g_tail", "threshold"] {
            out.push(ConditionVerdict::inconclusive(name, "no envelope (a, g) supplied"));
        }
        return Ok(out);
    };

    out.push(sampled_nonpositive("envelope", pts.iter().copied(), grid, 0.0, |t, v| {
        let s = nl.envelope_sample(t, v)?.expect("envelope present");
        Ok(Probe {
            value: if s.holds { 0.0_f64.min(s.abs_f - s.bound) } else { s.abs_f - s.bound },
            scale: s.bound,
            parts: vec![("abs_f", s.abs_f), ("bound", s.bound)],
        })
    }));

    // g nondecreasing and positive for ξ > 0
    let xis: Vec<f64> = (0..grid.v_count)
        .map(|i| grid.v_max * i as f64 / (grid.v_count - 1) as f64)
        .collect();
    let mut g_ok = ConditionVerdict::new("g_admissible", Status::Holds);
    let mut prev: Option<(f64, f64)> = None;
    for &xi in &xis {
        let g = match (env.g)(xi) {
            Ok(g) => g,
            Err(e) => {
                g_ok = ConditionVerdict::inconclusive("g_admissible", format!("g({xi}) failed: {e}"));
                break;
            }
        };
        let decreasing = prev.is_some_and(|(_, gp)| g < gp);
        if (xi > 0.0 && g <= 0.0) || g < 0.0 || decreasing {
            let mut values = map(&[("g", g)]);
            if let Some((xp, gp)) = prev {
                values.insert("xi_prev".into(), xp);
                values.insert("g_prev".into(), gp);
            }
            g_ok = ConditionVerdict {
                witness: Some(Witness {
                    point: map(&[("xi", xi)]),
                    values,
                }),
                ..ConditionVerdict::new("g_admissible", Status::Fails)
            };
            break;
        }
        prev = Some((xi, g));
    }
    g_ok.grid = Some(*grid);
    out.push(g_ok);

    let k_tail = integrate_tail_with(|t| Ok(t * (env.a)(t)?), ivp.t0, tails);
    out.push(match k_tail {
        Ok(tail) => tail_verdict("K_finite", &tail, "K"),
        Err(e) => ConditionVerdict::inconclusive("K_finite", e.to_string()),
    });
    let g_tail = integrate_tail_with(|xi| Ok(1.0 / (env.g)(xi)?), 1.0, tails);
    out.push(match g_tail {
        Ok(tail) => tail_verdict("g_tail", &tail, "integral"),
        Err(e) => ConditionVerdict::inconclusive("g_tail", e.to_string()),
    });
    out.push(theorem1_threshold(nl, ivp, tails));
    Ok(out)
}

/// Sign conditions `v f >= 0` and `v [3 f + t ∂f/∂t] <= 0` for `v != 0`.
pub fn check_theorem2(nl: &Nonlinearity, grid: &SamplingGrid) -> Result<Vec<ConditionVerdict>> {
    grid.validate()?;
    let pts = plane(grid, true);
    let vf = sampled_nonpositive("sign_vf_nonneg", pts.iter().copied(), grid, SIGN_TOL_EXACT, |t, v| {
        let f = nl.f(t, v)?;
        Ok(Probe {
            value: -v * f,
            scale: (v * f).abs(),
            parts: vec![("f", f), ("vf", v * f)],
        })
    });
    let tol = if nl.has_df_dt() { SIGN_TOL_EXACT } else { SIGN_TOL_FD };
    let mut cond = sampled_nonpositive("sign_3f_tdft", pts.iter().copied(), grid, tol, |t, v| {
        let f = nl.f(t, v)?;
        let dt = nl.df_dt(t, v)?;
        Ok(Probe {
            value: v * (3.0 * f + t * dt),
            scale: v.abs() * (3.0 * f.abs() + t * dt.abs()),
            parts: vec![("f", f), ("df_dt", dt)],
        })
    });
    if !nl.has_df_dt() {
        cond.note = Some("∂f/∂t by central differences".into());
    }
    Ok(vec![vf, cond])
}

/// Emden-Fowler, `A <= 0`: sign of `A`, `∫ t^{2n} |A| < ∞`, and the threshold
/// `(4/t0)(1 + u0²/2 + ∫ t^{2n}|A|) <= 1 / (2n (1+|v0|)^{2n})`.
pub fn check_ef_negative(ef: &EmdenFowlerCoeff, ivp: &IvpSpec, grid: &SamplingGrid, tails: &TailOptions) -> Result<Vec<ConditionVerdict>> {
    grid.validate()?;
    let n = ef.n() as i32;
    let mut out = Vec::with_capacity(3);
    out.push(sampled_nonpositive("A_nonpositive", t_line(grid), grid, 0.0, |t, _| {
        let a = ef.a(t)?;
        Ok(Probe {
            value: a,
            scale: a.abs(),
            parts: vec![("A", a)],
        })
    }));

    let tail = match integrate_tail_with(|t| Ok(t.powi(2 * n) * ef.a(t)?.abs()), ivp.t0, tails) {
        Ok(tail) => tail,
        Err(e) => {
            out.push(ConditionVerdict::inconclusive("integral_finite", e.to_string()));
            out.push(ConditionVerdict::inconclusive("threshold_15", e.to_string()));
            return Ok(out);
        }
    };
    out.push(tail_verdict("integral_finite", &tail, "integral"));

    let d = ivp.derived_constants();
    let rhs = 1.0 / (2.0 * f64::from(n) * (1.0 + d.v0.abs()).powi(2 * n));
    let verdict = match (tail.value(), tail.error_estimate()) {
        (Some(integral), Some(err)) => {
            let lhs = 4.0 / ivp.t0 * (d.c + integral);
            threshold_verdict(
                "threshold_15",
                lhs,
                rhs,
                4.0 / ivp.t0 * err,
                false,
                map(&[("t0", ivp.t0), ("u0", d.u0), ("v0", d.v0)]),
            )
            .with("integral", integral)
        }
        _ => ConditionVerdict::inconclusive("threshold_15", "∫ t^{2n}|A| dt did not converge").with("rhs", rhs),
    };
    out.push(verdict.with("c", d.c).with("u0", d.u0).with("v0", d.v0));
    Ok(out)
}

/// Emden-Fowler, `A >= 0`: sign of `A`, the condition `(2n+2) A + t A' <= 0`,
/// and its consequence `A(t) <= c t^{-(2n+2)}` with `c = A(t_min) t_min^{2n+2}`.
pub fn check_caligo(ef: &EmdenFowlerCoeff, grid: &SamplingGrid) -> Result<Vec<ConditionVerdict>> {
    grid.validate()?;
    let n = ef.n() as i32;
    let k = f64::from(2 * n + 2);
    let mut out = Vec::with_capacity(3);

    out.push(sampled_nonpositive("A_nonnegative", t_line(grid), grid, 0.0, |t, _| {
        let a = ef.a(t)?;
        Ok(Probe {
            value: -a,
            scale: a.abs(),
            parts: vec![("A", a)],
        })
    }));

    let tol = if ef.has_derivative() { SIGN_TOL_EXACT } else { SIGN_TOL_FD };
    let mut caligo = sampled_nonpositive("caligo_16", t_line(grid), grid, tol, |t, _| {
        let a = ef.a(t)?;
        let da = ef.da_dt(t)?;
        Ok(Probe {
            value: k * a + t * da,
            scale: k * a.abs() + t * da.abs(),
            parts: vec![("A", a), ("dA_dt", da)],
        })
    });
    if !ef.has_derivative() {
        caligo.note = Some("A' by central differences".into());
    }
    out.push(caligo);

    let envelope = match ef.a(grid.t_min) {
        Ok(a0) => {
            let c = a0 * grid.t_min.powi(2 * n + 2);
            sampled_nonpositive("caligo_envelope", t_line(grid), grid, 1e-12, |t, _| {
                let scaled = t.powi(2 * n + 2) * ef.a(t)?;
                Ok(Probe {
                    value: scaled - c,
                    scale: scaled.abs().max(c.abs()),
                    parts: vec![("t_pow_A", scaled)],
                })
            })
            .with("c", c)
        }
        Err(e) => ConditionVerdict::inconclusive("caligo_envelope", e.to_string()),
    };
    out.push(envelope);
    Ok(out)
}

/// Comparison conditions from the nonoscillation literature:
/// `∫ s^{2n} A < ∞` (waltman), `A' <= 0` (potter), `∫ s^{2n-1} A < ∞` (star).
pub fn check_comparisons(ef: &EmdenFowlerCoeff, t0: f64, tails: &TailOptions) -> Result<Vec<ConditionVerdict>> {
    let grid = SamplingGrid::default_for(t0);
    grid.validate()?;
    let n = ef.n() as i32;
    let waltman = match integrate_tail_with(|s| Ok(s.powi(2 * n) * ef.a(s)?), t0, tails) {
        Ok(tail) => tail_verdict("waltman", &tail, "integral"),
        Err(e) => ConditionVerdict::inconclusive("waltman", e.to_string()),
    };
    let tol = if ef.has_derivative() { SIGN_TOL_EXACT } else { SIGN_TOL_FD };
    let potter = sampled_nonpositive("potter", t_line(&grid), &grid, tol, |t, _| {
        let da = ef.da_dt(t)?;
        let scale = if ef.has_derivative() { da.abs() } else { da.abs() + ef.a(t)?.abs() / t };
        Ok(Probe {
            value: da,
            scale,
            parts: vec![("dA_dt", da)],
        })
    });
    let star = match integrate_tail_with(|s| Ok(s.powi(2 * n - 1) * ef.a(s)?), t0, tails) {
        Ok(tail) => tail_verdict("star", &tail, "integral"),
        Err(e) => ConditionVerdict::inconclusive("star", e.to_string()),
    };
    Ok(vec![waltman, potter, star])
}

/// Strict sign changes of `x(t) = t v(t)` over the samples; zeros are skipped.
pub fn count_sign_changes(traj: &Trajectory) -> usize {
    let mut last_sign = 0.0;
    let mut changes = 0;
    for s in traj.states() {
        let x = s.t * s.v;
        if x == 0.0 {
            continue;
        }
        let sign = x.signum();
        if last_sign != 0.0 && sign != last_sign {
            changes += 1;
        }
        last_sign = sign;
    }
    changes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, IntegrationConfig, Termination};
    use crate::problem::{fn1, fn2};
    use crate::transform::UvState;
    use approx::assert_abs_diff_eq;

    fn coeff(n: u32, a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> EmdenFowlerCoeff {
        EmdenFowlerCoeff::new(n, fn1(move |t| Ok(a(t)))).unwrap()
    }

    fn power_coeff(n: u32, k: f64, p: f64) -> EmdenFowlerCoeff {
        coeff(n, move |t| k * t.powf(p)).with_derivative(fn1(move |t| Ok(k * p * t.powf(p - 1.0))))
    }

    fn tails() -> TailOptions {
        TailOptions::default()
    }

    fn small_grid(t0: f64) -> SamplingGrid {
        SamplingGrid {
            t_count: 64,
            v_count: 32,
            ..SamplingGrid::default_for(t0)
        }
    }

    #[test]
    fn theorem1_demo_quantities() {
        let ef = power_coeff(2, -1.0, -6.0);
        let ivp = IvpSpec::new(100.0, 50.0, 0.5).unwrap();
        let verdicts = check_theorem1(&ef.to_nonlinearity(), &ivp, &small_grid(100.0), &tails()).unwrap();
        for name in ["sign_vf", "sign_dfdv", "envelope", "g_admissible", "K_finite", "g_tail", "threshold"] {
            assert!(find(&verdicts, name).unwrap().holds(), "{name}: {:?}", find(&verdicts, name));
        }
        let th = find(&verdicts, "threshold").unwrap();
        assert_abs_diff_eq!(th.get("K").unwrap(), 0.01, epsilon = 1e-10);
        assert_eq!(th.get("c").unwrap(), 1.0);
        assert_abs_diff_eq!(th.get("lhs").unwrap(), 0.0404, epsilon = 1e-10);
        assert_abs_diff_eq!(th.get("rhs").unwrap(), 2.0 / 9.0, epsilon = 1e-10);
        assert_abs_diff_eq!(th.get("margin").unwrap(), 2.0 / 9.0 - 0.0404, epsilon = 1e-9);
    }

    #[test]
    fn theorem1_literal_demo_initial_slope_fails_threshold() {
        // x'(t0) = 0 gives u0 = -50 and c = 1251
        let ef = power_coeff(2, -1.0, -6.0);
        let ivp = IvpSpec::new(100.0, 50.0, 0.0).unwrap();
        let th = theorem1_threshold(&ef.to_nonlinearity(), &ivp, &tails());
        assert_eq!(th.status, Status::Fails);
        assert_eq!(th.get("c").unwrap(), 1251.0);
    }

    #[test]
    fn theorem1_free_motion() {
        let nl = Nonlinearity::zero();
        // 4c/t0 = 4/100 < 1/(2 (1.5)^2) = 0.222
        let ivp = IvpSpec::new(100.0, 50.0, 0.5).unwrap();
        let verdicts = check_theorem1(&nl, &ivp, &small_grid(100.0), &tails()).unwrap();
        assert!(verdicts.iter().all(|v| v.holds()), "{verdicts:?}");
        let th = find(&verdicts, "threshold").unwrap();
        assert_eq!(th.get("K").unwrap(), 0.0);
        assert_abs_diff_eq!(th.get("lhs").unwrap(), 0.04, epsilon = 1e-15);

        // 4c/t0 = 4 > 1/(2 (1+|v0|)^2)
        let ivp = IvpSpec::new(1.0, 0.0, 0.0).unwrap();
        let th = theorem1_threshold(&nl, &ivp, &tails());
        assert_eq!(th.status, Status::Fails);
        assert!(th.witness.is_some());
    }

    #[test]
    fn theorem1_growth_instance_fails_threshold() {
        let nl = power_coeff(2, -2.0, -6.0).to_nonlinearity();
        let ivp = IvpSpec::new(1.0, 1.0, 2.0).unwrap();
        let th = theorem1_threshold(&nl, &ivp, &tails());
        assert_eq!(th.status, Status::Fails);
        assert_abs_diff_eq!(th.get("K").unwrap(), 2.0, epsilon = 1e-9);
        assert_eq!(th.get("c").unwrap(), 1.5);
        assert_abs_diff_eq!(th.get("lhs").unwrap(), 14.0, epsilon = 1e-8);
        assert_abs_diff_eq!(th.get("rhs").unwrap(), 0.125, epsilon = 1e-10);
        let w = th.witness.as_ref().unwrap();
        assert_eq!(w.values["lhs"], th.get("lhs").unwrap());
    }

    #[test]
    fn positive_coefficient_fails_sign_condition_with_witness() {
        let nl = power_coeff(2, 1.0, -6.0).to_nonlinearity();
        let ivp = IvpSpec::new(100.0, 50.0, 0.5).unwrap();
        let verdicts = check_theorem1(&nl, &ivp, &small_grid(100.0), &tails()).unwrap();
        let vf = find(&verdicts, "sign_vf").unwrap();
        assert_eq!(vf.status, Status::Fails);
        let w = vf.witness.as_ref().unwrap();
        let (t, v) = (w.point["t"], w.point["v"]);
        assert_eq!(w.values["value"], v * nl.f(t, v).unwrap());
        assert!(w.values["value"] > 0.0);
    }

    #[test]
    fn missing_envelope_is_inconclusive() {
        let nl = Nonlinearity::new(fn2(|t, v| Ok(-v.powi(3) / t.powi(3))));
        let ivp = IvpSpec::new(100.0, 50.0, 0.5).unwrap();
        let verdicts = check_theorem1(&nl, &ivp, &small_grid(100.0), &tails()).unwrap();
        assert!(find(&verdicts, "sign_dfdv").unwrap().holds());
        for name in ["envelope", "K_finite", "g_tail", "threshold"] {
            assert_eq!(find(&verdicts, name).unwrap().status, Status::Inconclusive);
        }
    }

    #[test]
    fn theorem2_examples() {
        let grid = small_grid(1.0);
        let ok = check_theorem2(&power_coeff(1, 1.0, -4.0).to_nonlinearity(), &grid).unwrap();
        assert!(ok.iter().all(ConditionVerdict::holds), "{ok:?}");

        let bad = check_theorem2(&power_coeff(1, 1.0, -3.0).to_nonlinearity(), &grid).unwrap();
        assert!(bad[0].holds());
        assert_eq!(bad[1].status, Status::Fails);
        let w = bad[1].witness.as_ref().unwrap();
        let (t, v) = (w.point["t"], w.point["v"]);
        assert_abs_diff_eq!(w.values["value"], v * v / (t * t), epsilon = 1e-12 * v * v / (t * t));

        let free = check_theorem2(&Nonlinearity::zero(), &grid).unwrap();
        assert!(free.iter().all(ConditionVerdict::holds));

        // same equality case through finite differences
        let fd = Nonlinearity::new(fn2(|t, v| Ok(t.powi(-3) * v)));
        assert!(check_theorem2(&fd, &grid).unwrap().iter().all(ConditionVerdict::holds));
    }

    #[test]
    fn ef_negative_demo() {
        let ef = power_coeff(2, -1.0, -6.0);
        let ivp = IvpSpec::new(100.0, 50.0, 0.5).unwrap();
        let v = check_ef_negative(&ef, &ivp, &small_grid(100.0), &tails()).unwrap();
        assert!(v.iter().all(ConditionVerdict::holds), "{v:?}");
        let th = find(&v, "threshold_15").unwrap();
        assert_abs_diff_eq!(th.get("lhs").unwrap(), 0.0404, epsilon = 1e-10);
        assert_abs_diff_eq!(th.get("rhs").unwrap(), 1.0 / (4.0 * 1.5f64.powi(4)), epsilon = 1e-15);
        assert_abs_diff_eq!(th.get("margin").unwrap(), 0.008982, epsilon = 1e-6);
    }

    #[test]
    fn ef_negative_zero_coefficient() {
        let ef = coeff(2, |_| 0.0);
        // 4c/t0 = 0.04 vs 1/(4 * 1.5^4) = 0.0494
        let ivp = IvpSpec::new(100.0, 50.0, 0.5).unwrap();
        let v = check_ef_negative(&ef, &ivp, &small_grid(100.0), &tails()).unwrap();
        assert!(find(&v, "threshold_15").unwrap().holds());
        let ivp = IvpSpec::new(10.0, 5.0, 0.5).unwrap();
        let v = check_ef_negative(&ef, &ivp, &small_grid(10.0), &tails()).unwrap();
        assert_eq!(find(&v, "threshold_15").unwrap().status, Status::Fails);
    }

    #[test]
    fn ef_negative_blowup_coefficient_fails() {
        let ef = coeff(2, |t| if t <= 2.0 { -2.0 } else if t <= 4.0 { -(4.0 - t) } else { 0.0 });
        let ivp = IvpSpec::new(1.0, 1.0, 1.0).unwrap();
        let v = check_ef_negative(&ef, &ivp, &small_grid(1.0), &tails()).unwrap();
        let th = find(&v, "threshold_15").unwrap();
        assert_eq!(th.status, Status::Fails);
        // ∫_1^2 2t^4 + ∫_2^4 (4-t) t^4 = 12.4 + 121.6
        assert_abs_diff_eq!(th.get("integral").unwrap(), 134.0, epsilon = 1e-6);
        assert!(th.get("lhs").unwrap() > 48.0);
        assert_eq!(th.get("rhs").unwrap(), 1.0 / 64.0);
    }

    #[test]
    fn caligo_examples() {
        let grid = small_grid(1.0);
        for p in [-4.0, -4.5] {
            let v = check_caligo(&power_coeff(1, 1.0, p), &grid).unwrap();
            assert!(v.iter().all(ConditionVerdict::holds), "p={p}: {v:?}");
        }
        let v = check_caligo(&power_coeff(1, 1.0, -3.0), &grid).unwrap();
        let c = find(&v, "caligo_16").unwrap();
        assert_eq!(c.status, Status::Fails);
        let t = c.witness.as_ref().unwrap().point["t"];
        assert_abs_diff_eq!(c.witness.as_ref().unwrap().values["value"], t.powi(-3), epsilon = 1e-12 * t.powi(-3));

        // no closed-form derivative: finite differences
        let fd = coeff(1, |t| t.powi(-4));
        assert!(check_caligo(&fd, &grid).unwrap().iter().all(ConditionVerdict::holds));
    }

    #[test]
    fn comparison_examples() {
        let v = check_comparisons(&power_coeff(1, 1.0, -4.0), 1.0, &tails()).unwrap();
        assert!(v.iter().all(ConditionVerdict::holds), "{v:?}");
        let v = check_comparisons(&coeff(1, |_| 0.0), 1.0, &tails()).unwrap();
        assert!(v.iter().all(ConditionVerdict::holds), "{v:?}");

        let v = check_comparisons(&power_coeff(1, 1.0, -2.0), 1.0, &tails()).unwrap();
        assert_eq!(find(&v, "waltman").unwrap().status, Status::Fails);
        assert!(find(&v, "potter").unwrap().holds());
        let star = find(&v, "star").unwrap();
        assert_eq!(star.status, Status::Fails);
        assert!(star.witness.as_ref().unwrap().point["horizon"] > 1e11);
    }

    #[test]
    fn sign_changes() {
        let ivp = IvpSpec::new(1.0, 1.0, 2.0).unwrap();
        let traj = integrate(&Nonlinearity::zero(), &ivp, &IntegrationConfig::with_horizon(100.0)).unwrap();
        assert_eq!(count_sign_changes(&traj), 0);

        let states: Vec<UvState> = (1..=40)
            .map(|i| {
                let t = i as f64;
                UvState::new(t, 0.0, (t * 0.9).sin())
            })
            .collect();
        let expected = states
            .windows(2)
            .filter(|w| (w[0].v > 0.0) != (w[1].v > 0.0))
            .count();
        let traj = Trajectory::from_states(states, Termination::ReachedHorizon).unwrap();
        assert_eq!(count_sign_changes(&traj), expected);
        assert!(expected > 5);
    }

    #[test]
    fn grid_validation() {
        let g = SamplingGrid {
            t_count: 8,
            ..SamplingGrid::default_for(1.0)
        };
        assert!(g.validate().is_err());
        assert!(check_theorem2(&Nonlinearity::zero(), &g).is_err());
        let pts = SamplingGrid::default_for(2.0).t_points();
        assert_eq!(pts[0], 2.0);
        assert!((pts[255] - 2e6).abs() < 1e-6);
        assert!(!SamplingGrid::default_for(1.0).v_points().contains(&0.0));
    }
}
