//! Asymptote extraction and long-time classification.
//!
//! When `u = t x' - x` converges to `u∞`, the solution approaches the line
//! `x1 t + x2` with `x2 = -u∞`. The slope is read off the tail of `x'`, which
//! converges faster than `v = x / t` (the latter carries an `x2 / t` term).
//! The intercept is computed twice, once as `-u∞` and once from the tail of
//! `x - x1 t`, and the disagreement is reported.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::numerics::tail_limit;
use crate::transform::UvState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifyConfig {
    /// Number of tail samples the limits are taken over.
    pub window: usize,
    /// Tail sampled on `[(1 - tail_fraction) t_last, t_last]`.
    pub tail_fraction: f64,
    pub growth_factor: f64,
    pub slope_floor: f64,
    /// `u` has converged when its spread is at most `limit_tol_rel (1 + |u∞|)`.
    pub limit_tol_rel: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            window: 16,
            tail_fraction: 0.5,
            growth_factor: 10.0,
            slope_floor: 1e-7,
            limit_tol_rel: 1e-6,
        }
    }
}

impl ClassifyConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::invalid("classification window needs at least 2 samples"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return Err(Error::invalid("tail_fraction must lie in (0, 1)"));
        }
        if !(self.growth_factor > 1.0) {
            return Err(Error::invalid("growth_factor must exceed 1"));
        }
        if !(self.slope_floor >= 0.0 && self.limit_tol_rel > 0.0) {
            return Err(Error::invalid("slope_floor must be >= 0 and limit_tol_rel > 0"));
        }
        Ok(())
    }

    pub fn limit_tol(&self, u_limit: f64) -> f64 {
        self.limit_tol_rel * (1.0 + u_limit.abs())
    }
}

/// Limit estimate: mean over the tail window and `max - min` over it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub spread: f64,
}

impl From<(f64, f64)> for Estimate {
    fn from((value, spread): (f64, f64)) -> Self {
        Estimate { value, spread }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoteEstimate {
    pub x1: Estimate,
    /// `-u∞`.
    pub x2: Estimate,
    pub u_limit: Estimate,
    /// Tail limit of `x - x1 t`.
    pub x2_alt: Estimate,
    /// `|x2 - x2_alt|`.
    pub consistency_residual: f64,
    pub limit_tol: f64,
    pub converged: bool,
    pub tail_start: f64,
    pub tail_end: f64,
}

fn tail_states(traj: &Trajectory, cfg: &ClassifyConfig) -> Result<Vec<UvState>> {
    let (t0, t_last) = (traj.t0(), traj.t_last());
    if t_last <= t0 {
        return Err(Error::invalid("trajectory has no extent"));
    }
    let lo = t0.max((1.0 - cfg.tail_fraction) * t_last);
    let n = cfg.window;
    let times: Vec<f64> = (0..n)
        .map(|i| {
            let t = lo * (t_last / lo).powf(i as f64 / (n - 1) as f64);
            t.clamp(lo, t_last)
        })
        .collect();
    match traj.resample(&times) {
        Ok(states) => Ok(states),
        // synthetic trajectories without dense output: use the raw samples
        Err(_) => {
            let states: Vec<UvState> = traj.states().filter(|s| s.t >= lo).collect();
            if states.len() < n {
                return Err(Error::invalid(format!(
                    "need {n} tail samples, trajectory has {}",
                    states.len()
                )));
            }
            Ok(states[states.len() - n..].to_vec())
        }
    }
}

/// Estimate `x1`, `x2` and `u∞` from the tail of a trajectory that did not
/// blow up.
pub fn estimate(traj: &Trajectory, cfg: &ClassifyConfig) -> Result<AsymptoteEstimate> {
    cfg.validate()?;
    if let Some(t_inf) = traj.termination.blowup_time() {
        return Err(Error::Precondition(format!(
            "trajectory blew up near t = {t_inf}; no asymptote"
        )));
    }
    let tail = tail_states(traj, cfg)?;
    let n = tail.len();
    let slope: Vec<(f64, f64)> = tail.iter().map(|s| (s.t, s.v + s.u / s.t)).collect();
    let u: Vec<(f64, f64)> = tail.iter().map(|s| (s.t, s.u)).collect();
    let x1 = Estimate::from(tail_limit(&slope, n)?);
    let u_limit = Estimate::from(tail_limit(&u, n)?);
    let offset: Vec<(f64, f64)> = tail.iter().map(|s| (s.t, s.t * (s.v - x1.value))).collect();
    let x2_alt = Estimate::from(tail_limit(&offset, n)?);
    let x2 = Estimate {
        value: -u_limit.value,
        spread: u_limit.spread,
    };
    let limit_tol = cfg.limit_tol(u_limit.value);
    Ok(AsymptoteEstimate {
        x1,
        x2,
        u_limit,
        x2_alt,
        consistency_residual: (x2.value - x2_alt.value).abs(),
        limit_tol,
        converged: u_limit.spread <= limit_tol,
        tail_start: tail[0].t,
        tail_end: tail[n - 1].t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassKind {
    Blowup { t_inf_estimate: f64 },
    Sublinear,
    AsymptoticallyLinear { x1: f64, x2: f64 },
    Unbounded,
    Undetermined,
}

impl ClassKind {
    pub fn name(&self) -> &'static str {
        match self {
            ClassKind::Blowup { .. } => "blowup",
            ClassKind::Sublinear => "sublinear",
            ClassKind::AsymptoticallyLinear { .. } => "asymptotically_linear",
            ClassKind::Unbounded => "unbounded",
            ClassKind::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub t0: f64,
    pub t_last: f64,
    pub reached_horizon: bool,
    /// `max|u|` on the later half of `[t0, t_last]` in `log t`, divided by the
    /// maximum on the earlier half.
    pub growth_ratio: Option<f64>,
    pub growth_factor: f64,
    pub slope_floor: f64,
    pub limit_tol: Option<f64>,
    pub x1_spread: Option<f64>,
    pub u_spread: Option<f64>,
    pub consistency_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub kind: ClassKind,
    pub diagnostics: Diagnostics,
}

/// `max|u|` over `[t0, √(t0 t_last)]` and `(√(t0 t_last), t_last]`.
fn half_maxima(traj: &Trajectory) -> Option<(f64, f64)> {
    let (t0, t_last) = (traj.t0(), traj.t_last());
    if t_last <= t0 {
        return None;
    }
    let mid = (t0 * t_last).sqrt();
    let (mut early, mut late) = (0.0f64, None::<f64>);
    for s in traj.states() {
        if s.t <= mid {
            early = early.max(s.u.abs());
        } else {
            late = Some(late.unwrap_or(0.0).max(s.u.abs()));
        }
    }
    late.map(|l| (early, l))
}

pub fn classify(traj: &Trajectory, est: Option<&AsymptoteEstimate>, cfg: &ClassifyConfig) -> Classification {
    let maxima = half_maxima(traj);
    let mut diagnostics = Diagnostics {
        t0: traj.t0(),
        t_last: traj.t_last(),
        reached_horizon: traj.reached_horizon(),
        growth_ratio: maxima.map(|(e, l)| if e > 0.0 { l / e } else if l > 0.0 { f64::INFINITY } else { 1.0 }),
        growth_factor: cfg.growth_factor,
        slope_floor: cfg.slope_floor,
        limit_tol: est.map(|e| e.limit_tol),
        x1_spread: est.map(|e| e.x1.spread),
        u_spread: est.map(|e| e.u_limit.spread),
        consistency_residual: est.map(|e| e.consistency_residual),
        note: None,
    };

    let kind = if let Some(t_inf_estimate) = traj.termination.blowup_time() {
        ClassKind::Blowup { t_inf_estimate }
    } else if maxima.is_some_and(|(early, late)| late > early && late >= cfg.growth_factor * early) {
        ClassKind::Unbounded
    } else if let Some(e) = est.filter(|e| e.converged) {
        if !traj.reached_horizon() {
            diagnostics.note = Some("integration stopped before the horizon".into());
        }
        if e.x1.value.abs() > cfg.slope_floor {
            ClassKind::AsymptoticallyLinear {
                x1: e.x1.value,
                x2: e.x2.value,
            }
        } else {
            ClassKind::Sublinear
        }
    } else {
        diagnostics.note = Some(match est {
            None => "no asymptote estimate".into(),
            Some(_) => "u has not settled within the limit tolerance".into(),
        });
        ClassKind::Undetermined
    };
    Classification { kind, diagnostics }
}

/// Estimate (when possible) and classify in one go.
pub fn analyze(traj: &Trajectory, cfg: &ClassifyConfig) -> Result<(Option<AsymptoteEstimate>, Classification)> {
    cfg.validate()?;
    let est = if traj.is_blowup() { None } else { estimate(traj, cfg).ok() };
    let class = classify(traj, est.as_ref(), cfg);
    Ok((est, class))
}
