//! Adaptive integration of the `(u, v)` system with blowup detection.
//!
//! A run ends at the horizon, when `|x| + |x'|` exceeds the blowup
//! threshold, when the step size collapses below `h_min_factor * t`, when
//! the step budget runs out, or when `f` fails to evaluate. The last two
//! leave a partial trajectory.

pub mod dopri;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{IvpSpec, Nonlinearity};
use crate::transform::{from_uv, uv_rhs, UvState};

use dopri::{SolverOptions, Step, Stop};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    /// Threshold on `|x| + |x'|`.
    pub blowup_threshold: f64,
    pub h_min_factor: f64,
    pub max_steps: usize,
    /// Keep every `sample_stride`-th sample when writing output.
    pub sample_stride: usize,
    /// Times the step controller must land on (kinks of piecewise coefficients).
    pub breakpoints: Vec<f64>,
}

impl IntegrationConfig {
    pub fn with_horizon(t_end: f64) -> Self {
        IntegrationConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            t_end,
            blowup_threshold: 1e8,
            h_min_factor: 1e-12,
            max_steps: 10_000_000,
            sample_stride: 1,
            breakpoints: Vec::new(),
        }
    }

    pub fn validate(&self, t0: f64) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !(positive(self.rel_tol) && positive(self.abs_tol)) {
            return Err(Error::invalid("integration tolerances must be positive"));
        }
        if !(self.t_end.is_finite() && self.t_end > t0) {
            return Err(Error::invalid(format!(
                "horizon {} must exceed the initial time {t0}",
                self.t_end
            )));
        }
        if !positive(self.blowup_threshold) || !positive(self.h_min_factor) {
            return Err(Error::invalid("blowup threshold and h_min_factor must be positive"));
        }
        if self.max_steps == 0 || self.sample_stride == 0 {
            return Err(Error::invalid("max_steps and sample_stride must be positive"));
        }
        Ok(())
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            h_min_factor: self.h_min_factor,
            max_steps: self.max_steps,
            breakpoints: self.breakpoints.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    ReachedHorizon,
    Blowup {
        t_last: f64,
        t_inf_estimate: f64,
        uncertainty: f64,
        magnitude: f64,
    },
    StepCollapse {
        t_last: f64,
        t_inf_estimate: f64,
        uncertainty: f64,
    },
    StepBudgetExhausted {
        t_last: f64,
    },
    EvaluationError {
        t_last: f64,
        message: String,
    },
}

impl Termination {
    /// Estimated explosion time when the run ended in a blowup signature.
    pub fn blowup_time(&self) -> Option<f64> {
        match self {
            Termination::Blowup { t_inf_estimate, .. }
            | Termination::StepCollapse { t_inf_estimate, .. } => Some(*t_inf_estimate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Blowup,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
    pub state: UvState,
}

/// Accepted state with the magnitude of the local error estimate of the
/// step that produced it (zero for the initial state).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub state: UvState,
    pub error: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<Sample>,
    steps: Vec<Step>,
    pub termination: Termination,
    pub events: Vec<Event>,
    pub rejected_steps: usize,
    pub evaluations: usize,
}

impl Trajectory {
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn states(&self) -> impl Iterator<Item = UvState> + '_ {
        self.samples.iter().map(|s| s.state)
    }

    pub fn first(&self) -> UvState {
        self.samples[0].state
    }

    pub fn last(&self) -> UvState {
        self.samples[self.samples.len() - 1].state
    }

    pub fn t0(&self) -> f64 {
        self.first().t
    }

    pub fn t_last(&self) -> f64 {
        self.last().t
    }

    pub fn accepted_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn reached_horizon(&self) -> bool {
        self.termination == Termination::ReachedHorizon
    }

    pub fn is_blowup(&self) -> bool {
        self.termination.blowup_time().is_some()
    }

    /// Build a trajectory from bare states, without dense output. Intended
    /// for diagnostics on synthetic data; [`Trajectory::resample`] only works
    /// at the given sample times.
    pub fn from_states(states: Vec<UvState>, termination: Termination) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("trajectory needs at least one state"));
        }
        if states.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::invalid("trajectory times must be strictly increasing"));
        }
        Ok(Trajectory {
            samples: states
                .into_iter()
                .map(|state| Sample {
                    state,
                    error: [0.0; 2],
                })
                .collect(),
            steps: Vec::new(),
            termination,
            events: Vec::new(),
            rejected_steps: 0,
            evaluations: 0,
        })
    }

    /// Dense-output states at the requested times, each in `[t0, t_last]`.
    pub fn resample(&self, times: &[f64]) -> Result<Vec<UvState>> {
        let (t0, t_last) = (self.t0(), self.t_last());
        times
            .iter()
            .map(|&t| {
                if !(t >= t0 && t <= t_last) {
                    return Err(Error::invalid(format!(
                        "resample time {t} outside [{t0}, {t_last}]"
                    )));
                }
                // samples[i] ends steps[i - 1]
                let i = self.samples.partition_point(|s| s.state.t < t);
                if self.samples[i].state.t == t {
                    return Ok(self.samples[i].state);
                }
                let step = self
                    .steps
                    .get(i - 1)
                    .ok_or_else(|| Error::invalid("trajectory has no dense output"))?;
                let [u, v] = step.interpolate(t);
                Ok(UvState { t, u, v })
            })
            .collect()
    }

    /// Every `stride`-th sample, always including the last one.
    pub fn decimated(&self, stride: usize) -> Vec<Sample> {
        let stride = stride.max(1);
        let n = self.samples.len();
        self.samples
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i == n - 1)
            .map(|(_, s)| *s)
            .collect()
    }
}

/// Explosion time from the last five step endpoints: fit a geometric ratio
/// `q` to the step sizes and sum the remaining series `h q / (1 - q)`.
/// Returns the estimate and a `10 * h_last` uncertainty.
pub fn estimate_explosion_time(endpoints: &[f64]) -> (f64, f64) {
    let Some(&t_last) = endpoints.last() else {
        return (f64::NAN, f64::INFINITY);
    };
    let tail = &endpoints[endpoints.len().saturating_sub(5)..];
    let hs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    let Some(&h_last) = hs.last() else {
        return (t_last, f64::INFINITY);
    };
    if hs.len() < 2 || hs.iter().any(|h| *h <= 0.0) {
        return (t_last, 10.0 * h_last.abs());
    }
    // least-squares slope of log h against the step index
    let n = hs.len() as f64;
    let mean_j = (n - 1.0) / 2.0;
    let logs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let mean_l = logs.iter().sum::<f64>() / n;
    let (num, den) = logs.iter().enumerate().fold((0.0, 0.0), |(num, den), (j, l)| {
        let dj = j as f64 - mean_j;
        (num + dj * (l - mean_l), den + dj * dj)
    });
    let q = (num / den).exp();
    let t_inf = if q > 0.0 && q < 1.0 {
        t_last + h_last * q / (1.0 - q)
    } else {
        t_last
    };
    (t_inf, 10.0 * h_last)
}

/// Integrate `u' = -t f(t, v)`, `v' = u / t^2` from the initial data.
pub fn integrate(nl: &Nonlinearity, ivp: &IvpSpec, cfg: &IntegrationConfig) -> Result<Trajectory> {
    cfg.validate(ivp.t0)?;
    let d = ivp.derived_constants();
    let start = UvState::new(ivp.t0, d.u0, d.v0);
    let mut blown_up: Option<f64> = None;

    let solution = dopri::solve(
        |t, y| {
            let (du, dv) = uv_rhs(nl, UvState::new(t, y[0], y[1]))?;
            Ok([du, dv])
        },
        ivp.t0,
        [d.u0, d.v0],
        cfg.t_end,
        &cfg.solver_options(),
        |step| {
            let [u, v] = step.y_end;
            let m = from_uv(UvState::new(step.t_end(), u, v)).magnitude();
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            let over = !(m <= cfg.blowup_threshold);
            if over {
                blown_up = Some(m);
                false
            } else {
                true
            }
        },
    );

    let mut samples = Vec::with_capacity(solution.steps.len() + 1);
    samples.push(Sample {
        state: start,
        error: [0.0; 2],
    });
    samples.extend(solution.steps.iter().map(|s| Sample {
        state: UvState::new(s.t_end(), s.y_end[0], s.y_end[1]),
        error: s.error,
    }));
    let last = samples[samples.len() - 1].state;
    let endpoints: Vec<f64> = samples.iter().rev().take(5).rev().map(|s| s.state.t).collect();

    let (termination, event) = match solution.stop {
        Stop::Reached => (Termination::ReachedHorizon, Some(EventKind::Horizon)),
        Stop::Observer => {
            let (t_inf_estimate, uncertainty) = estimate_explosion_time(&endpoints);
            (
                Termination::Blowup {
                    t_last: last.t,
                    t_inf_estimate,
                    uncertainty,
                    magnitude: blown_up.unwrap_or(f64::INFINITY),
                },
                Some(EventKind::Blowup),
            )
        }
        Stop::StepCollapse => {
            let (t_inf_estimate, uncertainty) = estimate_explosion_time(&endpoints);
            (
                Termination::StepCollapse {
                    t_last: last.t,
                    t_inf_estimate,
                    uncertainty,
                },
                Some(EventKind::Blowup),
            )
        }
        Stop::BudgetExhausted => (Termination::StepBudgetExhausted { t_last: last.t }, None),
        Stop::Evaluation(e) => (
            Termination::EvaluationError {
                t_last: last.t,
                message: e.to_string(),
            },
            None,
        ),
    };
    let events = event
        .map(|kind| Event {
            kind,
            t: last.t,
            state: last,
        })
        .into_iter()
        .collect();

    Ok(Trajectory {
        samples,
        steps: solution.steps,
        termination,
        events,
        rejected_steps: solution.rejected,
        evaluations: solution.evaluations,
    })
}
