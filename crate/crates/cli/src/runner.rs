//! Scenario execution and parameter sweeps.

use std::time::Instant;

use oblique_core::asymptote::{analyze, ClassKind};
use oblique_core::hypotheses::{
    check_caligo, check_comparisons, check_ef_negative, check_theorem1, check_theorem2, count_sign_changes,
    theorem1_threshold, ConditionVerdict, Status,
};
use oblique_core::integrator::{integrate, Trajectory};
use oblique_core::lyapunov::{bound_chain, monitor_v1, monitor_v2, v1, v2};
use oblique_core::problem::IvpSpec;
use oblique_core::transform::from_uv;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Check, ConfigError, Monitor, Problem, Scenario};
use crate::report::{CheckReport, CsvRow, LyapunovReports, RunReport, Timings, TrajectorySummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Hypothesis checks only.
    Check,
    /// Integration and monitors.
    Integrate,
    /// Everything, including the asymptote estimate and classification.
    Classify,
}

pub struct RunOutput {
    pub report: RunReport,
    pub trajectory: Option<Trajectory>,
    pub problem: Problem,
    pub timings: Timings,
}

fn timed<T>(timings: &mut Timings, key: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.insert(key.to_string(), start.elapsed().as_secs_f64());
    out
}

pub fn run_checks(scenario: &Scenario, problem: &Problem, ivp: &IvpSpec) -> (Vec<CheckReport>, Vec<String>) {
    let grid = scenario.sampling_grid();
    let tails = scenario.tail_options();
    let nl = &problem.nonlinearity;
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for &check in &scenario.checks {
        let ef = problem.emden_fowler.as_ref();
        let result = match (check, ef) {
            (Check::Theorem1, _) => check_theorem1(nl, ivp, &grid, &tails),
            (Check::Theorem2, _) => check_theorem2(nl, &grid),
            (Check::EfNegative, Some(ef)) => check_ef_negative(ef, ivp, &grid, &tails),
            (Check::Caligo, Some(ef)) => check_caligo(ef, &grid),
            (Check::Comparisons, Some(ef)) => check_comparisons(ef, ivp.t0, &tails),
            (_, None) => unreachable!("validated scenario"),
        };
        match result {
            Ok(verdicts) => reports.push(CheckReport { check, verdicts }),
            Err(e) => errors.push(format!("{check:?}: {e}")),
        }
    }
    (reports, errors)
}

pub fn run(scenario: &Scenario, stage: Stage) -> Result<RunOutput, ConfigError> {
    let ivp = scenario.ivp_spec()?;
    let problem = scenario.build_problem()?;
    let nl = &problem.nonlinearity;
    let mut timings = Timings::new();
    let mut report = RunReport {
        scenario: scenario.clone(),
        derived: ivp.derived_constants(),
        grid: (!scenario.checks.is_empty()).then(|| scenario.sampling_grid()),
        hypotheses: Vec::new(),
        trajectory: None,
        lyapunov: LyapunovReports::default(),
        estimate: None,
        classification: None,
        errors: Vec::new(),
    };

    if stage != Stage::Integrate {
        let (checks, errors) = timed(&mut timings, "checks", || run_checks(scenario, &problem, &ivp));
        report.hypotheses = checks;
        report.errors.extend(errors);
    }
    if stage == Stage::Check {
        return Ok(RunOutput {
            report,
            trajectory: None,
            problem,
            timings,
        });
    }

    let cfg = scenario.integration_config();
    let traj = match timed(&mut timings, "integrate", || integrate(nl, &ivp, &cfg)) {
        Ok(t) => t,
        Err(e) => {
            report.errors.push(format!("integration: {e}"));
            return Ok(RunOutput {
                report,
                trajectory: None,
                problem,
                timings,
            });
        }
    };
    let last = traj.last();
    report.trajectory = Some(TrajectorySummary {
        termination: traj.termination.clone(),
        t_last: last.t,
        final_state: from_uv(last),
        final_u: last.u,
        final_v: last.v,
        accepted_steps: traj.accepted_steps(),
        rejected_steps: traj.rejected_steps,
        evaluations: traj.evaluations,
        events: traj.events.clone(),
        sign_changes: count_sign_changes(&traj),
    });

    let tol = scenario.quad_tol();
    for &m in &scenario.monitors {
        let key = format!("monitor_{m:?}").to_lowercase();
        let start = Instant::now();
        let outcome = match m {
            Monitor::V1 => monitor_v1(nl, &ivp, &traj, tol).map(|r| report.lyapunov.v1 = Some(r)),
            Monitor::V2 => monitor_v2(nl, &traj, tol).map(|r| report.lyapunov.v2 = Some(r)),
            Monitor::BoundChain => bound_chain(nl, &ivp, &traj, tol).map(|r| report.lyapunov.bound_chain = Some(r)),
        };
        timings.insert(key, start.elapsed().as_secs_f64());
        if let Err(e) = outcome {
            report.errors.push(format!("{m:?} monitor: {e}"));
        }
    }

    if stage == Stage::Classify {
        match timed(&mut timings, "classify", || analyze(&traj, &scenario.classify_config())) {
            Ok((est, class)) => {
                report.estimate = est;
                report.classification = Some(class);
            }
            Err(e) => report.errors.push(format!("classification: {e}")),
        }
    }
    Ok(RunOutput {
        report,
        trajectory: Some(traj),
        problem,
        timings,
    })
}

/// Trajectory rows every `sample_stride` accepted steps, with `V1`/`V2`
/// filled in when the scenario monitors them.
pub fn csv_rows(scenario: &Scenario, out: &RunOutput) -> Vec<CsvRow> {
    let Some(traj) = &out.trajectory else {
        return Vec::new();
    };
    let nl = &out.problem.nonlinearity;
    let tol = scenario.quad_tol();
    let t0 = traj.t0();
    let want_v1 = scenario.monitors.contains(&Monitor::V1);
    let want_v2 = scenario.monitors.contains(&Monitor::V2);
    traj.decimated(scenario.integration_config().sample_stride)
        .into_iter()
        .map(|s| {
            let st = s.state;
            let x = from_uv(st);
            CsvRow {
                t: st.t,
                x: x.x,
                xp: x.xp,
                u: st.u,
                v: st.v,
                v1: want_v1.then(|| v1(nl, t0, st, tol).ok().map(|l| l.value)).flatten(),
                v2: want_v2.then(|| v2(nl, st, tol).ok().map(|l| l.value)).flatten(),
            }
        })
        .collect()
}

/// `(t, x - x1 t - x2)` at every accepted step, from the run's estimate.
pub fn residual_series(out: &RunOutput) -> Option<Vec<(f64, f64)>> {
    let est = out.report.estimate.as_ref()?;
    let traj = out.trajectory.as_ref()?;
    let (x1, x2) = (est.x1.value, est.x2.value);
    Some(
        traj.states()
            .map(|s| (s.t, from_uv(s).x - x1 * s.t - x2))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub x0: f64,
    pub xp0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassKind>,
    /// Status of the general threshold at this initial point, when the
    /// scenario checks it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Status>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn sweep_point(scenario: &Scenario, problem: &Problem, x0: f64, xp0: f64) -> SweepPoint {
    let mut point = SweepPoint {
        x0,
        xp0,
        classification: None,
        threshold: None,
        threshold_margin: None,
        error: None,
    };
    let ivp = match IvpSpec::new(scenario.ivp.t0, x0, xp0) {
        Ok(ivp) => ivp,
        Err(e) => {
            point.error = Some(e.to_string());
            return point;
        }
    };
    let nl = &problem.nonlinearity;
    if scenario.checks.contains(&Check::Theorem1) {
        let v: ConditionVerdict = theorem1_threshold(nl, &ivp, &scenario.tail_options());
        point.threshold = Some(v.status);
        point.threshold_margin = v.get("margin");
    }
    let result = integrate(nl, &ivp, &scenario.integration_config())
        .and_then(|traj| analyze(&traj, &scenario.classify_config()));
    match result {
        Ok((_, class)) => point.classification = Some(class.kind),
        Err(e) => point.error = Some(e.to_string()),
    }
    point
}

/// Classify every point of the scenario's `(x0, xp0)` grid on `workers`
/// threads. Output is ordered by `x0`, then `xp0`, whatever the worker count.
pub fn sweep(scenario: &Scenario, workers: usize) -> Result<Vec<SweepPoint>, ConfigError> {
    let axes = scenario
        .sweep
        .ok_or_else(|| ConfigError::Invalid("scenario has no [sweep] section".into()))?;
    let problem = scenario.build_problem()?;
    let points: Vec<(f64, f64)> = axes
        .x0
        .values()
        .into_iter()
        .flat_map(|x0| axes.xp0.values().into_iter().map(move |xp0| (x0, xp0)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ConfigError::Invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|&(x0, xp0)| sweep_point(scenario, &problem, x0, xp0))
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_scenario;

    const FREE: &str = r#"
checks = ["theorem2"]
monitors = ["v1", "v2"]
[problem]
kind = "general"
f = "0"
[ivp]
t0 = 1.0
x0 = 1.0
xp0 = 2.0
[integration]
horizon = 100.0
rel_tol = 1e-11
[sweep]
x0 = { from = -1.0, to = 1.0, count = 3 }
xp0 = { from = 0.5, to = 1.5, count = 2 }
"#;

    #[test]
    fn free_motion_run() {
        let s = parse_scenario(FREE).unwrap();
        let out = run(&s, Stage::Classify).unwrap();
        assert!(out.report.errors.is_empty(), "{:?}", out.report.errors);
        assert!(out.report.hypotheses[0].verdicts.iter().all(|v| v.holds()));
        assert!(out.report.lyapunov.v1.as_ref().unwrap().passed);
        let ClassKind::AsymptoticallyLinear { x1, x2 } = out.report.classification.as_ref().unwrap().kind else {
            panic!("{:?}", out.report.classification);
        };
        assert!((x1 - 2.0).abs() < 1e-9 && (x2 + 1.0).abs() < 1e-9);

        let rows = csv_rows(&s, &out);
        assert_eq!(rows.len(), out.trajectory.as_ref().unwrap().samples().len());
        assert_eq!(rows[0].v1, Some(0.5));
        assert_eq!(rows[0].v2, Some(0.5));
        let res = residual_series(&out).unwrap();
        assert!(res.iter().all(|(_, r)| r.abs() < 1e-8));
    }

    #[test]
    fn check_stage_skips_integration() {
        let s = parse_scenario(FREE).unwrap();
        let out = run(&s, Stage::Check).unwrap();
        assert!(out.trajectory.is_none() && out.report.trajectory.is_none());
        assert_eq!(out.report.hypotheses.len(), 1);
        let out = run(&s, Stage::Integrate).unwrap();
        assert!(out.report.hypotheses.is_empty() && out.report.classification.is_none());
    }

    #[test]
    fn sweep_order() {
        let s = parse_scenario(FREE).unwrap();
        let pts = sweep(&s, 2).unwrap();
        let coords: Vec<(f64, f64)> = pts.iter().map(|p| (p.x0, p.xp0)).collect();
        assert_eq!(
            coords,
            vec![(-1.0, 0.5), (-1.0, 1.5), (0.0, 0.5), (0.0, 1.5), (1.0, 0.5), (1.0, 1.5)]
        );
        for p in pts {
            let Some(ClassKind::AsymptoticallyLinear { x1, .. }) = p.classification else {
                panic!("{p:?}");
            };
            assert!((x1 - p.xp0).abs() < 1e-9);
        }
    }
}
