//! Built-in reference scenarios and the reproduction suite run by
//! `oblique verify-paper`.

use oblique_core::asymptote::ClassKind;
use oblique_core::hypotheses::{find, ConditionVerdict, Status};
use oblique_core::numerics::integrate_tail;
use oblique_core::transform::from_uv;
use serde::Serialize;

use crate::config::{parse_scenario, Check, Scenario};
use crate::report::{CheckReport, RunReport, Timings};
use crate::runner::{run, RunOutput, Stage};

pub const BUILTIN: [(&str, &str); 9] = [
    ("free_motion", include_str!("../scenarios/free_motion.toml")),
    ("blowup", include_str!("../scenarios/blowup.toml")),
    ("growth", include_str!("../scenarios/growth.toml")),
    ("theorem1_demo", include_str!("../scenarios/theorem1_demo.toml")),
    ("caligo_equality", include_str!("../scenarios/caligo_equality.toml")),
    ("caligo_strict", include_str!("../scenarios/caligo_strict.toml")),
    ("control_caligo", include_str!("../scenarios/control_caligo.toml")),
    ("control_sign", include_str!("../scenarios/control_sign.toml")),
    ("control_waltman", include_str!("../scenarios/control_waltman.toml")),
];

/// A built-in scenario by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario(text).expect("built-in scenarios are valid"))
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn assertion(criterion: u8, name: &str, passed: bool, detail: impl Into<String>) -> Assertion {
    Assertion {
        criterion,
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

fn close(criterion: u8, name: &str, got: Option<f64>, want: f64, tol: f64) -> Assertion {
    match got {
        Some(g) => assertion(
            criterion,
            name,
            (g - want).abs() <= tol,
            format!("{g} vs {want} (tolerance {tol})"),
        ),
        None => assertion(criterion, name, false, "value missing"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub scenario: String,
    pub report: RunReport,
    pub assertions: Vec<Assertion>,
}

/// Endpoint errors against a closed-form solution as the integration
/// tolerance is halved.
#[derive(Debug, Clone, Serialize)]
pub struct OrderStudy {
    pub scenario: String,
    pub t_end: f64,
    pub rel_tols: Vec<f64>,
    pub errors: Vec<f64>,
    pub steps: Vec<usize>,
    /// `ln(e_k / e_{k+1}) / ln(N_{k+1} / N_k)` for each halving.
    pub orders: Vec<f64>,
    /// Same quotient between the first and the last run.
    pub overall_order: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
    pub quadrature: Vec<Assertion>,
    pub order: Vec<OrderStudy>,
    pub order_assertions: Vec<Assertion>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn assertions(&self) -> impl Iterator<Item = &Assertion> {
        self.entries
            .iter()
            .flat_map(|e| e.assertions.iter())
            .chain(&self.quadrature)
            .chain(&self.order_assertions)
    }

    pub fn failures(&self) -> Vec<&Assertion> {
        self.assertions().filter(|a| !a.passed).collect()
    }
}

fn checks(report: &RunReport, check: Check) -> &[ConditionVerdict] {
    report
        .hypotheses
        .iter()
        .find(|c: &&CheckReport| c.check == check)
        .map_or(&[], |c| c.verdicts.as_slice())
}

fn verdict<'a>(report: &'a RunReport, check: Check, name: &str) -> Option<&'a ConditionVerdict> {
    find(checks(report, check), name)
}

fn status_is(criterion: u8, report: &RunReport, check: Check, name: &str, want: Status) -> Assertion {
    let label = format!("{check:?}.{name} is {want:?}");
    match verdict(report, check, name) {
        Some(v) => assertion(criterion, &label, v.status == want, format!("{:?}", v.status)),
        None => assertion(criterion, &label, false, "verdict missing"),
    }
}

fn fails_with_witness(criterion: u8, report: &RunReport, check: Check, name: &str) -> Assertion {
    let label = format!("{check:?}.{name} fails with a witness");
    match verdict(report, check, name) {
        Some(v) => assertion(
            criterion,
            &label,
            v.status == Status::Fails && v.witness.is_some(),
            format!("{:?}, witness {:?}", v.status, v.witness),
        ),
        None => assertion(criterion, &label, false, "verdict missing"),
    }
}

fn kind(out: &RunOutput) -> Option<ClassKind> {
    out.report.classification.as_ref().map(|c| c.kind)
}

fn assert_free_motion(out: &RunOutput) -> Vec<Assertion> {
    let mut a = Vec::new();
    let end = out.report.trajectory.as_ref().map(|t| (t.t_last, t.final_state.x));
    a.push(assertion(
        1,
        "x(100) = 199 within 1e-9 relative",
        end.is_some_and(|(t, x)| t == 100.0 && (x - 199.0).abs() <= 1e-9 * 199.0),
        format!("{end:?}"),
    ));
    let k = kind(out);
    a.push(assertion(
        1,
        "asymptotically linear with x1 = 2, x2 = -1 within 1e-9",
        matches!(k, Some(ClassKind::AsymptoticallyLinear { x1, x2 }) if (x1 - 2.0).abs() <= 1e-9 && (x2 + 1.0).abs() <= 1e-9),
        format!("{k:?}"),
    ));
    a
}

fn assert_blowup(out: &RunOutput) -> Vec<Assertion> {
    let mut a = Vec::new();
    let k = kind(out);
    a.push(assertion(
        2,
        "blowup with |T - 2| <= 1e-3",
        matches!(k, Some(ClassKind::Blowup { t_inf_estimate }) if (t_inf_estimate - 2.0).abs() <= 1e-3),
        format!("{k:?}"),
    ));
    let x = out
        .trajectory
        .as_ref()
        .and_then(|t| t.resample(&[1.9]).ok())
        .map(|s| from_uv(s[0]).x);
    a.push(assertion(
        2,
        "x(1.9) = 10 within 1e-6 relative",
        x.is_some_and(|x| (x - 10.0).abs() <= 1e-6 * 10.0),
        format!("{x:?}"),
    ));
    a.push(status_is(2, &out.report, Check::EfNegative, "threshold_15", Status::Fails));
    a
}

fn assert_growth(out: &RunOutput) -> Vec<Assertion> {
    let mut a = Vec::new();
    let worst = out.trajectory.as_ref().map(|traj| {
        let mut times: Vec<f64> = (0..=990).map(|i| 1.0 + f64::from(i) * 0.1).collect();
        times.push(100.0);
        let dense = traj.resample(&times).unwrap_or_default();
        traj.states()
            .chain(dense)
            .map(|s| {
                let x = from_uv(s).x;
                ((x - s.t * s.t) / (s.t * s.t)).abs()
            })
            .fold(0.0, f64::max)
    });
    a.push(assertion(
        3,
        "x tracks t^2 within 1e-6 relative on [1, 100]",
        worst.is_some_and(|w| w <= 1e-6),
        format!("max relative error {worst:?}"),
    ));
    let k = kind(out);
    a.push(assertion(3, "classified unbounded", k == Some(ClassKind::Unbounded), format!("{k:?}")));
    let th = verdict(&out.report, Check::Theorem1, "threshold");
    a.push(assertion(
        3,
        "threshold fails",
        th.is_some_and(|v| v.status == Status::Fails),
        format!("{:?}", th.map(|v| v.status)),
    ));
    a.push(close(3, "threshold lhs = 14", th.and_then(|v| v.get("lhs")), 14.0, 1e-8));
    a.push(close(3, "threshold rhs = 1/8", th.and_then(|v| v.get("rhs")), 0.125, 1e-8));
    a
}

fn assert_demo(out: &RunOutput) -> Vec<Assertion> {
    let r = &out.report;
    let mut a = Vec::new();
    let th = verdict(r, Check::Theorem1, "threshold");
    a.push(close(4, "K = 0.01", th.and_then(|v| v.get("K")), 0.01, 1e-8));
    a.push(close(4, "c = 1", th.and_then(|v| v.get("c")), 1.0, 0.0));
    a.push(close(4, "general threshold lhs = 0.0404", th.and_then(|v| v.get("lhs")), 0.0404, 1e-8));
    a.push(close(4, "general threshold rhs = 2/9", th.and_then(|v| v.get("rhs")), 2.0 / 9.0, 1e-8));
    a.push(status_is(4, r, Check::Theorem1, "threshold", Status::Holds));
    let th15 = verdict(r, Check::EfNegative, "threshold_15");
    a.push(close(4, "power threshold lhs = 0.0404", th15.and_then(|v| v.get("lhs")), 0.0404, 1e-8));
    a.push(close(
        4,
        "power threshold rhs = 1/(4 * 1.5^4)",
        th15.and_then(|v| v.get("rhs")),
        1.0 / (4.0 * 1.5f64.powi(4)),
        1e-8,
    ));
    a.push(status_is(4, r, Check::EfNegative, "threshold_15", Status::Holds));
    for name in ["sign_vf", "sign_dfdv", "envelope", "g_admissible", "K_finite", "g_tail"] {
        a.push(status_is(4, r, Check::Theorem1, name, Status::Holds));
    }
    for name in ["A_nonpositive", "integral_finite"] {
        a.push(status_is(4, r, Check::EfNegative, name, Status::Holds));
    }
    let reached = r.trajectory.as_ref().is_some_and(|t| t.t_last == 1e6) && out.trajectory.as_ref().is_some_and(|t| t.reached_horizon());
    a.push(assertion(4, "reaches the horizon 1e6 without blowup", reached, ""));
    let v1 = r.lyapunov.v1.as_ref();
    a.push(assertion(
        4,
        "V1 monitor passes",
        v1.is_some_and(|m| m.passed),
        format!("{:?}", v1.map(|m| (m.max_increase, m.violations.len()))),
    ));
    let bc = r.lyapunov.bound_chain.as_ref();
    a.push(assertion(
        4,
        "bound chain |u| < 4(y + c) passes",
        bc.is_some_and(|b| b.passed),
        format!("{:?}", bc.map(|b| b.max_ratio)),
    ));
    let k = kind(out);
    a.push(assertion(
        4,
        "classified sublinear or asymptotically linear",
        matches!(k, Some(ClassKind::Sublinear | ClassKind::AsymptoticallyLinear { .. })),
        format!("{k:?}"),
    ));
    if let Some(ClassKind::AsymptoticallyLinear { .. }) = k {
        let res = r.estimate.as_ref().map(|e| (e.x2_alt.value + e.u_limit.value).abs());
        a.push(assertion(
            4,
            "intercept routes agree within 1e-5",
            res.is_some_and(|x| x <= 1e-5),
            format!("{res:?}"),
        ));
    }
    a
}

fn assert_caligo(out: &RunOutput) -> Vec<Assertion> {
    let r = &out.report;
    let mut a = Vec::new();
    let v2 = r.lyapunov.v2.as_ref();
    a.push(assertion(
        5,
        "V2 drift within slack",
        v2.is_some_and(|m| m.drift_within_slack),
        format!("{:?}", v2.map(|m| m.max_drift)),
    ));
    let d = r.derived;
    let exact = 0.5 * (d.u0 * d.u0 + d.v0 * d.v0);
    let first = v2.and_then(|m| m.values.first()).map(|s| s.value);
    a.push(assertion(
        5,
        "V2(t0) = (u0^2 + v0^2)/2",
        first == Some(exact),
        format!("{first:?} vs {exact}"),
    ));
    for name in ["A_nonnegative", "caligo_16", "caligo_envelope"] {
        a.push(status_is(5, r, Check::Caligo, name, Status::Holds));
    }
    for name in ["waltman", "potter", "star"] {
        a.push(status_is(5, r, Check::Comparisons, name, Status::Holds));
    }
    let k = kind(out);
    a.push(assertion(
        5,
        "never blowup or unbounded",
        matches!(k, Some(ClassKind::Sublinear | ClassKind::AsymptoticallyLinear { .. })),
        format!("{k:?}"),
    ));
    a
}

fn assert_caligo_strict(out: &RunOutput) -> Vec<Assertion> {
    let r = &out.report;
    let mut a = vec![status_is(5, r, Check::Caligo, "caligo_16", Status::Holds)];
    let v2 = r.lyapunov.v2.as_ref();
    a.push(assertion(
        5,
        "V2 nonincreasing",
        v2.is_some_and(|m| m.passed),
        format!("{:?}", v2.map(|m| m.max_increase)),
    ));
    a
}

fn assert_control_caligo(out: &RunOutput) -> Vec<Assertion> {
    vec![fails_with_witness(6, &out.report, Check::Caligo, "caligo_16")]
}

fn assert_control_sign(out: &RunOutput) -> Vec<Assertion> {
    let v1 = out.report.lyapunov.v1.as_ref();
    vec![
        fails_with_witness(6, &out.report, Check::Theorem1, "sign_vf"),
        assertion(
            6,
            "V1 monitor fails",
            v1.is_some_and(|m| !m.passed),
            format!("{:?}", v1.map(|m| m.max_increase)),
        ),
    ]
}

fn assert_control_waltman(out: &RunOutput) -> Vec<Assertion> {
    ["waltman", "star"]
        .into_iter()
        .map(|name| {
            let v = verdict(&out.report, Check::Comparisons, name);
            let label = format!("{name} fails by a divergent tail");
            assertion(
                6,
                &label,
                v.is_some_and(|v| v.status == Status::Fails && v.witness.as_ref().is_some_and(|w| w.point.contains_key("horizon"))),
                format!("{:?}", v.map(|v| v.status)),
            )
        })
        .collect()
}

pub type Expectation = fn(&RunOutput) -> Vec<Assertion>;

const EXPECTATIONS: [(&str, Stage, Expectation); 9] = [
    ("free_motion", Stage::Classify, assert_free_motion),
    ("blowup", Stage::Classify, assert_blowup),
    ("growth", Stage::Classify, assert_growth),
    ("theorem1_demo", Stage::Classify, assert_demo),
    ("caligo_equality", Stage::Classify, assert_caligo),
    ("caligo_strict", Stage::Classify, assert_caligo_strict),
    ("control_caligo", Stage::Check, assert_control_caligo),
    ("control_sign", Stage::Classify, assert_control_sign),
    ("control_waltman", Stage::Check, assert_control_waltman),
];

/// Stage and expected-outcome check for a built-in scenario.
pub fn expectations(name: &str) -> Option<(Stage, Expectation)> {
    EXPECTATIONS.iter().find(|(n, _, _)| *n == name).map(|&(_, stage, f)| (stage, f))
}

pub fn quadrature_oracles() -> Vec<Assertion> {
    let cases: [(&str, f64, f64, f64); 3] = [
        ("tail of t^-2 from 100 = 0.01", 2.0, 100.0, 0.01),
        ("tail of xi^-3 from 1.5 = 2/9", 3.0, 1.5, 2.0 / 9.0),
        ("tail of xi^-3 from 1 = 1/2", 3.0, 1.0, 0.5),
    ];
    let mut out: Vec<Assertion> = cases
        .iter()
        .map(|&(name, p, lo, want)| {
            let got = integrate_tail(|t| Ok(t.powf(-p)), lo, 1e-8, 1e-12).ok().and_then(|v| v.value());
            close(7, name, got, want, 1e-8)
        })
        .collect();
    let div = integrate_tail(|t| Ok(1.0 / t), 1.0, 1e-8, 1e-12);
    out.push(assertion(
        7,
        "tail of 1/t is divergent",
        div.as_ref().is_ok_and(|v| v.is_divergent()),
        format!("{:?}", div.map(|v| v.kind)),
    ));
    out
}

/// Order study on one problem: start at `base` (abs tolerance `1e-3 base`)
/// and halve three times.
pub fn order_study(name: &str, t_end: f64, exact: f64, base: f64) -> OrderStudy {
    let scenario = builtin(name).expect("known scenario");
    let rel_tols: Vec<f64> = (0..4).map(|k| base / 2f64.powi(k)).collect();
    let mut errors = Vec::new();
    let mut steps = Vec::new();
    for &tol in &rel_tols {
        let mut s = scenario.clone();
        s.integration.horizon = t_end;
        s.integration.rel_tol = Some(tol);
        s.integration.abs_tol = Some(1e-3 * tol);
        s.checks.clear();
        s.monitors.clear();
        let out = run(&s, Stage::Integrate).expect("valid scenario");
        let traj = out.trajectory.expect("integration ran");
        let x = from_uv(traj.last()).x;
        errors.push(((x - exact) / exact).abs());
        steps.push(traj.accepted_steps());
    }
    let order = |i: usize, j: usize| (errors[i] / errors[j]).ln() / (steps[j] as f64 / steps[i] as f64).ln();
    OrderStudy {
        scenario: name.to_string(),
        t_end,
        orders: (0..3).map(|k| order(k, k + 1)).collect(),
        overall_order: order(0, 3),
        monotone: errors.windows(2).all(|w| w[1] < w[0]),
        rel_tols,
        errors,
        steps,
    }
}

pub const ORDER_BASE_TOL: f64 = 1e-5;

pub fn order_studies() -> Vec<OrderStudy> {
    vec![
        order_study("free_motion", 100.0, 199.0, ORDER_BASE_TOL),
        order_study("blowup", 1.9, 10.0, ORDER_BASE_TOL),
        order_study("growth", 100.0, 1e4, ORDER_BASE_TOL),
    ]
}

pub fn order_assertions(studies: &[OrderStudy]) -> Vec<Assertion> {
    studies
        .iter()
        .map(|s| {
            assertion(
                9,
                &format!("{}: monotone error decrease with order >= 4", s.scenario),
                s.monotone && s.overall_order >= 4.0,
                format!("errors {:?}, steps {:?}, order {:.2}", s.errors, s.steps, s.overall_order),
            )
        })
        .collect()
}

/// Run every built-in scenario and check it against its expected outcome.
pub fn run_suite() -> (SuiteReport, Timings) {
    let mut timings = Timings::new();
    let mut entries = Vec::new();
    for (name, stage, expect) in EXPECTATIONS {
        let scenario = builtin(name).expect("expectation for a built-in scenario");
        match run(&scenario, stage) {
            Ok(out) => {
                for (k, v) in &out.timings {
                    timings.insert(format!("{name}/{k}"), *v);
                }
                entries.push(SuiteEntry {
                    scenario: name.to_string(),
                    assertions: expect(&out),
                    report: out.report,
                });
            }
            Err(e) => panic!("built-in scenario {name} failed to run: {e}"),
        }
    }
    let quadrature = quadrature_oracles();
    let order = order_studies();
    let order_assertions = order_assertions(&order);
    let mut suite = SuiteReport {
        entries,
        quadrature,
        order,
        order_assertions,
        passed: false,
    };
    suite.passed = suite.failures().is_empty();
    (suite, timings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for (name, _) in BUILTIN {
            let s = builtin(name).unwrap();
            assert_eq!(s.name, name);
        }
        assert!(builtin("nope").is_none());
        assert_eq!(EXPECTATIONS.len(), BUILTIN.len());
    }
}
