//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "demo"
//! checks = ["theorem1", "ef_negative"]
//! monitors = ["v1", "bound_chain"]
//!
//! [problem]
//! kind = "emden_fowler"
//! n = 2
//! coefficient = "-(t^(-6))"
//! derivative = "6*t^(-7)"
//!
//! [ivp]
//! t0 = 100.0
//! x0 = 50.0
//! xp0 = 0.5
//!
//! [integration]
//! horizon = 1e6
//! ```
//!
//! A piecewise coefficient is a table with `segments` and a `default`:
//!
//! ```toml
//! [problem.coefficient]
//! default = "0"
//! segments = [
//!     { from = 1.0, to = 2.0, expr = "-2" },
//!     { from = 2.0, to = 4.0, expr = "-(4 - t)" },
//! ]
//! ```
//!
//! A general problem gives `f` in `t, v`, optionally `df_dv`, `df_dt`, and the
//! envelope pair `a` (in `t`) and `g` (in `xi`).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use oblique_core::asymptote::ClassifyConfig;
use oblique_core::expr::{parse, Expression};
use oblique_core::hypotheses::{SamplingGrid, Spacing};
use oblique_core::integrator::IntegrationConfig;
use oblique_core::numerics::{QuadTol, TailOptions};
use oblique_core::problem::{fn1, fn2, EmdenFowlerCoeff, Fn1, IvpSpec, Nonlinearity};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("in `{field}`: {source}")]
    Expression {
        field: String,
        source: oblique_core::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Theorem1,
    Theorem2,
    EfNegative,
    Caligo,
    Comparisons,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    V1,
    V2,
    BoundChain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from: f64,
    pub to: f64,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffSpec {
    Expr(String),
    Piecewise { segments: Vec<Segment>, default: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    General {
        f: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        df_dv: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        df_dt: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g: Option<String>,
    },
    EmdenFowler {
        n: u32,
        coefficient: CoeffSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        derivative: Option<CoeffSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvpSection {
    pub t0: f64,
    pub x0: f64,
    pub xp0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_min_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakpoints: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<SpacingName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingName {
    Linear,
    Logarithmic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_tol_rel: Option<f64>,
}

/// `count` evenly spaced values from `from` to `to` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.from];
        }
        (0..self.count)
            .map(|i| self.from + (self.to - self.from) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub x0: Axis,
    pub xp0: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub monitors: Vec<Monitor>,
    pub problem: ProblemSpec,
    pub ivp: IvpSection,
    pub integration: IntegrationSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// Runtime objects built from a validated scenario.
#[derive(Clone)]
pub struct Problem {
    pub nonlinearity: Nonlinearity,
    pub emden_fowler: Option<EmdenFowlerCoeff>,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let scenario: Scenario = toml::from_str(text)?;
    scenario.validate()?;
    Ok(scenario)
}

fn compile(field: &str, src: &str, vars: &[&str]) -> Result<Expression, ConfigError> {
    parse(src, vars).map_err(|source| ConfigError::Expression {
        field: field.to_string(),
        source,
    })
}

fn expr_fn1(field: &str, src: &str, var: &str) -> Result<Fn1, ConfigError> {
    let e = compile(field, src, &[var])?;
    Ok(fn1(move |x| e.eval_slots(&[x])))
}

fn check_segments(field: &str, segments: &[Segment]) -> Result<(), ConfigError> {
    for (i, s) in segments.iter().enumerate() {
        if !(s.from.is_finite() && s.to.is_finite() && s.from < s.to) {
            return Err(invalid(format!(
                "{field}: segment {i} needs finite from < to, got [{}, {}]",
                s.from, s.to
            )));
        }
    }
    for (i, w) in segments.windows(2).enumerate() {
        if w[1].from < w[0].to {
            return Err(invalid(format!(
                "{field}: segments {i} [{}, {}] and {} [{}, {}] overlap",
                w[0].from,
                w[0].to,
                i + 1,
                w[1].from,
                w[1].to
            )));
        }
        if w[1].from > w[0].to {
            return Err(invalid(format!(
                "{field}: gap between segments {i} and {} at [{}, {}]",
                i + 1,
                w[0].to,
                w[1].from
            )));
        }
    }
    Ok(())
}

/// Coefficient as a function of `t`. Segments are closed; at a shared
/// endpoint the earlier segment wins.
fn coeff_fn(field: &str, spec: &CoeffSpec) -> Result<Fn1, ConfigError> {
    match spec {
        CoeffSpec::Expr(src) => expr_fn1(field, src, "t"),
        CoeffSpec::Piecewise { segments, default } => {
            check_segments(field, segments)?;
            let pieces = segments
                .iter()
                .enumerate()
                .map(|(i, s)| Ok((s.from, s.to, compile(&format!("{field}.segments[{i}]"), &s.expr, &["t"])?)))
                .collect::<Result<Vec<_>, ConfigError>>()?;
            let fallback = compile(&format!("{field}.default"), default, &["t"])?;
            let pieces = Arc::new(pieces);
            Ok(fn1(move |t| {
                let e = pieces
                    .iter()
                    .find(|(lo, hi, _)| *lo <= t && t <= *hi)
                    .map_or(&fallback, |(_, _, e)| e);
                e.eval_slots(&[t])
            }))
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ivp = self.ivp_spec()?;
        let problem = self.build_problem()?;
        self.integration_config().validate(ivp.t0).map_err(|e| invalid(e.to_string()))?;
        self.sampling_grid().validate().map_err(|e| invalid(e.to_string()))?;
        self.classify_config().validate().map_err(|e| invalid(e.to_string()))?;
        let tol = self.quad_tol();
        if !(tol.rel > 0.0 && tol.abs > 0.0) {
            return Err(invalid("quadrature tolerances must be positive"));
        }
        if problem.emden_fowler.is_none() {
            if let Some(c) = self
                .checks
                .iter()
                .find(|c| matches!(c, Check::EfNegative | Check::Caligo | Check::Comparisons))
            {
                return Err(invalid(format!("check {c:?} needs an emden_fowler problem")));
            }
        }
        if self.monitors.contains(&Monitor::BoundChain) && problem.nonlinearity.envelope().is_none() {
            return Err(invalid("the bound_chain monitor needs envelope expressions a and g"));
        }
        if let Some(sweep) = &self.sweep {
            for (name, axis) in [("x0", sweep.x0), ("xp0", sweep.xp0)] {
                if axis.count == 0 || !axis.from.is_finite() || !axis.to.is_finite() {
                    return Err(invalid(format!("sweep axis {name} needs finite bounds and count >= 1")));
                }
            }
        }
        Ok(())
    }

    pub fn ivp_spec(&self) -> Result<IvpSpec, ConfigError> {
        IvpSpec::new(self.ivp.t0, self.ivp.x0, self.ivp.xp0).map_err(|e| invalid(e.to_string()))
    }

    pub fn build_problem(&self) -> Result<Problem, ConfigError> {
        match &self.problem {
            ProblemSpec::General { f, df_dv, df_dt, a, g } => {
                let fe = compile("problem.f", f, &["t", "v"])?;
                let mut nl = Nonlinearity::new(fn2(move |t, v| fe.eval_slots(&[t, v])));
                if let Some(src) = df_dv {
                    let e = compile("problem.df_dv", src, &["t", "v"])?;
                    nl = nl.with_df_dv(fn2(move |t, v| e.eval_slots(&[t, v])));
                }
                if let Some(src) = df_dt {
                    let e = compile("problem.df_dt", src, &["t", "v"])?;
                    nl = nl.with_df_dt(fn2(move |t, v| e.eval_slots(&[t, v])));
                }
                match (a, g) {
                    (Some(a), Some(g)) => {
                        nl = nl.with_envelope(expr_fn1("problem.a", a, "t")?, expr_fn1("problem.g", g, "xi")?);
                    }
                    (None, None) => {}
                    _ => return Err(invalid("envelope needs both a and g")),
                }
                Ok(Problem {
                    nonlinearity: nl,
                    emden_fowler: None,
                })
            }
            ProblemSpec::EmdenFowler { n, coefficient, derivative } => {
                let a = coeff_fn("problem.coefficient", coefficient)?;
                let mut ef = EmdenFowlerCoeff::new(*n, a).map_err(|e| invalid(e.to_string()))?;
                if let Some(d) = derivative {
                    ef = ef.with_derivative(coeff_fn("problem.derivative", d)?);
                }
                Ok(Problem {
                    nonlinearity: ef.to_nonlinearity(),
                    emden_fowler: Some(ef),
                })
            }
        }
    }

    pub fn integration_config(&self) -> IntegrationConfig {
        let s = &self.integration;
        let base = IntegrationConfig::with_horizon(s.horizon);
        IntegrationConfig {
            rel_tol: s.rel_tol.unwrap_or(base.rel_tol),
            abs_tol: s.abs_tol.unwrap_or(base.abs_tol),
            blowup_threshold: s.blowup_threshold.unwrap_or(base.blowup_threshold),
            h_min_factor: s.h_min_factor.unwrap_or(base.h_min_factor),
            max_steps: s.max_steps.unwrap_or(base.max_steps),
            sample_stride: s.sample_stride.unwrap_or(base.sample_stride),
            breakpoints: s.breakpoints.clone(),
            ..base
        }
    }

    pub fn sampling_grid(&self) -> SamplingGrid {
        let g = &self.grid;
        let base = SamplingGrid::default_for(self.ivp.t0);
        SamplingGrid {
            t_min: g.t_min.unwrap_or(base.t_min),
            t_max: g.t_max.unwrap_or(base.t_max),
            t_count: g.t_count.unwrap_or(base.t_count),
            spacing: match g.spacing {
                Some(SpacingName::Linear) => Spacing::Linear,
                Some(SpacingName::Logarithmic) => Spacing::Logarithmic,
                None => base.spacing,
            },
            v_max: g.v_max.unwrap_or(base.v_max),
            v_count: g.v_count.unwrap_or(base.v_count),
        }
    }

    pub fn quad_tol(&self) -> QuadTol {
        let base = QuadTol::default();
        QuadTol::new(
            self.quadrature.rel_tol.unwrap_or(base.rel),
            self.quadrature.abs_tol.unwrap_or(base.abs),
        )
    }

    pub fn tail_options(&self) -> TailOptions {
        let tol = self.quad_tol();
        TailOptions {
            rel_tol: tol.rel,
            abs_tol: tol.abs,
            ..TailOptions::default()
        }
    }

    pub fn classify_config(&self) -> ClassifyConfig {
        let c = &self.classify;
        let base = ClassifyConfig::default();
        ClassifyConfig {
            window: c.window.unwrap_or(base.window),
            tail_fraction: c.tail_fraction.unwrap_or(base.tail_fraction),
            growth_factor: c.growth_factor.unwrap_or(base.growth_factor),
            slope_floor: c.slope_floor.unwrap_or(base.slope_floor),
            limit_tol_rel: c.limit_tol_rel.unwrap_or(base.limit_tol_rel),
        }
    }

    /// Apply command-line overrides and re-validate.
    pub fn with_overrides(mut self, horizon: Option<f64>, rel_tol: Option<f64>) -> Result<Self, ConfigError> {
        if let Some(h) = horizon {
            self.integration.horizon = h;
        }
        if let Some(r) = rel_tol {
            self.integration.rel_tol = Some(r);
        }
        self.validate()?;
        Ok(self)
    }
}
