//! Dormand-Prince 5(4) for two-component systems, with the standard
//! fourth-order continuous extension and a PI step-size controller.

use serde::Serialize;

use crate::error::{Error, Result};

pub type State = [f64; 2];

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

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

// difference between the fifth- and fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Steps shorter than `h_min_factor * max(|t|, 1)` count as a collapse.
    pub h_min_factor: f64,
    pub max_steps: usize,
    /// Times the controller must land on exactly.
    pub breakpoints: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            h_min_factor: 1e-12,
            max_steps: 10_000_000,
            breakpoints: Vec::new(),
        }
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step {
    pub t_start: f64,
    pub h: f64,
    pub y_start: State,
    pub y_end: State,
    /// Componentwise magnitude of the embedded error estimate.
    pub error: State,
    #[serde(skip)]
    dense: [State; 5],
}

impl Step {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.h
    }

    /// Continuous extension at `t` inside the step.
    pub fn interpolate(&self, t: f64) -> State {
        let s = (t - self.t_start) / self.h;
        let s1 = 1.0 - s;
        let r = &self.dense;
        std::array::from_fn(|i| {
            r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stop {
    Reached,
    /// Observer asked to stop after the last accepted step.
    Observer,
    StepCollapse,
    BudgetExhausted,
    Evaluation(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub steps: Vec<Step>,
    pub stop: Stop,
    pub rejected: usize,
    pub evaluations: usize,
}

impl Solution {
    pub fn last_time(&self, t0: f64) -> f64 {
        self.steps.last().map_or(t0, Step::t_end)
    }
}

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn scaled_norm(e: &State, y0: &State, y1: &State, opts: &SolverOptions) -> f64 {
    let sum: f64 = (0..2)
        .map(|i| {
            let sc = opts.abs_tol.max(opts.rel_tol * y0[i].abs().max(y1[i].abs()));
            (e[i] / sc).powi(2)
        })
        .sum();
    (sum / 2.0).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn initial_step<R>(rhs: &mut R, t0: f64, y0: &State, f0: &State, dir: f64, span: f64, opts: &SolverOptions, evals: &mut usize) -> Result<f64>
where
    R: FnMut(f64, &State) -> Result<State>,
{
    let zero = [0.0; 2];
    let d0 = scaled_norm(y0, y0, &zero, opts);
    let d1 = scaled_norm(f0, y0, &zero, opts);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1 = axpy(y0, dir * h0, &[(1.0, f0)]);
    let f1 = rhs(t0 + dir * h0, &y1)?;
    *evals += 1;
    let diff: State = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = scaled_norm(&diff, y0, &zero, opts) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Integrate `y' = rhs(t, y)` from `t0` to `t_end` (either direction). The
/// observer sees every accepted step and returns `false` to stop.
pub fn solve<R, O>(mut rhs: R, t0: f64, y0: State, t_end: f64, opts: &SolverOptions, mut observer: O) -> Solution
where
    R: FnMut(f64, &State) -> Result<State>,
    O: FnMut(&Step) -> bool,
{
    let mut steps = Vec::new();
    let mut rejected = 0;
    let mut evaluations = 0;
    let finish = |steps, stop, rejected, evaluations| Solution {
        steps,
        stop,
        rejected,
        evaluations,
    };
    if t_end == t0 {
        return finish(steps, Stop::Reached, 0, 0);
    }
    let dir = (t_end - t0).signum();
    let mut breakpoints: Vec<f64> = opts
        .breakpoints
        .iter()
        .copied()
        .filter(|&b| (b - t0) * dir > 0.0 && (t_end - b) * dir > 0.0)
        .collect();
    breakpoints.sort_by(|a, b| (a * dir).total_cmp(&(b * dir)));
    breakpoints.push(t_end);
    let mut next_stop = 0;

    let mut t = t0;
    let mut y = y0;
    let mut k1 = match rhs(t, &y) {
        Ok(k) => k,
        Err(e) => return finish(steps, Stop::Evaluation(e), 0, 1),
    };
    evaluations += 1;
    let mut h = match initial_step(&mut rhs, t, &y, &k1, dir, (breakpoints[0] - t).abs(), opts, &mut evaluations) {
        Ok(h) => h,
        Err(e) => return finish(steps, Stop::Evaluation(e), 0, evaluations),
    };
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if steps.len() >= opts.max_steps {
            return finish(steps, Stop::BudgetExhausted, rejected, evaluations);
        }
        let target = breakpoints[next_stop];
        let remaining = (target - t).abs();
        let h_floor = opts.h_min_factor * t.abs().max(1.0);
        if h < h_floor && remaining > h_floor {
            return finish(steps, Stop::StepCollapse, rejected, evaluations);
        }
        let landing = h >= remaining;
        let h_try = if landing { remaining } else { h };
        let hs = dir * h_try;

        let stages = (|| -> Result<_> {
            let k2 = rhs(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]))?;
            let k3 = rhs(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = rhs(t + C4 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = rhs(
                t + C5 * hs,
                &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let t_new = if landing { target } else { t + hs };
            let k6 = rhs(
                t + hs,
                &axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            )?;
            let y_new = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = rhs(t_new, &y_new)?;
            Ok((k2, k3, k4, k5, k6, k7, y_new, t_new))
        })();
        evaluations += 6;
        let (_k2, k3, k4, k5, k6, k7, y_new, t_new) = match stages {
            Ok(s) => s,
            Err(e) => return finish(steps, Stop::Evaluation(e), rejected, evaluations),
        };

        let e: State = std::array::from_fn(|i| {
            hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let err = scaled_norm(&e, &y, &y_new, opts);
        let finite = err.is_finite() && y_new.iter().all(|x| x.is_finite());

        if finite && err <= 1.0 {
            let fac11 = err.powf(EXPO1);
            let fac = (1.0 / FAC_MAX)
                .max((1.0 / FAC_MIN).min(fac11 / fac_old.powf(BETA) / SAFETY));
            let mut h_new = h_try / fac;
            if last_rejected {
                h_new = h_new.min(h_try);
            }
            fac_old = err.max(1e-4);
            last_rejected = false;

            let ydiff: State = std::array::from_fn(|i| y_new[i] - y[i]);
            let bspl: State = std::array::from_fn(|i| hs * k1[i] - ydiff[i]);
            let dense = [
                y,
                ydiff,
                bspl,
                std::array::from_fn(|i| ydiff[i] - hs * k7[i] - bspl[i]),
                std::array::from_fn(|i| {
                    hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                }),
            ];
            let step = Step {
                t_start: t,
                h: t_new - t,
                y_start: y,
                y_end: y_new,
                error: e.map(f64::abs),
                dense,
            };
            steps.push(step);
            let keep_going = observer(&step);
            t = t_new;
            y = y_new;
            if landing {
                // derivatives may jump at a breakpoint; restart from the right
                match rhs(t, &y) {
                    Ok(k) => k1 = k,
                    Err(err) => return finish(steps, Stop::Evaluation(err), rejected, evaluations),
                }
                evaluations += 1;
                next_stop += 1;
            } else {
                k1 = k7;
            }
            if !keep_going {
                return finish(steps, Stop::Observer, rejected, evaluations);
            }
            if next_stop == breakpoints.len() {
                return finish(steps, Stop::Reached, rejected, evaluations);
            }
            h = h_new;
        } else {
            rejected += 1;
            last_rejected = true;
            h = if finite {
                h_try / (1.0 / FAC_MIN).min(err.powf(EXPO1) / SAFETY)
            } else {
                h_try * FAC_MIN
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let sol = solve(|_, y| Ok([y[0], -y[1]]), 0.0, [1.0, 1.0], 2.0, &SolverOptions::default(), |_| true);
        assert_eq!(sol.stop, Stop::Reached);
        let last = sol.steps.last().unwrap();
        assert_eq!(last.t_end(), 2.0);
        assert!((last.y_end[0] - 2f64.exp()).abs() < 1e-8 * 2f64.exp());
        assert!((last.y_end[1] - (-2f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn lands_on_breakpoints() {
        let opts = SolverOptions {
            breakpoints: vec![0.5, 1.25, 7.0],
            ..SolverOptions::default()
        };
        let sol = solve(|_, y| Ok([y[1], -y[0]]), 0.0, [0.0, 1.0], 3.0, &opts, |_| true);
        let ends: Vec<f64> = sol.steps.iter().map(Step::t_end).collect();
        assert!(ends.contains(&0.5) && ends.contains(&1.25));
        assert_eq!(*ends.last().unwrap(), 3.0);
    }

    #[test]
    fn dense_output_tracks_solution() {
        let sol = solve(|_, y| Ok([y[1], -y[0]]), 0.0, [0.0, 1.0], 10.0, &SolverOptions::default(), |_| true);
        for step in &sol.steps {
            let tm = step.t_start + 0.37 * step.h;
            let y = step.interpolate(tm);
            assert!((y[0] - tm.sin()).abs() < 1e-8, "t={tm}");
            assert_eq!(step.interpolate(step.t_start), step.y_start);
        }
    }

    #[test]
    fn backward_integration() {
        let sol = solve(|_, y| Ok([y[0], 0.0]), 1.0, [1.0, 0.0], 0.0, &SolverOptions::default(), |_| true);
        let last = sol.steps.last().unwrap();
        assert_eq!(last.t_end(), 0.0);
        assert!((last.y_end[0] - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn evaluation_errors_stop_the_run() {
        let sol = solve(
            |t, y| if t > 0.5 { Err(Error::domain("outside")) } else { Ok([y[0], 0.0]) },
            0.0,
            [1.0, 0.0],
            1.0,
            &SolverOptions::default(),
            |_| true,
        );
        assert!(matches!(sol.stop, Stop::Evaluation(_)));
        assert!(sol.last_time(0.0) <= 0.5);
    }

    #[test]
    fn singularity_collapses_the_step() {
        // y' = y^2, y(0) = 1 blows up at t = 1
        let opts = SolverOptions {
            max_steps: 100_000,
            ..SolverOptions::default()
        };
        let sol = solve(|_, y| Ok([y[0] * y[0], 0.0]), 0.0, [1.0, 0.0], 2.0, &opts, |_| true);
        assert_eq!(sol.stop, Stop::StepCollapse);
        assert!((sol.last_time(0.0) - 1.0).abs() < 1e-6);
    }
}
