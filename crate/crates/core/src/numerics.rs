//! Quadrature, improper-integral tails, limit extraction and finite
//! differences.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance pair for quadrature: a result is accepted when its error
/// estimate is at most `max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadTol {
    pub rel: f64,
    pub abs: f64,
}

impl QuadTol {
    pub fn new(rel: f64, abs: f64) -> Self {
        QuadTol { rel, abs }
    }

    pub fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for QuadTol {
    fn default() -> Self {
        QuadTol {
            rel: 1e-8,
            abs: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Panel budget for [`integrate_finite`].
pub const DEFAULT_MAX_PANELS: usize = 2000;

// Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod panel. The error estimate is `|K15 - G7|`, floored
/// at a multiple of the rounding level of the sum.
fn gk15<F>(h: &mut F, lo: f64, hi: f64) -> Result<Panel>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = h(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut resabs = fc.abs() * WGK[7];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let f1 = h(center - dx)?;
        let f2 = h(center + dx)?;
        kronrod += w * (f1 + f2);
        resabs += w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let resabs = resabs * half.abs();
    let error = ((kronrod - gauss) * half)
        .abs()
        .max(50.0 * f64::EPSILON * resabs);
    if !value.is_finite() {
        return Err(Error::domain(format!(
            "integrand is not finite on [{lo}, {hi}]"
        )));
    }
    Ok(Panel {
        lo,
        hi,
        value,
        error,
    })
}

/// Adaptive Gauss-Kronrod quadrature of `h` over `[lo, hi]`.
pub fn integrate_finite<F>(h: F, lo: f64, hi: f64, rel_tol: f64, abs_tol: f64) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    integrate_finite_budget(h, lo, hi, QuadTol::new(rel_tol, abs_tol), DEFAULT_MAX_PANELS)
}

/// [`integrate_finite`] with an explicit panel budget.
pub fn integrate_finite_budget<F>(
    mut h: F,
    lo: f64,
    hi: f64,
    tol: QuadTol,
    max_panels: usize,
) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid("integration bounds must be finite"));
    }
    if lo > hi {
        return Err(Error::invalid(format!(
            "integration bounds out of order: {lo} > {hi}"
        )));
    }
    if !(tol.rel >= 0.0 && tol.abs >= 0.0) || (tol.rel == 0.0 && tol.abs == 0.0) {
        return Err(Error::invalid("quadrature tolerances must be non-negative, not both zero"));
    }
    if lo == hi {
        return Ok(QuadResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            converged: true,
            evaluations: 0,
        });
    }

    let first = gk15(&mut h, lo, hi)?;
    let mut evaluations = 15;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);

    while error > tol.target(value) {
        if heap.len() >= max_panels.max(1) {
            return Ok(QuadResult {
                value,
                abs_error_estimate: error,
                converged: false,
                evaluations,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // panel can no longer be split in floating point
            heap.push(worst);
            return Ok(QuadResult {
                value,
                abs_error_estimate: error,
                converged: false,
                evaluations,
            });
        }
        let left = gk15(&mut h, worst.lo, mid)?;
        let right = gk15(&mut h, mid, worst.hi)?;
        evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // re-sum occasionally so running updates do not drift
        if heap.len() % 64 == 0 {
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    Ok(QuadResult {
        value,
        abs_error_estimate: error.max(0.0),
        converged: true,
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Number of doublings `T_k = lo * 2^k`, `k = 1..=max_doublings`.
    pub max_doublings: u32,
    /// Accumulated magnitude above which stalled increments count as divergence.
    pub divergence_cap: f64,
    /// Increments must shrink by at least this factor per doubling to count as decaying.
    pub decay_factor: f64,
    /// Consecutive non-decaying doublings that mark a stall.
    pub stall_window: usize,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_doublings: 40,
            divergence_cap: 1e12,
            decay_factor: 1.1,
            stall_window: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum TailKind {
    Convergent { value: f64, abs_error_estimate: f64 },
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint {
    pub horizon: f64,
    pub partial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailVerdict {
    pub kind: TailKind,
    /// Partial integrals `∫_lo^{T_k} h` at each doubling horizon.
    pub evidence: Vec<TailPoint>,
}

impl TailVerdict {
    pub fn value(&self) -> Option<f64> {
        match self.kind {
            TailKind::Convergent { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn error_estimate(&self) -> Option<f64> {
        match self.kind {
            TailKind::Convergent {
                abs_error_estimate, ..
            } => Some(abs_error_estimate),
            _ => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self.kind, TailKind::Divergent)
    }

    /// Last horizon reached and the partial integral there.
    pub fn last(&self) -> Option<TailPoint> {
        self.evidence.last().copied()
    }
}

/// Decide convergence of `∫_lo^∞ h` on doubling horizons with default options.
pub fn integrate_tail<F>(h: F, lo: f64, rel_tol: f64, abs_tol: f64) -> Result<TailVerdict>
where
    F: FnMut(f64) -> Result<f64>,
{
    integrate_tail_with(
        h,
        lo,
        &TailOptions {
            rel_tol,
            abs_tol,
            ..TailOptions::default()
        },
    )
}

/// Doubling-horizon tail integration.
///
/// Convergent once the last three increments are each below
/// `max(abs_tol, rel_tol * |accumulated|)`; the reported value then adds a
/// geometric estimate of the remaining tail when the increments decay at a
/// steady ratio. Divergent when the last `stall_window` increments did not
/// shrink by `decay_factor` and either the accumulated value passed
/// `divergence_cap` or the schedule ran out.
pub fn integrate_tail_with<F>(mut h: F, lo: f64, opts: &TailOptions) -> Result<TailVerdict>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo.is_finite() && lo > 0.0) {
        return Err(Error::invalid(format!("tail start must be positive, got {lo}")));
    }
    let quad = QuadTol::new(opts.rel_tol, opts.abs_tol);
    let mut evidence = Vec::with_capacity(opts.max_doublings as usize);
    let mut increments: Vec<f64> = Vec::with_capacity(opts.max_doublings as usize);
    let mut accumulated = 0.0;
    let mut quad_error = 0.0;
    let mut prev_extrapolated: Option<f64> = None;
    let mut left = lo;

    for k in 1..=opts.max_doublings {
        let right = lo * 2f64.powi(k as i32);
        let panel = integrate_finite_budget(&mut h, left, right, quad, DEFAULT_MAX_PANELS)?;
        accumulated += panel.value;
        quad_error += panel.abs_error_estimate;
        increments.push(panel.value);
        evidence.push(TailPoint {
            horizon: right,
            partial: accumulated,
        });
        left = right;

        let extrapolated = accumulated + geometric_remainder(&increments).unwrap_or(0.0);

        let threshold = opts.abs_tol.max(opts.rel_tol * accumulated.abs());
        let n = increments.len();
        if n >= 3 && increments[n - 3..].iter().all(|i| i.abs() < threshold) {
            let truncation = match (geometric_remainder(&increments), prev_extrapolated) {
                (Some(_), Some(prev)) => (extrapolated - prev).abs(),
                _ => increments[n - 1].abs(),
            };
            return Ok(TailVerdict {
                kind: TailKind::Convergent {
                    value: extrapolated,
                    abs_error_estimate: quad_error + truncation,
                },
                evidence,
            });
        }
        prev_extrapolated = Some(extrapolated);

        if stalled(&increments, opts) && accumulated.abs() > opts.divergence_cap {
            return Ok(TailVerdict {
                kind: TailKind::Divergent,
                evidence,
            });
        }
    }

    let kind = if stalled(&increments, opts) {
        TailKind::Divergent
    } else {
        TailKind::Inconclusive
    };
    Ok(TailVerdict { kind, evidence })
}

fn stalled(increments: &[f64], opts: &TailOptions) -> bool {
    let w = opts.stall_window;
    if increments.len() < w + 1 {
        return false;
    }
    let tail = &increments[increments.len() - w - 1..];
    tail.windows(2).all(|p| {
        let (prev, next) = (p[0].abs(), p[1].abs());
        next > 0.0 && next * opts.decay_factor > prev
    })
}

/// Remaining tail `I_k r / (1 - r)` when the last two increment ratios agree
/// and lie in `(0, 0.95)`.
fn geometric_remainder(increments: &[f64]) -> Option<f64> {
    let n = increments.len();
    if n < 3 {
        return None;
    }
    let (a, b, c) = (increments[n - 3], increments[n - 2], increments[n - 1]);
    if a == 0.0 || b == 0.0 || c == 0.0 {
        return None;
    }
    let r_prev = b / a;
    let r = c / b;
    let steady = (0.0..0.95).contains(&r) && (0.0..0.95).contains(&r_prev) && (r - r_prev).abs() <= 0.05;
    steady.then(|| c * r / (1.0 - r))
}

/// Limit estimate from the last `window` samples: their mean, and the spread
/// `max - min` over the same window.
pub fn tail_limit(samples: &[(f64, f64)], window: usize) -> Result<(f64, f64)> {
    if window == 0 {
        return Err(Error::invalid("tail window must be positive"));
    }
    if samples.len() < window {
        return Err(Error::invalid(format!(
            "need at least {window} samples for the tail window, got {}",
            samples.len()
        )));
    }
    let tail = &samples[samples.len() - window..];
    let mean = tail.iter().map(|s| s.1).sum::<f64>() / window as f64;
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.1), hi.max(s.1))
        });
    Ok((mean, hi - lo))
}

/// Central difference with step `ε^{1/3} * max(scale, |at|)`.
pub fn central_diff<F>(mut h: F, at: f64, scale: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let nominal = f64::EPSILON.cbrt() * scale.abs().max(at.abs());
    // make the step exactly representable relative to `at`
    let delta = (at + nominal) - at;
    if delta == 0.0 {
        return Err(Error::invalid("finite-difference step underflowed"));
    }
    Ok((h(at + delta)? - h(at - delta)?) / (2.0 * delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ok<F: Fn(f64) -> f64>(f: F) -> impl FnMut(f64) -> Result<f64> {
        move |x| Ok(f(x))
    }

    #[test]
    fn finite_closed_forms() {
        let r = integrate_finite(ok(|s| s.powi(-2)), 100.0, 200.0, 1e-10, 1e-14).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.value, 0.005, epsilon = 1e-14);

        let r = integrate_finite(ok(|s| s * s.powi(-3)), 100.0, 1000.0, 1e-10, 1e-14).unwrap();
        assert_abs_diff_eq!(r.value, 0.009, epsilon = 1e-13);

        let r = integrate_finite(ok(|_| 0.0), -3.0, 5.0, 1e-10, 1e-14).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn finite_rejects_reversed_bounds() {
        assert!(integrate_finite(ok(|s| s), 2.0, 1.0, 1e-8, 1e-12).is_err());
        let r = integrate_finite(ok(|s| s), 2.0, 2.0, 1e-8, 1e-12).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn finite_reports_non_convergence() {
        // 1/sqrt singularity at the left end with a tiny budget
        let r = integrate_finite_budget(
            ok(|s: f64| 1.0 / s.sqrt()),
            0.0,
            1.0,
            QuadTol::new(1e-14, 0.0),
            4,
        )
        .unwrap();
        assert!(!r.converged);
        assert!(r.abs_error_estimate > 0.0);
    }

    #[test]
    fn finite_propagates_evaluation_errors() {
        let err = integrate_finite(|_| Err(Error::domain("boom")), 0.0, 1.0, 1e-8, 1e-12);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn tail_closed_forms() {
        let v = integrate_tail(ok(|t| t * (t.powi(3) * t.powi(-6))), 100.0, 1e-8, 1e-12).unwrap();
        assert_abs_diff_eq!(v.value().unwrap(), 0.01, epsilon = 1e-10);

        let v = integrate_tail(ok(|x| x.powi(-3)), 1.5, 1e-8, 1e-12).unwrap();
        assert_abs_diff_eq!(v.value().unwrap(), 2.0 / 9.0, epsilon = 1e-10);

        let v = integrate_tail(ok(|t| 1.0 / t), 1.0, 1e-8, 1e-12).unwrap();
        assert!(v.is_divergent(), "{:?}", v.kind);
        assert_eq!(v.evidence.len(), 40);
    }

    #[test]
    fn tail_of_compactly_supported_integrand() {
        let v = integrate_tail(
            ok(|t| if t < 4.0 { 4.0 - t } else { 0.0 }),
            1.0,
            1e-8,
            1e-12,
        )
        .unwrap();
        assert_abs_diff_eq!(v.value().unwrap(), 4.5, epsilon = 1e-9);
    }

    #[test]
    fn power_tails() {
        let opts = TailOptions {
            rel_tol: 1e-6,
            abs_tol: 1e-14,
            ..TailOptions::default()
        };
        for lo in [1.0, 3.0, 100.0] {
            for p in [1.5f64, 2.0, 3.0] {
                let v = integrate_tail_with(ok(|t: f64| t.powf(-p)), lo, &opts).unwrap();
                let exact = lo.powf(1.0 - p) / (p - 1.0);
                let got = v.value().unwrap_or_else(|| panic!("p={p} lo={lo}: {:?}", v.kind));
                assert!((got - exact).abs() <= opts.rel_tol * exact, "p={p} lo={lo}: {got} vs {exact}");
            }
            for p in [0.5f64, 1.0] {
                let v = integrate_tail_with(ok(|t: f64| t.powf(-p)), lo, &opts).unwrap();
                assert!(v.value().is_none(), "p={p} declared convergent");
            }
        }
    }

    #[test]
    fn tail_limit_cases() {
        let constant: Vec<_> = (0..10).map(|i| (i as f64, 7.0)).collect();
        assert_eq!(tail_limit(&constant, 5).unwrap(), (7.0, 0.0));

        let seq: Vec<_> = (1..=10)
            .map(|i| {
                let t = 1e4 * i as f64;
                (t, 3.0 + 1.0 / t)
            })
            .collect();
        let (limit, spread) = tail_limit(&seq, 10).unwrap();
        assert_abs_diff_eq!(limit, 3.0, epsilon = 1e-4);
        assert!(spread <= 1e-4);

        let growing: Vec<_> = (1..=10).map(|i| (i as f64, i as f64)).collect();
        assert!(tail_limit(&growing, 5).unwrap().1 >= 4.0);
        assert!(tail_limit(&growing, 11).is_err());
        assert!(tail_limit(&growing, 0).is_err());
    }

    #[test]
    fn central_differences() {
        let d = central_diff(ok(|s| s * s), 3.0, 1.0).unwrap();
        assert_abs_diff_eq!(d, 6.0, epsilon = 1e-7);
        let d = central_diff(ok(|_| 42.0), -5.0, 1.0).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-9);
        let d = central_diff(ok(|s| s.powi(-4)), 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(d, -0.125, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn polynomials_up_to_degree_five(c in proptest::collection::vec(-10.0f64..10.0, 6)) {
            let poly = |x: f64| c.iter().rev().fold(0.0, |acc, &k| acc * x + k);
            let exact: f64 = c.iter().enumerate().map(|(i, k)| k / (i as f64 + 1.0)).sum();
            let r = integrate_finite(|x| Ok(poly(x)), 0.0, 1.0, 1e-10, 1e-14).unwrap();
            prop_assert!((r.value - exact).abs() <= r.abs_error_estimate.max(1e-13));
        }

        #[test]
        fn additivity(a in 1.0f64..5.0, w1 in 0.1f64..5.0, w2 in 0.1f64..5.0) {
            let h = |s: f64| Ok((s.sin() + 2.0) / s);
            let (b, c) = (a + w1, a + w1 + w2);
            let whole = integrate_finite(h, a, c, 1e-10, 1e-14).unwrap();
            let left = integrate_finite(h, a, b, 1e-10, 1e-14).unwrap();
            let right = integrate_finite(h, b, c, 1e-10, 1e-14).unwrap();
            let budget = whole.abs_error_estimate + left.abs_error_estimate + right.abs_error_estimate;
            prop_assert!((whole.value - left.value - right.value).abs() <= budget.max(1e-14));
        }
    }
}
