//! Problem definitions: the nonlinearity `f(t, v)`, the Emden-Fowler
//! coefficient `A(t)`, and initial data.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::central_diff;

/// Scalar function of one variable that may fail to evaluate.
pub type Fn1 = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;
/// Scalar function of `(t, v)` that may fail to evaluate.
pub type Fn2 = Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>;

pub fn fn1<F>(f: F) -> Fn1
where
    F: Fn(f64) -> Result<f64> + Send + Sync + 'static,
{
    Arc::new(f)
}

pub fn fn2<F>(f: F) -> Fn2
where
    F: Fn(f64, f64) -> Result<f64> + Send + Sync + 'static,
{
    Arc::new(f)
}

/// Envelope pair with `|f(t, v)| <= a(t) g(|v|)`.
#[derive(Clone)]
pub struct Envelope {
    pub a: Fn1,
    pub g: Fn1,
}

/// The nonlinearity `f(t, v)` of `x'' + f(t, x/t) = 0`, optionally with its
/// partial derivatives and an envelope. Missing partials are replaced by
/// central differences.
#[derive(Clone)]
pub struct Nonlinearity {
    f: Fn2,
    df_dv: Option<Fn2>,
    df_dt: Option<Fn2>,
    envelope: Option<Envelope>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("df_dv", &self.df_dv.is_some())
            .field("df_dt", &self.df_dt.is_some())
            .field("envelope", &self.envelope.is_some())
            .finish_non_exhaustive()
    }
}

/// Outcome of checking `|f(t, v)| <= a(t) g(|v|)` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeSample {
    pub t: f64,
    pub v: f64,
    pub abs_f: f64,
    pub bound: f64,
    pub holds: bool,
}

impl Nonlinearity {
    pub fn new(f: Fn2) -> Self {
        Nonlinearity {
            f,
            df_dv: None,
            df_dt: None,
            envelope: None,
        }
    }

    /// `f ≡ 0` with the envelope `a ≡ 0`, `g(ξ) = ξ^3`.
    pub fn zero() -> Self {
        Nonlinearity::new(fn2(|_, _| Ok(0.0)))
            .with_df_dv(fn2(|_, _| Ok(0.0)))
            .with_df_dt(fn2(|_, _| Ok(0.0)))
            .with_envelope(fn1(|_| Ok(0.0)), fn1(|xi| Ok(xi.powi(3))))
    }

    pub fn with_df_dv(mut self, df_dv: Fn2) -> Self {
        self.df_dv = Some(df_dv);
        self
    }

    pub fn with_df_dt(mut self, df_dt: Fn2) -> Self {
        self.df_dt = Some(df_dt);
        self
    }

    pub fn with_envelope(mut self, a: Fn1, g: Fn1) -> Self {
        self.envelope = Some(Envelope { a, g });
        self
    }

    pub fn f(&self, t: f64, v: f64) -> Result<f64> {
        (self.f)(t, v)
    }

    pub fn has_df_dv(&self) -> bool {
        self.df_dv.is_some()
    }

    pub fn has_df_dt(&self) -> bool {
        self.df_dt.is_some()
    }

    pub fn envelope(&self) -> Option<&Envelope> {
        self.envelope.as_ref()
    }

    /// `∂f/∂v`, from the closed form when present, else a central difference.
    pub fn df_dv(&self, t: f64, v: f64) -> Result<f64> {
        match &self.df_dv {
            Some(d) => d(t, v),
            None => central_diff(|w| self.f(t, w), v, 1.0),
        }
    }

    /// `∂f/∂t`, from the closed form when present, else a central difference.
    pub fn df_dt(&self, t: f64, v: f64) -> Result<f64> {
        match &self.df_dt {
            Some(d) => d(t, v),
            None => central_diff(|s| self.f(s, v), t, 1.0),
        }
    }

    /// Evaluate both sides of the envelope inequality at `(t, v)`.
    pub fn envelope_sample(&self, t: f64, v: f64) -> Result<Option<EnvelopeSample>> {
        let Some(env) = &self.envelope else {
            return Ok(None);
        };
        let abs_f = self.f(t, v)?.abs();
        let bound = (env.a)(t)? * (env.g)(v.abs())?;
        // equality cases are exact up to rounding of the two products
        let holds = abs_f <= bound + 8.0 * f64::EPSILON * bound.abs().max(abs_f);
        Ok(Some(EnvelopeSample {
            t,
            v,
            abs_f,
            bound,
            holds,
        }))
    }
}

/// Emden-Fowler coefficient data for `x'' + A(t) x^(2n-1) = 0`.
#[derive(Clone)]
pub struct EmdenFowlerCoeff {
    n: u32,
    a: Fn1,
    da_dt: Option<Fn1>,
}

impl fmt::Debug for EmdenFowlerCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmdenFowlerCoeff")
            .field("n", &self.n)
            .field("da_dt", &self.da_dt.is_some())
            .finish_non_exhaustive()
    }
}

impl EmdenFowlerCoeff {
    pub fn new(n: u32, a: Fn1) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("Emden-Fowler exponent n must be at least 1"));
        }
        Ok(EmdenFowlerCoeff { n, a, da_dt: None })
    }

    pub fn with_derivative(mut self, da_dt: Fn1) -> Self {
        self.da_dt = Some(da_dt);
        self
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// The odd exponent `2n - 1`.
    pub fn power(&self) -> i32 {
        2 * self.n as i32 - 1
    }

    pub fn a(&self, t: f64) -> Result<f64> {
        (self.a)(t)
    }

    pub fn has_derivative(&self) -> bool {
        self.da_dt.is_some()
    }

    /// `A'(t)`, closed form when present, else a central difference.
    pub fn da_dt(&self, t: f64) -> Result<f64> {
        match &self.da_dt {
            Some(d) => d(t),
            None => central_diff(|s| self.a(s), t, 1.0),
        }
    }

    /// `f(t, v) = t^(2n-1) A(t) v^(2n-1)` with envelope `a(t) = t^(2n-1)|A(t)|`,
    /// `g(ξ) = ξ^(2n-1)` and closed-form partials.
    pub fn to_nonlinearity(&self) -> Nonlinearity {
        let p = self.power();
        let a = self.a.clone();
        let f = {
            let a = a.clone();
            fn2(move |t, v| Ok(t.powi(p) * a(t)? * v.powi(p)))
        };
        let df_dv = {
            let a = a.clone();
            fn2(move |t, v| Ok(f64::from(p) * t.powi(p) * a(t)? * v.powi(p - 1)))
        };
        let env_a = {
            let a = a.clone();
            fn1(move |t| Ok(t.powi(p) * a(t)?.abs()))
        };
        let env_g = fn1(move |xi| Ok(xi.powi(p)));
        let mut nl = Nonlinearity::new(f)
            .with_df_dv(df_dv)
            .with_envelope(env_a, env_g);
        if let Some(da) = self.da_dt.clone() {
            nl = nl.with_df_dt(fn2(move |t, v| {
                let vp = v.powi(p);
                Ok(f64::from(p) * t.powi(p - 1) * a(t)? * vp + t.powi(p) * da(t)? * vp)
            }));
        }
        nl
    }
}

/// Initial data `x(t0) = x0`, `x'(t0) = xp0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IvpSpec {
    pub t0: f64,
    pub x0: f64,
    pub xp0: f64,
}

/// `u0 = t0 x'(t0) - x(t0)`, `v0 = x(t0) / t0`, `c = 1 + u0^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub u0: f64,
    pub v0: f64,
    pub c: f64,
}

impl IvpSpec {
    pub fn new(t0: f64, x0: f64, xp0: f64) -> Result<Self> {
        if !(t0.is_finite() && t0 >= 1.0) {
            return Err(Error::invalid(format!("initial time must satisfy t0 >= 1, got {t0}")));
        }
        if !(x0.is_finite() && xp0.is_finite()) {
            return Err(Error::invalid("initial values must be finite"));
        }
        Ok(IvpSpec { t0, x0, xp0 })
    }

    pub fn derived_constants(&self) -> DerivedConstants {
        let u0 = self.t0 * self.xp0 - self.x0;
        DerivedConstants {
            u0,
            v0: self.x0 / self.t0,
            c: 1.0 + 0.5 * u0 * u0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ef(n: u32, a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> EmdenFowlerCoeff {
        EmdenFowlerCoeff::new(n, fn1(move |t| Ok(a(t)))).unwrap()
    }

    #[test]
    fn t_squared_coefficient_at_one() {
        let nl = ef(2, |t| -2.0 * t.powi(-6)).to_nonlinearity();
        assert_eq!(nl.f(1.0, 1.0).unwrap(), -2.0);
    }

    #[test]
    fn zero_coefficient() {
        let nl = ef(1, |_| 0.0).to_nonlinearity();
        for (t, v) in [(1.0, 0.0), (3.0, -2.0), (1e5, 7.0)] {
            assert_eq!(nl.f(t, v).unwrap(), 0.0);
        }
    }

    #[test]
    fn direct_arithmetic() {
        let nl = ef(2, |t| -t.powi(-6)).to_nonlinearity();
        assert_relative_eq!(nl.f(10.0, 2.0).unwrap(), -0.008, max_relative = 1e-14);
    }

    #[test]
    fn exponent_must_be_positive() {
        assert!(EmdenFowlerCoeff::new(0, fn1(|_| Ok(1.0))).is_err());
    }

    #[test]
    fn partials_match_closed_forms() {
        let coeff = ef(2, |t| -t.powi(-6)).with_derivative(fn1(|t| Ok(6.0 * t.powi(-7))));
        let nl = coeff.to_nonlinearity();
        // f = -t^{-3} v^3
        let (t, v) = (2.5, -1.5);
        assert_relative_eq!(nl.df_dv(t, v).unwrap(), -3.0 * t.powi(-3) * v * v, max_relative = 1e-14);
        assert_relative_eq!(nl.df_dt(t, v).unwrap(), 3.0 * t.powi(-4) * v.powi(3), max_relative = 1e-14);
    }

    #[test]
    fn finite_difference_fallback() {
        let nl = Nonlinearity::new(fn2(|t, v| Ok(t.powi(-3) * v.powi(3))));
        let (t, v) = (2.0, 1.5);
        assert_relative_eq!(nl.df_dv(t, v).unwrap(), 3.0 * t.powi(-3) * v * v, max_relative = 1e-9);
        assert_relative_eq!(nl.df_dt(t, v).unwrap(), -3.0 * t.powi(-4) * v.powi(3), max_relative = 1e-9);
    }

    #[test]
    fn envelope_violation_is_reported() {
        let nl = Nonlinearity::new(fn2(|_, v| Ok(2.0 * v)))
            .with_envelope(fn1(|_| Ok(1.0)), fn1(Ok));
        let s = nl.envelope_sample(1.0, 3.0).unwrap().unwrap();
        assert!(!s.holds);
        assert_eq!((s.abs_f, s.bound), (6.0, 3.0));
        assert!(Nonlinearity::new(fn2(|_, _| Ok(0.0)))
            .envelope_sample(1.0, 1.0)
            .unwrap()
            .is_none());
    }

    #[test]
    fn derived_constant_examples() {
        let d = IvpSpec::new(1.0, 0.0, 0.0).unwrap().derived_constants();
        assert_eq!((d.u0, d.v0, d.c), (0.0, 0.0, 1.0));
        let d = IvpSpec::new(100.0, 50.0, 0.0).unwrap().derived_constants();
        assert_eq!((d.u0, d.v0, d.c), (-50.0, 0.5, 1251.0));
        let d = IvpSpec::new(1.0, 1.0, 1.0).unwrap().derived_constants();
        assert_eq!((d.u0, d.v0, d.c), (0.0, 1.0, 1.0));
    }

    #[test]
    fn initial_time_below_one_is_rejected() {
        assert!(IvpSpec::new(0.5, 0.0, 0.0).is_err());
        assert!(IvpSpec::new(f64::NAN, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn emden_fowler_form_and_envelope_equality(
            n in 1u32..4, t in 1.0f64..1e3, v in -5.0f64..5.0, k in -3.0f64..3.0
        ) {
            let nl = ef(n, move |t| k * t.powi(-5)).to_nonlinearity();
            let p = 2 * n as i32 - 1;
            let want = t.powi(p) * (k * t.powi(-5)) * v.powi(p);
            let got = nl.f(t, v).unwrap();
            prop_assert!((got - want).abs() <= 4.0 * f64::EPSILON * want.abs());
            let s = nl.envelope_sample(t, v).unwrap().unwrap();
            prop_assert!((s.abs_f - s.bound).abs() <= 4.0 * f64::EPSILON * s.bound);
        }

        #[test]
        fn c_is_at_least_one(t0 in 1.0f64..1e4, x0 in -1e3f64..1e3, xp0 in -1e3f64..1e3) {
            let d = IvpSpec::new(t0, x0, xp0).unwrap().derived_constants();
            prop_assert!(d.c >= 1.0);
            if d.u0 == 0.0 {
                prop_assert_eq!(d.c, 1.0);
            }
            // below ~1e-8, u0^2/2 vanishes against 1 in double precision
            if d.u0.abs() > 1e-7 {
                prop_assert!(d.c > 1.0);
            }
        }
    }
}
