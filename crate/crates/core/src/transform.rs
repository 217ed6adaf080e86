//! The change of variables `u = t x' - x`, `v = x / t` and the resulting
//! first-order system `u' = -t f(t, v)`, `v' = u / t^2`.
//!
//! The map has unit Jacobian, so `(u, v)` carries the same information as
//! `(x, x')`. Note that `u` is a difference of two terms of size `t |x'|`;
//! when `u` is much smaller than `x`, storing the state as `(x, x')` loses
//! the low-order digits of `u`, which is why integration runs in `(u, v)`.

use serde::Serialize;

use crate::error::Result;
use crate::problem::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UvState {
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XState {
    pub t: f64,
    pub x: f64,
    pub xp: f64,
}

impl UvState {
    pub fn new(t: f64, u: f64, v: f64) -> Self {
        UvState { t, u, v }
    }

    pub fn to_x(self) -> XState {
        from_uv(self)
    }
}

impl XState {
    pub fn new(t: f64, x: f64, xp: f64) -> Self {
        XState { t, x, xp }
    }

    pub fn to_uv(self) -> UvState {
        to_uv(self)
    }

    /// `|x| + |x'|`, the quantity that explodes at a finite-time blowup.
    pub fn magnitude(&self) -> f64 {
        self.x.abs() + self.xp.abs()
    }
}

pub fn to_uv(s: XState) -> UvState {
    UvState {
        t: s.t,
        // single rounding of t x' - x
        u: s.t.mul_add(s.xp, -s.x),
        v: s.x / s.t,
    }
}

pub fn from_uv(s: UvState) -> XState {
    let x = s.t * s.v;
    XState {
        t: s.t,
        x,
        xp: s.v + s.u / s.t,
    }
}

/// Right-hand side `(u', v') = (-t f(t, v), u / t^2)`.
pub fn uv_rhs(nl: &Nonlinearity, s: UvState) -> Result<(f64, f64)> {
    let f = nl.f(s.t, s.v)?;
    Ok((-s.t * f, s.u / (s.t * s.t)))
}
