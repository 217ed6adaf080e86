//! Numerical analysis of the second-order equation
//!
//! ```text
//! x'' + f(t, x/t) = 0,    t >= t0 >= 1
//! ```
//!
//! and of its Emden-Fowler special case `x'' + A(t) x^(2n-1) = 0`.
//!
//! The crate works in the coordinates `u = t x' - x`, `v = x / t`, in which the
//! equation becomes the first-order system `u' = -t f(t, v)`, `v' = u / t^2`.
//! Boundedness of `u` rules out finite-time blowup and, together with
//! eventual monotonicity of `u`, yields an oblique asymptote `x1 t + x2`.
//!
//! - [`problem`]: nonlinearities, Emden-Fowler coefficients, initial data.
//! - [`expr`]: a small expression language for coefficients in config files.
//! - [`numerics`]: adaptive quadrature, tail integrals, limits, finite differences.
//! - [`transform`]: the `(x, x') <-> (u, v)` change of variables.
//! - [`integrator`]: Dormand-Prince 5(4) with dense output and blowup detection.
//! - [`lyapunov`]: the two Lyapunov functions and their monotonicity monitors.
//! - [`hypotheses`]: sampled and quadrature-based checks of the sufficient conditions.
//! - [`asymptote`]: asymptote extraction and long-time classification.

pub mod asymptote;
pub mod error;
pub mod expr;
pub mod hypotheses;
pub mod integrator;
pub mod lyapunov;
pub mod numerics;
pub mod problem;
pub mod transform;

pub use error::{Error, Result};
