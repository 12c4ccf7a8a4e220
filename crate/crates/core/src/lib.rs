//! Numerical toolkit for Abel equations of the first kind
//!
//! ```text
//! y' + a(t) y^3 + b(t) y^2 + c(t) y + d(t) = 0
//! ```
//!
//! Coefficients are scalar expressions in `t`. The crate integrates the
//! equation, checks sufficient conditions for global existence, comparison
//! and periodic (closed) solutions on sampled grids, and locates closed
//! solutions by bisection on the initial value.

// NaN must fail range checks, so negated comparisons are deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod closed;
pub mod compare;
pub mod curve;
pub mod expr;
pub mod global;
pub mod integrate;
pub mod io;
pub mod model;
pub mod quad;

pub use curve::{Constant, Curve, Interpolation, Sampled};
pub use expr::{EvalError, EvalErrorKind, Expr, ParseError};
pub use model::{AbelEquation, Coefficients, CubicSection, Interval};
