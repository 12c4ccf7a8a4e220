//! The Abel equation of the first kind
//!
//! ```text
//! y' + a(t) y^3 + b(t) y^2 + c(t) y + d(t) = 0
//! ```
//!
//! plus the pointwise cubic `a y^3 + b y^2 + c y + d` in `y` whose real roots
//! drive envelope suggestions.

use serde::{Deserialize, Serialize};

use crate::curve::Curve;
use crate::expr::{EvalError, Expr, ParseError};

/// Coefficient values at a fixed `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Coefficients {
    /// `a y^3 + b y^2 + c y + d`
    #[inline]
    pub fn cubic(&self, y: f64) -> f64 {
        ((self.a * y + self.b) * y + self.c) * y + self.d
    }

    #[inline]
    pub fn cubic_slope(&self, y: f64) -> f64 {
        (3.0 * self.a * y + 2.0 * self.b) * y + self.c
    }

    /// `b^2 / a`, taken as zero wherever `b` vanishes.
    #[inline]
    pub fn b2_over_a(&self) -> f64 {
        if self.b == 0.0 {
            0.0
        } else {
            self.b * self.b / self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbelEquation {
    pub a: Expr,
    pub b: Expr,
    pub c: Expr,
    pub d: Expr,
    #[serde(default)]
    pub label: String,
}

impl AbelEquation {
    pub fn new(a: Expr, b: Expr, c: Expr, d: Expr) -> Self {
        Self {
            a,
            b,
            c,
            d,
            label: String::new(),
        }
    }

    pub fn parse(a: &str, b: &str, c: &str, d: &str) -> Result<Self, ParseError> {
        Ok(Self::new(
            Expr::parse(a)?,
            Expr::parse(b)?,
            Expr::parse(c)?,
            Expr::parse(d)?,
        ))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn coefficients(&self, t: f64) -> Result<Coefficients, EvalError> {
        Ok(Coefficients {
            a: self.a.eval(t)?,
            b: self.b.eval(t)?,
            c: self.c.eval(t)?,
            d: self.d.eval(t)?,
        })
    }

    /// `y'` as implied by the equation: `-(a y^3 + b y^2 + c y + d)`.
    #[inline]
    pub fn rhs(&self, t: f64, y: f64) -> Result<f64, EvalError> {
        Ok(-self.coefficients(t)?.cubic(y))
    }

    /// Evaluates every coefficient on `n + 1` evenly spaced points of `[t0, t1]`.
    pub fn probe(&self, t0: f64, t1: f64, n: usize) -> Result<(), EvalError> {
        let n = n.max(1);
        for i in 0..=n {
            let t = t0 + (t1 - t0) * i as f64 / n as f64;
            self.coefficients(t)?;
        }
        Ok(())
    }

    pub fn cubic_roots(&self, t: f64) -> Result<CubicSection, EvalError> {
        Ok(CubicSection::solve(t, self.coefficients(t)?))
    }

    /// Max over `grid` of `|eta' + a eta^3 + b eta^2 + c eta + d|`, with the
    /// derivative taken by central difference.
    pub fn residual(&self, candidate: &dyn Curve, grid: &[f64]) -> Result<f64, EvalError> {
        let mut worst: f64 = 0.0;
        for &t in grid {
            let eta = candidate.value(t)?;
            let r = candidate.derivative(t)? + self.coefficients(t)?.cubic(eta);
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("invalid interval [{t0}, {t1}]: need finite t0 < t1")]
pub struct IntervalError {
    pub t0: f64,
    pub t1: f64,
}

/// `[t0, t1)` or `[t0, t1]`; `t1` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub t0: f64,
    pub t1: f64,
    pub closed_right: bool,
}

impl Interval {
    pub fn new(t0: f64, t1: f64, closed_right: bool) -> Result<Self, IntervalError> {
        if !t0.is_finite() || t1.is_nan() || t0 >= t1 {
            return Err(IntervalError { t0, t1 });
        }
        Ok(Self {
            t0,
            t1,
            closed_right: closed_right && t1.is_finite(),
        })
    }

    pub fn closed(t0: f64, t1: f64) -> Result<Self, IntervalError> {
        Self::new(t0, t1, true)
    }

    pub fn is_bounded(&self) -> bool {
        self.t1.is_finite()
    }

    /// Cuts an unbounded (or longer) interval at `t0 + horizon`.
    pub fn truncated(&self, horizon: f64) -> Interval {
        let end = self.t0 + horizon;
        if end < self.t1 {
            Interval {
                t0: self.t0,
                t1: end,
                closed_right: true,
            }
        } else {
            *self
        }
    }

    pub fn length(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Real roots in `y` of the cubic at a fixed `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSection {
    pub t: f64,
    /// Ascending; a repeated root appears repeatedly.
    pub roots: Vec<f64>,
    /// Sign of `a(t)`: -1, 0 or 1.
    pub leading_sign: i8,
    /// `|a(t)|` fell below the relative threshold and the lower-degree
    /// polynomial was solved instead.
    pub degenerate: bool,
}

const DEGENERATE_REL: f64 = 1e-13;

impl CubicSection {
    pub fn solve(t: f64, k: Coefficients) -> CubicSection {
        let Coefficients { a, b, c, d } = k;
        let leading_sign = if a > 0.0 {
            1
        } else if a < 0.0 {
            -1
        } else {
            0
        };
        let scale = b.abs().max(c.abs()).max(d.abs()).max(1.0);
        let degenerate = a.abs() < DEGENERATE_REL * scale;
        let mut roots = if degenerate {
            quadratic_roots(b, c, d)
        } else {
            depressed_cubic_roots(b / a, c / a, d / a)
        };
        if !degenerate {
            for r in roots.iter_mut() {
                *r = polish(&k, *r);
            }
        }
        roots.sort_by(f64::total_cmp);
        CubicSection {
            t,
            roots,
            leading_sign,
            degenerate,
        }
    }
}

/// One guarded Newton step: kept only when it lowers the residual.
fn polish(k: &Coefficients, r: f64) -> f64 {
    let slope = k.cubic_slope(r);
    if slope == 0.0 || !slope.is_finite() {
        return r;
    }
    let candidate = r - k.cubic(r) / slope;
    if candidate.is_finite() && k.cubic(candidate).abs() < k.cubic(r).abs() {
        candidate
    } else {
        r
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = b.abs().max(c.abs()).max(1.0);
    if a.abs() < DEGENERATE_REL * scale {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    let tol = 1e-12 * (b * b).max((4.0 * a * c).abs());
    if disc < -tol {
        return vec![];
    }
    if disc <= tol {
        let r = -b / (2.0 * a);
        return vec![r, r];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        // b == 0 and c/a < 0
        let r = (-c / a).sqrt();
        return vec![-r, r];
    }
    vec![q / a, c / q]
}

/// Roots of the monic cubic `y^3 + p2 y^2 + p1 y + p0`.
fn depressed_cubic_roots(p2: f64, p1: f64, p0: f64) -> Vec<f64> {
    let shift = p2 / 3.0;
    let p = p1 - p2 * shift;
    let q = 2.0 * shift * shift * shift - shift * p1 + p0;
    let m = p2.abs().max(p1.abs().sqrt()).max(p0.abs().cbrt()).max(f64::MIN_POSITIVE);

    if p.abs() <= 1e-12 * m * m && q.abs() <= 1e-12 * m * m * m {
        return vec![-shift; 3];
    }

    let half_q = 0.5 * q;
    let third_p = p / 3.0;
    let cube = third_p * third_p * third_p;
    let disc = half_q * half_q + cube;
    let disc_tol = 1e-10 * (half_q * half_q).max(cube.abs());

    if disc.abs() <= disc_tol && p != 0.0 {
        let simple = 3.0 * q / p;
        let double = -1.5 * q / p;
        return vec![simple - shift, double - shift, double - shift];
    }
    if disc > 0.0 {
        let big = -q.signum() * (half_q.abs() + disc.sqrt()).cbrt();
        let small = if big != 0.0 { -p / (3.0 * big) } else { 0.0 };
        return vec![big + small - shift];
    }
    // three distinct real roots, p < 0
    let r = 2.0 * (-third_p).sqrt();
    let cos_arg = ((3.0 * q) / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
    let phi = cos_arg.acos() / 3.0;
    (0..3)
        .map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
        .collect()
}
