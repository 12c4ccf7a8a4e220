//! Functions of `t` used as witnesses: supersolution candidates, reference
//! solutions, envelope bounds.

use crate::expr::{EvalError, EvalErrorKind, Expr};

/// Central-difference step at `t`.
pub fn fd_step(t: f64) -> f64 {
    1e-5 * t.abs().max(1.0)
}

pub trait Curve: Sync {
    fn value(&self, t: f64) -> Result<f64, EvalError>;

    /// Central finite difference; falls back to one-sided differences when a
    /// neighbour lies outside the curve's domain.
    fn derivative(&self, t: f64) -> Result<f64, EvalError> {
        let h = fd_step(t);
        match (self.value(t + h), self.value(t - h)) {
            (Ok(p), Ok(m)) => Ok((p - m) / (2.0 * h)),
            (Ok(p), Err(_)) => Ok((p - self.value(t)?) / h),
            (Err(_), Ok(m)) => Ok((self.value(t)? - m) / h),
            (Err(e), Err(_)) => Err(e),
        }
    }

    /// `Some(v)` when the curve is known to be identically `v`.
    fn as_constant(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl Curve for Constant {
    fn value(&self, _t: f64) -> Result<f64, EvalError> {
        Ok(self.0)
    }

    fn derivative(&self, _t: f64) -> Result<f64, EvalError> {
        Ok(0.0)
    }

    fn as_constant(&self) -> Option<f64> {
        Some(self.0)
    }
}

impl Curve for Expr {
    fn value(&self, t: f64) -> Result<f64, EvalError> {
        self.eval(t)
    }

    fn derivative(&self, t: f64) -> Result<f64, EvalError> {
        if self.is_constant() {
            self.eval(t)?;
            return Ok(0.0);
        }
        let h = fd_step(t);
        match (self.eval(t + h), self.eval(t - h)) {
            (Ok(p), Ok(m)) => Ok((p - m) / (2.0 * h)),
            (Ok(p), Err(_)) => Ok((p - self.eval(t)?) / h),
            (Err(_), Ok(m)) => Ok((self.eval(t)? - m) / h),
            (Err(e), Err(_)) => Err(e),
        }
    }

    fn as_constant(&self) -> Option<f64> {
        if self.is_constant() {
            self.eval(0.0).ok()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    /// Piecewise constant, continuous from the right: value at `t` is the
    /// sample at the last knot `<= t`.
    Step,
}

/// A curve given by samples on increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    ts: Vec<f64>,
    vs: Vec<f64>,
    mode: Interpolation,
}

impl Sampled {
    pub fn new(ts: Vec<f64>, vs: Vec<f64>, mode: Interpolation) -> Self {
        assert_eq!(ts.len(), vs.len());
        assert!(!ts.is_empty());
        assert!(ts.windows(2).all(|w| w[0] < w[1]), "knots must increase");
        Self { ts, vs, mode }
    }

    pub fn knots(&self) -> &[f64] {
        &self.ts
    }

    pub fn values(&self) -> &[f64] {
        &self.vs
    }
}

impl Curve for Sampled {
    fn value(&self, t: f64) -> Result<f64, EvalError> {
        let (first, last) = (self.ts[0], self.ts[self.ts.len() - 1]);
        let slack = 1e-12 * (1.0 + first.abs().max(last.abs()));
        if !(t >= first - slack && t <= last + slack) {
            return Err(EvalError::new(EvalErrorKind::OutOfRange, format!("sampled curve at t={t}")));
        }
        let i = self.ts.partition_point(|&x| x <= t).saturating_sub(1);
        if i + 1 >= self.ts.len() {
            return Ok(self.vs[self.vs.len() - 1]);
        }
        match self.mode {
            Interpolation::Step => Ok(self.vs[i]),
            Interpolation::Linear => {
                let s = ((t - self.ts[i]) / (self.ts[i + 1] - self.ts[i])).clamp(0.0, 1.0);
                Ok(self.vs[i] + s * (self.vs[i + 1] - self.vs[i]))
            }
        }
    }

    fn as_constant(&self) -> Option<f64> {
        let v = self.vs[0];
        self.vs.iter().all(|&x| x == v).then_some(v)
    }
}
