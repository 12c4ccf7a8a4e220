//! Adaptive Dormand-Prince 5(4) integration with finite-time escape detection.

mod csv;

pub use csv::{read_csv, write_csv, CsvError};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::AbelEquation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub y_max: f64,
    pub max_steps: usize,
    pub dense_output: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            y_max: 1e7,
            max_steps: 10_000_000,
            dense_output: true,
        }
    }
}

impl SolveOptions {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.rel_tol.is_finite()
            && self.abs_tol.is_finite()
            && self.y_max > 1.0
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(SolveError::InvalidInput(format!("bad solver options {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status {
    Completed,
    BlowUp { t_escape: f64, direction: i8 },
    DomainError { t: f64, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    /// Steps taken at the minimum step size without error control.
    pub forced: usize,
    pub max_abs_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ts: Vec<f64>,
    pub ys: Vec<f64>,
    /// `y'` at each sample, kept for dense output.
    pub slopes: Option<Vec<f64>>,
    /// Fifth-order value at the midpoint of the step ending at each sample
    /// (`NaN` for the first sample and where unavailable).
    pub midpoints: Option<Vec<f64>>,
    pub status: Status,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("step budget of {steps} exhausted at t={t}")]
    MaxStepsExceeded { t: f64, steps: usize },
    #[error("more than {MAX_CONSECUTIVE_REJECTIONS} consecutive step rejections at t={t}")]
    TooManyRejections { t: f64 },
}

const MAX_CONSECUTIVE_REJECTIONS: usize = 10;

/// Per-step error target as a fraction of the user tolerance, so that the
/// accumulated error over many steps stays near `rel_tol` rather than a
/// multiple of it.
const LOCAL_FRACTION: f64 = 0.1;

impl Default for Trajectory {
    /// No samples; the status is meaningless until samples are added.
    fn default() -> Self {
        Self {
            ts: Vec::new(),
            ys: Vec::new(),
            slopes: None,
            midpoints: None,
            status: Status::Completed,
            stats: Stats::default(),
        }
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn is_completed(&self) -> bool {
        self.status == Status::Completed
    }

    pub fn t_start(&self) -> f64 {
        self.ts[0]
    }

    pub fn t_last(&self) -> f64 {
        self.ts[self.ts.len() - 1]
    }

    pub fn y_last(&self) -> f64 {
        self.ys[self.ys.len() - 1]
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ts.iter().copied().zip(self.ys.iter().copied())
    }

    /// Dense output: quartic through both ends, both slopes and the step
    /// midpoint; cubic Hermite without the midpoint, linear without slopes.
    /// `None` outside the sampled span.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let n = self.ts.len();
        if n == 0 || !(t >= self.ts[0] && t <= self.ts[n - 1]) {
            return None;
        }
        let i = self.ts.partition_point(|&x| x <= t);
        if i == 0 {
            return Some(self.ys[0]);
        }
        if i >= n {
            return Some(self.ys[n - 1]);
        }
        let (t0, t1) = (self.ts[i - 1], self.ts[i]);
        let (y0, y1) = (self.ys[i - 1], self.ys[i]);
        if t == t0 {
            return Some(y0);
        }
        let h = t1 - t0;
        let s = (t - t0) / h;
        let slopes = self
            .slopes
            .as_ref()
            .map(|k| (k[i - 1], k[i]))
            .filter(|(a, b)| a.is_finite() && b.is_finite());
        if !y1.is_finite() {
            return Some(y0);
        }
        let Some((f0, f1)) = slopes else {
            return Some(y0 + s * (y1 - y0));
        };
        let hermite = |s: f64| {
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * f0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * f1
        };
        let mid = self.midpoints.as_ref().map(|m| m[i]).filter(|m| m.is_finite());
        Some(match mid {
            // s^2 (1-s)^2 keeps both end values and slopes and is 1/16 at s = 1/2
            Some(ym) => hermite(s) + 16.0 * (ym - hermite(0.5)) * (s * (1.0 - s)).powi(2),
            None => hermite(s),
        })
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order minus embedded fourth-order weights
// weights giving the fifth-order solution at the midpoint of the step
const MID: [f64; 7] = [
    6025192743.0 / 30085553152.0 / 2.0,
    0.0,
    51252292925.0 / 65400821598.0 / 2.0,
    -2691868925.0 / 45128329728.0 / 2.0,
    187940372067.0 / 1594534317056.0 / 2.0,
    -1776094331.0 / 19743644256.0 / 2.0,
    11237099.0 / 235043384.0 / 2.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct StepResult {
    y: f64,
    err: f64,
    /// `f(t + h, y)`, reused as the first stage of the next step.
    slope: f64,
    mid: f64,
}

enum StepFailure {
    Domain(String),
}

fn f(eq: &AbelEquation, t: f64, y: f64) -> Result<f64, StepFailure> {
    eq.rhs(t, y).map_err(|e| StepFailure::Domain(e.to_string()))
}

fn dp_step(eq: &AbelEquation, t: f64, y: f64, k1: f64, h: f64) -> Result<StepResult, StepFailure> {
    let mut k = [0.0; 7];
    k[0] = k1;
    for s in 1..7 {
        let mut acc = 0.0;
        for (j, kj) in k.iter().enumerate().take(s) {
            acc += A[s][j] * kj;
        }
        let ts = if s == 6 { t + h } else { t + C[s] * h };
        k[s] = f(eq, ts, y + h * acc)?;
    }
    // row 6 of A holds the fifth-order weights (FSAL)
    let mut y_new = y;
    for j in 0..6 {
        y_new += h * A[6][j] * k[j];
    }
    let err: f64 = h * E.iter().zip(&k).map(|(e, kj)| e * kj).sum::<f64>();
    let mid = y + h * MID.iter().zip(&k).map(|(m, kj)| m * kj).sum::<f64>();
    Ok(StepResult {
        y: y_new,
        err,
        slope: k[6],
        mid,
    })
}

fn min_step(t: f64) -> f64 {
    16.0 * f64::EPSILON * t.abs().max(1.0)
}

fn initial_step(eq: &AbelEquation, t0: f64, y0: f64, f0: f64, span: f64, o: &SolveOptions) -> Result<f64, StepFailure> {
    let sc = LOCAL_FRACTION * (o.abs_tol + o.rel_tol * y0.abs());
    let d0 = y0.abs() / sc;
    let d1 = f0.abs() / sc;
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let f1 = f(eq, t0 + h0, y0 + h0 * f0)?;
    let d2 = ((f1 - f0) / sc).abs() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    let h = (100.0 * h0).min(h1).min(span);
    Ok(if h.is_finite() && h > 0.0 { h } else { span.min(1e-6) })
}

struct Run<'a> {
    eq: &'a AbelEquation,
    opts: SolveOptions,
    ts: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    midpoints: Vec<f64>,
    stats: Stats,
}

enum Outcome {
    Completed,
    Escape { t: f64, y: f64 },
    Domain { t: f64, message: String },
}

impl Run<'_> {
    fn push(&mut self, t: f64, y: f64, slope: f64, mid: f64) {
        self.ts.push(t);
        self.ys.push(y);
        self.slopes.push(slope);
        self.midpoints.push(mid);
        self.stats.max_abs_y = self.stats.max_abs_y.max(y.abs());
    }

    /// Smallest sub-step of `[t, t + h]` that still carries `|y|` past the
    /// threshold, found by bisection on the step size.
    fn bracket_escape(&self, t: f64, y: f64, k1: f64, h: f64) -> (f64, f64) {
        let width = 1e-6 * (1.0 + t.abs());
        let (mut lo, mut hi) = (0.0, h);
        let mut y_hi = f64::NAN;
        while hi - lo > width {
            let mid = 0.5 * (lo + hi);
            match dp_step(self.eq, t, y, k1, mid) {
                Ok(s) if s.y.is_finite() && s.y.abs() < self.opts.y_max => lo = mid,
                Ok(s) => {
                    hi = mid;
                    y_hi = s.y;
                }
                Err(_) => hi = mid,
            }
        }
        if y_hi.is_nan() {
            y_hi = dp_step(self.eq, t, y, k1, hi).map(|s| s.y).unwrap_or(f64::INFINITY * y.signum());
            if y_hi.is_nan() {
                y_hi = f64::INFINITY * y.signum();
            }
        }
        (t + hi, y_hi)
    }

    fn integrate(&mut self, t0: f64, y0: f64, t_end: f64) -> Result<Outcome, SolveError> {
        let eq = self.eq;
        let o = self.opts;
        let mut t = t0;
        let mut y = y0;
        let mut k1 = match f(eq, t, y) {
            Ok(v) => v,
            Err(StepFailure::Domain(message)) => return Ok(Outcome::Domain { t, message }),
        };
        self.push(t, y, k1, f64::NAN);
        let mut h = match initial_step(eq, t, y, k1, t_end - t, &o) {
            Ok(h) => h,
            Err(StepFailure::Domain(message)) => return Ok(Outcome::Domain { t, message }),
        };
        let mut streak = 0usize;
        let mut steps = 0usize;
        while t < t_end {
            if steps >= o.max_steps {
                return Err(SolveError::MaxStepsExceeded { t, steps });
            }
            let h_min = min_step(t);
            let remaining = t_end - t;
            // avoid leaving a sliver below the minimum step at the end
            if h >= remaining || remaining - h < h_min {
                h = remaining;
            }
            let forced = h <= h_min;
            if forced {
                h = h_min.min(remaining);
            }
            let step = match dp_step(eq, t, y, k1, h) {
                Ok(s) => s,
                Err(StepFailure::Domain(message)) => {
                    return Ok(Outcome::Domain { t, message });
                }
            };
            let scale = LOCAL_FRACTION * (o.abs_tol + o.rel_tol * y.abs().max(step.y.abs()));
            let err = (step.err / scale).abs();
            let finite = step.y.is_finite() && err.is_finite();
            if forced || (finite && err <= 1.0) {
                steps += 1;
                streak = 0;
                self.stats.accepted += 1;
                if forced {
                    self.stats.forced += 1;
                }
                let t_new = if h == remaining { t_end } else { t + h };
                if !step.y.is_finite() || step.y.abs() >= o.y_max {
                    let (te, ye) = self.bracket_escape(t, y, k1, h);
                    let te = te.min(t_new).max(t + f64::EPSILON * t.abs().max(1.0));
                    return Ok(Outcome::Escape { t: te, y: ye });
                }
                t = t_new;
                y = step.y;
                k1 = step.slope;
                self.push(t, y, k1, step.mid);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= factor;
            } else {
                self.stats.rejected += 1;
                streak += 1;
                if streak > MAX_CONSECUTIVE_REJECTIONS {
                    return Err(SolveError::TooManyRejections { t });
                }
                let factor = if finite { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.2 };
                h *= factor;
            }
        }
        Ok(Outcome::Completed)
    }

    fn finish(self, status: Status) -> Trajectory {
        Trajectory {
            ts: self.ts,
            ys: self.ys,
            slopes: self.opts.dense_output.then_some(self.slopes),
            midpoints: self.opts.dense_output.then_some(self.midpoints),
            status,
            stats: self.stats,
        }
    }
}

/// Integrates `y(t0) = y0` forward to `t_end`.
///
/// Coefficient domain errors end the run with [`Status::DomainError`] and the
/// samples gathered so far.
pub fn solve_ivp(
    eq: &AbelEquation,
    t0: f64,
    y0: f64,
    t_end: f64,
    opts: &SolveOptions,
) -> Result<Trajectory, SolveError> {
    solve_inner(eq, t0, y0, t_end, opts, true)
}

fn solve_inner(
    eq: &AbelEquation,
    t0: f64,
    y0: f64,
    t_end: f64,
    opts: &SolveOptions,
    confirm: bool,
) -> Result<Trajectory, SolveError> {
    opts.validate()?;
    if !(t0.is_finite() && t_end.is_finite() && t0 < t_end) {
        return Err(SolveError::InvalidInput(format!("need finite t0 < t_end, got {t0}, {t_end}")));
    }
    if !y0.is_finite() {
        return Err(SolveError::InvalidInput(format!("initial value {y0} is not finite")));
    }
    let mut run = Run {
        eq,
        opts: *opts,
        ts: Vec::new(),
        ys: Vec::new(),
        slopes: Vec::new(),
        midpoints: Vec::new(),
        stats: Stats::default(),
    };
    let (te, ye) = match run.integrate(t0, y0, t_end)? {
        Outcome::Completed => return Ok(run.finish(Status::Completed)),
        Outcome::Domain { t, message } => return Ok(run.finish(Status::DomainError { t, message })),
        Outcome::Escape { t, y } => (t, y),
    };
    let slope = eq.rhs(te, ye).unwrap_or(f64::NAN);
    run.push(te, ye, slope, f64::NAN);
    let direction = if ye >= 0.0 { 1 } else { -1 };
    let blow_up = Status::BlowUp { t_escape: te, direction };
    if !confirm || !ye.is_finite() || te >= t_end {
        return Ok(run.finish(blow_up));
    }

    // A large but finite excursion should survive a restart with a looser
    // threshold; a genuine escape recurs almost immediately.
    let mut loose = *opts;
    loose.y_max = opts.y_max * 10.0;
    loose.max_steps = opts.max_steps.saturating_sub(run.stats.accepted).max(1);
    let tail = match solve_inner(eq, te, ye, t_end, &loose, false) {
        Ok(tail) => tail,
        Err(SolveError::MaxStepsExceeded { .. }) | Err(SolveError::TooManyRejections { .. }) => {
            return Ok(run.finish(blow_up));
        }
        Err(e) => return Err(e),
    };
    let status = match &tail.status {
        Status::BlowUp { t_escape, .. } if *t_escape - te < 1e-6 => return Ok(run.finish(blow_up)),
        other => other.clone(),
    };
    run.stats.accepted += tail.stats.accepted;
    run.stats.rejected += tail.stats.rejected;
    run.stats.forced += tail.stats.forced;
    let tail_slopes = tail.slopes.unwrap_or_else(|| vec![f64::NAN; tail.ts.len()]);
    let tail_mids = tail.midpoints.unwrap_or_else(|| vec![f64::NAN; tail.ts.len()]);
    for i in 1..tail.ts.len() {
        run.push(tail.ts[i], tail.ys[i], tail_slopes[i], tail_mids[i]);
    }
    Ok(run.finish(status))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Displacement {
    /// `y_gamma(T) - gamma`
    Value { value: f64 },
    BlowUp { t_escape: f64 },
    DomainError { t: f64, message: String },
}

impl Displacement {
    pub fn value(&self) -> Option<f64> {
        match self {
            Displacement::Value { value } => Some(*value),
            _ => None,
        }
    }

    fn from_trajectory(tr: &Trajectory, gamma: f64) -> Self {
        match &tr.status {
            Status::Completed => Displacement::Value { value: tr.y_last() - gamma },
            Status::BlowUp { t_escape, .. } => Displacement::BlowUp { t_escape: *t_escape },
            Status::DomainError { t, message } => Displacement::DomainError {
                t: *t,
                message: message.clone(),
            },
        }
    }
}

/// `y_gamma(T) - gamma` together with the trajectory that produced it.
pub fn displacement_with_path(
    eq: &AbelEquation,
    t0: f64,
    t_end: f64,
    gamma: f64,
    opts: &SolveOptions,
) -> Result<(Displacement, Trajectory), SolveError> {
    let tr = solve_ivp(eq, t0, gamma, t_end, opts)?;
    Ok((Displacement::from_trajectory(&tr, gamma), tr))
}

pub fn displacement(
    eq: &AbelEquation,
    t0: f64,
    t_end: f64,
    gamma: f64,
    opts: &SolveOptions,
) -> Result<Displacement, SolveError> {
    displacement_with_path(eq, t0, t_end, gamma, opts).map(|(d, _)| d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub outcome: Displacement,
}

/// Displacement over a sorted grid of initial values, evaluated in parallel.
pub fn sweep(
    eq: &AbelEquation,
    t0: f64,
    t_end: f64,
    gammas: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<SweepPoint>, SolveError> {
    if gammas.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(SolveError::InvalidInput("sweep grid must be sorted".into()));
    }
    let mut lean = *opts;
    lean.dense_output = false;
    gammas
        .par_iter()
        .map(|&gamma| {
            displacement(eq, t0, t_end, gamma, &lean).map(|outcome| SweepPoint { gamma, outcome })
        })
        .collect()
}
