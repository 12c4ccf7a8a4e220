//! Certificates: the outcome of checking a theorem's hypotheses on a sample
//! grid, with the evidence gathered and the resulting envelope.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{Curve, Sampled};
use crate::expr::{EvalError, Expr};
use crate::integrate::{solve_ivp, SolveError, SolveOptions, Trajectory};
use crate::model::{AbelEquation, Interval};
use crate::quad::QuadOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    #[serde(rename = "Thm2.1")]
    Thm21,
    #[serde(rename = "Thm3.1")]
    Thm31,
    #[serde(rename = "Thm3.2")]
    Thm32,
    #[serde(rename = "Thm3.3")]
    Thm33,
    #[serde(rename = "Thm3.4")]
    Thm34,
    #[serde(rename = "Thm3.5")]
    Thm35,
    #[serde(rename = "Thm4.1")]
    Thm41,
    #[serde(rename = "Thm4.2")]
    Thm42,
    #[serde(rename = "Thm5.1")]
    Thm51,
    #[serde(rename = "Thm5.2")]
    Thm52,
    #[serde(rename = "Thm5.3")]
    Thm53,
    #[serde(rename = "Thm5.4")]
    Thm54,
    #[serde(rename = "Thm5.5")]
    Thm55,
    #[serde(rename = "Thm5.6")]
    Thm56,
    #[serde(rename = "Thm5.7")]
    Thm57,
    #[serde(rename = "Cor5.1")]
    Cor51,
    #[serde(rename = "Cor5.2")]
    Cor52,
}

impl TheoremId {
    pub const ALL: [TheoremId; 17] = [
        TheoremId::Thm21,
        TheoremId::Thm31,
        TheoremId::Thm32,
        TheoremId::Thm33,
        TheoremId::Thm34,
        TheoremId::Thm35,
        TheoremId::Thm41,
        TheoremId::Thm42,
        TheoremId::Thm51,
        TheoremId::Thm52,
        TheoremId::Thm53,
        TheoremId::Thm54,
        TheoremId::Thm55,
        TheoremId::Thm56,
        TheoremId::Thm57,
        TheoremId::Cor51,
        TheoremId::Cor52,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::Thm21 => "Thm2.1",
            TheoremId::Thm31 => "Thm3.1",
            TheoremId::Thm32 => "Thm3.2",
            TheoremId::Thm33 => "Thm3.3",
            TheoremId::Thm34 => "Thm3.4",
            TheoremId::Thm35 => "Thm3.5",
            TheoremId::Thm41 => "Thm4.1",
            TheoremId::Thm42 => "Thm4.2",
            TheoremId::Thm51 => "Thm5.1",
            TheoremId::Thm52 => "Thm5.2",
            TheoremId::Thm53 => "Thm5.3",
            TheoremId::Thm54 => "Thm5.4",
            TheoremId::Thm55 => "Thm5.5",
            TheoremId::Thm56 => "Thm5.6",
            TheoremId::Thm57 => "Thm5.7",
            TheoremId::Cor51 => "Cor5.1",
            TheoremId::Cor52 => "Cor5.2",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown theorem `{0}`")]
pub struct UnknownTheorem(pub String);

impl FromStr for TheoremId {
    type Err = UnknownTheorem;

    /// Accepts `3.1`, `Thm3.1`, `thm3.1`, `Cor5.1`, `cor5.1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (corollary, number) = if let Some(rest) = lower.strip_prefix("cor") {
            (true, rest)
        } else if let Some(rest) = lower.strip_prefix("thm") {
            (false, rest)
        } else {
            (false, lower.as_str())
        };
        let wanted = if corollary {
            format!("Cor{number}")
        } else {
            format!("Thm{number}")
        };
        TheoremId::ALL
            .into_iter()
            .find(|id| id.as_str() == wanted)
            .ok_or_else(|| UnknownTheorem(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum Verdict {
    Holds,
    Fails { hypothesis: String, t: f64, value: f64 },
    NotApplicable { reason: String },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub points_checked: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub worst_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub worst_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub passed: bool,
    pub evidence: Evidence,
}

/// Bounding curves as `[t, value]` samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: Option<Vec<[f64; 2]>>,
    pub upper: Option<Vec<[f64; 2]>>,
}

impl Envelope {
    /// Linear interpolation of a bound at `t`, `None` off its span.
    pub fn bound_at(samples: &[[f64; 2]], t: f64) -> Option<f64> {
        let n = samples.len();
        if n == 0 || t < samples[0][0] || t > samples[n - 1][0] {
            return None;
        }
        let i = samples.partition_point(|p| p[0] <= t);
        if i == 0 {
            return Some(samples[0][1]);
        }
        if i >= n {
            return Some(samples[n - 1][1]);
        }
        let ([t0, v0], [t1, v1]) = (samples[i - 1], samples[i]);
        Some(v0 + (t - t0) / (t1 - t0) * (v1 - v0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t0: f64,
    pub t1: f64,
    /// Uniform points per unit time.
    pub density: f64,
    pub chebyshev_points: usize,
    pub closed_right: bool,
    pub points: usize,
    /// Set when an unbounded interval was cut at a horizon.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truncated_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub density: f64,
    pub chebyshev_points: usize,
    /// Length at which unbounded intervals are cut.
    pub horizon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            density: 2048.0,
            chebyshev_points: 65,
            horizon: 100.0,
        }
    }
}

/// Sample grid for hypothesis checks: uniform points plus Chebyshev-Lobatto
/// points clustered at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct CertGrid {
    pub ts: Vec<f64>,
    pub spec: GridSpec,
}

impl CertGrid {
    pub fn build(interval: &Interval, cfg: &GridConfig) -> Self {
        let (iv, truncated_at) = if interval.is_bounded() {
            (*interval, None)
        } else {
            let cut = interval.truncated(cfg.horizon);
            (cut, Some(cut.t1))
        };
        let ts = grid_points(iv.t0, iv.t1, cfg);
        let spec = GridSpec {
            t0: iv.t0,
            t1: iv.t1,
            density: cfg.density,
            chebyshev_points: cfg.chebyshev_points,
            closed_right: iv.closed_right,
            points: ts.len(),
            truncated_at,
        };
        Self { ts, spec }
    }

    /// Points where hypotheses are checked: the right end only for closed
    /// intervals.
    pub fn checked(&self) -> &[f64] {
        if self.spec.closed_right {
            &self.ts
        } else {
            &self.ts[..self.ts.len() - 1]
        }
    }

    pub fn t0(&self) -> f64 {
        self.ts[0]
    }

    pub fn t1(&self) -> f64 {
        self.ts[self.ts.len() - 1]
    }
}

pub fn grid_points(t0: f64, t1: f64, cfg: &GridConfig) -> Vec<f64> {
    let len = t1 - t0;
    let n = ((len * cfg.density).ceil() as usize).max(16);
    let mut ts: Vec<f64> = (0..=n).map(|i| t0 + len * (i as f64 / n as f64)).collect();
    let m = cfg.chebyshev_points.saturating_sub(1);
    if m > 0 {
        for j in 0..=m {
            let x = 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / m as f64).cos());
            ts.push(t0 + len * x);
        }
    }
    ts.sort_by(f64::total_cmp);
    let eps = 1e-12 * len.max(1.0);
    let mut out: Vec<f64> = Vec::with_capacity(ts.len());
    for t in ts {
        let t = t.clamp(t0, t1);
        match out.last() {
            Some(&prev) if t - prev <= eps => {}
            _ => out.push(t),
        }
    }
    *out.last_mut().expect("grid has points") = t1;
    out
}

const MAX_ENVELOPE_SAMPLES: usize = 4097;

/// Keeps at most about 4097 evenly strided samples, always including the last.
pub fn thin(samples: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let n = samples.len();
    if n <= MAX_ENVELOPE_SAMPLES {
        return samples;
    }
    let stride = n.div_ceil(MAX_ENVELOPE_SAMPLES - 1);
    let mut out: Vec<[f64; 2]> = samples.iter().step_by(stride).copied().collect();
    if out.last() != samples.last() {
        out.push(samples[n - 1]);
    }
    out
}

pub fn sample_curve(curve: &dyn Curve, ts: &[f64]) -> Result<Vec<[f64; 2]>, EvalError> {
    ts.iter().map(|&t| Ok([t, curve.value(t)?])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub theorem: TheoremId,
    pub verdict: Verdict,
    pub hypotheses: Vec<Hypothesis>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub envelope: Option<Envelope>,
    pub grid_spec: GridSpec,
    /// Interval of initial values the conclusion covers.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub initial_values: Option<[f64; 2]>,
    /// A-priori bound on `|y|` (positive leading coefficient case).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bound: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.verdict.holds()
    }

    pub fn hypothesis(&self, name: &str) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.name == name)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        crate::io::to_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertifyError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("b²/a not locally integrable (numerical): {0}")]
    NotIntegrable(String),
    #[error("missing witness `{0}`")]
    MissingWitness(&'static str),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CertifyConfig {
    pub grid: GridConfig,
    pub quad: QuadOptions,
}

/// A function of `t` supplied as a witness.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Const(f64),
    Expr(Expr),
    /// A numerically integrated solution, evaluated by dense output.
    Path(Trajectory),
    Sampled(Sampled),
}

impl Curve for Witness {
    fn value(&self, t: f64) -> Result<f64, EvalError> {
        match self {
            Witness::Const(v) => Ok(*v),
            Witness::Expr(e) => e.eval(t),
            Witness::Path(tr) => tr.value_at(t).ok_or_else(|| {
                EvalError::new(crate::expr::EvalErrorKind::OutOfRange, format!("trajectory at t={t}"))
            }),
            Witness::Sampled(s) => s.value(t),
        }
    }

    fn derivative(&self, t: f64) -> Result<f64, EvalError> {
        match self {
            Witness::Const(_) => Ok(0.0),
            Witness::Expr(e) => e.derivative(t),
            Witness::Sampled(s) => s.derivative(t),
            Witness::Path(_) => {
                let h = crate::curve::fd_step(t);
                match (self.value(t + h), self.value(t - h)) {
                    (Ok(p), Ok(m)) => Ok((p - m) / (2.0 * h)),
                    (Ok(p), Err(_)) => Ok((p - self.value(t)?) / h),
                    (Err(_), Ok(m)) => Ok((self.value(t)? - m) / h),
                    (Err(e), Err(_)) => Err(e),
                }
            }
        }
    }

    fn as_constant(&self) -> Option<f64> {
        match self {
            Witness::Const(v) => Some(*v),
            Witness::Expr(e) => e.as_constant(),
            Witness::Sampled(s) => s.as_constant(),
            Witness::Path(_) => None,
        }
    }
}

impl From<f64> for Witness {
    fn from(v: f64) -> Self {
        Witness::Const(v)
    }
}

impl From<Expr> for Witness {
    fn from(e: Expr) -> Self {
        match e.as_constant() {
            Some(v) => Witness::Const(v),
            None => Witness::Expr(e),
        }
    }
}

/// A solution `y1` of a comparison equation `y' + a1 y^3 + b1 y^2 + c1 y + d1 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub equation: AbelEquation,
    pub solution: Witness,
}

impl ReferenceSolution {
    pub fn new(equation: AbelEquation, solution: impl Into<Witness>) -> Self {
        Self {
            equation,
            solution: solution.into(),
        }
    }

    /// Integrates the reference equation from `y0` across `[t0, t1]`; the
    /// solution must exist on the whole interval.
    pub fn integrated(
        equation: AbelEquation,
        y0: f64,
        t0: f64,
        t1: f64,
        opts: &SolveOptions,
    ) -> Result<Self, CertifyError> {
        let mut o = *opts;
        o.dense_output = true;
        let tr = solve_ivp(&equation, t0, y0, t1, &o)?;
        if !tr.is_completed() {
            return Err(CertifyError::Precondition(format!(
                "reference solution from y0={y0} does not reach t={t1}: {:?}",
                tr.status
            )));
        }
        Ok(Self {
            equation,
            solution: Witness::Path(tr),
        })
    }

    pub fn at(&self, t: f64) -> Result<f64, EvalError> {
        self.solution.value(t)
    }

    /// Checks that the witness solves its equation; integrated paths solve it
    /// by construction.
    pub fn verify(&self, ts: &[f64]) -> Result<Check, EvalError> {
        if let Witness::Path(tr) = &self.solution {
            let mut c = Check::trivial(ts.len());
            c.passed = tr.is_completed() && tr.t_start() <= ts[0] && tr.t_last() >= ts[ts.len() - 1];
            return Ok(c);
        }
        let max_a = max_abs(ts, |t| self.equation.a.eval(t))?;
        pointwise(ts, Sense::Within, |t| {
            let y = self.solution.value(t)?;
            let r = self.solution.derivative(t)? + self.equation.coefficients(t)?.cubic(y);
            Ok((r, residual_tolerance(y, max_a)))
        })
    }
}

/// `1e-9 (1 + |eta|^3 max|a|)`
pub fn residual_tolerance(eta: f64, max_abs_a: f64) -> f64 {
    1e-9 * (1.0 + eta.abs().powi(3) * max_abs_a)
}

/// `1e-10 (1 + |gamma|)`
pub fn certificate_tolerance(gamma: f64) -> f64 {
    1e-10 * (1.0 + gamma.abs())
}

pub(crate) fn max_abs<F>(ts: &[f64], f: F) -> Result<f64, EvalError>
where
    F: Fn(f64) -> Result<f64, EvalError> + Sync,
{
    ts.par_iter()
        .map(|&t| f(t).map(f64::abs))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Direction of a pointwise inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `value >= -tol`
    AtLeast,
    /// `value <= tol`
    AtMost,
    /// `|value| <= tol`
    Within,
}

/// Result of a pointwise check over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub passed: bool,
    pub points_checked: usize,
    /// Where the value came closest to (or furthest past) the bound.
    pub worst_t: f64,
    pub worst_value: f64,
    pub tolerance: f64,
    pub first_violation: Option<(f64, f64)>,
}

impl Check {
    pub fn trivial(points: usize) -> Self {
        Self {
            passed: true,
            points_checked: points,
            worst_t: f64::NAN,
            worst_value: f64::NAN,
            tolerance: 0.0,
            first_violation: None,
        }
    }

    pub fn failed_at(t: f64, value: f64) -> Self {
        Self {
            passed: false,
            points_checked: 1,
            worst_t: t,
            worst_value: value,
            tolerance: 0.0,
            first_violation: Some((t, value)),
        }
    }

    pub fn evidence(&self) -> Evidence {
        Evidence {
            points_checked: self.points_checked,
            worst_t: self.worst_t.is_finite().then_some(self.worst_t),
            worst_value: (!self.worst_value.is_nan()).then_some(self.worst_value),
            tolerance: (self.tolerance > 0.0).then_some(self.tolerance),
            note: None,
        }
    }
}

/// Evaluates `f(t) = (value, tol)` on every point and checks the inequality.
pub fn pointwise<F>(ts: &[f64], sense: Sense, f: F) -> Result<Check, EvalError>
where
    F: Fn(f64) -> Result<(f64, f64), EvalError> + Sync,
{
    let values: Vec<(f64, f64)> = ts.par_iter().map(|&t| f(t)).collect::<Result<_, _>>()?;
    Ok(fold_check(ts, &values, sense))
}

pub(crate) fn fold_check(ts: &[f64], values: &[(f64, f64)], sense: Sense) -> Check {
    let badness = |v: f64| match sense {
        Sense::AtLeast => -v,
        Sense::AtMost => v,
        Sense::Within => v.abs(),
    };
    let mut check = Check {
        passed: true,
        points_checked: ts.len(),
        worst_t: f64::NAN,
        worst_value: f64::NAN,
        tolerance: 0.0,
        first_violation: None,
    };
    let mut worst = f64::NEG_INFINITY;
    for (&t, &(v, tol)) in ts.iter().zip(values) {
        let b = if v.is_nan() { f64::INFINITY } else { badness(v) };
        if b > worst {
            worst = b;
            check.worst_t = t;
            check.worst_value = v;
            check.tolerance = tol;
        }
        if b > tol && check.first_violation.is_none() {
            check.passed = false;
            check.first_violation = Some((t, v));
        }
    }
    check
}

/// Accumulates hypotheses and settles the verdict. A failed applicability
/// requirement outranks a failed condition.
pub(crate) struct Builder {
    theorem: TheoremId,
    hypotheses: Vec<Hypothesis>,
    not_applicable: Option<String>,
    failure: Option<Verdict>,
    notes: Vec<String>,
    /// When set, hypothesis names get sequential `H1: `, `H2: ` prefixes.
    label: Option<usize>,
}

impl Builder {
    pub fn new(theorem: TheoremId) -> Self {
        Self {
            theorem,
            hypotheses: Vec::new(),
            not_applicable: None,
            failure: None,
            notes: Vec::new(),
            label: None,
        }
    }

    pub fn labelled(mut self) -> Self {
        self.label = Some(0);
        self
    }

    fn push(&mut self, name: &str, check: &Check, note: Option<String>) -> String {
        let mut evidence = check.evidence();
        evidence.note = note;
        let name = match &mut self.label {
            Some(n) => {
                *n += 1;
                format!("H{n}: {name}")
            }
            None => name.to_string(),
        };
        self.hypotheses.push(Hypothesis {
            name: name.clone(),
            passed: check.passed,
            evidence,
        });
        name
    }

    /// A hypothesis whose failure makes the theorem inapplicable.
    pub fn require(&mut self, name: &str, check: &Check) {
        let name = self.push(name, check, None);
        if !check.passed && self.not_applicable.is_none() {
            let (t, v) = check.first_violation.unwrap_or((check.worst_t, check.worst_value));
            self.not_applicable = Some(format!("{name} violated at t={t} (value {v:e})"));
        }
    }

    pub fn inapplicable(&mut self, name: &str, reason: &str, detail: String) {
        let reason = reason.to_string();
        let mut c = Check::trivial(0);
        c.passed = false;
        self.push(name, &c, Some(detail));
        if self.not_applicable.is_none() {
            self.not_applicable = Some(reason);
        }
    }

    /// A condition whose failure makes the verdict `Fails`.
    pub fn condition(&mut self, name: &str, check: &Check) {
        self.condition_with_note(name, check, None);
    }

    pub fn condition_with_note(&mut self, name: &str, check: &Check, note: Option<String>) {
        let name = self.push(name, check, note);
        if !check.passed && self.failure.is_none() {
            let (t, value) = check.first_violation.unwrap_or((check.worst_t, check.worst_value));
            self.failure = Some(Verdict::Fails {
                hypothesis: name,
                t,
                value,
            });
        }
    }

    /// A condition that could not be evaluated because an earlier one failed.
    pub fn skipped(&mut self, name: &str, why: &str) {
        let mut c = Check::trivial(0);
        c.passed = false;
        self.push(name, &c, Some(format!("not evaluated: {why}")));
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn verdict(&self) -> Verdict {
        if let Some(reason) = &self.not_applicable {
            Verdict::NotApplicable { reason: reason.clone() }
        } else if let Some(f) = &self.failure {
            f.clone()
        } else {
            Verdict::Holds
        }
    }

    pub fn finish(
        mut self,
        grid: &CertGrid,
        envelope: Option<Envelope>,
        initial_values: Option<[f64; 2]>,
        bound: Option<Vec<[f64; 2]>>,
    ) -> Certificate {
        let verdict = self.verdict();
        if let Some(h) = grid.spec.truncated_at {
            self.notes.push(format!("verified up to t={h}"));
        }
        self.notes.push(format!(
            "hypotheses checked on {} sample points (grid evidence, not proof)",
            grid.checked().len()
        ));
        let holds = verdict.holds();
        Certificate {
            theorem: self.theorem,
            verdict,
            hypotheses: self.hypotheses,
            envelope: if holds {
                envelope.map(|e| Envelope {
                    lower: e.lower.map(thin),
                    upper: e.upper.map(thin),
                })
            } else {
                None
            },
            grid_spec: grid.spec.clone(),
            initial_values: if holds { initial_values } else { None },
            bound: if holds { bound.map(thin) } else { None },
            notes: self.notes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem_ids_parse_and_print() {
        for id in TheoremId::ALL {
            assert_eq!(id.as_str().parse::<TheoremId>().unwrap(), id);
        }
        assert_eq!("3.1".parse::<TheoremId>().unwrap(), TheoremId::Thm31);
        assert_eq!("cor5.2".parse::<TheoremId>().unwrap(), TheoremId::Cor52);
        assert!("9.9".parse::<TheoremId>().is_err());
        assert!("cor3.1".parse::<TheoremId>().is_err());
    }

    #[test]
    fn grid_has_density_and_endpoints() {
        let iv = Interval::closed(0.0, 2.0).unwrap();
        let g = CertGrid::build(&iv, &GridConfig::default());
        assert_eq!(g.t0(), 0.0);
        assert_eq!(g.t1(), 2.0);
        assert!(g.ts.len() >= 4097);
        assert!(g.ts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.checked().len(), g.ts.len());
        let open = CertGrid::build(&Interval::new(0.0, 2.0, false).unwrap(), &GridConfig::default());
        assert_eq!(open.checked().len(), open.ts.len() - 1);
    }

    #[test]
    fn unbounded_interval_is_truncated() {
        let iv = Interval::new(0.0, f64::INFINITY, false).unwrap();
        let cfg = GridConfig {
            density: 8.0,
            chebyshev_points: 5,
            horizon: 10.0,
        };
        let g = CertGrid::build(&iv, &cfg);
        assert_eq!(g.spec.truncated_at, Some(10.0));
        assert_eq!(g.t1(), 10.0);
    }

    #[test]
    fn thinning_keeps_last_sample() {
        let s: Vec<[f64; 2]> = (0..10_000).map(|i| [i as f64, 0.0]).collect();
        let t = thin(s);
        assert!(t.len() <= MAX_ENVELOPE_SAMPLES + 1);
        assert_eq!(t.last().unwrap()[0], 9999.0);
    }

    #[test]
    fn fold_check_senses() {
        let ts = [0.0, 1.0, 2.0];
        let c = fold_check(&ts, &[(1.0, 0.1), (-0.05, 0.1), (-0.2, 0.1)], Sense::AtLeast);
        assert!(!c.passed);
        assert_eq!(c.first_violation, Some((2.0, -0.2)));
        let c = fold_check(&ts, &[(-1.0, 0.1), (0.05, 0.1), (-0.2, 0.1)], Sense::AtMost);
        assert!(c.passed);
        assert_eq!(c.worst_t, 1.0);
    }

    #[test]
    fn not_applicable_outranks_fails() {
        let iv = Interval::closed(0.0, 1.0).unwrap();
        let grid = CertGrid::build(&iv, &GridConfig { density: 4.0, chebyshev_points: 0, horizon: 1.0 });
        let mut b = Builder::new(TheoremId::Thm31);
        b.condition("K >= 0", &Check::failed_at(0.5, -1.0));
        b.require("a < 0", &Check::failed_at(0.1, 2.0));
        let cert = b.finish(&grid, Some(Envelope::default()), None, None);
        assert!(matches!(cert.verdict, Verdict::NotApplicable { .. }));
        assert!(cert.envelope.is_none());
    }

    #[test]
    fn certificate_json_round_trip() {
        let iv = Interval::closed(0.0, 1.0).unwrap();
        let grid = CertGrid::build(&iv, &GridConfig { density: 4.0, chebyshev_points: 0, horizon: 1.0 });
        let mut b = Builder::new(TheoremId::Thm35);
        b.condition("B1 >= 0", &Check::trivial(5));
        let env = Envelope {
            lower: Some(vec![[0.0, -1.0], [1.0, -1.0]]),
            upper: Some(vec![[0.0, 1.0], [1.0, 1.0]]),
        };
        let cert = b.finish(&grid, Some(env), Some([-1.0, 1.0]), None);
        let text = cert.to_json().unwrap();
        assert!(text.contains("\"theorem\": \"Thm3.5\""));
        assert!(text.contains("\"status\": \"Holds\""));
        let back: Certificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cert);
    }
}
