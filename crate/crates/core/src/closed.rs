//! Closed solutions (`y(t0) = y(T)`): certify an existence theorem to get a
//! bracket of initial values with opposite displacement signs, then bisect.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::certificate::{
    certificate_tolerance, grid_points, max_abs, pointwise, residual_tolerance, sample_curve, Builder,
    CertGrid, Certificate, CertifyConfig, CertifyError, Check, Envelope, ReferenceSolution, Sense,
    TheoremId, Witness,
};
use crate::compare::{
    check_defect, check_subsolution, check_supersolution, condition_functional, functional_condition,
    leading_sign, quad_failure, reference_condition, require_coverage, weight_rate, weighted_functional,
    Sign, WeightKind,
};
use crate::curve::Curve;
use crate::expr::EvalError;
use crate::integrate::{displacement_with_path, Displacement, SolveError, SolveOptions, Trajectory};
use crate::model::{AbelEquation, Interval};
use crate::quad::Cumulative;

/// Existence theorem used to produce the bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Thm51,
    Thm52,
    Thm53,
    Thm54,
    Thm55,
    Thm56,
    Thm57,
    Cor51,
    Cor52,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::Thm51,
        Strategy::Thm52,
        Strategy::Thm53,
        Strategy::Thm54,
        Strategy::Thm55,
        Strategy::Thm56,
        Strategy::Thm57,
        Strategy::Cor51,
        Strategy::Cor52,
    ];

    pub fn theorem(self) -> TheoremId {
        match self {
            Strategy::Thm51 => TheoremId::Thm51,
            Strategy::Thm52 => TheoremId::Thm52,
            Strategy::Thm53 => TheoremId::Thm53,
            Strategy::Thm54 => TheoremId::Thm54,
            Strategy::Thm55 => TheoremId::Thm55,
            Strategy::Thm56 => TheoremId::Thm56,
            Strategy::Thm57 => TheoremId::Thm57,
            Strategy::Cor51 => TheoremId::Cor51,
            Strategy::Cor52 => TheoremId::Cor52,
        }
    }

    pub fn from_theorem(id: TheoremId) -> Option<Self> {
        Strategy::ALL.into_iter().find(|s| s.theorem() == id)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.theorem().fmt(f)
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id: TheoremId = s.parse().map_err(|e: crate::certificate::UnknownTheorem| e.to_string())?;
        Strategy::from_theorem(id).ok_or_else(|| format!("{id} does not produce a closed-solution bracket"))
    }
}

/// Witnesses a strategy may need; which ones depends on the theorem.
#[derive(Debug, Clone, Default)]
pub struct ClosedWitnesses {
    pub eta: Option<Witness>,
    pub y1: Option<ReferenceSolution>,
    pub y2: Option<ReferenceSolution>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
}

/// Which endpoint has the nonnegative displacement `y(T) - y(t0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `P(lo) >= 0 >= P(hi)`
    Descending,
    /// `P(lo) <= 0 <= P(hi)`
    Ascending,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Descending => 1.0,
            Orientation::Ascending => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    /// `None` lets the search read it off the endpoint signs.
    pub orientation: Option<Orientation>,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64, orientation: Orientation) -> Self {
        Self {
            lo,
            hi,
            orientation: Some(orientation),
        }
    }

    pub fn unoriented(lo: f64, hi: f64) -> Self {
        Self { lo, hi, orientation: None }
    }
}

/// A closed-solution certificate and, when it holds, the bracket it yields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedCertificate {
    pub certificate: Certificate,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bracket: Option<Bracket>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClosedError {
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("{} does not hold: {:?}", .0.theorem, .0.verdict)]
    NotHolds(Box<Certificate>),
    #[error("bracket [{lo}, {hi}] invalid: {message}")]
    BracketInvalid {
        lo: f64,
        hi: f64,
        p_lo: Displacement,
        p_hi: Displacement,
        message: String,
    },
    #[error("solution from gamma={gamma} blows up at t={t_escape}")]
    BlowUpInsideBracket { gamma: f64, t_escape: f64 },
    #[error("solution from gamma={gamma} hit a domain error at t={t}: {message}")]
    DomainErrorInsideBracket { gamma: f64, t: f64, message: String },
    #[error("no closed solution within {iterations} iterations (bracket [{lo}, {hi}])")]
    MaxIterExceeded { iterations: usize, lo: f64, hi: f64 },
    #[error("bracket narrowed to {width:e} at gamma={gamma} with residual {residual:e} above tolerance")]
    Stalled { gamma: f64, width: f64, residual: f64 },
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

fn closed_grid(t0: f64, t1: f64, cfg: &CertifyConfig) -> Result<CertGrid, CertifyError> {
    let iv = Interval::closed(t0, t1).map_err(|e| CertifyError::Precondition(e.to_string()))?;
    Ok(CertGrid::build(&iv, &cfg.grid))
}

/// Quarter-weight integrals over `[t0, T]`: `Q(T)` and `S(T) = int e^Q |d|`.
fn quarter_integrals(eq: &AbelEquation, ts: &[f64], cfg: &CertifyConfig) -> Result<Cumulative, CertifyError> {
    let abs_d = |t: f64| -> Result<f64, EvalError> { Ok(eq.d.eval(t)?.abs()) };
    Cumulative::guarded(ts, &weight_rate(eq, WeightKind::Quarter), &abs_d, &cfg.quad).map_err(quad_failure)
}

fn upper_bound_from(cum: &Cumulative) -> Option<f64> {
    let n = cum.len() - 1;
    let q = cum.log_weight[n];
    if !(q > 0.0) {
        return None;
    }
    let s = cum.integral[n];
    let numerator = if s.mantissa == 0.0 { 0.0 } else { (s.ln_abs() - q).exp() };
    Some(numerator / -(-q).exp_m1())
}

/// `int_{t0}^{T} e^{-(Q(T)-Q(tau))} |d| dtau / (1 - e^{-Q(T)})` with
/// `Q = int (c - b^2/(4a))`: an initial value whose displacement is `<= 0`
/// when `a > 0` and `d <= 0`.
pub fn gamma_upper_bound(eq: &AbelEquation, t0: f64, t1: f64, cfg: &CertifyConfig) -> Result<f64, ClosedError> {
    let grid = closed_grid(t0, t1, cfg)?;
    let cum = match quarter_integrals(eq, &grid.ts, cfg) {
        Err(CertifyError::NotIntegrable(m)) => return Err(ClosedError::NotApplicable(m)),
        other => other?,
    };
    upper_bound_from(&cum).ok_or_else(|| {
        ClosedError::NotApplicable(format!(
            "int (c - b^2/(4a)) = {} is not positive",
            cum.log_weight[cum.len() - 1]
        ))
    })
}

fn at_least(t: f64, value: f64, tol: f64) -> Check {
    let mut c = Check::trivial(1);
    c.worst_t = t;
    c.worst_value = value;
    c.tolerance = tol;
    if value < -tol {
        c.passed = false;
        c.first_violation = Some((t, value));
    }
    c
}

fn witness<T>(w: &Option<T>, name: &'static str) -> Result<T, CertifyError>
where
    T: Clone,
{
    w.clone().ok_or(CertifyError::MissingWitness(name))
}

fn in_range(x: f64, lo: f64, hi: f64, what: &str) -> Result<(), CertifyError> {
    let slack = certificate_tolerance(x.abs().max(lo.abs()).max(hi.abs()));
    if x < lo - slack || x > hi + slack {
        return Err(CertifyError::Precondition(format!("{what}={x} must lie in [{lo}, {hi}]")));
    }
    Ok(())
}

/// Checks the strategy's hypotheses on `[t0, t1]`. A bracket is attached
/// only when the verdict holds; its endpoint signs are checked later by
/// integration.
pub fn certify_closed(
    eq: &AbelEquation,
    t0: f64,
    t1: f64,
    strategy: Strategy,
    w: &ClosedWitnesses,
    cfg: &CertifyConfig,
) -> Result<ClosedCertificate, CertifyError> {
    let grid = closed_grid(t0, t1, cfg)?;
    let id = strategy.theorem();
    let (certificate, bracket) = match strategy {
        Strategy::Thm51 | Strategy::Thm52 => positive_leading(eq, &grid, strategy, cfg)?,
        Strategy::Thm53 | Strategy::Thm54 => signed_eta(eq, &grid, strategy, &witness(&w.eta, "witnesses.eta")?, cfg)?,
        Strategy::Thm55 | Strategy::Thm56 => two_references(eq, &grid, strategy, w, cfg)?,
        Strategy::Thm57 => pointwise_references(eq, &grid, w)?,
        Strategy::Cor51 | Strategy::Cor52 => mirrored_reference(eq, &grid, strategy, w, cfg)?,
    };
    debug_assert_eq!(certificate.theorem, id);
    let bracket = if certificate.holds() { bracket } else { None };
    Ok(ClosedCertificate { certificate, bracket })
}

type Built = (Certificate, Option<Bracket>);

fn positive_leading(eq: &AbelEquation, grid: &CertGrid, strategy: Strategy, cfg: &CertifyConfig) -> Result<Built, CertifyError> {
    let nonneg = strategy == Strategy::Thm51;
    let mut b = Builder::new(strategy.theorem());
    let mut gamma0 = None;
    if leading_sign(&mut b, eq, grid, Sign::Positive, &cfg.quad)? {
        match quarter_integrals(eq, &grid.ts, cfg) {
            Ok(cum) => {
                let q = cum.log_weight[cum.len() - 1];
                b.condition("int (c - b^2/(4a)) > 0", &at_least(grid.t1(), q, 0.0).tap_strict(q));
                gamma0 = upper_bound_from(&cum);
            }
            Err(CertifyError::NotIntegrable(detail)) => {
                b.inapplicable("int (c - b^2/(4a)) > 0", crate::compare::NOT_INTEGRABLE, detail)
            }
            Err(e) => return Err(e),
        }
    } else {
        b.skipped("int (c - b^2/(4a)) > 0", "leading hypotheses fail");
    }
    let ts = grid.checked();
    let scale = max_abs(ts, |t| eq.d.eval(t))?;
    let tol = 1e-12 * (1.0 + scale);
    let (name, sense) = if nonneg { ("d <= 0", Sense::AtMost) } else { ("d >= 0", Sense::AtLeast) };
    b.condition(name, &pointwise(ts, sense, |t| Ok((eq.d.eval(t)?, tol)))?);
    let bracket = gamma0.map(|g| {
        if nonneg {
            Bracket::new(0.0, g, Orientation::Descending)
        } else {
            Bracket::new(-g, 0.0, Orientation::Descending)
        }
    });
    if let Some(g) = gamma0 {
        b.note(format!("gamma upper bound {g}"));
    }
    let init = bracket.map(|br| [br.lo, br.hi]);
    Ok((b.finish(grid, None, init, None), bracket))
}

trait Strict {
    fn tap_strict(self, value: f64) -> Self;
}

impl Strict for Check {
    /// Turns `>= 0` into `> 0`.
    fn tap_strict(mut self, value: f64) -> Self {
        if !(value > 0.0) {
            self.passed = false;
            self.first_violation = Some((self.worst_t, value));
        }
        self
    }
}

fn signed_eta(
    eq: &AbelEquation,
    grid: &CertGrid,
    strategy: Strategy,
    eta: &Witness,
    cfg: &CertifyConfig,
) -> Result<Built, CertifyError> {
    let upper = strategy == Strategy::Thm53;
    let mut b = Builder::new(strategy.theorem()).labelled();
    let (e0, e1) = (eta.value(grid.t0())?, eta.value(grid.t1())?);
    let sense = if upper { Sense::AtMost } else { Sense::AtLeast };
    let integral_name = if upper { "int_(t0)^t W d <= 0" } else { "int_(t0)^t W d >= 0" };

    b.require(Sign::Negative.hypothesis(), &crate::compare::check_sign_a(eq, grid.checked(), Sign::Negative)?);
    let integrable = crate::compare::integrable(&mut b, eq, grid, &cfg.quad)?;
    if integrable {
        let d = |t: f64| -> Result<f64, EvalError> { eq.d.eval(t) };
        let f = weighted_functional(eq, &grid.ts, WeightKind::Full, 0.0, d, &cfg.quad);
        functional_condition(&mut b, integral_name, f, grid, sense, e0)?;
    } else {
        b.skipped(integral_name, "weight integral unavailable");
    }

    let (eta_name, endpoints) = if upper {
        ("eta is a supersolution with eta(t0) >= eta(T) > 0", e0 >= e1 && e1 > 0.0)
    } else {
        ("eta is a subsolution with eta(t0) <= eta(T) < 0", e0 <= e1 && e1 < 0.0)
    };
    let check = if !endpoints {
        Check::failed_at(grid.t1(), e1)
    } else if upper {
        check_supersolution(eq, eta, grid.checked())?
    } else {
        check_subsolution(eq, eta, grid.checked())?
    };
    b.condition(eta_name, &check);

    let bracket = if upper {
        Bracket::new(0.0, e0, Orientation::Descending)
    } else {
        Bracket::new(e0, 0.0, Orientation::Descending)
    };
    let etas = sample_curve(eta, &grid.ts)?;
    let zeros: Vec<[f64; 2]> = grid.ts.iter().map(|&t| [t, 0.0]).collect();
    let env = if upper {
        Envelope { lower: Some(zeros), upper: Some(etas) }
    } else {
        Envelope { lower: Some(etas), upper: Some(zeros) }
    };
    Ok((b.finish(grid, Some(env), Some([bracket.lo, bracket.hi]), None), Some(bracket)))
}

fn relation(b: &mut Builder, name: &str, lhs: f64, rhs: f64, t: f64) {
    // lhs <= rhs
    b.condition(name, &at_least(t, rhs - lhs, certificate_tolerance(lhs.abs().max(rhs.abs()))));
}

fn two_references(
    eq: &AbelEquation,
    grid: &CertGrid,
    strategy: Strategy,
    w: &ClosedWitnesses,
    cfg: &CertifyConfig,
) -> Result<Built, CertifyError> {
    let y1 = witness(&w.y1, "witnesses.y1")?;
    let y2 = witness(&w.y2, "witnesses.y2")?;
    require_coverage(&y1, &grid.ts)?;
    require_coverage(&y2, &grid.ts)?;
    let (t0, t1) = (grid.t0(), grid.t1());
    let (a0, a1) = (y1.at(t0)?, y1.at(t1)?);
    let (b0, b1) = (y2.at(t0)?, y2.at(t1)?);
    let g1 = w.gamma1.unwrap_or(a0);
    in_range(g1, a0, b0, "gamma1")?;
    let g2 = w.gamma2.unwrap_or(b0);
    in_range(g2, g1, b0, "gamma2")?;

    let mut b = Builder::new(strategy.theorem());
    reference_condition(&mut b, "y1 solves its reference equation", &y1, grid)?;
    reference_condition(&mut b, "y2 solves its reference equation", &y2, grid)?;
    relation(&mut b, "y1(t0) <= y2(t0)", a0, b0, t0);
    let orientation = if strategy == Strategy::Thm55 {
        relation(&mut b, "y1(t0) <= y1(T)", a0, a1, t1);
        relation(&mut b, "y2(t0) >= y2(T)", b1, b0, t1);
        Orientation::Descending
    } else {
        relation(&mut b, "y1(t0) >= y1(T)", a1, a0, t1);
        relation(&mut b, "y2(t0) <= y2(T)", b0, b1, t1);
        Orientation::Ascending
    };
    if leading_sign(&mut b, eq, grid, Sign::Negative, &cfg.quad)? {
        let k1 = condition_functional(eq, &y1, g1, &grid.ts, WeightKind::Full, &cfg.quad);
        functional_condition(&mut b, "K1(t) >= 0", k1, grid, Sense::AtLeast, g1)?;
        let k2 = condition_functional(eq, &y2, g2, &grid.ts, WeightKind::Full, &cfg.quad);
        functional_condition(&mut b, "K2(t) <= 0", k2, grid, Sense::AtMost, g2)?;
    } else {
        b.skipped("K1(t) >= 0", "weight integral unavailable");
        b.skipped("K2(t) <= 0", "weight integral unavailable");
    }
    let env = Envelope {
        lower: Some(sample_curve(&y1.solution, &grid.ts)?),
        upper: Some(sample_curve(&y2.solution, &grid.ts)?),
    };
    let bracket = Bracket::new(a0, b0, orientation);
    Ok((b.finish(grid, Some(env), Some([a0, b0]), None), Some(bracket)))
}

fn pointwise_references(eq: &AbelEquation, grid: &CertGrid, w: &ClosedWitnesses) -> Result<Built, CertifyError> {
    let y1 = witness(&w.y1, "witnesses.y1")?;
    let y2 = witness(&w.y2, "witnesses.y2")?;
    require_coverage(&y1, &grid.ts)?;
    require_coverage(&y2, &grid.ts)?;
    let (t0, t1) = (grid.t0(), grid.t1());
    let (a0, a1) = (y1.at(t0)?, y1.at(t1)?);
    let (b0, b1) = (y2.at(t0)?, y2.at(t1)?);

    let mut b = Builder::new(TheoremId::Thm57);
    reference_condition(&mut b, "y1 solves its reference equation", &y1, grid)?;
    reference_condition(&mut b, "y2 solves its reference equation", &y2, grid)?;
    relation(&mut b, "y1(t0) <= y2(t0)", a0, b0, t0);
    let tol = certificate_tolerance(a0.abs().max(a1.abs()).max(b0.abs()).max(b1.abs()));
    let orientation = if a0 <= a1 + tol && b0 >= b1 - tol {
        Some(Orientation::Descending)
    } else if a0 >= a1 - tol && b0 <= b1 + tol {
        Some(Orientation::Ascending)
    } else {
        None
    };
    let mut rel = Check::trivial(1);
    if orientation.is_none() {
        rel = Check::failed_at(t1, a1 - a0);
    }
    b.condition("endpoint relations of y1 and y2", &rel);
    b.condition("B1 >= 0", &check_defect(eq, &y1, grid.checked(), Sense::AtLeast)?);
    b.condition("B2 <= 0", &check_defect(eq, &y2, grid.checked(), Sense::AtMost)?);
    let env = Envelope {
        lower: Some(sample_curve(&y1.solution, &grid.ts)?),
        upper: Some(sample_curve(&y2.solution, &grid.ts)?),
    };
    let bracket = orientation.map(|o| Bracket::new(a0, b0, o));
    Ok((b.finish(grid, Some(env), Some([a0, b0]), None), bracket))
}

/// The two conditions with `y2 = -y1`, exactly as displayed for the
/// corollaries:
/// `D1 = (a - a1) y1^3 - (b1 + b) y1^2 + (c - c1) y1 - d1 - d`,
/// `D2 = (a1 + a) y1^3 - (b1 + b) y1^2 + (c1 + c) y1 - d1 - d`.
fn mirrored_defects(eq: &AbelEquation, y1: &ReferenceSolution, t: f64) -> Result<(f64, f64), EvalError> {
    let y = y1.at(t)?;
    let k = eq.coefficients(t)?;
    let r = y1.equation.coefficients(t)?;
    let (y2, y3) = (y * y, y * y * y);
    let d1 = (k.a - r.a) * y3 - (r.b + k.b) * y2 + (k.c - r.c) * y - r.d - k.d;
    let d2 = (r.a + k.a) * y3 - (r.b + k.b) * y2 + (r.c + k.c) * y - r.d - k.d;
    Ok((d1, d2))
}

fn mirrored_reference(
    eq: &AbelEquation,
    grid: &CertGrid,
    strategy: Strategy,
    w: &ClosedWitnesses,
    cfg: &CertifyConfig,
) -> Result<Built, CertifyError> {
    let y1 = witness(&w.y1, "witnesses.y1")?;
    require_coverage(&y1, &grid.ts)?;
    let (t0, t1) = (grid.t0(), grid.t1());
    let (a0, a1) = (y1.at(t0)?, y1.at(t1)?);
    let mut b = Builder::new(strategy.theorem());
    reference_condition(&mut b, "y1 solves its reference equation", &y1, grid)?;
    b.condition("y1(t0) <= 0", &at_least(t0, -a0, certificate_tolerance(a0)));

    let names = ["first mirrored condition >= 0", "second mirrored condition <= 0"];
    if strategy == Strategy::Cor51 {
        let g1 = w.gamma1.unwrap_or(a0);
        let g2 = w.gamma2.unwrap_or(-a0);
        in_range(g1, a0, -a0, "gamma1")?;
        in_range(g2, a0, -a0, "gamma2")?;
        if leading_sign(&mut b, eq, grid, Sign::Negative, &cfg.quad)? {
            let first = |t: f64| mirrored_defects(eq, &y1, t).map(|d| d.0);
            let second = |t: f64| mirrored_defects(eq, &y1, t).map(|d| d.1);
            let k1 = weighted_functional(eq, &grid.ts, WeightKind::Full, g1 - a0, first, &cfg.quad);
            functional_condition(&mut b, names[0], k1, grid, Sense::AtLeast, g1)?;
            let k2 = weighted_functional(eq, &grid.ts, WeightKind::Full, g2 + a0, second, &cfg.quad);
            functional_condition(&mut b, names[1], k2, grid, Sense::AtMost, g2)?;
        } else {
            b.skipped(names[0], "weight integral unavailable");
            b.skipped(names[1], "weight integral unavailable");
        }
    } else {
        let ts = grid.checked();
        let max_a = max_abs(ts, |t| Ok(eq.a.eval(t)?.abs().max(y1.equation.a.eval(t)?.abs())))?;
        let tol_at = |t: f64| -> Result<f64, EvalError> { Ok(residual_tolerance(y1.at(t)?, max_a)) };
        let c1 = pointwise(ts, Sense::AtLeast, |t| Ok((mirrored_defects(eq, &y1, t)?.0, tol_at(t)?)))?;
        let c2 = pointwise(ts, Sense::AtMost, |t| Ok((mirrored_defects(eq, &y1, t)?.1, tol_at(t)?)))?;
        b.condition(names[0], &c1);
        b.condition(names[1], &c2);
    }
    let orientation = if a0 <= a1 {
        b.note("case y1(t0) <= y1(T): descending bracket");
        Orientation::Descending
    } else {
        b.note("case y1(t0) > y1(T): ascending bracket");
        Orientation::Ascending
    };
    let lower = sample_curve(&y1.solution, &grid.ts)?;
    let upper = lower.iter().map(|&[t, v]| [t, -v]).collect();
    let env = Envelope { lower: Some(lower), upper: Some(upper) };
    let bracket = Bracket::new(a0, -a0, orientation);
    Ok((b.finish(grid, Some(env), Some([a0, -a0]), None), Some(bracket)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FindOptions {
    pub tol_closed: f64,
    pub tol_gamma: f64,
    pub max_iter: usize,
    pub solve: SolveOptions,
}

impl Default for FindOptions {
    fn default() -> Self {
        Self {
            tol_closed: 1e-8,
            tol_gamma: 1e-12,
            max_iter: 200,
            solve: SolveOptions::default(),
        }
    }
}

/// One bracket `[xi, eta]` of the bisection with its endpoint displacements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketStep {
    pub xi: f64,
    pub eta: f64,
    /// Exactly `(eta_1 - xi_1) / 2^(n-1)`.
    pub width: f64,
    pub p_xi: f64,
    pub p_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedSolutionResult {
    pub gamma_star: f64,
    /// `|y(T) - gamma_star|`
    pub residual: f64,
    pub iterations: usize,
    pub orientation: Orientation,
    pub bracket_history: Vec<BracketStep>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<Certificate>,
    /// Written separately as CSV.
    #[serde(skip)]
    pub trajectory: Trajectory,
}

impl ClosedSolutionResult {
    pub fn to_json(&self) -> serde_json::Result<String> {
        crate::io::to_json(self)
    }
}

fn evaluate(eq: &AbelEquation, t0: f64, t1: f64, gamma: f64, opts: &SolveOptions) -> Result<(Displacement, Trajectory), ClosedError> {
    Ok(displacement_with_path(eq, t0, t1, gamma, opts)?)
}

/// Bisection on the initial value: the midpoint replaces the endpoint whose
/// displacement has the same sign. Stops when `|P| <= tol_closed`.
pub fn find_closed(eq: &AbelEquation, t0: f64, t1: f64, bracket: &Bracket, opts: &FindOptions) -> Result<ClosedSolutionResult, ClosedError> {
    let (lo, hi) = (bracket.lo, bracket.hi);
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(ClosedError::BracketInvalid {
            lo,
            hi,
            p_lo: Displacement::Value { value: f64::NAN },
            p_hi: Displacement::Value { value: f64::NAN },
            message: "need finite lo <= hi".into(),
        });
    }
    let mut solve = opts.solve;
    solve.dense_output = true;
    let (d_lo, tr_lo) = evaluate(eq, t0, t1, lo, &solve)?;
    let (d_hi, tr_hi) = if hi == lo { (d_lo.clone(), tr_lo.clone()) } else { evaluate(eq, t0, t1, hi, &solve)? };
    let invalid = |message: String| ClosedError::BracketInvalid {
        lo,
        hi,
        p_lo: d_lo.clone(),
        p_hi: d_hi.clone(),
        message,
    };
    let (Some(p_lo), Some(p_hi)) = (d_lo.value(), d_hi.value()) else {
        return Err(invalid("an endpoint solution does not reach T".into()));
    };

    let tol_lo = certificate_tolerance(lo);
    let tol_hi = certificate_tolerance(hi);
    let descending = p_lo >= -tol_lo && p_hi <= tol_hi;
    let ascending = p_lo <= tol_lo && p_hi >= -tol_hi;
    let orientation = match bracket.orientation {
        Some(Orientation::Descending) if descending => Orientation::Descending,
        Some(Orientation::Ascending) if ascending => Orientation::Ascending,
        Some(o) => {
            return Err(invalid(format!(
                "endpoint displacements {p_lo:e}, {p_hi:e} contradict the {o:?} orientation"
            )))
        }
        None if descending => Orientation::Descending,
        None if ascending => Orientation::Ascending,
        None => return Err(invalid(format!("endpoint displacements {p_lo:e}, {p_hi:e} have the same sign"))),
    };

    let width0 = hi - lo;
    let mut history = vec![BracketStep {
        xi: lo,
        eta: hi,
        width: width0,
        p_xi: p_lo,
        p_eta: p_hi,
    }];
    if width0 == 0.0 {
        if p_lo.abs() <= opts.tol_closed {
            return Ok(ClosedSolutionResult {
                gamma_star: lo,
                residual: p_lo.abs(),
                iterations: 0,
                orientation,
                bracket_history: history,
                certificate: None,
                trajectory: tr_lo,
            });
        }
        return Err(invalid(format!("degenerate bracket with displacement {p_lo:e}")));
    }
    drop(tr_hi);

    // Work in u in [0, 1] so bracket widths are exact powers of two times width0.
    let (mut u_lo, mut u_hi) = (0.0_f64, 1.0_f64);
    let (mut p_xi, mut p_eta) = (p_lo, p_hi);
    let s = orientation.sign();
    for iteration in 1..=opts.max_iter {
        let u = 0.5 * (u_lo + u_hi);
        let gamma = lo + u * width0;
        let (d, tr) = evaluate(eq, t0, t1, gamma, &solve)?;
        let p = match d {
            Displacement::Value { value } => value,
            Displacement::BlowUp { t_escape } => return Err(ClosedError::BlowUpInsideBracket { gamma, t_escape }),
            Displacement::DomainError { t, message } => {
                return Err(ClosedError::DomainErrorInsideBracket { gamma, t, message })
            }
        };
        if p.abs() <= opts.tol_closed {
            return Ok(ClosedSolutionResult {
                gamma_star: gamma,
                residual: p.abs(),
                iterations: iteration,
                orientation,
                bracket_history: history,
                certificate: None,
                trajectory: tr,
            });
        }
        // Descending: P <= 0 moves the upper end (the proof's weak inequality).
        if s * p <= 0.0 {
            u_hi = u;
            p_eta = p;
        } else {
            u_lo = u;
            p_xi = p;
        }
        let width = width0 * (u_hi - u_lo);
        history.push(BracketStep {
            xi: lo + u_lo * width0,
            eta: lo + u_hi * width0,
            width,
            p_xi,
            p_eta,
        });
        if width <= opts.tol_gamma {
            return Err(ClosedError::Stalled {
                gamma,
                width,
                residual: p.abs(),
            });
        }
    }
    Err(ClosedError::MaxIterExceeded {
        iterations: opts.max_iter,
        lo: lo + u_lo * width0,
        hi: lo + u_hi * width0,
    })
}

/// Certifies `strategy`, then bisects inside the bracket it yields.
pub fn solve_closed(
    eq: &AbelEquation,
    t0: f64,
    t1: f64,
    strategy: Strategy,
    w: &ClosedWitnesses,
    cfg: &CertifyConfig,
    opts: &FindOptions,
) -> Result<ClosedSolutionResult, ClosedError> {
    let cc = certify_closed(eq, t0, t1, strategy, w, cfg)?;
    let Some(bracket) = cc.bracket.filter(|_| cc.certificate.holds()) else {
        return Err(ClosedError::NotHolds(Box::new(cc.certificate)));
    };
    let mut result = find_closed(eq, t0, t1, &bracket, opts)?;
    result.certificate = Some(cc.certificate);
    Ok(result)
}

/// Samples `coefficient(t + period) == coefficient(t)` on a grid.
pub fn is_periodic(eq: &AbelEquation, t0: f64, period: f64, samples: usize) -> Result<bool, EvalError> {
    let cfg = crate::certificate::GridConfig {
        density: samples as f64 / period,
        chebyshev_points: 0,
        horizon: period,
    };
    for t in grid_points(t0, t0 + period, &cfg) {
        let (k0, k1) = (eq.coefficients(t)?, eq.coefficients(t + period)?);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()));
        if !(close(k0.a, k1.a) && close(k0.b, k1.b) && close(k0.c, k1.c) && close(k0.d, k1.d)) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::{GridConfig, Verdict};
    use std::f64::consts::PI;

    fn cfg() -> CertifyConfig {
        CertifyConfig {
            grid: GridConfig {
                density: 256.0,
                chebyshev_points: 33,
                horizon: 100.0,
            },
            ..Default::default()
        }
    }

    fn eq(a: &str, b: &str, c: &str, d: &str) -> AbelEquation {
        AbelEquation::parse(a, b, c, d).unwrap()
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("5.1".parse::<Strategy>().unwrap(), Strategy::Thm51);
        assert_eq!("cor5.2".parse::<Strategy>().unwrap(), Strategy::Cor52);
        assert!("3.1".parse::<Strategy>().is_err());
    }

    #[test]
    fn upper_bound_closed_form() {
        // Q(T) = pi and S(T) = int_0^pi e^t sin^2 t = 0.4 (e^pi - 1)
        let e = eq("1", "0", "1", "-sin(t)^2");
        let g = gamma_upper_bound(&e, 0.0, PI, &cfg()).unwrap();
        assert!((g - 0.4).abs() < 1e-10, "{g}");
        let zero = gamma_upper_bound(&eq("1", "0", "1", "0"), 0.0, PI, &cfg()).unwrap();
        assert_eq!(zero, 0.0);
        let bad = gamma_upper_bound(&eq("1", "4", "1", "-1"), 0.0, PI, &cfg());
        assert!(matches!(bad, Err(ClosedError::NotApplicable(_))));
    }

    #[test]
    fn thm51_bracket_and_bisection() {
        let e = eq("1", "0", "1", "-sin(t)^2");
        let cc = certify_closed(&e, 0.0, PI, Strategy::Thm51, &ClosedWitnesses::default(), &cfg()).unwrap();
        assert!(cc.certificate.holds(), "{:?}", cc.certificate.verdict);
        let br = cc.bracket.unwrap();
        assert_eq!(br.lo, 0.0);
        let r = find_closed(&e, 0.0, PI, &br, &FindOptions::default()).unwrap();
        assert!(r.residual <= 1e-8);
        assert!(r.gamma_star >= 0.0);
        for (n, step) in r.bracket_history.iter().enumerate() {
            assert_eq!(step.width, br.hi / 2f64.powi(n as i32));
            assert!(step.p_xi >= -1e-10 && step.p_eta <= 1e-10);
        }
    }

    #[test]
    fn thm52_nonpositive() {
        let e = eq("1", "0", "1", "sin(t)^2");
        let r = solve_closed(&e, 0.0, PI, Strategy::Thm52, &ClosedWitnesses::default(), &cfg(), &FindOptions::default())
            .unwrap();
        assert!(r.gamma_star <= 0.0 && r.residual <= 1e-8);
        assert_eq!(r.certificate.unwrap().theorem, TheoremId::Thm52);
    }

    #[test]
    fn thm51_fails_on_positive_forcing() {
        let e = eq("1", "0", "1", "sin(t)");
        let cc = certify_closed(&e, 0.0, PI, Strategy::Thm51, &ClosedWitnesses::default(), &cfg()).unwrap();
        assert!(matches!(cc.certificate.verdict, Verdict::Fails { ref hypothesis, .. } if hypothesis == "d <= 0"));
        assert!(cc.bracket.is_none());
    }

    #[test]
    fn equilibrium_inside_unoriented_bracket() {
        let e = eq("-1", "0", "1", "0");
        let r = find_closed(&e, 0.0, 1.0, &Bracket::unoriented(-0.5, 0.5), &FindOptions::default()).unwrap();
        assert_eq!(r.gamma_star, 0.0);
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn thm53_with_constant_eta() {
        let lambda = 2.0 * 3f64.sqrt() / 9.0;
        let e = eq("-1", "0", "1", &format!("-{lambda}*sin(t)^2"));
        let w = ClosedWitnesses {
            eta: Some(Witness::Const(3f64.sqrt() / 3.0)),
            ..Default::default()
        };
        let r = solve_closed(&e, 0.0, PI, Strategy::Thm53, &w, &cfg(), &FindOptions::default()).unwrap();
        assert!((0.0..=3f64.sqrt() / 3.0).contains(&r.gamma_star));
        let cert = r.certificate.unwrap();
        assert!(cert.hypotheses.iter().all(|h| h.name.starts_with('H')), "{:?}", cert.hypotheses);
        let missing = certify_closed(&e, 0.0, PI, Strategy::Thm53, &ClosedWitnesses::default(), &cfg());
        assert_eq!(missing.unwrap_err(), CertifyError::MissingWitness("witnesses.eta"));
    }

    #[test]
    fn blow_up_endpoint_is_bracket_invalid() {
        // Both displays hold, but y = 1 escapes upward.
        let e = eq("-1", "0", "-1", "-2.5+0.3*sin(t)");
        let reference = ReferenceSolution::new(eq("1", "5", "5", "1"), -1.0);
        let w = ClosedWitnesses {
            y1: Some(reference),
            ..Default::default()
        };
        let cc = certify_closed(&e, 0.0, 2.0 * PI, Strategy::Cor52, &w, &cfg()).unwrap();
        assert!(cc.certificate.holds(), "{:?}", cc.certificate.verdict);
        let err = find_closed(&e, 0.0, 2.0 * PI, &cc.bracket.unwrap(), &FindOptions::default()).unwrap_err();
        assert!(matches!(err, ClosedError::BracketInvalid { .. }), "{err:?}");
    }

    #[test]
    fn corollary_example_converges() {
        let e = eq("-1", "0", "1.5+0.5*sin(t)", "-0.5-0.5*sin(t)");
        let reference = ReferenceSolution::new(eq("1", "5", "5", "1"), -1.0);
        let w = ClosedWitnesses {
            y1: Some(reference),
            ..Default::default()
        };
        let r = solve_closed(&e, 0.0, 2.0 * PI, Strategy::Cor52, &w, &cfg(), &FindOptions::default()).unwrap();
        assert!(r.residual <= 1e-8);
        assert!((-1.0..=1.0).contains(&r.gamma_star));
    }

    #[test]
    fn periodicity_detection() {
        assert!(is_periodic(&eq("1", "0", "1", "-sin(t)^2"), 0.0, PI, 64).unwrap());
        assert!(!is_periodic(&eq("1", "0", "t", "0"), 0.0, PI, 64).unwrap());
    }
}
