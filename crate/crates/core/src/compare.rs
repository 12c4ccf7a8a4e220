//! Comparison of solutions on an interval: super/subsolution checks, the
//! weighted condition functional, and certificates for two-sided envelopes.

use serde::{Deserialize, Serialize};

use crate::certificate::{
    certificate_tolerance, fold_check, max_abs, pointwise, residual_tolerance, sample_curve, Builder,
    CertGrid, Certificate, CertifyConfig, CertifyError, Check, Envelope, ReferenceSolution, Sense,
    TheoremId, Witness,
};
use crate::curve::Curve;
use crate::expr::EvalError;
use crate::model::{AbelEquation, Interval};
use crate::quad::{ratio, Cumulative, QuadError, QuadOptions};

/// Reason given when the `b^2/a` quadrature guard trips.
pub const NOT_INTEGRABLE: &str = "b²/a not locally integrable (numerical)";

fn solution_check(eq: &AbelEquation, eta: &dyn Curve, ts: &[f64], sense: Sense) -> Result<Check, EvalError> {
    let max_a = max_abs(ts, |t| eq.a.eval(t))?;
    pointwise(ts, sense, |t| {
        let y = eta.value(t)?;
        let r = eta.derivative(t)? + eq.coefficients(t)?.cubic(y);
        Ok((r, residual_tolerance(y, max_a)))
    })
}

/// `eta' + P(t, eta) >= -tol` on every point.
pub fn check_supersolution(eq: &AbelEquation, eta: &dyn Curve, ts: &[f64]) -> Result<Check, EvalError> {
    solution_check(eq, eta, ts, Sense::AtLeast)
}

/// `eta' + P(t, eta) <= tol` on every point.
pub fn check_subsolution(eq: &AbelEquation, eta: &dyn Curve, ts: &[f64]) -> Result<Check, EvalError> {
    solution_check(eq, eta, ts, Sense::AtMost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Negative,
    Positive,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Positive => 1.0,
        }
    }

    pub(crate) fn hypothesis(self) -> &'static str {
        match self {
            Sign::Negative => "a < 0 a.e.",
            Sign::Positive => "a > 0 a.e.",
        }
    }
}

/// Sign of `a` almost everywhere: wrong-signed values beyond a relative
/// tolerance fail, and so do two neighbouring points where `a` vanishes.
pub fn check_sign_a(eq: &AbelEquation, ts: &[f64], sign: Sign) -> Result<Check, EvalError> {
    let s = sign.factor();
    let values: Vec<f64> = ts.iter().map(|&t| eq.a.eval(t).map(|a| s * a)).collect::<Result<_, _>>()?;
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tiny = 1e-12 * scale;
    let paired: Vec<(f64, f64)> = values.iter().map(|&v| (v, tiny)).collect();
    let mut check = fold_check(ts, &paired, Sense::AtLeast);
    if scale == 0.0 {
        check.passed = false;
        check.first_violation = Some((ts[0], 0.0));
        return Ok(check);
    }
    if let Some(i) = (1..values.len()).find(|&i| values[i - 1].abs() <= tiny && values[i].abs() <= tiny) {
        let t = ts[i - 1];
        let earlier = check.first_violation.is_none_or(|(tv, _)| t < tv);
        check.passed = false;
        if earlier {
            check.first_violation = Some((t, s * values[i - 1]));
        }
    }
    Ok(check)
}

/// Weight exponent: `c - b^2/a` (full) or `c - b^2/(4a)` (quarter).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Full,
    Quarter,
}

impl WeightKind {
    fn divisor(self) -> f64 {
        match self {
            WeightKind::Full => 1.0,
            WeightKind::Quarter => 4.0,
        }
    }
}

pub(crate) fn weight_rate(eq: &AbelEquation, kind: WeightKind) -> impl Fn(f64) -> Result<f64, EvalError> + Sync + '_ {
    let div = kind.divisor();
    move |t| {
        let k = eq.coefficients(t)?;
        Ok(k.c - ratio(k.b, k.a) / div)
    }
}

pub(crate) fn quad_failure(e: QuadError) -> CertifyError {
    match e {
        QuadError::Eval(e) => CertifyError::Eval(e),
        other => CertifyError::NotIntegrable(other.to_string()),
    }
}

/// `int_{t0}^{t} b^2/a` with the refinement guard.
pub fn check_integrability(eq: &AbelEquation, ts: &[f64], quad: &QuadOptions) -> Result<Cumulative, CertifyError> {
    let rate = |t: f64| -> Result<f64, EvalError> {
        let k = eq.coefficients(t)?;
        Ok(ratio(k.b, k.a))
    };
    Cumulative::guarded(ts, &rate, &|_| Ok(0.0), quad).map_err(quad_failure)
}

/// `offset + int_{t0}^{t} W f` with `W = exp(int weight rate)`, sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionFunctional {
    pub offset: f64,
    pub cumulative: Cumulative,
}

impl ConditionFunctional {
    pub fn value(&self, k: usize) -> f64 {
        self.cumulative.shifted(k, self.offset, 1.0)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.cumulative.len()).map(|k| self.value(k)).collect()
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.cumulative.weight(k)
    }

    pub fn grid(&self) -> &[f64] {
        &self.cumulative.grid
    }

    /// Same integral, different additive constant.
    pub fn with_offset(&self, offset: f64) -> Self {
        Self {
            offset,
            cumulative: self.cumulative.clone(),
        }
    }

    /// Checks `value >= -tol` (`AtLeast`) or `value <= tol` (`AtMost`) on
    /// the first `n` grid points.
    pub fn check(&self, n: usize, sense: Sense, tol: f64) -> Check {
        let ts = &self.cumulative.grid[..n];
        let values: Vec<(f64, f64)> = (0..n).map(|k| (self.value(k), tol)).collect();
        fold_check(ts, &values, sense)
    }
}

pub(crate) fn weighted_functional<F>(
    eq: &AbelEquation,
    ts: &[f64],
    kind: WeightKind,
    offset: f64,
    f: F,
    quad: &QuadOptions,
) -> Result<ConditionFunctional, CertifyError>
where
    F: Fn(f64) -> Result<f64, EvalError> + Sync,
{
    let cumulative = Cumulative::guarded(ts, &weight_rate(eq, kind), &f, quad).map_err(quad_failure)?;
    Ok(ConditionFunctional { offset, cumulative })
}

/// `K(t) = gamma - y1(t0) + int_{t0}^{t} W B1` where
/// `B1 = (a1-a) y1^3 + (b1-b) y1^2 + (c1-c) y1 + d1 - d`.
pub fn condition_functional(
    eq: &AbelEquation,
    reference: &ReferenceSolution,
    gamma: f64,
    ts: &[f64],
    kind: WeightKind,
    quad: &QuadOptions,
) -> Result<ConditionFunctional, CertifyError> {
    require_coverage(reference, ts)?;
    let y1_t0 = reference.at(ts[0])?;
    weighted_functional(eq, ts, kind, gamma - y1_t0, |t| defect(eq, reference, t), quad)
}

/// `P1(t, y1) - P(t, y1)`: how far `y1` is from solving the main equation.
pub(crate) fn defect(eq: &AbelEquation, reference: &ReferenceSolution, t: f64) -> Result<f64, EvalError> {
    let y = reference.at(t)?;
    Ok(reference.equation.coefficients(t)?.cubic(y) - eq.coefficients(t)?.cubic(y))
}

pub(crate) fn require_coverage(reference: &ReferenceSolution, ts: &[f64]) -> Result<(), CertifyError> {
    if let Witness::Path(tr) = &reference.solution {
        let (a, b) = (ts[0], ts[ts.len() - 1]);
        if !tr.is_completed() || tr.t_start() > a || tr.t_last() < b {
            return Err(CertifyError::Precondition(format!(
                "reference trajectory must be completed over [{a}, {b}]"
            )));
        }
    }
    Ok(())
}

/// Pointwise sign of the defect `B1` with a residual-style tolerance.
pub fn check_defect(
    eq: &AbelEquation,
    reference: &ReferenceSolution,
    ts: &[f64],
    sense: Sense,
) -> Result<Check, CertifyError> {
    require_coverage(reference, ts)?;
    let max_a = max_abs(ts, |t| Ok(eq.a.eval(t)?.abs().max(reference.equation.a.eval(t)?.abs())))?;
    Ok(pointwise(ts, sense, |t| {
        let y = reference.at(t)?;
        Ok((defect(eq, reference, t)?, residual_tolerance(y, max_a)))
    })?)
}

/// Adds the leading-sign and integrability requirements. Returns whether
/// the weight integral can be formed.
pub(crate) fn leading_sign(
    b: &mut Builder,
    eq: &AbelEquation,
    grid: &CertGrid,
    sign: Sign,
    quad: &QuadOptions,
) -> Result<bool, CertifyError> {
    b.require(sign.hypothesis(), &check_sign_a(eq, grid.checked(), sign)?);
    integrable(b, eq, grid, quad)
}

pub(crate) fn integrable(b: &mut Builder, eq: &AbelEquation, grid: &CertGrid, quad: &QuadOptions) -> Result<bool, CertifyError> {
    const NAME: &str = "b^2/a locally integrable";
    match check_integrability(eq, &grid.ts, quad) {
        Ok(_) => {
            b.require(NAME, &Check::trivial(grid.ts.len()));
            Ok(true)
        }
        Err(CertifyError::NotIntegrable(detail)) => {
            b.inapplicable(NAME, NOT_INTEGRABLE, detail);
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

/// Adds a functional sign condition; a quadrature failure on the functional
/// itself also makes the theorem inapplicable.
pub(crate) fn functional_condition(
    b: &mut Builder,
    name: &str,
    functional: Result<ConditionFunctional, CertifyError>,
    grid: &CertGrid,
    sense: Sense,
    gamma: f64,
) -> Result<(), CertifyError> {
    match functional {
        Ok(k) => {
            b.condition(name, &k.check(grid.checked().len(), sense, certificate_tolerance(gamma)));
            Ok(())
        }
        Err(CertifyError::NotIntegrable(detail)) => {
            b.inapplicable(name, NOT_INTEGRABLE, detail);
            Ok(())
        }
        Err(e) => Err(e),
    }
}

pub(crate) fn reference_condition(
    b: &mut Builder,
    name: &str,
    reference: &ReferenceSolution,
    grid: &CertGrid,
) -> Result<(), CertifyError> {
    require_coverage(reference, &grid.ts)?;
    let check = reference.verify(grid.checked())?;
    let note = matches!(reference.solution, Witness::Path(_)).then(|| "integrated numerically".to_string());
    b.condition_with_note(name, &check, note);
    Ok(())
}

fn in_range(x: f64, lo: f64, hi: f64, what: &str) -> Result<(), CertifyError> {
    let slack = certificate_tolerance(x.abs().max(lo.abs()).max(hi.abs()));
    if x < lo - slack || x > hi + slack {
        return Err(CertifyError::Precondition(format!("{what}={x} must lie in [{lo}, {hi}]")));
    }
    Ok(())
}

/// Envelope `[y1, eta]` for initial values in `[gamma, eta(t0)]`, with `a < 0`.
pub fn certify_thm31(
    eq: &AbelEquation,
    reference: &ReferenceSolution,
    eta: &dyn Curve,
    gamma: f64,
    interval: &Interval,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    one_sided(TheoremId::Thm31, eq, reference, eta, gamma, interval, cfg)
}

/// Envelope `[eta, y1]` for initial values in `[eta(t0), gamma]`, with `a < 0`.
pub fn certify_thm32(
    eq: &AbelEquation,
    reference: &ReferenceSolution,
    eta: &dyn Curve,
    gamma: f64,
    interval: &Interval,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    one_sided(TheoremId::Thm32, eq, reference, eta, gamma, interval, cfg)
}

fn one_sided(
    id: TheoremId,
    eq: &AbelEquation,
    reference: &ReferenceSolution,
    eta: &dyn Curve,
    gamma: f64,
    interval: &Interval,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    let upper = id == TheoremId::Thm31;
    let grid = CertGrid::build(interval, &cfg.grid);
    require_coverage(reference, &grid.ts)?;
    let t0 = grid.t0();
    let (y1, e0) = (reference.at(t0)?, eta.value(t0)?);
    if upper {
        in_range(gamma, y1, e0, "gamma")?;
    } else {
        in_range(gamma, e0, y1, "gamma")?;
    }

    let mut b = Builder::new(id);
    reference_condition(&mut b, "y1 solves reference equation", reference, &grid)?;
    let ok = leading_sign(&mut b, eq, &grid, Sign::Negative, &cfg.quad)?;
    let (k_name, sense) = if upper { ("K(t) >= 0", Sense::AtLeast) } else { ("K(t) <= 0", Sense::AtMost) };
    if ok {
        let k = condition_functional(eq, reference, gamma, &grid.ts, WeightKind::Full, &cfg.quad);
        functional_condition(&mut b, k_name, k, &grid, sense, gamma)?;
    } else {
        b.skipped(k_name, "weight integral unavailable");
    }
    if upper {
        b.condition("eta is a supersolution", &check_supersolution(eq, eta, grid.checked())?);
    } else {
        b.condition("eta is a subsolution", &check_subsolution(eq, eta, grid.checked())?);
    }

    let y1s = sample_curve(&reference.solution, &grid.ts)?;
    let etas = sample_curve(eta, &grid.ts)?;
    let (lower, upper_env, init) = if upper { (y1s, etas, [gamma, e0]) } else { (etas, y1s, [e0, gamma]) };
    Ok(b.finish(
        &grid,
        Some(Envelope {
            lower: Some(lower),
            upper: Some(upper_env),
        }),
        Some(init),
        None,
    ))
}

/// Envelope `[y1, y2]` for initial values in `[gamma1, gamma2]`, with `a < 0`.
pub fn certify_thm33(
    eq: &AbelEquation,
    lower: &ReferenceSolution,
    upper: &ReferenceSolution,
    gamma1: f64,
    gamma2: f64,
    interval: &Interval,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    let grid = CertGrid::build(interval, &cfg.grid);
    require_coverage(lower, &grid.ts)?;
    require_coverage(upper, &grid.ts)?;
    let t0 = grid.t0();
    let (y1, y2) = (lower.at(t0)?, upper.at(t0)?);
    if y1 > y2 {
        return Err(CertifyError::Precondition(format!("y1(t0)={y1} exceeds y2(t0)={y2}")));
    }
    in_range(gamma1, y1, y2, "gamma1")?;
    in_range(gamma2, gamma1, y2, "gamma2")?;

    let mut b = Builder::new(TheoremId::Thm33);
    reference_condition(&mut b, "y1 solves its reference equation", lower, &grid)?;
    reference_condition(&mut b, "y2 solves its reference equation", upper, &grid)?;
    if leading_sign(&mut b, eq, &grid, Sign::Negative, &cfg.quad)? {
        let k1 = condition_functional(eq, lower, gamma1, &grid.ts, WeightKind::Full, &cfg.quad);
        functional_condition(&mut b, "K1(t) >= 0", k1, &grid, Sense::AtLeast, gamma1)?;
        let k2 = condition_functional(eq, upper, gamma2, &grid.ts, WeightKind::Full, &cfg.quad);
        functional_condition(&mut b, "K2(t) <= 0", k2, &grid, Sense::AtMost, gamma2)?;
    } else {
        b.skipped("K1(t) >= 0", "weight integral unavailable");
        b.skipped("K2(t) <= 0", "weight integral unavailable");
    }
    let env = Envelope {
        lower: Some(sample_curve(&lower.solution, &grid.ts)?),
        upper: Some(sample_curve(&upper.solution, &grid.ts)?),
    };
    Ok(b.finish(&grid, Some(env), Some([gamma1, gamma2]), None))
}

/// Side of the reference solution the conclusion puts `y` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `B1 >= 0` and `y(t0) >= y1(t0)` give `y >= y1`.
    Below,
    /// `B1 <= 0` and `y(t0) <= y1(t0)` give `y <= y1`.
    Above,
}

/// One-sided comparison with `a > 0`.
pub fn certify_thm34(
    eq: &AbelEquation,
    reference: &ReferenceSolution,
    side: Side,
    interval: &Interval,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    let grid = CertGrid::build(interval, &cfg.grid);
    let mut b = Builder::new(TheoremId::Thm34);
    reference_condition(&mut b, "y1 solves reference equation", reference, &grid)?;
    leading_sign(&mut b, eq, &grid, Sign::Positive, &cfg.quad)?;
    let (name, sense) = match side {
        Side::Below => ("B1 >= 0", Sense::AtLeast),
        Side::Above => ("B1 <= 0", Sense::AtMost),
    };
    b.condition(name, &check_defect(eq, reference, grid.checked(), sense)?);

    let y1s = sample_curve(&reference.solution, &grid.ts)?;
    let env = match side {
        Side::Below => Envelope {
            lower: Some(y1s),
            upper: None,
        },
        Side::Above => Envelope {
            lower: None,
            upper: Some(y1s),
        },
    };
    b.note(match side {
        Side::Below => "conclusion: y(t) >= y1(t) for y(t0) >= y1(t0) while y exists",
        Side::Above => "conclusion: y(t) <= y1(t) for y(t0) <= y1(t0) while y exists",
    });
    Ok(b.finish(&grid, Some(env), None, None))
}

/// Two-sided comparison from pointwise defect signs; no sign condition on `a`.
pub fn certify_thm35(
    eq: &AbelEquation,
    lower: &ReferenceSolution,
    upper: &ReferenceSolution,
    interval: &Interval,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    let grid = CertGrid::build(interval, &cfg.grid);
    require_coverage(lower, &grid.ts)?;
    require_coverage(upper, &grid.ts)?;
    let t0 = grid.t0();
    let (y1, y2) = (lower.at(t0)?, upper.at(t0)?);
    if y1 > y2 {
        return Err(CertifyError::Precondition(format!("y1(t0)={y1} exceeds y2(t0)={y2}")));
    }
    let mut b = Builder::new(TheoremId::Thm35);
    reference_condition(&mut b, "y1 solves its reference equation", lower, &grid)?;
    reference_condition(&mut b, "y2 solves its reference equation", upper, &grid)?;
    b.condition("B1 >= 0", &check_defect(eq, lower, grid.checked(), Sense::AtLeast)?);
    b.condition("B2 <= 0", &check_defect(eq, upper, grid.checked(), Sense::AtMost)?);
    let env = Envelope {
        lower: Some(sample_curve(&lower.solution, &grid.ts)?),
        upper: Some(sample_curve(&upper.solution, &grid.ts)?),
    };
    Ok(b.finish(&grid, Some(env), Some([y1, y2]), None))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Supersolution,
    Subsolution,
    /// Both: a constant solution.
    Equilibrium,
}

/// A constant level proposed as a comparison function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub value: f64,
    pub role: Role,
    /// Root gap the level was taken from.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gap: Option<[f64; 2]>,
}

/// Proposes constant super/subsolutions from the real roots of the cubic:
/// constant roots, and midpoints of the gaps between neighbouring root
/// curves when `a` keeps one sign. Every suggestion is re-checked on the grid.
pub fn suggest_envelope(eq: &AbelEquation, interval: &Interval, cfg: &CertifyConfig) -> Result<Vec<Suggestion>, EvalError> {
    let grid = CertGrid::build(interval, &cfg.grid);
    let ts = grid.checked();
    let mut out: Vec<Suggestion> = Vec::new();

    for r in eq.cubic_roots(ts[0])?.roots {
        if out.iter().any(|s| (s.value - r).abs() <= 1e-9 * (1.0 + r.abs())) {
            continue;
        }
        let max_a = max_abs(ts, |t| eq.a.eval(t))?;
        let check = pointwise(ts, Sense::Within, |t| {
            Ok((eq.coefficients(t)?.cubic(r), residual_tolerance(r, max_a)))
        })?;
        if check.passed {
            out.push(Suggestion {
                value: r,
                role: Role::Equilibrium,
                gap: None,
            });
        }
    }

    let sections: Vec<_> = ts.iter().map(|&t| eq.cubic_roots(t)).collect::<Result<_, _>>()?;
    let all_three = sections.iter().all(|s| s.roots.len() == 3 && !s.degenerate);
    let sign = sections.iter().map(|s| s.leading_sign).fold(None, |acc: Option<Option<i8>>, s| match acc {
        None => Some(Some(s)),
        Some(Some(prev)) if prev == s => Some(Some(s)),
        _ => Some(None),
    });
    let sign = sign.flatten();
    if all_three {
        if let Some(sign) = sign.filter(|s| *s != 0) {
            for pair in 0..2 {
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for s in &sections {
                    let mut r = s.roots.clone();
                    r.sort_by(f64::total_cmp);
                    lo = lo.max(r[pair]);
                    hi = hi.min(r[pair + 1]);
                }
                let slack = 1e-7 * (1.0 + lo.abs().max(hi.abs()));
                if lo > hi + slack {
                    continue;
                }
                let v = 0.5 * (lo + hi);
                if out.iter().any(|s| (s.value - v).abs() <= 1e-9 * (1.0 + v.abs())) {
                    continue;
                }
                // Between the two lower roots the cubic has the sign of a;
                // between the upper two, the opposite.
                let positive = (sign > 0) == (pair == 0);
                let role = if positive { Role::Supersolution } else { Role::Subsolution };
                let c = crate::curve::Constant(v);
                let check = match role {
                    Role::Supersolution => check_supersolution(eq, &c, ts)?,
                    _ => check_subsolution(eq, &c, ts)?,
                };
                if check.passed {
                    out.push(Suggestion {
                        value: v,
                        role,
                        gap: Some([lo, hi]),
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(out)
}
