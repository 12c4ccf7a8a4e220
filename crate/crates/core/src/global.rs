//! Existence on `[t0, +inf)`: positive leading coefficient with an a-priori
//! bound, and negative leading coefficient through panel-wise integral
//! conditions over a partition `t0 < t1 < ...`.

use rayon::prelude::*;

use crate::certificate::{
    certificate_tolerance, grid_points, sample_curve, Builder, CertGrid, Certificate, CertifyConfig,
    CertifyError, Check, Envelope, Sense, TheoremId, Witness,
};
use crate::compare::{
    check_subsolution, check_supersolution, leading_sign, quad_failure, weight_rate,
    weighted_functional, Sign, WeightKind, NOT_INTEGRABLE,
};
use crate::curve::{Curve, Interpolation, Sampled};
use crate::expr::EvalError;
use crate::model::{AbelEquation, Interval};
use crate::quad::{Cumulative, QuadOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionError {
    #[error("partition points must be strictly increasing")]
    NotIncreasing,
    #[error("a finite partition must end at +inf")]
    MissingInfinity,
    #[error("partition needs at least a start point and +inf")]
    TooShort,
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
}

/// Breakpoints `t0 < t1 < ...` splitting `[t0, +inf)` into panels.
#[derive(Debug, Clone, PartialEq)]
pub enum Partition {
    /// Explicit points; the last one is `+inf`.
    Finite(Vec<f64>),
    /// `t_k = start + k * period`, generated up to the working horizon.
    Periodic { start: f64, period: f64 },
}

impl Partition {
    pub fn finite(points: Vec<f64>) -> Result<Self, PartitionError> {
        if points.len() < 2 || !points[0].is_finite() {
            return Err(PartitionError::TooShort);
        }
        if !points.windows(2).all(|w| w[0] < w[1]) {
            return Err(PartitionError::NotIncreasing);
        }
        if points[points.len() - 1] != f64::INFINITY {
            return Err(PartitionError::MissingInfinity);
        }
        Ok(Partition::Finite(points))
    }

    pub fn periodic(start: f64, period: f64) -> Result<Self, PartitionError> {
        if !(period.is_finite() && period > 0.0) || !start.is_finite() {
            return Err(PartitionError::BadPeriod(period));
        }
        Ok(Partition::Periodic { start, period })
    }

    /// `count` points `start + k * period` followed by `+inf`.
    pub fn from_period(start: f64, period: f64, count: usize) -> Result<Self, PartitionError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(PartitionError::BadPeriod(period));
        }
        let mut points: Vec<f64> = (0..count.max(1)).map(|k| start + k as f64 * period).collect();
        points.push(f64::INFINITY);
        Self::finite(points)
    }

    pub fn start(&self) -> f64 {
        match self {
            Partition::Finite(p) => p[0],
            Partition::Periodic { start, .. } => *start,
        }
    }

    /// Panels `[t_k, t_{k+1})` meeting `[t0, end]`, the last one cut at `end`.
    pub fn panels(&self, end: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        match self {
            Partition::Finite(p) => {
                for w in p.windows(2) {
                    if w[0] >= end {
                        break;
                    }
                    out.push((w[0], w[1].min(end)));
                }
            }
            Partition::Periodic { start, period } => {
                let mut k = 0usize;
                loop {
                    let a = start + k as f64 * period;
                    if a >= end {
                        break;
                    }
                    out.push((a, (start + (k + 1) as f64 * period).min(end)));
                    k += 1;
                }
            }
        }
        out
    }
}

/// Global existence for every initial value when `a > 0`. With `gamma`,
/// also reports the a-priori bound on `|y|`.
pub fn certify_thm21(
    eq: &AbelEquation,
    interval: &Interval,
    gamma: Option<f64>,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    let grid = CertGrid::build(interval, &cfg.grid);
    let mut b = Builder::new(TheoremId::Thm21);
    let ok = leading_sign(&mut b, eq, &grid, Sign::Positive, &cfg.quad)?;
    b.note("conclusion: every solution exists on the whole interval");
    let (mut bound, mut envelope) = (None, None);
    if ok && b.verdict().holds() {
        if let Some(g) = gamma {
            let samples = a_priori_bound(eq, &grid.ts, g, &cfg.quad)?;
            envelope = Some(Envelope {
                lower: Some(samples.iter().map(|&[t, v]| [t, -v]).collect()),
                upper: Some(samples.clone()),
            });
            bound = Some(samples);
        }
    }
    Ok(b.finish(&grid, envelope, gamma.map(|g| [g, g]), bound))
}

/// `|gamma| e^{-Q(t)} + int_{t0}^{t} e^{-(Q(t) - Q(tau))} |d(tau)| dtau` with
/// `Q = int (c - b^2/(4a))`.
pub fn a_priori_bound(eq: &AbelEquation, ts: &[f64], gamma: f64, quad: &QuadOptions) -> Result<Vec<[f64; 2]>, CertifyError> {
    let abs_d = |t: f64| -> Result<f64, EvalError> { Ok(eq.d.eval(t)?.abs()) };
    let cum = Cumulative::guarded(ts, &weight_rate(eq, WeightKind::Quarter), &abs_d, quad).map_err(quad_failure)?;
    Ok((0..cum.len())
        .map(|k| {
            let q = cum.log_weight[k];
            [ts[k], gamma.abs() * (-q).exp() + cum.integral[k].times_exp(-q).value()]
        })
        .collect())
}

/// `a < 0`, a nonnegative supersolution `eta`, and on every panel
/// `eta(t_k) - int_{t_k}^{t} W d >= 0`. Envelope `[0, eta]`.
pub fn certify_thm41(
    eq: &AbelEquation,
    eta: &dyn Curve,
    partition: &Partition,
    horizon: f64,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    piecewise(TheoremId::Thm41, eq, eta, partition, horizon, cfg)
}

/// Mirror of [`certify_thm41`] with a nonpositive subsolution. Envelope `[eta, 0]`.
pub fn certify_thm42(
    eq: &AbelEquation,
    eta: &dyn Curve,
    partition: &Partition,
    horizon: f64,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    piecewise(TheoremId::Thm42, eq, eta, partition, horizon, cfg)
}

type PanelChecks = Result<(Check, Check), CertifyError>;

fn piecewise(
    id: TheoremId,
    eq: &AbelEquation,
    eta: &dyn Curve,
    partition: &Partition,
    horizon: f64,
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    let upper = id == TheoremId::Thm41;
    let t0 = partition.start();
    let mut gcfg = cfg.grid;
    gcfg.horizon = horizon;
    let interval = Interval::new(t0, f64::INFINITY, false).map_err(|e| CertifyError::Precondition(e.to_string()))?;
    let grid = CertGrid::build(&interval, &gcfg);
    let end = grid.t1();

    let etas = sample_curve(eta, &grid.ts)?;
    if let Some(&[t, v]) = etas.iter().find(|p| if upper { p[1] < 0.0 } else { p[1] > 0.0 }) {
        let want = if upper { "nonnegative" } else { "nonpositive" };
        return Err(CertifyError::Precondition(format!("eta must be {want}; eta({t})={v}")));
    }

    let mut b = Builder::new(id);
    let ok = leading_sign(&mut b, eq, &grid, Sign::Negative, &cfg.quad)?;
    if upper {
        b.condition("eta is a supersolution", &check_supersolution(eq, eta, grid.checked())?);
    } else {
        b.condition("eta is a subsolution", &check_subsolution(eq, eta, grid.checked())?);
    }

    let (rel, sense) = if upper { (">=", Sense::AtLeast) } else { ("<=", Sense::AtMost) };
    let main_name = format!("eta(t_k) - int_(t_k)^t W d {rel} 0");
    let zero_name = format!("-int_(t_k)^t W d {rel} 0 (keeps the zero bound)");
    if ok {
        let panels = partition.panels(end);
        let last = panels.len().saturating_sub(1);
        let results: Vec<PanelChecks> = panels
            .par_iter()
            .enumerate()
            .map(|(k, &(a, z))| {
                let ts = grid_points(a, z, &gcfg);
                let n = if k == last { ts.len() } else { ts.len() - 1 };
                let eta_k = eta.value(a)?;
                let minus_d = |t: f64| -> Result<f64, EvalError> { Ok(-eq.d.eval(t)?) };
                let f = weighted_functional(eq, &ts, WeightKind::Full, eta_k, minus_d, &cfg.quad)?;
                let main = f.check(n, sense, certificate_tolerance(eta_k));
                let zero = f.with_offset(0.0).check(n, sense, certificate_tolerance(0.0));
                Ok((main, zero))
            })
            .collect();
        let mut mains = Vec::with_capacity(results.len());
        let mut zeros = Vec::with_capacity(results.len());
        for (k, r) in results.into_iter().enumerate() {
            match r {
                Ok((m, z)) => {
                    mains.push((k, m));
                    zeros.push((k, z));
                }
                Err(CertifyError::NotIntegrable(detail)) => {
                    b.inapplicable(&format!("{main_name} on panel {k}"), NOT_INTEGRABLE, detail);
                }
                Err(e) => return Err(e),
            }
        }
        for (name, checks) in [(main_name, mains), (zero_name, zeros)] {
            let (merged, failing) = merge(&checks, sense);
            let name = match failing {
                Some(k) => format!("{name} on panel {k} [{}, {})", panels[k].0, panels[k].1),
                None => format!("{name} on every panel"),
            };
            b.condition_with_note(&name, &merged, Some(format!("{} panels up to t={end}", panels.len())));
        }
    } else {
        b.skipped(&main_name, "weight integral unavailable");
    }

    let zeros: Vec<[f64; 2]> = grid.ts.iter().map(|&t| [t, 0.0]).collect();
    let e0 = etas[0][1];
    let (env, init) = if upper {
        (Envelope { lower: Some(zeros), upper: Some(etas) }, [0.0, e0])
    } else {
        (Envelope { lower: Some(etas), upper: Some(zeros) }, [e0, 0.0])
    };
    Ok(b.finish(&grid, Some(env), Some(init), None))
}

/// Conjunction of per-panel checks; reports the first failing panel.
fn merge(checks: &[(usize, Check)], sense: Sense) -> (Check, Option<usize>) {
    let mut out = Check::trivial(0);
    let mut failing = None;
    let mut worst = f64::NEG_INFINITY;
    for (k, c) in checks {
        out.points_checked += c.points_checked;
        let badness = match sense {
            Sense::AtLeast => -c.worst_value,
            _ => c.worst_value,
        };
        if badness > worst || out.worst_t.is_nan() {
            worst = badness;
            out.worst_t = c.worst_t;
            out.worst_value = c.worst_value;
            out.tolerance = c.tolerance;
        }
        if !c.passed && failing.is_none() {
            failing = Some(*k);
            out.passed = false;
            out.first_violation = c.first_violation;
        }
    }
    (out, failing)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    /// A nonnegative nondecreasing real root of the cubic.
    RootCurve,
    /// Running maximum of `max(0, beta)` between the middle and upper roots.
    StepLevel,
    /// The constant `min gamma` when it clears every middle root.
    ConstantLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalCandidate {
    pub kind: CandidateKind,
    pub eta: Witness,
}

/// Proposes nonnegative supersolutions from the sampled root curves; every
/// candidate is re-checked as a supersolution on the grid.
pub fn suggest_global_envelope(
    eq: &AbelEquation,
    interval: &Interval,
    cfg: &CertifyConfig,
) -> Result<Vec<GlobalCandidate>, EvalError> {
    let grid = CertGrid::build(interval, &cfg.grid);
    let ts = &grid.ts;
    let sections: Vec<Vec<f64>> = ts
        .par_iter()
        .map(|&t| {
            eq.cubic_roots(t).map(|s| {
                let mut r = if s.degenerate { Vec::new() } else { s.roots };
                r.sort_by(f64::total_cmp);
                r
            })
        })
        .collect::<Result<_, _>>()?;
    let mut proposals: Vec<(CandidateKind, Vec<f64>)> = Vec::new();

    let n = sections[0].len();
    if n > 0 && sections.iter().all(|r| r.len() == n) {
        for i in 0..n {
            let curve: Vec<f64> = sections.iter().map(|r| r[i]).collect();
            let tol = |v: f64| 1e-7 * (1.0 + v.abs());
            let nonneg = curve.iter().all(|&v| v >= -tol(v));
            let nondecreasing = curve.windows(2).all(|w| w[1] >= w[0] - tol(w[0]));
            if nonneg && nondecreasing {
                proposals.push((CandidateKind::RootCurve, curve.iter().map(|&v| v.max(0.0)).collect()));
            }
        }
    }

    if sections.iter().all(|r| r.len() == 3) {
        let mut running: f64 = 0.0;
        let step: Vec<f64> = sections
            .iter()
            .map(|r| {
                running = running.max(r[1]);
                running
            })
            .collect();
        let fits = step.iter().zip(&sections).all(|(&l, r)| l <= r[2] + 1e-9 * (1.0 + l.abs()));
        if fits {
            proposals.push((CandidateKind::StepLevel, step));
        }
        let level = sections.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
        let floor = sections.iter().map(|r| r[1]).fold(0.0_f64, f64::max);
        if level >= floor - 1e-9 * (1.0 + level.abs()) {
            proposals.push((CandidateKind::ConstantLevel, vec![level.max(floor); ts.len()]));
        }
    }

    let mut out: Vec<GlobalCandidate> = Vec::new();
    for (kind, values) in proposals {
        let first = values[0];
        let spread = values.iter().fold(0.0_f64, |m, &v| m.max((v - first).abs()));
        let eta = if spread <= 1e-9 * (1.0 + first.abs()) {
            if out.iter().any(|c| c.eta.as_constant().is_some_and(|v| (v - first).abs() <= 1e-9 * (1.0 + v.abs()))) {
                continue;
            }
            Witness::Const(first)
        } else {
            let mode = match kind {
                CandidateKind::StepLevel => Interpolation::Step,
                _ => Interpolation::Linear,
            };
            Witness::Sampled(Sampled::new(ts.clone(), values, mode))
        };
        if check_supersolution(eq, &eta, grid.checked())?.passed {
            out.push(GlobalCandidate { kind, eta });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::{GridConfig, Verdict};
    use crate::curve::Constant;
    use std::f64::consts::PI;

    fn cfg() -> CertifyConfig {
        CertifyConfig {
            grid: GridConfig {
                density: 128.0,
                chebyshev_points: 17,
                horizon: 30.0,
            },
            ..Default::default()
        }
    }

    fn eq(a: &str, b: &str, c: &str, d: &str) -> AbelEquation {
        AbelEquation::parse(a, b, c, d).unwrap()
    }

    fn critical() -> String {
        format!("{}*sin(t)^2", 2.0 * 3f64.sqrt() / 9.0)
    }

    #[test]
    fn partition_panels() {
        let p = Partition::periodic(0.0, PI).unwrap();
        let panels = p.panels(10.0 * PI);
        assert_eq!(panels.len(), 10);
        assert_eq!(panels[3].0, 3.0 * PI);
        let f = Partition::finite(vec![0.0, 1.0, f64::INFINITY]).unwrap();
        assert_eq!(f.panels(5.0), vec![(0.0, 1.0), (1.0, 5.0)]);
        assert_eq!(Partition::finite(vec![0.0, 1.0]), Err(PartitionError::MissingInfinity));
        assert_eq!(Partition::finite(vec![0.0, 0.0, f64::INFINITY]), Err(PartitionError::NotIncreasing));
        assert!(Partition::periodic(0.0, -1.0).is_err());
        assert_eq!(Partition::from_period(0.0, 2.0, 3).unwrap().panels(100.0).len(), 3);
    }

    #[test]
    fn thm21_positive_leading() {
        let e = eq("1", "0", "1", "-sin(t)^2");
        let iv = Interval::new(0.0, f64::INFINITY, false).unwrap();
        let cert = certify_thm21(&e, &iv, Some(0.5), &cfg()).unwrap();
        assert!(cert.holds());
        let bound = cert.bound.unwrap();
        assert_eq!(bound[0][1], 0.5);
        // Q = t, so the bound is 0.5 e^{-t} + int_0^t e^{tau - t} sin^2
        let [t, v] = bound[bound.len() / 2];
        let e_t = (-t).exp();
        let exact = 0.5 * e_t + 0.5 * (1.0 - e_t) - 0.1 * ((2.0 * t).cos() + 2.0 * (2.0 * t).sin() - e_t);
        assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
    }

    #[test]
    fn thm21_not_applicable_cases() {
        let iv = Interval::closed(0.0, 5.0).unwrap();
        let neg = certify_thm21(&eq("-1", "0", "1", "0"), &iv, None, &cfg()).unwrap();
        assert!(matches!(neg.verdict, Verdict::NotApplicable { .. }));
        let vanishing = certify_thm21(&eq("t^2", "1", "0", "0"), &iv, None, &cfg()).unwrap();
        match vanishing.verdict {
            Verdict::NotApplicable { reason } => assert_eq!(reason, NOT_INTEGRABLE),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn thm41_examples() {
        let p = Partition::periodic(0.0, PI).unwrap();
        let e = eq("-1", "0", "1", &format!("-{}", critical()));
        let cert = certify_thm41(&e, &Constant(3f64.sqrt() / 3.0), &p, 10.0 * PI, &cfg()).unwrap();
        assert!(cert.holds(), "{:?}", cert.verdict);
        assert_eq!(cert.grid_spec.truncated_at, Some(10.0 * PI));

        let zero = certify_thm41(&eq("-1", "0", "1", "0"), &Constant(1.0), &p, 4.0 * PI, &cfg()).unwrap();
        assert!(zero.holds());

        let forced = certify_thm41(&eq("-1", "0", "1", "10"), &Constant(3f64.sqrt() / 3.0), &p, 4.0 * PI, &cfg()).unwrap();
        match forced.verdict {
            Verdict::Fails { hypothesis, .. } => assert!(hypothesis.contains("panel 0"), "{hypothesis}"),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn thm42_examples() {
        let p = Partition::periodic(0.0, PI).unwrap();
        let e = eq("-1", "0", "1", &critical());
        let cert = certify_thm42(&e, &Constant(-(3f64.sqrt()) / 3.0), &p, 6.0 * PI, &cfg()).unwrap();
        assert!(cert.holds(), "{:?}", cert.verdict);
        let err = certify_thm42(&e, &Constant(0.1), &p, 6.0 * PI, &cfg()).unwrap_err();
        assert!(matches!(err, CertifyError::Precondition(_)));
    }

    #[test]
    fn refined_partition_agrees() {
        let e = eq("-1", "0", "1", &format!("-{}", critical()));
        let eta = Constant(3f64.sqrt() / 3.0);
        let a = certify_thm41(&e, &eta, &Partition::periodic(0.0, PI).unwrap(), 4.0 * PI, &cfg()).unwrap();
        let b = certify_thm41(&e, &eta, &Partition::periodic(0.0, PI / 2.0).unwrap(), 4.0 * PI, &cfg()).unwrap();
        assert_eq!(a.holds(), b.holds());
    }

    #[test]
    fn global_suggestions() {
        let iv = Interval::closed(0.0, 5.0).unwrap();
        let three = suggest_global_envelope(&eq("-1", "0", "1", "0"), &iv, &cfg()).unwrap();
        let consts: Vec<f64> = three.iter().filter_map(|c| c.eta.as_constant()).collect();
        assert!(!consts.is_empty() && consts.iter().all(|&v| (0.0..=1.0).contains(&v)), "{consts:?}");

        let triple = suggest_global_envelope(&eq("-1", "3", "-3", "1"), &iv, &cfg()).unwrap();
        assert!(triple.iter().any(|c| c.eta.as_constant().is_some_and(|v| (v - 1.0).abs() < 1e-9)), "{triple:?}");

        let crossing = eq("-1", "3*(1-t)", "1-3*(1-t)^2", "(1-t)^3-(1-t)");
        let none = suggest_global_envelope(&crossing, &Interval::closed(0.0, 2.0).unwrap(), &cfg()).unwrap();
        assert!(none.is_empty(), "{none:?}");
    }
}
