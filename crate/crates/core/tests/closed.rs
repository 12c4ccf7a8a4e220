mod common;

use std::f64::consts::PI;

use abel_core::certificate::{CertifyConfig, TheoremId, Witness};
use abel_core::closed::{
    certify_closed, find_closed, solve_closed, Bracket, ClosedError, ClosedWitnesses, FindOptions, Orientation, Strategy,
};
use abel_core::integrate::{displacement, solve_ivp, sweep, SolveOptions};
use abel_core::AbelEquation;
use common::*;
use proptest::prelude::*;

fn cfg() -> CertifyConfig {
    CertifyConfig {
        grid: desk_grid(),
        ..Default::default()
    }
}

/// First sign change of the displacement over an evenly spaced sweep.
fn sweep_sign_change(e: &AbelEquation, t1: f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let gammas = evenly_spaced(lo, hi, n);
    let pts = sweep(e, 0.0, t1, &gammas, &SolveOptions::default()).unwrap();
    let p: Vec<f64> = pts.iter().map(|p| p.outcome.value().unwrap()).collect();
    let k = (1..n).find(|&k| p[k - 1].signum() != p[k].signum() || p[k] == 0.0).expect("no sign change");
    (gammas[k - 1], gammas[k])
}

fn check_trace(r: &abel_core::closed::ClosedSolutionResult) {
    let w0 = r.bracket_history[0].width;
    let s = match r.orientation {
        Orientation::Descending => 1.0,
        Orientation::Ascending => -1.0,
    };
    for (n, step) in r.bracket_history.iter().enumerate() {
        assert_eq!(step.width, w0 / 2f64.powi(n as i32));
        assert!(s * step.p_xi >= -1e-10 && s * step.p_eta <= 1e-10, "{step:?}");
    }
}

#[test]
fn nonnegative_closed_solution_matches_sweep() {
    let e = eq("1", "0", "1", "-sin(t)^2");
    let r = solve_closed(&e, 0.0, PI, Strategy::Thm51, &ClosedWitnesses::default(), &cfg(), &FindOptions::default()).unwrap();
    assert!(r.gamma_star >= 0.0 && r.residual <= 1e-8);
    let (lo, hi) = sweep_sign_change(&e, PI, 0.0, 0.4, 401);
    assert!(r.gamma_star >= lo - 1e-6 && r.gamma_star <= hi + 1e-6);
    check_trace(&r);
    // y never dips below zero along the way
    assert!(r.trajectory.ys.iter().all(|&y| y >= -1e-6));
}

#[test]
fn mirrored_forcing_gives_nonpositive_solution() {
    let e = eq("1", "0", "1", "sin(t)^2");
    let r = solve_closed(&e, 0.0, PI, Strategy::Thm52, &ClosedWitnesses::default(), &cfg(), &FindOptions::default()).unwrap();
    assert!(r.gamma_star <= 0.0 && r.residual <= 1e-8);
    check_trace(&r);
}

#[test]
fn closure_is_stable_under_tighter_tolerance() {
    let e = eq("1", "0", "1", "-sin(t)^2");
    let opts = FindOptions::default();
    let r = solve_closed(&e, 0.0, PI, Strategy::Thm51, &ClosedWitnesses::default(), &cfg(), &opts).unwrap();
    let tight = opts.solve.with_rel_tol(opts.solve.rel_tol / 10.0);
    let again = displacement(&e, 0.0, PI, r.gamma_star, &tight).unwrap().value().unwrap();
    assert!((again.abs() - r.residual).abs() < 10.0 * opts.tol_closed);
}

#[test]
fn periodic_orbit_returns_after_two_periods() {
    let e = eq("1", "0", "1", "-sin(t)^2");
    let r = solve_closed(&e, 0.0, PI, Strategy::Thm51, &ClosedWitnesses::default(), &cfg(), &FindOptions::default()).unwrap();
    assert!(abel_core::closed::is_periodic(&e, 0.0, PI, 128).unwrap());
    let tr = solve_ivp(&e, 0.0, r.gamma_star, 2.0 * PI, &SolveOptions::default()).unwrap();
    assert!((tr.value_at(PI).unwrap() - r.gamma_star).abs() <= 1e-7);
    assert!((tr.y_last() - r.gamma_star).abs() <= 1e-7);
}

#[test]
fn constant_supersolution_bracket() {
    let e = sin_squared_forced(LAMBDA_MAX);
    let w = ClosedWitnesses {
        eta: Some(Witness::Const(ROOT3_3)),
        ..Default::default()
    };
    let r = solve_closed(&e, 0.0, PI, Strategy::Thm53, &w, &cfg(), &FindOptions::default()).unwrap();
    assert!((0.0..=ROOT3_3).contains(&r.gamma_star));
    let (lo, hi) = sweep_sign_change(&e, PI, 0.0, ROOT3_3, 201);
    assert!(r.gamma_star >= lo - 1e-6 && r.gamma_star <= hi + 1e-6);
}

#[test]
fn reference_pair_brackets() {
    // y1 = -1 and y2 = 1 solve their references; shifted cubic stays between.
    let e = shifted_cubic(1.0);
    let w = ClosedWitnesses {
        y1: Some(lower_reference()),
        y2: Some(upper_reference()),
        ..Default::default()
    };
    let cc = certify_closed(&e, 0.0, 2.0 * PI, Strategy::Thm55, &w, &cfg()).unwrap();
    assert!(cc.certificate.holds(), "{:?}", cc.certificate.verdict);
    assert_eq!(cc.bracket, Some(Bracket::new(-1.0, 1.0, Orientation::Descending)));
    let r = find_closed(&e, 0.0, 2.0 * PI, &cc.bracket.unwrap(), &FindOptions::default()).unwrap();
    assert!(r.residual <= 1e-8);
    check_trace(&r);

    let pointwise = certify_closed(&e, 0.0, 2.0 * PI, Strategy::Thm57, &w, &cfg()).unwrap();
    assert!(pointwise.certificate.holds(), "{:?}", pointwise.certificate.verdict);
}

#[test]
fn mirrored_reference_corollaries() {
    let e = eq("-1", "0", "1.5+0.5*sin(t)", "-0.5-0.5*sin(t)");
    let w = ClosedWitnesses {
        y1: Some(abel_core::certificate::ReferenceSolution::new(eq("1", "5", "5", "1"), -1.0)),
        ..Default::default()
    };
    for s in [Strategy::Cor51, Strategy::Cor52] {
        let cc = certify_closed(&e, 0.0, 2.0 * PI, s, &w, &cfg()).unwrap();
        assert!(cc.certificate.holds(), "{s}: {:?}", cc.certificate.verdict);
        assert_eq!(cc.certificate.theorem, s.theorem());
    }
}

#[test]
fn violated_hypothesis_is_not_bisected() {
    let e = eq("1", "0", "1", "sin(t)");
    let err = solve_closed(&e, 0.0, PI, Strategy::Thm51, &ClosedWitnesses::default(), &cfg(), &FindOptions::default())
        .unwrap_err();
    match err {
        ClosedError::NotHolds(cert) => assert_eq!(cert.theorem, TheoremId::Thm51),
        other => panic!("{other:?}"),
    }
}

#[test]
fn contradicting_orientation_is_reported() {
    let e = eq("1", "0", "1", "-sin(t)^2");
    let err = find_closed(&e, 0.0, PI, &Bracket::new(0.0, 0.4, Orientation::Ascending), &FindOptions::default())
        .unwrap_err();
    assert!(matches!(err, ClosedError::BracketInvalid { .. }));
    let err = find_closed(&e, 0.0, PI, &Bracket::unoriented(1.0, 2.0), &FindOptions::default()).unwrap_err();
    assert!(matches!(err, ClosedError::BracketInvalid { .. }));
}

#[test]
fn iteration_budget() {
    let e = eq("1", "0", "1", "-sin(t)^2");
    let opts = FindOptions {
        max_iter: 3,
        ..Default::default()
    };
    let err = find_closed(&e, 0.0, PI, &Bracket::new(0.0, 0.4, Orientation::Descending), &opts).unwrap_err();
    assert!(matches!(err, ClosedError::MaxIterExceeded { iterations: 3, .. }));
}

#[test]
fn result_json_omits_trajectory() {
    let e = eq("-1", "0", "1", "0");
    let r = find_closed(&e, 0.0, 1.0, &Bracket::unoriented(-0.5, 0.5), &FindOptions::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(v["gamma_star"], 0.0);
    assert!(v.get("trajectory").is_none());
    assert_eq!(v["bracket_history"].as_array().unwrap().len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bisection_keeps_signs_and_halves(amp in 0.1f64..2.0, c0 in 0.5f64..2.0, period in 1.0f64..4.0) {
        let e = eq("1", "0", &format!("{c0:e}"), &format!("-{amp:e}*sin({:e}*t)^2", PI / period));
        let r = solve_closed(&e, 0.0, period, Strategy::Thm51, &ClosedWitnesses::default(), &cfg(), &FindOptions::default());
        let r = r.unwrap();
        prop_assert!(r.residual <= 1e-8 && r.gamma_star >= 0.0);
        check_trace(&r);
    }
}
