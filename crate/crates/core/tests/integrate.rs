mod common;

use abel_core::integrate::{read_csv, solve_ivp, sweep, write_csv, Displacement, SolveOptions, Status};
use common::*;
use proptest::prelude::*;

#[test]
fn pure_cubic_escape_times() {
    let e = eq("-1", "0", "0", "0");
    for y0 in [0.5, 1.0, 2.0, 4.0] {
        let exact = 1.0 / (2.0 * y0 * y0);
        let tr = solve_ivp(&e, 0.0, y0, 10.0, &SolveOptions::default()).unwrap();
        match tr.status {
            Status::BlowUp { t_escape, direction } => {
                assert!((t_escape - exact).abs() <= 1e-4 * exact, "y0={y0}: {t_escape} vs {exact}");
                assert_eq!(direction, 1);
            }
            other => panic!("{other:?}"),
        }
    }
    let tr = solve_ivp(&e, 0.0, -1.0, 10.0, &SolveOptions::default()).unwrap();
    assert!(matches!(tr.status, Status::BlowUp { direction: -1, .. }));
}

#[test]
fn cubic_decay_error_shrinks_with_tolerance() {
    // y' = -y^3, y(0) = 1: y = 1/sqrt(1 + 2t)
    let e = eq("1", "0", "0", "0");
    let exact = 1.0 / 21f64.sqrt();
    let errors: Vec<f64> = [1e-4, 1e-5, 1e-6, 1e-7]
        .iter()
        .map(|&tol| {
            let tr = solve_ivp(&e, 0.0, 1.0, 10.0, &SolveOptions::default().with_rel_tol(tol)).unwrap();
            (tr.y_last() - exact).abs()
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[0] >= 4.0 * w[1], "{errors:?}");
    }
}

#[test]
fn domain_errors_stop_the_run() {
    let e = eq("1", "0", "0", "ln(1-t)");
    let tr = solve_ivp(&e, 0.0, 0.0, 2.0, &SolveOptions::default()).unwrap();
    assert!(matches!(tr.status, Status::DomainError { t, .. } if t <= 1.0));
}

#[test]
fn csv_round_trip_keeps_samples() {
    let tr = run(&sin_squared_forced(0.3), 0.2, 5.0);
    let mut buf = Vec::new();
    write_csv(&tr, &mut buf).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.ts, tr.ts);
    assert_eq!(back.ys, tr.ys);
    assert_eq!(back.status, tr.status);
}

#[test]
fn sweep_reports_blow_up_per_point() {
    let e = eq("-1", "0", "0", "0");
    let pts = sweep(&e, 0.0, 1.0, &[0.1, 0.5, 2.0], &SolveOptions::default()).unwrap();
    assert!(pts[0].outcome.value().is_some());
    assert!(matches!(pts[2].outcome, Displacement::BlowUp { .. }));
    assert!(sweep(&e, 0.0, 1.0, &[1.0, 0.0], &SolveOptions::default()).is_err());
}

const INTERPOLATION_SLACK: f64 = 1e-9;

fn bounded_coefficient() -> impl Strategy<Value = String> {
    (-2.0f64..2.0, -1.0f64..1.0, 0.5f64..3.0).prop_map(|(c0, c1, w)| format!("({c0:e})+({c1:e})*sin({w:e}*t)"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn ordered_solutions_never_cross(
        a in bounded_coefficient(),
        b in bounded_coefficient(),
        c in bounded_coefficient(),
        d in bounded_coefficient(),
        lo in -1.5f64..1.5,
        gap in 1e-3f64..1.0,
    ) {
        let e = eq(&a, &b, &c, &d);
        // integration error well below the comparison slack
        let opts = SolveOptions { abs_tol: 1e-13, ..SolveOptions::default().with_rel_tol(1e-11) };
        let low = solve_ivp(&e, 0.0, lo, 5.0, &opts).unwrap();
        let high = solve_ivp(&e, 0.0, lo + gap, 5.0, &opts).unwrap();
        let end = low.t_last().min(high.t_last());
        for &t in low.ts.iter().chain(&high.ts).filter(|&&t| t <= end) {
            if let (Some(yl), Some(yh)) = (low.value_at(t), high.value_at(t)) {
                // strict up to the dense-output interpolation error
                prop_assert!(yh - yl > -INTERPOLATION_SLACK, "crossed at t={t}: {yl} vs {yh}");
            }
        }
    }
}
