#![allow(dead_code)]

use abel_core::certificate::{GridConfig, ReferenceSolution};
use abel_core::integrate::{solve_ivp, SolveOptions, Status, Trajectory};
use abel_core::AbelEquation;

pub const LAMBDA_MAX: f64 = 0.384_900_179_459_750_5; // 2 sqrt(3) / 9
pub const ROOT3_3: f64 = 0.577_350_269_189_625_8; // sqrt(3) / 3

pub fn eq(a: &str, b: &str, c: &str, d: &str) -> AbelEquation {
    AbelEquation::parse(a, b, c, d).unwrap()
}

/// `y' - y^3 + y - lambda sin^2 t = 0`
pub fn sin_squared_forced(lambda: f64) -> AbelEquation {
    eq("-1", "0", "1", &format!("-{lambda:e}*sin(t)^2"))
}

/// `y' - y^3 + y = 0` with the equilibrium `y = 0`.
pub fn unforced_reference() -> ReferenceSolution {
    ReferenceSolution::new(eq("-1", "0", "1", "0"), 0.0)
}

/// `y' - y^3 + 3y^2 + 3y - 3 - mu sin t = 0`
pub fn shifted_cubic(mu: f64) -> AbelEquation {
    eq("-1", "3", "3", &format!("-3-{mu:e}*sin(t)"))
}

/// `y' + y^3 + 3y^2 + 3y + 1 = 0`, solved by `y = -1`.
pub fn lower_reference() -> ReferenceSolution {
    ReferenceSolution::new(eq("1", "3", "3", "1"), -1.0)
}

/// `y' - y^3 + 3y^2 - 3y + 1 = 0`, solved by `y = 1`.
pub fn upper_reference() -> ReferenceSolution {
    ReferenceSolution::new(eq("-1", "3", "-3", "1"), 1.0)
}

pub fn desk_grid() -> GridConfig {
    GridConfig {
        density: 64.0,
        chebyshev_points: 33,
        horizon: 100.0,
    }
}

pub fn run(eq: &AbelEquation, y0: f64, t_end: f64) -> Trajectory {
    solve_ivp(eq, 0.0, y0, t_end, &SolveOptions::default()).unwrap()
}

pub fn evenly_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Smallest and largest sample of a completed trajectory.
pub fn range(tr: &Trajectory) -> (f64, f64) {
    assert_eq!(tr.status, Status::Completed);
    tr.ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)))
}
