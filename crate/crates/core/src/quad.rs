//! Weighted cumulative quadrature on a grid.
//!
//! For a rate `w` and integrand `f` this computes, at every grid point `g_k`,
//!
//! ```text
//! I(g_k) = int_{g_0}^{g_k} w
//! S(g_k) = int_{g_0}^{g_k} exp(I(tau)) f(tau) dtau
//! ```
//!
//! `S` is kept as `mantissa * exp(scale)` so weights like `exp(12 t)` over
//! long horizons do not overflow.

use rayon::prelude::*;

use crate::expr::EvalError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("integrand is not finite at t={t}")]
    NonFinite { t: f64 },
    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    NotConverged { a: f64, b: f64 },
    #[error("grid refinement changed the integral at t={t} by {change:e} (relative)")]
    Unstable { t: f64, change: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Per-panel tolerance relative to the integral of `|f|` over the panel.
    pub rel_tol: f64,
    pub max_depth: u32,
    /// Allowed change under 2x grid refinement, relative to the running mass.
    pub guard: f64,
    /// Integrands below this magnitude count as rounding noise in the guard.
    pub noise_floor: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_depth: 40,
            guard: 1e-8,
            noise_floor: 1e-12,
        }
    }
}

/// `mantissa * exp(scale)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mantissa: f64,
    pub scale: f64,
}

impl Scaled {
    pub const ZERO: Scaled = Scaled {
        mantissa: 0.0,
        scale: 0.0,
    };

    /// May be infinite when the true value exceeds the double range.
    pub fn value(self) -> f64 {
        if self.mantissa == 0.0 {
            0.0
        } else {
            self.mantissa * self.scale.exp()
        }
    }

    pub fn ln_abs(self) -> f64 {
        self.mantissa.abs().ln() + self.scale
    }

    pub fn times_exp(self, x: f64) -> Scaled {
        Scaled {
            mantissa: self.mantissa,
            scale: self.scale + x,
        }
    }

    /// `self + delta * exp(ln_factor)`
    fn add(self, delta: f64, ln_factor: f64) -> Scaled {
        let s = self.scale.max(ln_factor).max(0.0);
        Scaled {
            mantissa: self.mantissa * (self.scale - s).exp() + delta * (ln_factor - s).exp(),
            scale: s,
        }
    }
}

fn checked<F>(f: &F, t: f64) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let v = f(t)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QuadError::NonFinite { t })
    }
}

/// Adaptive Simpson on `[a, b]`; the tolerance is relative to the Simpson
/// estimate of `int |f|`, but never below `noise_floor * (b - a)`.
pub fn simpson<F>(f: &F, a: f64, b: f64, o: &QuadOptions) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, QuadError>,
{
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a)?, f(m)?, f(b)?);
    let h6 = (b - a) / 6.0;
    let whole = h6 * (fa + 4.0 * fm + fb);
    let mass = h6 * (fa.abs() + 4.0 * fm.abs() + fb.abs());
    let tol = (o.rel_tol * mass).max(o.noise_floor * (b - a)).max(f64::MIN_POSITIVE);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, o.max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, QuadError>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let floor = 4.0 * f64::EPSILON * (left.abs() + right.abs());
    if delta.abs() <= 15.0 * tol.max(floor) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || m <= a || m >= b {
        return Err(QuadError::NotConverged { a, b });
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

const GL_NODE: f64 = 0.774_596_669_241_483_4; // sqrt(3/5)

/// Three-point Gauss-Legendre for `int_a^b w`.
fn gauss3<W>(w: &W, a: f64, b: f64) -> Result<f64, QuadError>
where
    W: Fn(f64) -> Result<f64, EvalError>,
{
    if a == b {
        return Ok(0.0);
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let s = 5.0 / 9.0 * checked(w, mid - half * GL_NODE)?
        + 8.0 / 9.0 * checked(w, mid)?
        + 5.0 / 9.0 * checked(w, mid + half * GL_NODE)?;
    Ok(half * s)
}

struct Panel {
    rate_integral: f64,
    weighted: f64,
    mass: f64,
}

fn panel<W, F>(w: &W, f: &F, a: f64, b: f64, o: &QuadOptions) -> Result<Panel, QuadError>
where
    W: Fn(f64) -> Result<f64, EvalError>,
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let rate_integral = simpson(&|t| checked(w, t), a, b, o)?;
    let g = |t: f64| -> Result<f64, QuadError> {
        let v = checked(f, t)?;
        if v == 0.0 {
            return Ok(0.0);
        }
        Ok(gauss3(w, a, t)?.exp() * v)
    };
    let weighted = simpson(&g, a, b, o)?;
    let m = 0.5 * (a + b);
    let mass = (b - a) / 6.0 * (g(a)?.abs() + 4.0 * g(m)?.abs() + g(b)?.abs());
    Ok(Panel {
        rate_integral,
        weighted,
        mass,
    })
}

/// Cumulative rate integral and weighted integral on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cumulative {
    pub grid: Vec<f64>,
    /// `I(g_k)`; the weight is `exp` of this.
    pub log_weight: Vec<f64>,
    pub integral: Vec<Scaled>,
    /// Running `int exp(I) |f|`, the reference magnitude for the refinement guard.
    pub mass: Vec<Scaled>,
}

impl Cumulative {
    /// One pass on `grid`, no refinement guard.
    pub fn compute<W, F>(grid: &[f64], w: &W, f: &F, o: &QuadOptions) -> Result<Self, QuadError>
    where
        W: Fn(f64) -> Result<f64, EvalError> + Sync,
        F: Fn(f64) -> Result<f64, EvalError> + Sync,
    {
        assert!(!grid.is_empty(), "empty quadrature grid");
        let panels: Vec<Panel> = grid
            .par_windows(2)
            .map(|p| panel(w, f, p[0], p[1], o))
            .collect::<Result<_, _>>()?;
        let n = grid.len();
        let mut log_weight = Vec::with_capacity(n);
        let mut integral = Vec::with_capacity(n);
        let mut mass = Vec::with_capacity(n);
        let (mut i, mut s, mut m) = (0.0, Scaled::ZERO, Scaled::ZERO);
        log_weight.push(i);
        integral.push(s);
        mass.push(m);
        for p in &panels {
            s = s.add(p.weighted, i);
            m = m.add(p.mass, i);
            i += p.rate_integral;
            log_weight.push(i);
            integral.push(s);
            mass.push(m);
        }
        Ok(Self {
            grid: grid.to_vec(),
            log_weight,
            integral,
            mass,
        })
    }

    /// [`Cumulative::compute`] plus a check that halving every panel moves
    /// neither `I` nor `S` by more than `o.guard` relative. Values returned
    /// come from the refined pass.
    pub fn guarded<W, F>(grid: &[f64], w: &W, f: &F, o: &QuadOptions) -> Result<Self, QuadError>
    where
        W: Fn(f64) -> Result<f64, EvalError> + Sync,
        F: Fn(f64) -> Result<f64, EvalError> + Sync,
    {
        let coarse = Self::compute(grid, w, f, o)?;
        let mut fine_grid = Vec::with_capacity(2 * grid.len());
        for p in grid.windows(2) {
            fine_grid.push(p[0]);
            fine_grid.push(0.5 * (p[0] + p[1]));
        }
        fine_grid.push(grid[grid.len() - 1]);
        let fine = Self::compute(&fine_grid, w, f, o)?;

        let mut out = Self {
            grid: grid.to_vec(),
            log_weight: Vec::with_capacity(grid.len()),
            integral: Vec::with_capacity(grid.len()),
            mass: Vec::with_capacity(grid.len()),
        };
        let mut i_ref: f64 = 0.0;
        // trapezoid estimate of int exp(I), the scale of a unit integrand
        let mut unit = Scaled::ZERO;
        for k in 0..grid.len() {
            if k > 0 {
                let (i0, i1) = (fine.log_weight[2 * (k - 1)], fine.log_weight[2 * k]);
                let h = grid[k] - grid[k - 1];
                unit = unit.add(0.5 * h * (1.0 + (i1 - i0).exp()), i0);
            }
            let j = 2 * k;
            let (ic, i_f) = (coarse.log_weight[k], fine.log_weight[j]);
            i_ref = i_ref.max(ic.abs());
            let i_change = (ic - i_f).abs() / (1.0 + i_ref);
            if i_change > o.guard {
                return Err(QuadError::Unstable { t: grid[k], change: i_change });
            }
            // allows guard * mass + noise_floor * unit
            let reference = fine.mass[j].add(o.noise_floor / o.guard * unit.mantissa, unit.scale);
            let change = relative_change(coarse.integral[k], fine.integral[j], reference);
            if change > o.guard {
                return Err(QuadError::Unstable { t: grid[k], change });
            }
            out.log_weight.push(i_f);
            out.integral.push(fine.integral[j]);
            out.mass.push(fine.mass[j]);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.log_weight[k].exp()
    }

    /// `offset + sign * S(g_k)`, possibly infinite but never NaN.
    pub fn shifted(&self, k: usize, offset: f64, sign: f64) -> f64 {
        let s = self.integral[k].value();
        if s.is_infinite() {
            return sign * s;
        }
        offset + sign * s
    }
}

fn relative_change(a: Scaled, b: Scaled, reference: Scaled) -> f64 {
    if a.mantissa == 0.0 && b.mantissa == 0.0 {
        return 0.0;
    }
    let s = a.scale.max(b.scale);
    let diff = (a.mantissa * (a.scale - s).exp() - b.mantissa * (b.scale - s).exp()).abs();
    if diff == 0.0 {
        return 0.0;
    }
    if reference.mantissa == 0.0 {
        return f64::INFINITY;
    }
    (diff.ln() + s - reference.ln_abs()).exp()
}

/// `b^2 / a`, zero wherever `b` vanishes.
pub fn ratio(b: f64, a: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        b * b / a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::EvalErrorKind;

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    }

    #[test]
    fn simpson_polynomial_and_trig() {
        let o = QuadOptions::default();
        let v = simpson(&|t: f64| Ok(t * t * t), 0.0, 2.0, &o).unwrap();
        assert!((v - 4.0).abs() < 1e-14);
        let v = simpson(&|t: f64| Ok(t.sin()), 0.0, std::f64::consts::PI, &o).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_flags_non_finite() {
        let o = QuadOptions::default();
        let f = |t: f64| checked(&|t: f64| Ok(1.0 / (t * t)), t);
        assert!(matches!(simpson(&f, 0.0, 1.0, &o), Err(QuadError::NonFinite { .. })));
    }

    #[test]
    fn exponential_weight_against_closed_form() {
        // w = 1, f = sin^2: S(t) = int_0^t e^tau sin^2 tau
        let g = grid(0.0, std::f64::consts::PI, 64);
        let c = Cumulative::guarded(&g, &|_| Ok(1.0), &|t: f64| Ok(t.sin().powi(2)), &QuadOptions::default())
            .unwrap();
        let exact = |t: f64| {
            // antiderivative of e^t sin^2 t = e^t/2 - e^t (cos 2t + 2 sin 2t)/10
            let f = |t: f64| t.exp() / 2.0 - t.exp() * ((2.0 * t).cos() + 2.0 * (2.0 * t).sin()) / 10.0;
            f(t) - f(0.0)
        };
        for (k, &t) in g.iter().enumerate() {
            assert!((c.integral[k].value() - exact(t)).abs() < 1e-11, "t={t}");
            assert!((c.log_weight[k] - t).abs() < 1e-13);
        }
        let last = c.integral[g.len() - 1].value();
        assert!((last - 0.4 * (std::f64::consts::PI.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn huge_weights_stay_representable() {
        // W = e^{12 t} on [0, 100]: e^1200 overflows a double
        let g = grid(0.0, 100.0, 2000);
        let c = Cumulative::compute(&g, &|_| Ok(12.0), &|_| Ok(1.0), &QuadOptions::default()).unwrap();
        let k = g.len() - 1;
        assert!(c.weight(k).is_infinite());
        // S(100) = (e^1200 - 1)/12, so ln S = 1200 - ln 12
        let ln = c.integral[k].ln_abs();
        assert!((ln - (1200.0 - 12f64.ln())).abs() < 1e-9, "{ln}");
        assert_eq!(c.shifted(k, -1e300, 1.0), f64::INFINITY);
        assert_eq!(c.shifted(k, 5.0, -1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn non_integrable_rate_is_rejected() {
        // b^2/a with a = t^2, b = 1 near 0
        let g = grid(0.0, 1.0, 100);
        let w = |t: f64| Ok(-ratio(1.0, t * t));
        let r = Cumulative::guarded(&g, &w, &|_| Ok(1.0), &QuadOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn evaluation_errors_propagate() {
        let g = grid(0.0, 1.0, 4);
        let w = |_t: f64| Err(EvalError::new(EvalErrorKind::DivisionByZero, "1/0"));
        assert!(matches!(
            Cumulative::compute(&g, &w, &|_| Ok(1.0), &QuadOptions::default()),
            Err(QuadError::Eval(_))
        ));
    }

    #[test]
    fn ratio_is_zero_where_b_vanishes() {
        assert_eq!(ratio(0.0, 0.0), 0.0);
        assert_eq!(ratio(2.0, -4.0), -1.0);
    }
}
