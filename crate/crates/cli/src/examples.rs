//! The worked examples, with embedded configs.

use std::path::Path;

use abel_core::certificate::{Certificate, Envelope, TheoremId};
use abel_core::closed::{is_periodic, solve_closed, Strategy};
use abel_core::integrate::{solve_ivp, sweep, Status};
use abel_core::Expr;
use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use crate::commands::{certificate_for, describe};
use crate::config::RunConfig;
use crate::output::{ensure_dir, write_effective_config, write_json, write_sweep, write_trajectory, PlotScript};
use crate::{exit, GlobalArgs};

/// Slack allowed when comparing integrated samples with an envelope.
const ENVELOPE_SLACK: f64 = 1e-6;
const INITIAL_VALUES: usize = 20;
const T_END: f64 = 50.0;
/// `|y(2T) - gamma*|` allowed for the periodic extension.
const PERIODIC_SLACK: f64 = 1e-7;

enum Check {
    /// Integrate initial values across the certificate's range and compare
    /// with its envelope.
    Envelope(TheoremId),
    /// Bisect for a closed solution and extend it over a second period.
    Closed(Strategy),
}

struct Example {
    id: &'static str,
    title: &'static str,
    config: &'static str,
    theorems: &'static [TheoremId],
    check: Check,
}

const EXAMPLES: [Example; 5] = [
    Example {
        id: "3.1",
        title: "y' - y^3 + y - lambda sin^2 t = 0, lambda = 2 sqrt(3)/9",
        config: include_str!("../configs/example-3.1.toml"),
        theorems: &[TheoremId::Thm31, TheoremId::Thm41],
        check: Check::Envelope(TheoremId::Thm31),
    },
    Example {
        id: "3.2",
        title: "y' - y^3 + y + lambda sin^2 t = 0, lambda = 2 sqrt(3)/9",
        config: include_str!("../configs/example-3.2.toml"),
        theorems: &[TheoremId::Thm32, TheoremId::Thm42],
        check: Check::Envelope(TheoremId::Thm32),
    },
    Example {
        id: "3.3",
        title: "y' - y^3 + 3y^2 + 3y - 3 - mu sin t = 0",
        config: include_str!("../configs/example-3.3.toml"),
        theorems: &[TheoremId::Thm33],
        check: Check::Envelope(TheoremId::Thm33),
    },
    Example {
        id: "3.4",
        title: "y' + mu sin t y^3 + 3y^2 + 3y + lambda(t) = 0",
        config: include_str!("../configs/example-3.4.toml"),
        theorems: &[TheoremId::Thm35],
        check: Check::Envelope(TheoremId::Thm35),
    },
    Example {
        id: "5.1",
        title: "closed solution from the reference y1 = -1",
        config: include_str!("../configs/example-5.1.toml"),
        theorems: &[TheoremId::Cor51, TheoremId::Cor52],
        check: Check::Closed(Strategy::Cor52),
    },
];

pub fn ids() -> Vec<&'static str> {
    EXAMPLES.iter().map(|e| e.id).collect()
}

/// The embedded config of an example, with `mu` substituted where the
/// example has that parameter.
pub fn config(id: &str, mu: Option<f64>) -> Result<RunConfig> {
    let Some(ex) = EXAMPLES.iter().find(|e| e.id == id) else {
        bail!("unknown example `{id}` (known: {})", ids().join(", "));
    };
    let mut cfg = RunConfig::from_toml(ex.config)?;
    if let Some(mu) = mu {
        match id {
            "3.3" => cfg.equation.d = Expr::parse(&format!("-3-({mu:e})*sin(t)"))?,
            "3.4" => cfg.equation.a = Expr::parse(&format!("({mu:e})*sin(t)"))?,
            _ => bail!("example {id} has no parameter mu"),
        }
        cfg.equation.label = format!("{} (mu = {mu})", cfg.equation.label);
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conclusion {
    pub name: String,
    pub verified: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub example: String,
    pub title: String,
    pub conclusions: Vec<Conclusion>,
}

impl Summary {
    pub fn verified(&self) -> bool {
        self.conclusions.iter().all(|c| c.verified)
    }

    fn push(&mut self, name: impl Into<String>, verified: bool, detail: impl Into<String>) {
        self.conclusions.push(Conclusion {
            name: name.into(),
            verified,
            detail: detail.into(),
        });
    }
}

pub fn run(id: &str, mu: Option<f64>, g: &GlobalArgs) -> Result<i32> {
    let mut cfg = config(id, mu)?;
    let ex = EXAMPLES.iter().find(|e| e.id == id).expect("checked by config");
    let mut o = g.overrides();
    o.out = Some(g.out.clone().unwrap_or_else(|| format!("out/example-{id}").into()));
    cfg.apply(&o)?;
    let dir = cfg.output_dir();
    ensure_dir(&dir)?;
    write_effective_config(&dir, &cfg)?;

    let mut summary = Summary {
        example: id.to_string(),
        title: ex.title.to_string(),
        conclusions: Vec::new(),
    };
    let mut certs = Vec::new();
    for &th in ex.theorems {
        let cert = certificate_for(&cfg, th)?;
        let file = format!("certificate-{th}.json");
        write_json(&dir.join(&file), &cert)?;
        summary.push(format!("{th} hypotheses hold"), cert.holds(), format!("{} ({file})", describe(&cert.verdict)));
        certs.push(cert);
    }
    let mut plot = PlotScript::new(format!("Example {id}: {}", ex.title));
    match ex.check {
        Check::Envelope(th) => {
            let cert = &certs[ex.theorems.iter().position(|&t| t == th).expect("listed")];
            envelope_check(&cfg, cert, &dir, &mut summary, &mut plot)?;
        }
        Check::Closed(strategy) => closed_check(&cfg, strategy, &dir, &mut summary, &mut plot)?,
    }
    plot.write(&dir.join("plot.gp"))?;
    write_json(&dir.join("summary.json"), &summary)?;

    for c in &summary.conclusions {
        println!("{} {}: {}", if c.verified { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    println!("outputs in {}", dir.display());
    Ok(if summary.verified() { exit::OK } else { exit::FAILS })
}

fn constant(samples: &Option<Vec<[f64; 2]>>) -> Option<f64> {
    let s = samples.as_ref()?;
    let v = s.first()?[1];
    s.iter().all(|p| p[1] == v).then_some(v)
}

fn envelope_check(cfg: &RunConfig, cert: &Certificate, dir: &Path, summary: &mut Summary, plot: &mut PlotScript) -> Result<()> {
    let name = format!("solutions stay in the {} envelope", cert.theorem);
    let (Some([lo, hi]), Some(env)) = (cert.initial_values, cert.envelope.as_ref()) else {
        summary.push(name, false, "certificate has no envelope");
        return Ok(());
    };
    let t0 = cfg.interval.t0;
    let t_end = (t0 + T_END).min(cfg.finite_end());
    let name = format!("solutions with y({t0}) in [{lo:.6}, {hi:.6}] stay in the envelope up to t={t_end}");
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut failure = None;
    for k in 0..INITIAL_VALUES {
        let y0 = lo + (hi - lo) * k as f64 / (INITIAL_VALUES - 1) as f64;
        let tr = solve_ivp(&cfg.equation, t0, y0, t_end, &cfg.solver)?;
        let file = format!("traj-{k:02}.csv");
        write_trajectory(&dir.join(&file), &tr)?;
        plot.series.push((file, format!("y0 = {y0:.4}")));
        if tr.status != Status::Completed {
            failure.get_or_insert(format!("y0={y0}: {:?}", tr.status));
            continue;
        }
        for (t, y) in tr.samples() {
            let below = env.lower.as_deref().and_then(|s| Envelope::bound_at(s, t)).map_or(f64::NEG_INFINITY, |l| l - y);
            let above = env.upper.as_deref().and_then(|s| Envelope::bound_at(s, t)).map_or(f64::NEG_INFINITY, |u| y - u);
            let excess = below.max(above);
            worst = worst.max(excess);
            if excess > ENVELOPE_SLACK {
                failure.get_or_insert(format!("y0={y0}: y({t})={y} leaves the envelope by {excess:e}"));
            }
        }
    }
    if let Some(l) = constant(&env.lower) {
        plot.levels.push((l, "lower bound".into()));
    }
    if let Some(u) = constant(&env.upper) {
        plot.levels.push((u, "upper bound".into()));
    }
    match failure {
        Some(f) => summary.push(name, false, f),
        None => summary.push(
            name,
            true,
            format!("{INITIAL_VALUES} trajectories, largest excess over the envelope {worst:.2e} (slack {ENVELOPE_SLACK:e})"),
        ),
    }
    Ok(())
}

fn closed_check(cfg: &RunConfig, strategy: Strategy, dir: &Path, summary: &mut Summary, plot: &mut PlotScript) -> Result<()> {
    let t0 = cfg.interval.t0;
    let t1 = cfg.period_end()?;
    let opts = cfg.find_options();
    let w = cfg.closed_witnesses(t1)?;
    let name = format!("{strategy} yields a closed solution on [{t0}, {t1:.6}]");
    let r = match solve_closed(&cfg.equation, t0, t1, strategy, &w, &cfg.certify_config(), &opts) {
        Ok(r) => r,
        Err(e) => {
            summary.push(name, false, e.to_string());
            return Ok(());
        }
    };
    write_json(&dir.join("closed.json"), &r)?;
    write_trajectory(&dir.join("closed-traj.csv"), &r.trajectory)?;
    plot.series.push(("closed-traj.csv".into(), format!("closed, gamma* = {:.6}", r.gamma_star)));
    summary.push(
        name,
        r.residual <= opts.tol_closed,
        format!("gamma*={} residual {:.2e} after {} bisections", r.gamma_star, r.residual, r.iterations),
    );

    // displacement across the certified bracket, for the record
    if let Some(first) = r.bracket_history.first() {
        let gammas: Vec<f64> = (0..41).map(|k| first.xi + (first.eta - first.xi) * k as f64 / 40.0).collect();
        write_sweep(&dir.join("sweep.csv"), &sweep(&cfg.equation, t0, t1, &gammas, &opts.solve)?)?;
    }

    let period = t1 - t0;
    let name = format!("the closed solution extends to a solution returning to gamma* at t={:.6}", t0 + 2.0 * period);
    if !is_periodic(&cfg.equation, t0, period, 256)? {
        summary.push(name, false, "coefficients are not periodic with this period");
        return Ok(());
    }
    let tr = solve_ivp(&cfg.equation, t0, r.gamma_star, t0 + 2.0 * period, &opts.solve)?;
    write_trajectory(&dir.join("closed-two-periods.csv"), &tr)?;
    let miss = (tr.y_last() - r.gamma_star).abs();
    summary.push(
        name,
        tr.is_completed() && miss <= PERIODIC_SLACK,
        format!("|y(2T) - gamma*| = {miss:.2e} (allowed {PERIODIC_SLACK:e})"),
    );
    Ok(())
}
