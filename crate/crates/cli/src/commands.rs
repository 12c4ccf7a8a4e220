//! The verbs. Each returns an exit code; `Err` means exit 1.

use std::path::Path;

use abel_core::certificate::{Certificate, CertifyError, TheoremId, Verdict};
use abel_core::closed::{solve_closed, ClosedError, Strategy};
use abel_core::compare::{certify_thm31, certify_thm32, certify_thm33, certify_thm34, certify_thm35};
use abel_core::global::{certify_thm21, certify_thm41, certify_thm42};
use abel_core::integrate::{solve_ivp, sweep as sweep_displacements, Status};
use abel_core::closed::certify_closed;
use anyhow::{anyhow, bail, Result};

use crate::config::{missing, RunConfig};
use crate::exit;
use crate::output::{ensure_dir, write_effective_config, write_json, write_sweep, write_trajectory};

fn prepare(cfg: &RunConfig) -> Result<std::path::PathBuf> {
    let dir = cfg.output_dir();
    ensure_dir(&dir)?;
    write_effective_config(&dir, cfg)?;
    Ok(dir)
}

pub fn integrate(cfg: &RunConfig, y0: f64, t_end: Option<f64>) -> Result<i32> {
    let dir = prepare(cfg)?;
    let t_end = t_end.unwrap_or_else(|| cfg.finite_end());
    let tr = solve_ivp(&cfg.equation, cfg.interval.t0, y0, t_end, &cfg.solver)?;
    write_trajectory(&dir.join("traj.csv"), &tr)?;
    match &tr.status {
        Status::Completed => {
            println!("completed at t={} with y={}", tr.t_last(), tr.y_last());
            Ok(exit::OK)
        }
        Status::BlowUp { t_escape, direction } => {
            eprintln!("blow-up: t_escape={t_escape} direction={direction}");
            Ok(exit::BLOW_UP)
        }
        Status::DomainError { t, message } => bail!("coefficient evaluation failed at t={t}: {message}"),
    }
}

/// Maps a core missing-witness name to the config field that supplies it.
fn config_field(core: &'static str) -> &'static str {
    match core {
        "witnesses.y1" => "references.y1",
        "witnesses.y2" => "references.y2",
        other => other,
    }
}

fn certify_error(e: CertifyError) -> anyhow::Error {
    match e {
        CertifyError::MissingWitness(name) => missing(config_field(name)),
        other => anyhow!(other),
    }
}

/// Dispatches to the certifier for `id` with the witnesses from the config.
pub fn certificate_for(cfg: &RunConfig, id: TheoremId) -> Result<Certificate> {
    let interval = cfg.interval()?;
    let cc = cfg.certify_config();
    let end = cfg.finite_end();
    let gamma_or = |g: Option<f64>, name: &'static str| -> Result<f64> {
        match g {
            Some(g) => Ok(g),
            None => Ok(cfg.reference(name, end)?.at(cfg.interval.t0)?),
        }
    };
    let cert = match id {
        TheoremId::Thm21 => certify_thm21(&cfg.equation, &interval, cfg.witnesses.gamma, &cc),
        TheoremId::Thm31 | TheoremId::Thm32 => {
            let y1 = cfg.reference("y1", end)?;
            let eta = cfg.eta()?;
            let gamma = gamma_or(cfg.witnesses.gamma, "y1")?;
            if id == TheoremId::Thm31 {
                certify_thm31(&cfg.equation, &y1, &eta, gamma, &interval, &cc)
            } else {
                certify_thm32(&cfg.equation, &y1, &eta, gamma, &interval, &cc)
            }
        }
        TheoremId::Thm33 => {
            let (y1, y2) = (cfg.reference("y1", end)?, cfg.reference("y2", end)?);
            let g1 = gamma_or(cfg.witnesses.gamma1, "y1")?;
            let g2 = gamma_or(cfg.witnesses.gamma2, "y2")?;
            certify_thm33(&cfg.equation, &y1, &y2, g1, g2, &interval, &cc)
        }
        TheoremId::Thm34 => certify_thm34(&cfg.equation, &cfg.reference("y1", end)?, cfg.side()?, &interval, &cc),
        TheoremId::Thm35 => {
            let (y1, y2) = (cfg.reference("y1", end)?, cfg.reference("y2", end)?);
            certify_thm35(&cfg.equation, &y1, &y2, &interval, &cc)
        }
        TheoremId::Thm41 | TheoremId::Thm42 => {
            let eta = cfg.eta()?;
            let partition = cfg.partition()?;
            let horizon = end;
            if id == TheoremId::Thm41 {
                certify_thm41(&cfg.equation, &eta, &partition, horizon, &cc)
            } else {
                certify_thm42(&cfg.equation, &eta, &partition, horizon, &cc)
            }
        }
        _ => {
            let strategy = Strategy::from_theorem(id).expect("remaining ids are closed strategies");
            let t1 = cfg.period_end()?;
            let w = cfg.closed_witnesses(t1)?;
            certify_closed(&cfg.equation, cfg.interval.t0, t1, strategy, &w, &cc).map(|c| c.certificate)
        }
    };
    cert.map_err(certify_error)
}

pub fn verdict_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Holds => exit::OK,
        Verdict::Fails { .. } => exit::FAILS,
        Verdict::NotApplicable { .. } => exit::NOT_APPLICABLE,
    }
}

pub fn describe(v: &Verdict) -> String {
    match v {
        Verdict::Holds => "holds".into(),
        Verdict::Fails { hypothesis, t, value } => format!("fails: `{hypothesis}` at t={t} (value {value:e})"),
        Verdict::NotApplicable { reason } => format!("not applicable: {reason}"),
    }
}

pub fn certify(cfg: &RunConfig, theorem: &str) -> Result<i32> {
    let id: TheoremId = theorem.parse()?;
    let dir = prepare(cfg)?;
    let cert = certificate_for(cfg, id)?;
    write_json(&dir.join("certificate.json"), &cert)?;
    println!("{id} {}", describe(&cert.verdict));
    Ok(verdict_code(&cert.verdict))
}

pub fn find_closed(cfg: &RunConfig, strategy: &str, period: Option<f64>) -> Result<i32> {
    let strategy: Strategy = strategy.parse().map_err(|e: String| anyhow!(e))?;
    let dir = prepare(cfg)?;
    let t1 = match period {
        Some(p) => p,
        None => cfg.period_end()?,
    };
    let w = cfg.closed_witnesses(t1)?;
    let outcome = solve_closed(
        &cfg.equation,
        cfg.interval.t0,
        t1,
        strategy,
        &w,
        &cfg.certify_config(),
        &cfg.find_options(),
    );
    closed_outcome(&dir, outcome)
}

pub(crate) fn closed_outcome(dir: &Path, outcome: Result<abel_core::closed::ClosedSolutionResult, ClosedError>) -> Result<i32> {
    match outcome {
        Ok(r) => {
            write_json(&dir.join("closed.json"), &r)?;
            write_trajectory(&dir.join("closed-traj.csv"), &r.trajectory)?;
            println!(
                "closed solution gamma*={} residual={:e} after {} iterations",
                r.gamma_star, r.residual, r.iterations
            );
            Ok(exit::OK)
        }
        Err(ClosedError::NotHolds(cert)) => {
            write_json(&dir.join("certificate.json"), &cert)?;
            eprintln!("{} {}", cert.theorem, describe(&cert.verdict));
            Ok(exit::FAILS)
        }
        Err(ClosedError::NotApplicable(why)) => {
            eprintln!("not applicable: {why}");
            Ok(exit::FAILS)
        }
        Err(e @ ClosedError::BracketInvalid { .. }) => {
            eprintln!("{e}");
            Ok(exit::BRACKET_INVALID)
        }
        Err(ClosedError::Certify(e)) => Err(certify_error(e)),
        Err(e) => Err(e.into()),
    }
}

pub fn sweep(cfg: &RunConfig, from: f64, to: f64, count: usize, period: Option<f64>) -> Result<i32> {
    if !(from <= to) || count < 2 && from != to {
        bail!("sweep needs from <= to and at least two points");
    }
    let dir = prepare(cfg)?;
    let t1 = match period {
        Some(p) => p,
        None => cfg.period_end().unwrap_or_else(|_| cfg.finite_end()),
    };
    let gammas: Vec<f64> = match count {
        0 => Vec::new(),
        1 => vec![from],
        n => (0..n).map(|k| from + (to - from) * k as f64 / (n - 1) as f64).collect(),
    };
    let points = sweep_displacements(&cfg.equation, cfg.interval.t0, t1, &gammas, &cfg.solver)?;
    write_sweep(&dir.join("sweep.csv"), &points)?;
    let changes = points
        .windows(2)
        .filter(|w| match (w[0].outcome.value(), w[1].outcome.value()) {
            (Some(p), Some(q)) => p.signum() != q.signum(),
            _ => false,
        })
        .count();
    println!("{} initial values, {changes} sign changes of y(T) - gamma", points.len());
    Ok(exit::OK)
}
