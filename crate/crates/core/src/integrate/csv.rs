//! Trajectory CSV: header `t,y`, one row per sample, then a `# status=...` line.

use std::io::{self, BufRead, Write};

use super::{Stats, Status, Trajectory};
use crate::io::float;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

pub fn write_csv<W: Write>(tr: &Trajectory, mut w: W) -> io::Result<()> {
    writeln!(w, "t,y")?;
    for (t, y) in tr.samples() {
        writeln!(w, "{},{}", float(t), float(y))?;
    }
    match &tr.status {
        Status::Completed => writeln!(w, "# status=completed")?,
        Status::BlowUp { t_escape, direction } => writeln!(
            w,
            "# status=blowup t_escape={} direction={}",
            float(*t_escape),
            if *direction >= 0 { "+1" } else { "-1" }
        )?,
        Status::DomainError { t, message } => writeln!(
            w,
            "# status=domain_error t={} message={}",
            float(*t),
            message.replace('\n', " ")
        )?,
    }
    w.flush()
}

fn bad(line: usize, message: impl Into<String>) -> CsvError {
    CsvError::Format {
        line,
        message: message.into(),
    }
}

fn parse_status(line: usize, text: &str) -> Result<Status, CsvError> {
    let body = text
        .strip_prefix("# status=")
        .ok_or_else(|| bad(line, "expected `# status=...`"))?;
    let (kind, rest) = body.split_once(' ').unwrap_or((body, ""));
    let field = |key: &str| -> Result<&str, CsvError> {
        rest.split(' ')
            .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .ok_or_else(|| bad(line, format!("missing `{key}`")))
    };
    let num = |key: &str| -> Result<f64, CsvError> {
        field(key)?
            .parse::<f64>()
            .map_err(|_| bad(line, format!("`{key}` is not a number")))
    };
    match kind {
        "completed" => Ok(Status::Completed),
        "blowup" => {
            let direction = match field("direction")? {
                "+1" | "1" => 1,
                "-1" => -1,
                other => return Err(bad(line, format!("bad direction `{other}`"))),
            };
            Ok(Status::BlowUp {
                t_escape: num("t_escape")?,
                direction,
            })
        }
        "domain_error" => {
            let message = rest
                .split_once("message=")
                .map(|(_, m)| m.to_string())
                .unwrap_or_default();
            Ok(Status::DomainError { t: num("t")?, message })
        }
        other => Err(bad(line, format!("unknown status `{other}`"))),
    }
}

/// Reads a trajectory written by [`write_csv`]. Slopes are not stored, so
/// dense output on the result is piecewise linear.
pub fn read_csv<R: BufRead>(r: R) -> Result<Trajectory, CsvError> {
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut status = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let text = line.trim();
        if n == 1 {
            if text != "t,y" {
                return Err(bad(n, "expected header `t,y`"));
            }
            continue;
        }
        if text.is_empty() {
            continue;
        }
        if status.is_some() {
            return Err(bad(n, "content after status line"));
        }
        if text.starts_with('#') {
            status = Some(parse_status(n, text)?);
            continue;
        }
        let (t, y) = text.split_once(',').ok_or_else(|| bad(n, "expected `t,y`"))?;
        let t: f64 = t.trim().parse().map_err(|_| bad(n, "bad t"))?;
        let y: f64 = y.trim().parse().map_err(|_| bad(n, "bad y"))?;
        if let Some(&prev) = ts.last() {
            if !(t > prev) {
                return Err(bad(n, "t must increase"));
            }
        }
        ts.push(t);
        ys.push(y);
    }
    let status = status.ok_or_else(|| bad(0, "missing status line"))?;
    if ts.is_empty() {
        return Err(bad(0, "no samples"));
    }
    let max_abs_y = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    Ok(Trajectory {
        ts,
        ys,
        slopes: None,
        midpoints: None,
        status,
        stats: Stats {
            max_abs_y,
            ..Stats::default()
        },
    })
}
