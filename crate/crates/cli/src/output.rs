//! Output files and their loaders.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use abel_core::integrate::{read_csv, write_csv, Displacement, SweepPoint, Trajectory};
use abel_core::io::{float, to_json};
use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_json(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_trajectory(path: &Path, tr: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?);
    write_csv(tr, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    read_csv(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

/// Writes the config actually used (file plus overrides) as `config.toml`.
pub fn write_effective_config(dir: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Sweep CSV: `gamma,outcome,value,message` with outcome one of `value`,
/// `blowup` (value is `t_escape`) or `domain_error` (value is `t`).
pub fn write_sweep(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?);
    writeln!(w, "gamma,outcome,value,message")?;
    for p in points {
        let g = float(p.gamma);
        match &p.outcome {
            Displacement::Value { value } => writeln!(w, "{g},value,{},", float(*value))?,
            Displacement::BlowUp { t_escape } => writeln!(w, "{g},blowup,{},", float(*t_escape))?,
            Displacement::DomainError { t, message } => {
                writeln!(w, "{g},domain_error,{},{}", float(*t), message.replace([',', '\n'], ";"))?
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepPoint>> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != "gamma,outcome,value,message" {
                bail!("{}: unexpected header `{line}`", path.display());
            }
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, ',').collect();
        let [g, kind, v, msg] = fields[..] else {
            bail!("{}: line {}: expected 4 fields", path.display(), i + 1);
        };
        let num = |s: &str| s.parse::<f64>().with_context(|| format!("{}: line {}: bad number `{s}`", path.display(), i + 1));
        let (gamma, v) = (num(g)?, num(v)?);
        let outcome = match kind {
            "value" => Displacement::Value { value: v },
            "blowup" => Displacement::BlowUp { t_escape: v },
            "domain_error" => Displacement::DomainError {
                t: v,
                message: msg.to_string(),
            },
            other => bail!("{}: line {}: unknown outcome `{other}`", path.display(), i + 1),
        };
        out.push(SweepPoint { gamma, outcome });
    }
    Ok(out)
}

/// A gnuplot script drawing trajectory CSVs and constant reference lines.
pub struct PlotScript {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub series: Vec<(String, String)>,
    pub levels: Vec<(f64, String)>,
}

impl PlotScript {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            xlabel: "t".into(),
            ylabel: "y".into(),
            series: Vec::new(),
            levels: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("# gnuplot script; run from this directory: gnuplot -p plot.gp\n");
        s.push_str("set datafile separator ','\n");
        s.push_str("set datafile commentschars '#'\n");
        s.push_str(&format!("set title \"{}\"\n", self.title));
        s.push_str(&format!("set xlabel \"{}\"\nset ylabel \"{}\"\n", self.xlabel, self.ylabel));
        s.push_str("set key outside right\n");
        let mut parts: Vec<String> = self
            .series
            .iter()
            .map(|(file, label)| format!("'{file}' every ::1 using 1:2 with lines title \"{label}\""))
            .collect();
        parts.extend(
            self.levels
                .iter()
                .map(|(y, label)| format!("{y:.17} with lines dashtype 2 lc rgb 'black' title \"{label}\"")),
        );
        if !parts.is_empty() {
            s.push_str("plot ");
            s.push_str(&parts.join(", \\\n     "));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).with_context(|| format!("writing {}", path.display()))
    }
}
