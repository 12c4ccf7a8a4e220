//! Run configuration: one TOML file per equation.
//!
//! ```toml
//! [equation]
//! a = "-1"
//! b = "0"
//! c = "1"
//! d = "-0.3849*sin(t)^2"
//!
//! [interval]
//! t0 = 0.0          # t1 omitted: [t0, +inf)
//!
//! [references.y1]   # y1' + a1 y1^3 + ... = 0 and its solution
//! a = "-1"
//! b = "0"
//! c = "1"
//! d = "0"
//! solution = "0"    # or give witnesses.y1_init to integrate it
//!
//! [witnesses]
//! eta = "sqrt(3)/3"
//! gamma = 0.0
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use abel_core::certificate::{CertifyConfig, GridConfig, ReferenceSolution, Witness};
use abel_core::closed::{ClosedWitnesses, FindOptions};
use abel_core::compare::Side;
use abel_core::global::Partition;
use abel_core::integrate::SolveOptions;
use abel_core::{AbelEquation, Expr, Interval};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub equation: AbelEquation,
    pub interval: IntervalSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub references: BTreeMap<String, ReferenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    #[serde(default)]
    pub witnesses: WitnessSpec,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub closed: ClosedSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub t0: f64,
    /// Omitted means `+inf`; certificates then stop at `grid.horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default)]
    pub closed_right: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub a: Expr,
    pub b: Expr,
    pub c: Expr,
    pub d: Expr,
    /// Closed-form solution; without it the reference is integrated from
    /// `witnesses.<name>_init`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<Expr>,
}

/// Either explicit points (`+inf` appended when missing) or a period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y1_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y2_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    /// `below` or `above`, for the one-sided comparison with `a > 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosedSpec {
    pub tol_closed: f64,
    pub tol_gamma: f64,
    pub max_iter: usize,
    /// End of the closed-solution interval; defaults to `interval.t1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

impl Default for ClosedSpec {
    fn default() -> Self {
        let f = FindOptions::default();
        Self {
            tol_closed: f.tol_closed,
            tol_gamma: f.tol_gamma,
            max_iter: f.max_iter,
            period: None,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub grid_density: Option<f64>,
    pub horizon: Option<f64>,
    pub tol: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.interval()?;
        self.solver.validate()?;
        for (name, r) in &self.references {
            if name != "y1" && name != "y2" {
                bail!("unknown reference `references.{name}` (expected y1 or y2)");
            }
            if r.solution.is_none() && self.init_for(name).is_none() {
                bail!("`references.{name}` needs `solution` or `witnesses.{name}_init`");
            }
        }
        if !(self.grid.density > 0.0 && self.grid.horizon > 0.0) {
            bail!("grid density and horizon must be positive");
        }
        if let Some(p) = &self.partition {
            self.partition_from(p)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.outputs = Some(out.clone());
        }
        if let Some(d) = o.grid_density {
            self.grid.density = d;
        }
        if let Some(h) = o.horizon {
            self.grid.horizon = h;
        }
        if let Some(tol) = o.tol {
            self.solver.rel_tol = tol;
        }
        self.validate()
    }

    pub fn interval(&self) -> Result<Interval> {
        let t1 = self.interval.t1.unwrap_or(f64::INFINITY);
        Ok(Interval::new(self.interval.t0, t1, self.interval.closed_right)?)
    }

    /// Finite end used by integration: `t1` when finite, else `t0 + horizon`.
    pub fn finite_end(&self) -> f64 {
        match self.interval.t1 {
            Some(t1) if t1.is_finite() => t1,
            _ => self.interval.t0 + self.grid.horizon,
        }
    }

    /// End of the closed-solution interval.
    pub fn period_end(&self) -> Result<f64> {
        match (self.closed.period, self.interval.t1) {
            (Some(p), _) => Ok(p),
            (None, Some(t1)) if t1.is_finite() => Ok(t1),
            _ => bail!("closed solutions need `closed.period` or a finite `interval.t1`"),
        }
    }

    pub fn certify_config(&self) -> CertifyConfig {
        CertifyConfig {
            grid: self.grid,
            ..Default::default()
        }
    }

    pub fn find_options(&self) -> FindOptions {
        FindOptions {
            tol_closed: self.closed.tol_closed,
            tol_gamma: self.closed.tol_gamma,
            max_iter: self.closed.max_iter,
            solve: self.solver,
        }
    }

    fn init_for(&self, name: &str) -> Option<f64> {
        match name {
            "y1" => self.witnesses.y1_init,
            "y2" => self.witnesses.y2_init,
            _ => None,
        }
    }

    /// The named reference solution, integrated over `[t0, end]` when it has
    /// no closed form.
    pub fn reference(&self, name: &'static str, end: f64) -> Result<ReferenceSolution> {
        let spec = self.references.get(name).ok_or_else(|| missing(reference_field(name)))?;
        let eq = AbelEquation::new(spec.a.clone(), spec.b.clone(), spec.c.clone(), spec.d.clone()).with_label(name);
        match (&spec.solution, self.init_for(name)) {
            (Some(sol), _) => Ok(ReferenceSolution::new(eq, sol.clone())),
            (None, Some(y0)) => ReferenceSolution::integrated(eq, y0, self.interval.t0, end, &self.solver)
                .with_context(|| format!("integrating reference {name}")),
            (None, None) => Err(missing(if name == "y1" { "witnesses.y1_init" } else { "witnesses.y2_init" })),
        }
    }

    pub fn eta(&self) -> Result<Witness> {
        self.witnesses.eta.clone().map(Witness::from).ok_or_else(|| missing("witnesses.eta"))
    }

    pub fn side(&self) -> Result<Side> {
        self.witnesses.side.ok_or_else(|| missing("witnesses.side"))
    }

    pub fn partition(&self) -> Result<Partition> {
        let spec = self.partition.as_ref().ok_or_else(|| missing("partition"))?;
        self.partition_from(spec)
    }

    fn partition_from(&self, spec: &PartitionSpec) -> Result<Partition> {
        match (&spec.points, spec.period) {
            (Some(points), None) => {
                let mut points = points.clone();
                if points.last() != Some(&f64::INFINITY) {
                    points.push(f64::INFINITY);
                }
                Ok(Partition::finite(points)?)
            }
            (None, Some(period)) => Ok(Partition::periodic(self.interval.t0, period)?),
            _ => bail!("partition needs exactly one of `points` or `period`"),
        }
    }

    /// Witnesses for the closed-solution strategies; references are built
    /// only when configured.
    pub fn closed_witnesses(&self, end: f64) -> Result<ClosedWitnesses> {
        let mut w = ClosedWitnesses {
            eta: self.witnesses.eta.clone().map(Witness::from),
            gamma1: self.witnesses.gamma1,
            gamma2: self.witnesses.gamma2,
            ..Default::default()
        };
        if self.references.contains_key("y1") {
            w.y1 = Some(self.reference("y1", end)?);
        }
        if self.references.contains_key("y2") {
            w.y2 = Some(self.reference("y2", end)?);
        }
        Ok(w)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.outputs.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn reference_field(name: &str) -> &'static str {
    if name == "y1" {
        "references.y1"
    } else {
        "references.y2"
    }
}

/// Error for an absent witness; the message names the config field.
#[derive(Debug, thiserror::Error)]
#[error("missing witness `{0}` in the config")]
pub struct MissingWitness(pub &'static str);

pub fn missing(field: &'static str) -> anyhow::Error {
    anyhow!(MissingWitness(field))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = r#"
[equation]
a = "-1"
b = "0"
c = "1"
d = "-0.3849*sin(t)^2"

[interval]
t0 = 0.0

[references.y1]
a = "-1"
b = "0"
c = "1"
d = "0"
solution = "0"

[witnesses]
eta = "sqrt(3)/3"
gamma = 0.0

[partition]
points = [0.0, 3.0, 6.0]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml(DEMO).unwrap();
        assert_eq!(cfg.interval().unwrap().t1, f64::INFINITY);
        assert_eq!(cfg.witnesses.gamma, Some(0.0));
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partition_gets_infinity_appended() {
        let cfg = RunConfig::from_toml(DEMO).unwrap();
        assert_eq!(cfg.partition().unwrap().panels(10.0).len(), 3);
    }

    #[test]
    fn bad_expression_reports_line() {
        let err = RunConfig::from_toml(&DEMO.replace("\"-0.3849*sin(t)^2\"", "\"-0.3849*sin(t\"")).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 6"), "{msg}");
        assert!(msg.contains("at byte"), "{msg}");
    }

    #[test]
    fn missing_witness_names_field() {
        let cfg = RunConfig::from_toml(&DEMO.replace("eta = \"sqrt(3)/3\"\n", "")).unwrap();
        let err = cfg.eta().unwrap_err();
        assert!(err.to_string().contains("witnesses.eta"));
        assert!(err.downcast_ref::<MissingWitness>().is_some());
    }

    #[test]
    fn reference_without_solution_needs_init() {
        let err = RunConfig::from_toml(&DEMO.replace("solution = \"0\"\n", "")).unwrap_err();
        assert!(err.to_string().contains("y1_init"));
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::from_toml(DEMO).unwrap();
        cfg.apply(&Overrides {
            horizon: Some(20.0),
            tol: Some(1e-7),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.finite_end(), 20.0);
        assert_eq!(cfg.solver.rel_tol, 1e-7);
    }
}
