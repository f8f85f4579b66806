//! One runner per command. Each writes CSV/JSON reports into its directory and records
//! scalar metrics and threshold checks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use degenlab_core::discretization::{Mesh, Potentials};
use degenlab_core::dtn::DtnCache;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig};
use crate::CliError;

mod cgo;
mod pde;
mod reconstruct;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Comparison {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => value <= threshold,
            Comparison::Below => value < threshold,
            Comparison::AtLeast => value >= threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::AtMost => "<=",
            Comparison::Below => "<",
            Comparison::AtLeast => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub experiment: String,
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}/{}: {:.4e} {} {:.4e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.experiment,
            self.name,
            self.value,
            self.comparison.symbol(),
            self.threshold
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Outcome {
    pub name: String,
    pub command: String,
    pub seconds: f64,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// State threaded through a runner.
pub(crate) struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub dir: PathBuf,
    pub cache: Option<&'a DtnCache>,
    pub out: Outcome,
}

type Res<T> = Result<T, CliError>;

impl<'a> Ctx<'a> {
    pub fn fail(&self, e: degenlab_core::Error) -> CliError {
        CliError::Experiment { experiment: self.out.name.clone(), source: e }
    }

    pub fn mesh(&self) -> Res<Arc<Mesh>> {
        self.cfg.mesh.build().map(Arc::new).map_err(|e| self.fail(e))
    }

    /// Set `i`, zero if absent.
    pub fn potentials(&self, i: usize) -> Potentials {
        self.cfg.potentials.get(i).cloned().unwrap_or_default()
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.out.metrics.insert(name.into(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        let text = text.into();
        log::warn!("{}: {text}", self.out.name);
        self.out.notes.push(text);
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, comparison: Comparison, threshold: f64) {
        let name = name.into();
        self.metric(name.clone(), value);
        let passed = value.is_finite() && comparison.holds(value, threshold);
        self.out.checks.push(Check { experiment: self.out.name.clone(), name, value, comparison, threshold, passed });
    }

    fn path(&mut self, file: &str) -> PathBuf {
        let p = self.dir.join(file);
        self.out.files.push(p.clone());
        p
    }

    pub fn csv(&mut self, file: &str, header: &[&str], rows: Vec<Vec<String>>) -> Res<()> {
        let p = self.path(file);
        degenlab_core::io::write_csv(&p, header, rows).map_err(|e| CliError::Output { path: p, source: e })
    }

    pub fn json(&mut self, file: &str, value: &impl Serialize) -> Res<()> {
        let p = self.path(file);
        let text = serde_json::to_string_pretty(value).expect("reports serialize");
        std::fs::write(&p, text).map_err(|e| CliError::Output { path: p, source: e.into() })
    }

    pub fn file(&mut self, file: &str, write: impl FnOnce(&Path) -> degenlab_core::Result<()>) -> Res<()> {
        let p = self.path(file);
        write(&p).map_err(|e| CliError::Output { path: p, source: e })
    }
}

/// Fixed-format float for CSV payloads (bitwise reproducible).
pub(crate) fn num(x: f64) -> String {
    format!("{x:.17e}")
}

pub(crate) fn run_experiment(cfg: &ExperimentConfig, name: &str, dir: &Path, cache: Option<&DtnCache>) -> Res<Outcome> {
    let t0 = Instant::now();
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output { path: dir.to_path_buf(), source: e.into() })?;
    let out = Outcome {
        name: name.to_string(),
        command: cfg.experiment.command().to_string(),
        seconds: 0.0,
        metrics: BTreeMap::new(),
        checks: vec![],
        notes: vec![],
        files: vec![],
    };
    let mut ctx = Ctx { cfg, dir: dir.to_path_buf(), cache, out };
    match &cfg.experiment {
        Experiment::Forward(f) => pde::forward(&mut ctx, f)?,
        Experiment::Dtn(d) => pde::dtn(&mut ctx, d)?,
        Experiment::Alessandrini(a) => pde::alessandrini(&mut ctx, a)?,
        Experiment::Runge(r) => pde::runge(&mut ctx, r)?,
        Experiment::CgoDecay(c) => cgo::decay(&mut ctx, c)?,
        Experiment::Carleman(c) => cgo::carleman(&mut ctx, c)?,
        Experiment::Traces(t) => cgo::traces(&mut ctx, t)?,
        Experiment::Reconstruct(r) => reconstruct::reconstruct(&mut ctx, r)?,
    }
    let summary = serde_json::json!({ "name": name, "command": ctx.out.command, "metrics": ctx.out.metrics, "checks": ctx.out.checks, "notes": ctx.out.notes });
    ctx.json("summary.json", &summary)?;
    ctx.out.seconds = t0.elapsed().as_secs_f64();
    Ok(ctx.out)
}
