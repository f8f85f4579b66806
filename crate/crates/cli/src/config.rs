//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use degenlab_core::cgo::{BcMode, TraceMode};
use degenlab_core::discretization::{MeshSpec, Potentials, ScalarField, WeightSpec};
use degenlab_core::reconstruct::SampleMode;
use degenlab_core::runge::{BulkTopology, DictionaryFamily};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn yes() -> bool {
    true
}

/// One experiment: shared setup plus the command-specific sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshSpec,
    pub weight: WeightSpec,
    /// One set, or two for the commands comparing potentials.
    #[serde(default)]
    pub potentials: Vec<Potentials>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "yes")]
    pub cache: bool,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Experiment {
    Forward(ForwardSweep),
    Dtn(DtnSweep),
    Alessandrini(AlessandriniSweep),
    Runge(RungeSweep),
    CgoDecay(CgoSweep),
    Carleman(CarlemanSweep),
    Traces(TraceSweep),
    Reconstruct(ReconstructSweep),
}

impl Experiment {
    pub fn command(&self) -> &'static str {
        match self {
            Experiment::Forward(_) => "forward",
            Experiment::Dtn(_) => "dtn",
            Experiment::Alessandrini(_) => "alessandrini",
            Experiment::Runge(_) => "runge",
            Experiment::CgoDecay(_) => "cgo-decay",
            Experiment::Carleman(_) => "carleman",
            Experiment::Traces(_) => "traces",
            Experiment::Reconstruct(_) => "reconstruct",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardSweep {
    #[serde(default)]
    pub lambda: f64,
    /// Dirichlet data on Σ₂.
    #[serde(default)]
    pub dirichlet: Option<ScalarField>,
    /// Expected nodal solution, checked in max norm.
    #[serde(default)]
    pub reference: Option<ScalarField>,
    #[serde(default = "ForwardSweep::reference_tol")]
    pub reference_tol: f64,
    #[serde(default)]
    pub convergence: Option<ConvergenceCheck>,
    #[serde(default)]
    pub eigen_guard: Option<EigenGuardCheck>,
}

impl ForwardSweep {
    fn reference_tol() -> f64 {
        1e-10
    }
}

/// Manufactured solution with constant `V`, `q` under uniform refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub q: f64,
    /// Number of meshes (base included).
    pub levels: usize,
    pub min_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenGuardCheck {
    /// Relative agreement of the nearest eigenvalue with a dense solve.
    #[serde(default = "EigenGuardCheck::oracle_tol")]
    pub oracle_tol: f64,
}

impl EigenGuardCheck {
    fn oracle_tol() -> f64 {
        1e-8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtnSweep {
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "DtnSweep::max_defect")]
    pub max_defect: f64,
}

impl DtnSweep {
    fn max_defect() -> f64 {
        1e-10
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlessandriniSweep {
    #[serde(default)]
    pub lambda: f64,
    /// Number of meshes (base included).
    #[serde(default = "AlessandriniSweep::levels")]
    pub levels: usize,
    /// Σ₂ data of the two problems; seeded random-smooth fields by default.
    #[serde(default)]
    pub data: Option<[ScalarField; 2]>,
    #[serde(default = "AlessandriniSweep::max_residual")]
    pub max_residual: f64,
    /// Allowed growth per refinement.
    #[serde(default = "AlessandriniSweep::slack")]
    pub slack: f64,
}

impl AlessandriniSweep {
    fn levels() -> usize {
        3
    }
    fn max_residual() -> f64 {
        1e-3
    }
    fn slack() -> f64 {
        0.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungeSweep {
    #[serde(default)]
    pub lambda: f64,
    /// Fraction of each axis covered by the centered Ω₁.
    #[serde(default = "RungeSweep::fraction")]
    pub fraction: f64,
    #[serde(default = "RungeSweep::family")]
    pub family: DictionaryFamily,
    pub sizes: Vec<usize>,
    /// Tikhonov parameter; `None` uses the library default.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub topology: BulkTopology,
    #[serde(default = "RungeSweep::span_tol")]
    pub span_tol: f64,
    #[serde(default = "RungeSweep::max_combined")]
    pub max_combined: f64,
}

impl RungeSweep {
    fn fraction() -> f64 {
        0.4
    }
    fn family() -> DictionaryFamily {
        DictionaryFamily::Hats
    }
    fn span_tol() -> f64 {
        1e-10
    }
    fn max_combined() -> f64 {
        0.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgoSweep {
    pub k: Vec<f64>,
    pub taus: Vec<f64>,
    #[serde(default)]
    pub mode: BcMode,
    /// Upper bounds on the (L²w, H¹w, L²(Σ₁)) slopes.
    #[serde(default)]
    pub max_slopes: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlemanSweep {
    /// Number of seeded random test fields.
    #[serde(default = "CarlemanSweep::fields")]
    pub fields: usize,
    pub taus: Vec<f64>,
    /// Constant potentials of the experiment.
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default = "CarlemanSweep::max_slope")]
    pub max_slope: f64,
}

impl CarlemanSweep {
    fn fields() -> usize {
        5
    }
    fn max_slope() -> f64 {
        0.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSweep {
    pub modes: Vec<TraceMode>,
    pub fields: Vec<ScalarField>,
    /// Smallest μ of a one-decade logarithmic grid.
    #[serde(default = "TraceSweep::mu_min")]
    pub mu_min: f64,
    #[serde(default = "TraceSweep::mu_points")]
    pub mu_points: usize,
    #[serde(default = "TraceSweep::max_variation")]
    pub max_variation: f64,
}

impl TraceSweep {
    fn mu_min() -> f64 {
        1.0
    }
    fn mu_points() -> usize {
        7
    }
    fn max_variation() -> f64 {
        0.2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructSweep {
    #[serde(default = "ReconstructSweep::mode")]
    pub mode: SampleMode,
    /// Half-width of the frequency grid.
    #[serde(default = "ReconstructSweep::half")]
    pub half: usize,
    /// Output points per axis.
    #[serde(default = "ReconstructSweep::n_out")]
    pub n_out: usize,
    /// Declared bandwidth; defaults to that of the potentials.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Recover `q` as well (requires `s > 1/2` for a meaningful split).
    #[serde(default)]
    pub joint: bool,
    #[serde(default = "ReconstructSweep::leakage")]
    pub leakage: f64,
    #[serde(default)]
    pub max_v_error: Option<f64>,
    #[serde(default)]
    pub max_q_error: Option<f64>,
    /// ExactCGO versus PhaseOnly at one frequency.
    #[serde(default)]
    pub gap: Option<GapSweep>,
}

impl ReconstructSweep {
    fn mode() -> SampleMode {
        SampleMode::PhaseOnly
    }
    fn half() -> usize {
        degenlab_core::reconstruct::DEFAULT_HALF
    }
    fn n_out() -> usize {
        32
    }
    fn leakage() -> f64 {
        degenlab_core::reconstruct::DEFAULT_LEAKAGE
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSweep {
    pub k: Vec<f64>,
    pub taus: Vec<f64>,
    /// Allowed growth between consecutive τ.
    #[serde(default = "GapSweep::slack")]
    pub slack: f64,
}

impl GapSweep {
    fn slack() -> f64 {
        0.2
    }
}

/// A config file: one experiment or a named suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub experiments: Vec<ExperimentConfig>,
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::ConfigInvalid { field: field.into(), reason: reason.into() }
}

impl Suite {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
        Self::parse(&text, &stem)
    }

    pub fn parse(text: &str, default_name: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| invalid("config", e.to_string()))?;
        let suite = if value.get("experiments").is_some() {
            serde_json::from_value(value).map_err(|e| invalid("experiments", e.to_string()))?
        } else {
            let e: ExperimentConfig = serde_json::from_value(value).map_err(|e| invalid("config", e.to_string()))?;
            Suite { name: e.name.clone().unwrap_or_else(|| default_name.to_string()), experiments: vec![e] }
        };
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.experiments.is_empty() {
            return Err(invalid("experiments", "empty suite"));
        }
        for (i, e) in self.experiments.iter().enumerate() {
            e.validate().map_err(|err| match err {
                CliError::ConfigInvalid { field, reason } => invalid(format!("experiments[{i}].{field}"), reason),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Experiment names, unique within the suite.
    pub fn names(&self) -> Vec<String> {
        self.experiments
            .iter()
            .enumerate()
            .map(|(i, e)| e.name.clone().unwrap_or_else(|| format!("{:02}-{}", i, e.experiment.command())))
            .collect()
    }
}

fn increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|x| x.is_finite() && *x > 0.0)
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.mesh.lengths.len()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let dim = self.dim();
        if !(2..=3).contains(&dim) {
            return Err(invalid("mesh.lengths", format!("dimension {dim} is not 2 or 3")));
        }
        if self.mesh.cells.len() != dim {
            return Err(invalid("mesh.cells", "needs one entry per axis"));
        }
        if self.mesh.cells.contains(&0) {
            return Err(invalid("mesh.cells", "every axis needs at least one cell"));
        }
        if self.mesh.lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(invalid("mesh.lengths", "must be positive"));
        }
        self.weight.validate().map_err(|e| invalid("weight", e.to_string()))?;
        let npots = self.potentials.len();
        let pair = matches!(self.experiment, Experiment::Alessandrini(_) | Experiment::Reconstruct(_));
        if npots > 2 && !matches!(self.experiment, Experiment::Dtn(_)) {
            return Err(invalid("potentials", "at most two sets"));
        }
        if matches!(self.experiment, Experiment::Alessandrini(_)) && npots != 2 {
            return Err(invalid("potentials", "alessandrini compares exactly two sets"));
        }
        if !pair && npots > 1 && !matches!(self.experiment, Experiment::Dtn(_)) {
            return Err(invalid("potentials", format!("{} takes one set", self.experiment.command())));
        }
        let s = self.weight.s;
        match &self.experiment {
            Experiment::Forward(f) => {
                if f.dirichlet.is_none() && f.convergence.is_none() && f.eigen_guard.is_none() {
                    return Err(invalid("dirichlet", "nothing to do: give dirichlet data, convergence or eigen-guard"));
                }
                if let Some(c) = &f.convergence {
                    if c.levels < 2 {
                        return Err(invalid("convergence.levels", "need at least two meshes"));
                    }
                }
            }
            Experiment::Dtn(_) => {}
            Experiment::Alessandrini(a) => {
                if a.levels == 0 {
                    return Err(invalid("levels", "must be positive"));
                }
            }
            Experiment::Runge(r) => {
                if r.sizes.is_empty() || r.sizes.windows(2).any(|w| w[1] <= w[0]) || r.sizes[0] == 0 {
                    return Err(invalid("sizes", "must be positive and strictly increasing"));
                }
                if !(r.fraction > 0.0 && r.fraction < 1.0) {
                    return Err(invalid("fraction", "must lie in (0, 1)"));
                }
            }
            Experiment::CgoDecay(c) => {
                if c.k.len() != dim {
                    return Err(invalid("k", format!("needs {dim} components")));
                }
                if c.taus.len() < 3 || !increasing(&c.taus) {
                    return Err(invalid("taus", "need at least three positive, strictly increasing values"));
                }
            }
            Experiment::Carleman(c) => {
                if c.fields == 0 {
                    return Err(invalid("fields", "must be positive"));
                }
                if c.taus.len() < 2 || !increasing(&c.taus) {
                    return Err(invalid("taus", "need at least two positive, strictly increasing values"));
                }
            }
            Experiment::Traces(t) => {
                if t.modes.is_empty() || t.fields.is_empty() {
                    return Err(invalid("fields", "need at least one mode and one field"));
                }
                if t.mu_points < 2 || !(t.mu_min > 0.0) {
                    return Err(invalid("mu_min", "need a positive μ_min and at least two points"));
                }
            }
            Experiment::Reconstruct(r) => {
                if r.half == 0 || r.n_out == 0 {
                    return Err(invalid("half", "grid sizes must be positive"));
                }
                if r.mode == SampleMode::PhaseOnly && !r.joint && s != 0.5 {
                    return Err(invalid("joint", "fixed-q inversion needs s = 1/2; set joint for s > 1/2"));
                }
                if let Some(g) = &r.gap {
                    if g.k.len() != dim {
                        return Err(invalid("gap.k", format!("needs {dim} components")));
                    }
                    if g.taus.len() < 2 || !increasing(&g.taus) {
                        return Err(invalid("gap.taus", "need at least two positive, strictly increasing values"));
                    }
                }
                if r.mode == SampleMode::ExactCgo && r.gap.is_none() {
                    return Err(invalid("gap", "exact-cgo mode runs the gap study; give gap.k and gap.taus"));
                }
            }
        }
        Ok(())
    }
}
