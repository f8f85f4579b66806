//! Running suites and recording what they produced.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use degenlab_core::dtn::DtnCache;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Suite;
use crate::experiments::{run_experiment, Check, Outcome};
use crate::CliError;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub cache: bool,
    /// Overrides every experiment seed.
    pub seed: Option<u64>,
    /// Defaults to `$DEGENLAB_CACHE`.
    pub cache_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into(), cache: true, seed: None, cache_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub suite: String,
    pub tool_version: String,
    pub config_digest: String,
    pub seconds: f64,
    pub experiments: Vec<Outcome>,
    pub artifacts: Vec<Artifact>,
    pub passed: bool,
}

impl RunManifest {
    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        self.experiments.iter().flat_map(|e| e.checks.iter())
    }

    pub fn outcome(&self, name: &str) -> Option<&Outcome> {
        self.experiments.iter().find(|e| e.name == name)
    }
}

pub fn file_digest(path: &Path) -> std::io::Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn output_error(path: &Path, e: impl Into<degenlab_core::Error>) -> CliError {
    CliError::Output { path: path.to_path_buf(), source: e.into() }
}

/// Loads, validates and runs a config file.
pub fn run(config: &Path, opts: &RunOptions) -> Result<RunManifest, CliError> {
    run_suite(&Suite::load(config)?, opts)
}

/// Runs every experiment, writes reports under `opts.out` and `manifest.json` last.
/// Module errors abort the run; failed checks do not.
pub fn run_suite(suite: &Suite, opts: &RunOptions) -> Result<RunManifest, CliError> {
    suite.validate()?;
    let t0 = Instant::now();
    let mut suite = suite.clone();
    if let Some(seed) = opts.seed {
        suite.experiments.iter_mut().for_each(|e| e.seed = seed);
    }
    let cache = opts.cache.then(|| opts.cache_dir.clone().map(DtnCache::new).unwrap_or_else(DtnCache::from_env));
    fs::create_dir_all(&opts.out).map_err(|e| output_error(&opts.out, e))?;
    let mut outcomes = vec![];
    for (cfg, name) in suite.experiments.iter().zip(suite.names()) {
        let dir = opts.out.join(cfg.output.clone().unwrap_or_else(|| PathBuf::from(&name)));
        log::info!("{} ({}) → {}", name, cfg.experiment.command(), dir.display());
        let cache = if cfg.cache { cache.as_ref() } else { None };
        let outcome = run_experiment(cfg, &name, &dir, cache)?;
        for c in outcome.checks.iter() {
            log::info!("{}", c.line());
        }
        outcomes.push(outcome);
    }
    let mut artifacts = vec![];
    for o in &outcomes {
        for f in &o.files {
            let (sha256, bytes) = file_digest(f).map_err(|e| output_error(f, e))?;
            let path = f.strip_prefix(&opts.out).unwrap_or(f).to_path_buf();
            artifacts.push(Artifact { path, sha256, bytes });
        }
    }
    let manifest = RunManifest {
        suite: suite.name.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: degenlab_core::io::digest(&serde_json::to_value(&suite).expect("configs serialize")),
        seconds: t0.elapsed().as_secs_f64(),
        passed: outcomes.iter().all(|o| o.passed()),
        experiments: outcomes,
        artifacts,
    };
    let path = opts.out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| output_error(&path, e))?;
    Ok(manifest)
}
