//! Experiment harness: configuration, replica ensembles, comparison reports
//! and artifact bundles.
//!
//! Every run writes its files into a staging directory next to the output
//! directory and moves them into place only once the experiment finished,
//! so a failing run leaves no partial bundle behind.

pub mod config;
pub mod ensemble;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use exclusion_core::boundary::BoundaryError;
use exclusion_core::ldp::LdpError;
use exclusion_core::pde::PdeError;
use exclusion_core::sim::SimError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{ExperimentConfig, ExperimentKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub fn invalid(field: &str, message: impl ToString) -> Self {
        HarnessError::Invalid { field: field.into(), message: message.to_string() }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// One output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &str, bytes: Vec<u8>) -> Self {
        Self { name: name.into(), bytes }
    }
}

/// A named pass/fail check made by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Files, checks and a short JSON summary of one experiment.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<Artifact>,
    pub assertions: Vec<Assertion>,
    pub summary: serde_json::Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub version: &'static str,
    /// Effective configuration, overrides applied.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub summary: serde_json::Value,
    pub files: Vec<FileEntry>,
}

/// Result of [`run`]: the manifest and where the bundle went.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub manifest: Manifest,
    pub out: PathBuf,
}

/// Applies overrides, validates, runs the experiment on a pool of the
/// requested size and writes the bundle.
pub fn run(kind: ExperimentKind, mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<RunResult, HarnessError> {
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(o) = &opts.out {
        cfg.output = Some(o.clone());
    }
    cfg.kind = Some(kind);
    let out = cfg.output.clone().ok_or_else(|| HarnessError::invalid("output", "no output directory given"))?;
    let model = cfg.validate(kind)?;
    let threads = opts.threads.unwrap_or(0);
    if opts.threads == Some(0) {
        return Err(HarnessError::invalid("threads", "need at least one thread"));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let outcome = pool.install(|| experiments::dispatch(kind, &cfg, &model))?;
    let files = outcome
        .files
        .iter()
        .map(|a| FileEntry { name: a.name.clone(), bytes: a.bytes.len(), sha256: hex::encode(Sha256::digest(&a.bytes)) })
        .collect();
    let manifest = Manifest {
        experiment: kind,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        threads: pool.current_num_threads(),
        config: cfg,
        started_unix,
        wall_seconds: clock.elapsed().as_secs_f64(),
        passed: outcome.passed(),
        assertions: outcome.assertions.clone(),
        summary: outcome.summary.clone(),
        files,
    };
    let mut bundle = outcome.files;
    let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| HarnessError::Io(e.to_string()))?;
    text.push(b'\n');
    bundle.push(Artifact::new("manifest.json", text));
    write_bundle(&out, &bundle)?;
    Ok(RunResult { manifest, out })
}

/// Writes every file to a staging directory beside `out`, then moves them in.
pub fn write_bundle(out: &Path, files: &[Artifact]) -> Result<(), HarnessError> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new().prefix(".exclusion-staging-").tempdir_in(&parent)?;
    for f in files {
        std::fs::write(staging.path().join(&f.name), &f.bytes)?;
    }
    std::fs::create_dir_all(out)?;
    for f in files {
        std::fs::rename(staging.path().join(&f.name), out.join(&f.name))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_lands_complete() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested").join("run");
        write_bundle(&out, &[Artifact::new("a.csv", b"x\n1\n".to_vec()), Artifact::new("b.json", b"{}".to_vec())]).unwrap();
        assert_eq!(std::fs::read(out.join("a.csv")).unwrap(), b"x\n1\n");
        let leftovers: Vec<_> = std::fs::read_dir(out.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(leftovers, vec![std::ffi::OsString::from("run")]);
    }

    fn opts(out: &Path) -> RunOptions {
        RunOptions { out: Some(out.to_path_buf()), seed: None, threads: Some(1) }
    }

    fn small_compare(t_final: f64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(t_final);
        cfg.sizes = vec![16, 32];
        cfg.replicas = 4;
        cfg.samples = 3;
        cfg
    }

    #[test]
    fn malformed_model_file_leaves_no_output() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.txt"), "side left\nl 3\n0 9 1.0\n").unwrap();
        let text = r#"{"model": {"type": "file", "path": "bad.txt"}, "sizes": [16], "t_final": 0.1}"#;
        let cfg = ExperimentConfig::from_json(text, Some(dir.path())).unwrap();
        let out = dir.path().join("run");
        let err = run(ExperimentKind::Simulate, cfg, &opts(&out)).unwrap_err();
        assert!(matches!(err, HarnessError::Invalid { ref field, .. } if field == "model.path"), "{err}");
        assert!(!out.exists());
    }

    #[test]
    fn zero_horizon_records_only_the_initial_sample() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = small_compare(0.0);
        cfg.samples = 5;
        run(ExperimentKind::Simulate, cfg, &opts(&out)).unwrap();
        let text = std::fs::read_to_string(out.join("trajectories.csv")).unwrap();
        let mut rows = csv::Reader::from_reader(text.as_bytes());
        let times: Vec<String> = rows.records().map(|r| r.unwrap()[2].to_string()).collect();
        assert!(!times.is_empty());
        assert!(times.iter().all(|t| t.parse::<f64>().unwrap() == 0.0));
    }

    #[test]
    fn single_replica_reports_missing_standard_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_compare(0.05);
        cfg.replicas = 1;
        let r = run(ExperimentKind::HydroCompare, cfg, &opts(&dir.path().join("run"))).unwrap();
        let report: serde_json::Value = serde_json::from_slice(&std::fs::read(r.out.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["se_available"], false);
        assert!(report["rows"].as_array().unwrap().iter().all(|row| row["se"].is_null()));
    }

    #[test]
    fn zero_tilt_reproduces_hydrodynamic_comparison() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_compare(0.05);
        let mut tilted = cfg.clone();
        tilted.tilt = Some(config::TiltSpec::Affine { c0: 0.0, c1: 0.0 });
        let a = run(ExperimentKind::HydroCompare, cfg, &opts(&dir.path().join("hydro"))).unwrap();
        let b = run(ExperimentKind::TiltCompare, tilted, &opts(&dir.path().join("tilt"))).unwrap();
        let read = |r: &RunResult| std::fs::read(r.out.join("comparison.csv")).unwrap();
        assert_eq!(read(&a), read(&b));
    }

    #[test]
    fn oversized_tilt_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_compare(0.05);
        cfg.tilt = Some(config::TiltSpec::Affine { c0: 200.0, c1: 0.0 });
        let out = dir.path().join("run");
        let err = run(ExperimentKind::TiltCompare, cfg, &opts(&out)).unwrap_err();
        assert!(matches!(err, HarnessError::Invalid { ref field, .. } if field == "tilt"), "{err}");
        assert!(!out.exists());
    }

    #[test]
    fn empty_battery_checks_only_the_hydrodynamic_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(0.1);
        cfg.ldp.n = 32;
        let r = run(ExperimentKind::LdpCheck, cfg, &opts(&dir.path().join("run"))).unwrap();
        assert_eq!(r.manifest.assertions.len(), 1);
        assert!(r.manifest.passed);
    }

    #[test]
    fn overrides_reach_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("elsewhere");
        let o = RunOptions { out: Some(out.clone()), seed: Some(99), threads: Some(2) };
        let r = run(ExperimentKind::Simulate, small_compare(0.02), &o).unwrap();
        assert_eq!(r.out, out);
        assert_eq!(r.manifest.seed, 99);
        assert_eq!(r.manifest.config.seed, 99);
        assert_eq!(r.manifest.threads, 2);
        let names: Vec<&str> = r.manifest.files.iter().map(|f| f.name.as_str()).collect();
        assert!(names.contains(&"trajectories.csv"));
        assert!(out.join("manifest.json").exists());
    }
}
