//! Experiment orchestration: strict config ingestion, crash-safe run
//! persistence, verification suites, Richardson convergence studies, and
//! report generation.
//!
//! A run directory is self-describing: the verbatim config, streamed CSV
//! artifacts, a JSON summary of the limit pipeline, and a manifest listing
//! every file with its digest. Runs interrupted mid-march leave the manifest
//! marked incomplete and resume from the last fully persisted slice.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnostics::{
    fit_decay, measure, DecayModel, DiagnosticsError, DiagnosticsRow, LATTICE_N,
};
use crate::limit::{build_limit_data, LimitData, LimitError};
use crate::mesh::{build_mesh, MeshError};
use crate::newton::{linearization, residual, SolveError};
use crate::path::{
    aubin_restart, build_volume_form, march_resume, ricci_bound_check, PathError, PathState,
    SolveOptions,
};
use crate::radial::{
    class_pairings, metric_components, GeometryError, ModelProfile, ModelSpec, RadialPotential,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config invalid: {0}")]
    ConfigInvalid(String),
    #[error("solver failed at t = {t}: {source}")]
    SolverFailed { t: f64, source: PathError },
    #[error("unknown verify suite '{0}' (expected einstein, hirzebruch, pipeline, or numerics)")]
    UnknownSuite(String),
    #[error("no manifest found in {0}")]
    ManifestMissing(PathBuf),
    #[error("artifact malformed: {0}")]
    ArtifactMalformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Path(#[from] PathError),
}

impl HarnessError {
    /// Process exit code: 2 for usage and configuration mistakes, 1 for
    /// genuine solver or verification failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ConfigInvalid(_)
            | HarnessError::UnknownSuite(_)
            | HarnessError::ManifestMissing(_) => 2,
            _ => 1,
        }
    }
}

/// Strictly parsed run configuration (schema v1). Unknown keys reject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub spec: SpecConfig,
    pub mesh: MeshConfig,
    pub schedule: ScheduleConfig,
    pub solver: SolverConfig,
    pub gauge: f64,
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    /// "hirzebruch" or "product".
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binf: Option<f64>,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub npoints: usize,
}

/// Either an even range {t_start, t_end, steps} or {explicit: [...]}.
/// One struct with manual exclusivity keeps unknown-key rejection exact,
/// which an untagged enum would silently lose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

impl RunConfig {
    pub fn from_slice(bytes: &[u8]) -> Result<RunConfig, HarnessError> {
        let cfg: RunConfig = serde_json::from_slice(bytes)
            .map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, returning the verbatim bytes
    /// alongside (they are copied into the run directory and hashed).
    pub fn from_path(path: &Path) -> Result<(RunConfig, Vec<u8>), HarnessError> {
        let bytes = fs::read(path).map_err(|e| {
            HarnessError::ConfigInvalid(format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg = RunConfig::from_slice(&bytes)?;
        Ok((cfg, bytes))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        match self.spec.model.as_str() {
            "hirzebruch" => {
                if self.spec.a.is_none() || self.spec.b0.is_none() || self.spec.binf.is_none() {
                    return bad("hirzebruch model needs a, b0, binf".into());
                }
                if self.spec.a == Some(0) {
                    return bad("twisting a must be >= 1".into());
                }
                let (b0, binf) = (self.spec.b0.unwrap(), self.spec.binf.unwrap());
                if !(b0 >= 0.0 && b0 < binf) {
                    return bad(format!("moment interval [{b0}, {binf}] invalid"));
                }
            }
            "product" => {
                if self.spec.a.is_some() {
                    return bad("product model takes no twisting a".into());
                }
                if let (Some(b0), Some(binf)) = (self.spec.b0, self.spec.binf) {
                    if (b0, binf) != (0.0, 2.0) {
                        return bad("product fiber interval is fixed at (0, 2)".into());
                    }
                } else if self.spec.b0.is_some() || self.spec.binf.is_some() {
                    return bad("give both b0 and binf or neither".into());
                }
            }
            other => return bad(format!("unknown model '{other}'")),
        }
        if !(self.spec.kappa > 0.0) {
            return bad("kappa must be positive".into());
        }
        if !(self.gauge > 0.0 && self.gauge.is_finite()) {
            return bad("gauge must be positive".into());
        }
        if !(16..=4096).contains(&self.mesh.npoints) {
            return bad(format!("npoints {} outside [16, 4096]", self.mesh.npoints));
        }
        if !(1e-14..=1e-6).contains(&self.solver.tol) {
            return bad(format!("solver tol {} outside [1e-14, 1e-6]", self.solver.tol));
        }
        if !(1..=200).contains(&self.solver.max_iter) {
            return bad(format!("max_iter {} outside [1, 200]", self.solver.max_iter));
        }
        self.schedule_points()?;
        if self.outputs.directory.is_empty() {
            return bad("outputs.directory must be nonempty".into());
        }
        if self.outputs.formats.is_empty() {
            return bad("outputs.formats must be nonempty".into());
        }
        for f in &self.outputs.formats {
            if f != "csv" && f != "json" {
                return bad(format!("unknown output format '{f}'"));
            }
        }
        Ok(())
    }

    pub fn schedule_points(&self) -> Result<Vec<f64>, HarnessError> {
        let s = &self.schedule;
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        let pts = match (&s.explicit, s.t_start, s.t_end, s.steps) {
            (Some(list), None, None, None) => list.clone(),
            (None, Some(t0), Some(t1), Some(steps)) => {
                if steps < 2 {
                    return bad("schedule needs at least 2 steps".into());
                }
                if !(t1 > t0) {
                    return bad(format!("t_end {t1} must exceed t_start {t0}"));
                }
                (0..steps)
                    .map(|i| t0 + (t1 - t0) * i as f64 / (steps - 1) as f64)
                    .collect()
            }
            _ => {
                return bad(
                    "schedule must be either {t_start, t_end, steps} or {explicit}".into(),
                )
            }
        };
        if pts.is_empty() {
            return bad("schedule is empty".into());
        }
        if pts[0] < 0.1 {
            return bad(format!("schedule must start at t >= 0.1, got {}", pts[0]));
        }
        if pts.windows(2).any(|w| w[1] <= w[0]) {
            return bad("schedule must be strictly increasing".into());
        }
        Ok(pts)
    }

    pub fn model_spec(&self) -> Result<ModelSpec, HarnessError> {
        let mut spec = match self.spec.model.as_str() {
            "hirzebruch" => ModelSpec::hirzebruch(
                self.spec.a.unwrap(),
                self.spec.b0.unwrap(),
                self.spec.binf.unwrap(),
                self.spec.kappa,
            ),
            "product" => ModelSpec::product(self.spec.kappa),
            other => return Err(HarnessError::ConfigInvalid(format!("unknown model '{other}'"))),
        };
        spec.omega_gauge = self.gauge;
        spec.validate()
            .map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        Ok(spec)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    fn wants(&self, format: &str) -> bool {
        self.outputs.formats.iter().any(|f| f == format)
    }
}

/// Provenance of a frozen-regression fixture consulted by a run or suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenProvenance {
    pub fixture: String,
    pub config_sha256: String,
    pub code_version: String,
}

/// Manifest written alongside every run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_sha256: String,
    pub code_version: String,
    pub started_utc: String,
    pub finished_utc: Option<String>,
    pub complete: bool,
    pub seed: Option<u64>,
    /// Relative file name -> sha256 of contents.
    pub files: BTreeMap<String, String>,
    pub frozen_regression: Option<FrozenProvenance>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

fn code_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<(), HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(m).map_err(io_from_json)?;
    bytes.push(b'\n');
    write_atomic(&manifest_path(dir), &bytes)
}

fn read_manifest(dir: &Path) -> Result<RunManifest, HarnessError> {
    let p = manifest_path(dir);
    if !p.exists() {
        return Err(HarnessError::ManifestMissing(dir.to_path_buf()));
    }
    let bytes = fs::read(&p)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| HarnessError::ArtifactMalformed(format!("manifest: {e}")))
}

fn io_from_json(e: serde_json::Error) -> HarnessError {
    HarnessError::ArtifactMalformed(e.to_string())
}

const PHI_HEADER: &str = "t,node,phi";

/// Last fully persisted slice of a snapshot stream: (t, phi).
fn last_snapshot_block(path: &Path, npoints: usize) -> Result<Option<(f64, Vec<f64>)>, HarnessError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == PHI_HEADER => {}
        _ => return Ok(None),
    }
    let mut blocks: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let (Some(ts), Some(ns), Some(vs)) = (it.next(), it.next(), it.next()) else {
            break; // torn tail line
        };
        let Ok(node) = ns.parse::<usize>() else { break };
        let Ok(v) = vs.parse::<f64>() else { break };
        match blocks.last_mut() {
            Some((bt, rows)) if bt == ts => rows.push((node, v)),
            _ => blocks.push((ts.to_string(), vec![(node, v)])),
        }
    }
    for (ts, rows) in blocks.into_iter().rev() {
        if rows.len() == npoints && rows.iter().enumerate().all(|(i, (n, _))| *n == i) {
            let t: f64 = ts
                .parse()
                .map_err(|_| HarnessError::ArtifactMalformed("snapshot t field".into()))?;
            return Ok(Some((t, rows.into_iter().map(|(_, v)| v).collect())));
        }
    }
    Ok(None)
}

/// Parses a diagnostics CSV produced by a run.
pub fn parse_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRow>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == DiagnosticsRow::CSV_HEADER => {}
        other => {
            return Err(HarnessError::ArtifactMalformed(format!(
                "diagnostics header mismatch: {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 20 {
            return Err(HarnessError::ArtifactMalformed(format!(
                "diagnostics row has {} fields",
                f.len()
            )));
        }
        let num = |i: usize| -> Result<f64, HarnessError> {
            f[i].parse()
                .map_err(|_| HarnessError::ArtifactMalformed(format!("field {i}: '{}'", f[i])))
        };
        rows.push(DiagnosticsRow {
            t: num(0)?,
            sup_phi: num(1)?,
            inf_phi: num(2)?,
            vol_ratio_min: num(3)?,
            vol_ratio_max: num(4)?,
            tr_chi_sup: num(5)?,
            fiber_osc_scaled: num(6)?,
            trace_equiv_low: num(7)?,
            trace_equiv_high: num(8)?,
            l1_phi_minus_psi: num(9)?,
            c0_phi_minus_psi: num(10)?,
            phi_dot_sup: num(11)?,
            tr_omega_y_minus_k: num(12)?,
            fiber_c1_norm: num(13)?,
            fiber_c0_dist: num(14)?,
            global_c0_dist: num(15)?,
            fiber_diam: num(16)?,
            base_diam: num(17)?,
            newton_iters: f[18]
                .parse()
                .map_err(|_| HarnessError::ArtifactMalformed("newton_iters".into()))?,
            residual: num(19)?,
        });
    }
    Ok(rows)
}

fn limit_summary_json(limit: &LimitData) -> serde_json::Value {
    let omega_y = &limit.omega_y;
    serde_json::json!({
        "v0": limit.v0,
        "g": {
            "value": limit.g.value,
            "pushforward": limit.g.pushforward,
            "fiber_spread": limit.g.fiber_spread,
            "profile": limit.g.profile,
            "lp": {
                "delta": limit.g.lp.delta,
                "epsilon": limit.g.lp.epsilon,
                "norm": limit.g.lp.norm,
            },
        },
        "rho": limit.rho,
        "u_fiber": limit.u_fiber,
        "psi": limit.psi,
        "omega_y": {
            "rho_coeff": omega_y.base.rho_coeff,
            "log_amp": omega_y.base.log_amp,
            "pert": omega_y.pert,
        },
        "solves": {
            "fiber": {
                "iterations": limit.fiber_report.iterations,
                "residual": limit.fiber_report.residual_sup,
            },
            "base": {
                "iterations": limit.base_report.iterations,
                "residual": limit.base_report.residual_sup,
            },
        },
    })
}

/// What cmd_run leaves behind.
#[derive(Debug)]
pub struct RunOutputs {
    pub directory: PathBuf,
    pub rows: Vec<DiagnosticsRow>,
    pub resumed_from: Option<f64>,
}

/// Executes a config: marches the path, streams diagnostics and potential
/// snapshots, runs the limit pipeline, and finalizes the manifest. If the
/// directory holds an incomplete run of the same config, continues it from
/// the last persisted slice.
pub fn cmd_run(
    config_path: &Path,
    out_override: Option<&Path>,
    seed: Option<u64>,
) -> Result<RunOutputs, HarnessError> {
    let (cfg, raw) = RunConfig::from_path(config_path)?;
    let dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.outputs.directory));
    run_config(&cfg, &raw, &dir, seed)
}

/// `cmd_run` on an already parsed config (used by studies and tests).
pub fn run_config(
    cfg: &RunConfig,
    raw_config: &[u8],
    dir: &Path,
    seed: Option<u64>,
) -> Result<RunOutputs, HarnessError> {
    fs::create_dir_all(dir)?;
    let config_hash = sha256_hex(raw_config);
    let diag_path = dir.join("diagnostics.csv");
    let snap_path = dir.join("phi_snapshots.csv");

    // resume only an incomplete run of the same config
    let mut resume: Option<(f64, Vec<f64>)> = None;
    if let Ok(prev) = read_manifest(dir) {
        if !prev.complete && prev.config_sha256 == config_hash && cfg.wants("csv") {
            resume = last_snapshot_block(&snap_path, cfg.mesh.npoints)?;
        }
    }

    let mut manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        config_sha256: config_hash,
        code_version: code_version(),
        started_utc: now_utc(),
        finished_utc: None,
        complete: false,
        seed,
        files: BTreeMap::new(),
        frozen_regression: None,
    };
    write_manifest(dir, &manifest)?;
    write_atomic(&dir.join("config.json"), raw_config)?;
    let _ = fs::remove_file(dir.join("error.json"));

    let spec = cfg.model_spec()?;
    let schedule = cfg.schedule_points()?;
    let mesh = Arc::new(build_mesh(cfg.mesh.npoints, spec.a())?);
    let omega = build_volume_form(&spec, spec.omega_gauge, &mesh)?;
    let limit = build_limit_data(&spec, cfg.mesh.npoints)?;

    let mut diag = fs::File::options();
    let mut snap = fs::File::options();
    let (mut diag, mut snap, remaining, warm) = match &resume {
        Some((t0, phi0)) => {
            // drop any diagnostics row past the last complete snapshot
            let prior = fs::read_to_string(&diag_path)
                .unwrap_or_else(|_| format!("{}\n", DiagnosticsRow::CSV_HEADER));
            let kept: Vec<String> = prior
                .lines()
                .skip(1)
                .filter(|l| {
                    l.split(',')
                        .next()
                        .and_then(|s| s.parse::<f64>().ok())
                        .map(|t| t <= *t0 + 1e-12)
                        .unwrap_or(false)
                })
                .map(str::to_string)
                .collect();
            let mut text = String::from(DiagnosticsRow::CSV_HEADER);
            text.push('\n');
            for l in &kept {
                text.push_str(l);
                text.push('\n');
            }
            fs::write(&diag_path, text)?;
            let remaining: Vec<f64> = schedule
                .iter()
                .cloned()
                .filter(|t| *t > t0 + 1e-12)
                .collect();
            (
                diag.append(true).open(&diag_path)?,
                snap.append(true).open(&snap_path)?,
                remaining,
                Some((*t0, phi0.clone())),
            )
        }
        None => {
            let mut d = diag.write(true).create(true).truncate(true).open(&diag_path)?;
            writeln!(d, "{}", DiagnosticsRow::CSV_HEADER)?;
            let mut s = snap.write(true).create(true).truncate(true).open(&snap_path)?;
            writeln!(s, "{PHI_HEADER}")?;
            (d, s, schedule.clone(), None)
        }
    };

    let mut rows: Vec<DiagnosticsRow> = if resume.is_some() {
        parse_diagnostics_csv(&diag_path)?
    } else {
        Vec::new()
    };
    let mut sink_err: Option<HarnessError> = None;
    let write_csv = cfg.wants("csv");
    {
        let mut sink = |state: &PathState| {
            if sink_err.is_some() {
                return;
            }
            let step = (|| -> Result<DiagnosticsRow, HarnessError> {
                let row = measure(&spec, &omega, state, &limit)?;
                if write_csv {
                    writeln!(diag, "{}", row.csv_line())?;
                    diag.flush()?;
                    for (i, v) in state.phi.iter().enumerate() {
                        writeln!(snap, "{:.16e},{i},{v:.16e}", state.t)?;
                    }
                    snap.flush()?;
                }
                Ok(row)
            })();
            match step {
                Ok(row) => rows.push(row),
                Err(e) => sink_err = Some(e),
            }
        };
        if !remaining.is_empty() {
            let warm_ref = warm.as_ref().map(|(t, p)| (*t, p.as_slice()));
            march_resume(
                &spec,
                &omega,
                &mesh,
                &remaining,
                warm_ref,
                cfg.solve_options(),
                &mut sink,
            )
            .map_err(|e| {
                let t = match &e {
                    PathError::StepRefinementExhausted { t } => *t,
                    _ => remaining.first().copied().unwrap_or(f64::NAN),
                };
                let record = serde_json::json!({
                    "kind": "solver_failed",
                    "t": t,
                    "message": e.to_string(),
                });
                let _ = write_atomic(
                    &dir.join("error.json"),
                    record.to_string().as_bytes(),
                );
                HarnessError::SolverFailed { t, source: e }
            })?;
        }
    }
    if let Some(e) = sink_err {
        return Err(e);
    }

    if cfg.wants("json") {
        let mut bytes =
            serde_json::to_vec_pretty(&limit_summary_json(&limit)).map_err(io_from_json)?;
        bytes.push(b'\n');
        write_atomic(&dir.join("limit_data.json"), &bytes)?;
    }

    for name in ["config.json", "diagnostics.csv", "phi_snapshots.csv", "limit_data.json"] {
        let p = dir.join(name);
        if p.exists() {
            manifest.files.insert(name.into(), sha256_hex(&fs::read(&p)?));
        }
    }
    manifest.finished_utc = Some(now_utc());
    manifest.complete = true;
    write_manifest(dir, &manifest)?;

    Ok(RunOutputs {
        directory: dir.to_path_buf(),
        rows,
        resumed_from: resume.map(|(t, _)| t),
    })
}

/// One verification check: a named pass/fail with its measured detail.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Check {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

pub fn render_checks(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{mark}  {:<44} {}\n", c.name, c.detail));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    out.push_str(&format!(
        "{} checks, {} failed\n",
        checks.len(),
        failed
    ));
    out
}

/// The verify schedule: the default march extended by nothing; criteria are
/// stated on t in [1, 12].
fn verify_schedule() -> Vec<f64> {
    crate::path::default_schedule()
}

fn closed_phi(t: f64) -> f64 {
    let e = (-t).exp();
    (1.0 - e) * (1.0 + 2.0 * e).ln()
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Closed-form oracle suite on the product model, plus the anticanonical
/// restart on the base.
pub fn verify_einstein(n: usize) -> Result<Vec<Check>, HarnessError> {
    let spec = ModelSpec::product(1.0);
    let mesh = Arc::new(build_mesh(n, 1.0)?);
    let omega = build_volume_form(&spec, spec.omega_gauge, &mesh)?;
    let schedule = verify_schedule();
    let mut states = Vec::new();
    march_resume(
        &spec,
        &omega,
        &mesh,
        &schedule,
        None,
        SolveOptions::default(),
        &mut |s| states.push(s.clone()),
    )?;
    let mut checks = Vec::new();

    let mut phi_err = 0.0f64;
    let mut metric_err = 0.0f64;
    for s in &states {
        let target = closed_phi(s.t);
        phi_err = phi_err.max(
            s.phi
                .iter()
                .fold(0.0f64, |m, v| m.max((v - target).abs())),
        );
        if let ModelProfile::Product { base_coeff, fiber } = &s.profile {
            let e = (-s.t).exp();
            metric_err = metric_err.max((base_coeff - (1.0 + 2.0 * e)).abs());
            metric_err = metric_err.max(
                fiber
                    .q()
                    .iter()
                    .fold(0.0f64, |m, q| m.max((q - 2.0 * e).abs())),
            );
        }
    }
    checks.push(Check::new(
        "potential matches closed form",
        phi_err <= 1e-8,
        format!("sup error {phi_err:.3e} (tol 1e-8)"),
    ));
    checks.push(Check::new(
        "metric profile matches Einstein family",
        metric_err <= 1e-8,
        format!("sup error {metric_err:.3e} (tol 1e-8)"),
    ));

    let limit = build_limit_data(&spec, n)?;
    let bar_fiber_err = match &limit.omega_bar {
        ModelProfile::Product { fiber, .. } => fiber
            .q()
            .iter()
            .fold(0.0f64, |m, q| m.max((q - 2.0).abs())),
        _ => f64::INFINITY,
    };
    let data = [
        ("rho", sup_abs(&limit.rho)),
        ("u_fiber", sup_abs(&limit.u_fiber)),
        ("fiber metric vs 2 w_FS", bar_fiber_err),
        ("G vs 1", (limit.g.value - 1.0).abs()),
        ("psi", sup_abs(&limit.psi)),
        (
            "omega_Y vs chi",
            limit
                .omega_y
                .q()
                .iter()
                .fold(0.0f64, |m, q| m.max((q - spec.kappa).abs())),
        ),
    ];
    let worst = data
        .iter()
        .cloned()
        .fold(data[0], |acc, (n, v)| if v > acc.1 { (n, v) } else { acc });
    checks.push(Check::new(
        "limit pipeline is exact on the oracle",
        data.iter().all(|(_, v)| *v <= 1e-9),
        format!("worst: {} at {:.3e} (tol 1e-9)", worst.0, worst.1),
    ));

    let psi_mean = limit.psi.iter().sum::<f64>() / limit.psi.len() as f64;
    let s10 = states
        .iter()
        .find(|s| (s.t - 10.0).abs() < 1e-9)
        .expect("schedule contains t = 10");
    let c0_10 = s10
        .phi
        .iter()
        .fold(0.0f64, |m, v| m.max((v - psi_mean).abs()));
    let closed_10 = closed_phi(10.0);
    checks.push(Check::new(
        "marched potential meets the limit",
        c0_10 <= 3e-4 && (c0_10 - closed_10).abs() <= 1e-8,
        format!(
            "c0(10) = {c0_10:.3e} (tol 3e-4), closed-form gap {:.3e}",
            (c0_10 - closed_10).abs()
        ),
    ));

    // anticanonical restart: exact Einstein start is stationary
    let restart_schedule = [1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 35.0, 50.0];
    let round = RadialPotential::new(
        Arc::new(build_mesh(n, 1.0)?),
        crate::radial::ProfileKind::Curve,
        crate::radial::AnsatzBase::new(0.0, 2.0),
        vec![0.0; n],
    );
    let stationary = aubin_restart(&round, &restart_schedule)?;
    let worst_gap = stationary
        .iter()
        .fold(0.0f64, |m, s| m.max(s.ricci_gap));
    checks.push(Check::new(
        "Einstein start stays stationary",
        worst_gap <= 1e-10,
        format!("sup Ricci gap {worst_gap:.3e} (tol 1e-10)"),
    ));

    // restart from the measured base limit
    let from_limit = aubin_restart(&limit.omega_y, &restart_schedule)?;
    let final_gap = from_limit.last().map(|s| s.ricci_gap).unwrap_or(f64::NAN);
    checks.push(Check::new(
        "restart reaches the Einstein endpoint",
        final_gap <= 1e-6,
        format!("Ricci gap at t = 50: {final_gap:.3e} (tol 1e-6)"),
    ));

    Ok(checks)
}

/// Frozen-regression bounds measured from a high-resolution reference run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenReference {
    pub generated_with: FrozenProvenance,
    pub npoints: usize,
    /// Extremes over t in [1, 12].
    pub bounds: BTreeMap<String, f64>,
    /// Values at t = 12.
    pub thresholds_t12: BTreeMap<String, f64>,
    /// global_c0_dist at t = 1 (for the relative decay criterion).
    pub global_c0_t1: f64,
}

pub fn fixture_path() -> PathBuf {
    PathBuf::from(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/hirzebruch_a1_n512.json"
    ))
}

fn hirzebruch_reference_config(npoints: usize) -> RunConfig {
    RunConfig {
        schema_version: 1,
        spec: SpecConfig {
            model: "hirzebruch".into(),
            a: Some(1),
            b0: Some(2.0),
            binf: Some(4.0),
            kappa: 1.0,
        },
        mesh: MeshConfig { npoints },
        schedule: ScheduleConfig {
            t_start: None,
            t_end: None,
            steps: None,
            explicit: Some(verify_schedule()),
        },
        solver: SolverConfig {
            tol: 1e-10,
            max_iter: 50,
        },
        gauge: 1.0,
        outputs: OutputsConfig {
            directory: "runs/hirzebruch_a1".into(),
            formats: default_formats(),
        },
    }
}

fn measure_hirzebruch_rows(n: usize) -> Result<Vec<DiagnosticsRow>, HarnessError> {
    let cfg = hirzebruch_reference_config(n);
    let spec = cfg.model_spec()?;
    let mesh = Arc::new(build_mesh(n, spec.a())?);
    let omega = build_volume_form(&spec, spec.omega_gauge, &mesh)?;
    let limit = build_limit_data(&spec, n)?;
    let mut rows = Vec::new();
    let mut err: Option<HarnessError> = None;
    march_resume(
        &spec,
        &omega,
        &mesh,
        &cfg.schedule_points()?,
        None,
        cfg.solve_options(),
        &mut |s| {
            if err.is_none() {
                match measure(&spec, &omega, s, &limit) {
                    Ok(r) => rows.push(r),
                    Err(e) => err = Some(e.into()),
                }
            }
        },
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(rows)
}

const BOUND_KEYS: [&str; 6] = [
    "sup_abs_phi",
    "tr_chi_sup",
    "fiber_osc_scaled",
    "trace_equiv_high",
    "trace_equiv_low",
    "fiber_c1_norm",
];
const THRESHOLD_KEYS: [&str; 4] = [
    "phi_dot_sup",
    "tr_omega_y_minus_k",
    "fiber_c0_dist",
    "global_c0_dist",
];

fn windowed(rows: &[DiagnosticsRow]) -> Vec<&DiagnosticsRow> {
    rows.iter().filter(|r| r.t >= 1.0 - 1e-12).collect()
}

fn bound_value(rows: &[&DiagnosticsRow], key: &str) -> f64 {
    match key {
        "sup_abs_phi" => rows
            .iter()
            .fold(0.0f64, |m, r| m.max(r.sup_phi.abs()).max(r.inf_phi.abs())),
        "tr_chi_sup" => rows.iter().fold(0.0f64, |m, r| m.max(r.tr_chi_sup)),
        "fiber_osc_scaled" => rows.iter().fold(0.0f64, |m, r| m.max(r.fiber_osc_scaled)),
        "trace_equiv_high" => rows.iter().fold(0.0f64, |m, r| m.max(r.trace_equiv_high)),
        "trace_equiv_low" => rows
            .iter()
            .fold(f64::INFINITY, |m, r| m.min(r.trace_equiv_low)),
        "fiber_c1_norm" => rows.iter().fold(0.0f64, |m, r| m.max(r.fiber_c1_norm)),
        _ => f64::NAN,
    }
}

fn threshold_value(row: &DiagnosticsRow, key: &str) -> f64 {
    match key {
        "phi_dot_sup" => row.phi_dot_sup,
        "tr_omega_y_minus_k" => row.tr_omega_y_minus_k.abs(),
        "fiber_c0_dist" => row.fiber_c0_dist,
        "global_c0_dist" => row.global_c0_dist,
        _ => f64::NAN,
    }
}

/// Generates the frozen-regression fixture from a reference run.
pub fn freeze_reference(npoints: usize, path: &Path) -> Result<FrozenReference, HarnessError> {
    let rows = measure_hirzebruch_rows(npoints)?;
    let win = windowed(&rows);
    let last = rows.last().expect("nonempty schedule");
    if (last.t - 12.0).abs() > 1e-9 {
        return Err(HarnessError::ArtifactMalformed(
            "reference schedule must end at t = 12".into(),
        ));
    }
    let cfg = hirzebruch_reference_config(npoints);
    let cfg_bytes = serde_json::to_vec_pretty(&cfg).map_err(io_from_json)?;
    let mut bounds = BTreeMap::new();
    for k in BOUND_KEYS {
        bounds.insert(k.to_string(), bound_value(&win, k));
    }
    let mut thresholds = BTreeMap::new();
    for k in THRESHOLD_KEYS {
        thresholds.insert(k.to_string(), threshold_value(last, k));
    }
    let t1 = rows
        .iter()
        .find(|r| (r.t - 1.0).abs() < 1e-9)
        .expect("schedule contains t = 1");
    let fixture = FrozenReference {
        generated_with: FrozenProvenance {
            fixture: path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            config_sha256: sha256_hex(&cfg_bytes),
            code_version: code_version(),
        },
        npoints,
        bounds,
        thresholds_t12: thresholds,
        global_c0_t1: t1.global_c0_dist,
    };
    let mut bytes = serde_json::to_vec_pretty(&fixture).map_err(io_from_json)?;
    bytes.push(b'\n');
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_atomic(path, &bytes)?;
    Ok(fixture)
}

pub fn load_reference(path: &Path) -> Result<FrozenReference, HarnessError> {
    let bytes = fs::read(path).map_err(|e| {
        HarnessError::ArtifactMalformed(format!(
            "frozen reference {} unreadable: {e}; regenerate with freeze_reference",
            path.display()
        ))
    })?;
    serde_json::from_slice(&bytes)
        .map_err(|e| HarnessError::ArtifactMalformed(format!("frozen reference: {e}")))
}

/// Monotone decreasing up to `jitter` relative slack.
fn monotone_decreasing(series: &[(f64, f64)], jitter: f64) -> bool {
    series
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 * (1.0 + jitter))
}

/// Boundedness and decay ladder on the twisted surface model.
pub fn verify_hirzebruch(n: usize) -> Result<Vec<Check>, HarnessError> {
    let cfg = hirzebruch_reference_config(n);
    let spec = cfg.model_spec()?;
    let mesh = Arc::new(build_mesh(n, spec.a())?);
    let omega = build_volume_form(&spec, spec.omega_gauge, &mesh)?;
    let limit = build_limit_data(&spec, n)?;
    let mut states = Vec::new();
    march_resume(
        &spec,
        &omega,
        &mesh,
        &cfg.schedule_points()?,
        None,
        cfg.solve_options(),
        &mut |s| states.push(s.clone()),
    )?;
    let mut rows = Vec::new();
    for s in &states {
        rows.push(measure(&spec, &omega, s, &limit)?);
    }
    let mut checks = Vec::new();

    let worst_res = states
        .iter()
        .map(|s| s.report.residual_sup)
        .fold(0.0f64, f64::max);
    let all_converged = states.iter().all(|s| s.report.converged);
    checks.push(Check::new(
        "every Newton solve converges",
        all_converged && worst_res <= 1e-10,
        format!("worst residual {worst_res:.3e} (tol 1e-10)"),
    ));

    let fiber0 = class_pairings(
        &ModelProfile::Hirzebruch(crate::radial::reference_potential(&spec, &mesh)),
        &spec,
    )?
    .fiber_area;
    let mut area_err = 0.0f64;
    for s in &states {
        let area = class_pairings(&s.profile, &spec)?.fiber_area;
        let predicted = (-s.t).exp() * fiber0;
        area_err = area_err.max((area - predicted).abs() / predicted);
    }
    checks.push(Check::new(
        "fiber area decays exactly with the class",
        area_err <= 1e-8,
        format!("worst relative error {area_err:.3e} (tol 1e-8)"),
    ));

    let mut ricci_min = f64::INFINITY;
    for s in states.iter().filter(|s| s.t >= 1.0 - 1e-12) {
        ricci_min = ricci_min.min(ricci_bound_check(s)?);
    }
    checks.push(Check::new(
        "Ricci stays above -2 w(t)",
        ricci_min >= -1e-6,
        format!("min eigenvalue of Ric + 2w = {ricci_min:.3e} (tol -1e-6)"),
    ));

    let fixture = load_reference(&fixture_path())?;
    let win = windowed(&rows);
    let mut worst: Option<String> = None;
    let mut bounded_ok = true;
    for k in BOUND_KEYS {
        let measured = bound_value(&win, k);
        let frozen = fixture.bounds[k];
        let ok = if k == "trace_equiv_low" {
            measured >= frozen * 0.95
        } else {
            measured <= frozen * 1.05
        };
        if !ok {
            bounded_ok = false;
            worst = Some(format!("{k}: measured {measured:.6e} vs frozen {frozen:.6e}"));
        }
    }
    checks.push(Check::new(
        "boundedness ladder within frozen bounds",
        bounded_ok,
        worst.unwrap_or_else(|| "all within 5% of the reference run".into()),
    ));

    let mut decay_ok = true;
    let mut decay_detail = Vec::new();
    for k in THRESHOLD_KEYS {
        let series: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.t >= 3.0 - 1e-12)
            .map(|r| (r.t, threshold_value(r, k)))
            .collect();
        let mono = monotone_decreasing(&series, 0.05);
        let fit = fit_decay(&series)?;
        let ok = mono && fit.rate > 0.0;
        if !ok {
            decay_ok = false;
        }
        decay_detail.push(format!("{k}: rate {:.2}", fit.rate));
    }
    checks.push(Check::new(
        "decay ladder is monotone with positive rates",
        decay_ok,
        decay_detail.join(", "),
    ));

    let last = rows.last().expect("nonempty");
    let mut tail_ok = true;
    let mut tail_worst = String::from("all below frozen thresholds");
    for k in THRESHOLD_KEYS {
        let measured = threshold_value(last, k);
        let frozen = fixture.thresholds_t12[k];
        if measured > frozen * 1.05 {
            tail_ok = false;
            tail_worst = format!("{k}: {measured:.3e} vs frozen {frozen:.3e}");
        }
    }
    let t1 = rows
        .iter()
        .find(|r| (r.t - 1.0).abs() < 1e-9)
        .expect("schedule contains t = 1");
    let rel = last.global_c0_dist / t1.global_c0_dist;
    if rel > 1e-2 {
        tail_ok = false;
        tail_worst = format!("global_c0_dist(12)/global_c0_dist(1) = {rel:.3e} > 1e-2");
    }
    checks.push(Check::new(
        "decay tail beats the frozen thresholds",
        tail_ok,
        if tail_ok {
            format!("global C0 contracted by {rel:.3e} since t = 1")
        } else {
            tail_worst
        },
    ));

    Ok(checks)
}

/// Gauge covariance and the dual-route limit pipeline on both models.
pub fn verify_pipeline(n: usize) -> Result<Vec<Check>, HarnessError> {
    let mut checks = Vec::new();
    for (label, spec) in [
        ("product", ModelSpec::product(1.0)),
        ("hirzebruch", ModelSpec::hirzebruch(1, 2.0, 4.0, 1.0)),
    ] {
        let lambda = 2.0f64;
        let mesh = Arc::new(build_mesh(n, spec.a())?);
        let schedule = [0.5, 1.0, 2.0];
        let omega = build_volume_form(&spec, spec.omega_gauge, &mesh)?;
        let base_states = {
            let mut v = Vec::new();
            march_resume(&spec, &omega, &mesh, &schedule, None, SolveOptions::default(), &mut |s| {
                v.push(s.clone())
            })?;
            v
        };
        let base_limit = build_limit_data(&spec, n)?;
        let scaled_gauge = spec.omega_gauge * lambda;
        let omega2 = build_volume_form(&spec, scaled_gauge, &mesh)?;
        let mut spec2 = spec;
        spec2.omega_gauge = scaled_gauge;
        let scaled_states = {
            let mut v = Vec::new();
            march_resume(&spec2, &omega2, &mesh, &schedule, None, SolveOptions::default(), &mut |s| {
                v.push(s.clone())
            })?;
            v
        };
        let scaled_limit = build_limit_data(&spec2, n)?;

        let mut phi_shift_err = 0.0f64;
        let mut metric_err = 0.0f64;
        for (s1, s2) in base_states.iter().zip(&scaled_states) {
            let predicted = -(1.0 - (-s1.t).exp()) * lambda.ln();
            for (a, b) in s1.phi.iter().zip(&s2.phi) {
                phi_shift_err = phi_shift_err.max((b - a - predicted).abs());
            }
            let (q1, q2, u1, u2) = match (&s1.profile, &s2.profile) {
                (ModelProfile::Hirzebruch(a), ModelProfile::Hirzebruch(b)) => {
                    (a.q(), b.q(), a.u_prime(), b.u_prime())
                }
                (
                    ModelProfile::Product { fiber: a, .. },
                    ModelProfile::Product { fiber: b, .. },
                ) => (a.q(), b.q(), &[] as &[f64], &[] as &[f64]),
                _ => unreachable!("same model"),
            };
            for (a, b) in q1.iter().zip(q2).chain(u1.iter().zip(u2)) {
                metric_err = metric_err.max((a - b).abs());
            }
        }
        let psi_shift_err = scaled_limit
            .psi
            .iter()
            .zip(&base_limit.psi)
            .fold(0.0f64, |m, (b, a)| m.max((b - a + lambda.ln()).abs()));
        let omega_y_err = scaled_limit
            .omega_y
            .q()
            .iter()
            .zip(base_limit.omega_y.q())
            .fold(0.0f64, |m, (b, a)| m.max((b - a).abs()));
        checks.push(Check::new(
            &format!("{label}: gauge shifts potentials only"),
            phi_shift_err <= 1e-9 && psi_shift_err <= 1e-9,
            format!("phi defect {phi_shift_err:.3e}, psi defect {psi_shift_err:.3e} (tol 1e-9)"),
        ));
        checks.push(Check::new(
            &format!("{label}: gauge leaves the metrics alone"),
            metric_err <= 1e-9 && omega_y_err <= 1e-9,
            format!("w(t) defect {metric_err:.3e}, w_Y defect {omega_y_err:.3e} (tol 1e-9)"),
        ));
        let route_gap = (base_limit.g.value - base_limit.g.pushforward).abs();
        checks.push(Check::new(
            &format!("{label}: G agrees across both routes"),
            route_gap <= 1e-8,
            format!(
                "fiber-average {:.12e} vs pushforward {:.12e}",
                base_limit.g.value, base_limit.g.pushforward
            ),
        ));
    }
    Ok(checks)
}

/// FD Hessian of the ansatz potential in real coordinates, Richardson
/// refined; returns the complex Hessian entries.
fn fd_hessian(
    u: &RadialPotential,
    z: [num_complex::Complex64; 2],
    h: f64,
) -> Result<[[num_complex::Complex64; 2]; 2], HarnessError> {
    use num_complex::Complex64;
    let eval = |w: [Complex64; 2]| -> Result<f64, HarnessError> {
        let r2 = w[0].norm_sqr() + w[1].norm_sqr();
        u.eval(r2.ln()).map_err(HarnessError::Mesh)
    };
    // real coordinates (x1, y1, x2, y2)
    let shift = |w: [Complex64; 2], k: usize, d: f64| -> [Complex64; 2] {
        let mut v = w;
        match k {
            0 => v[0] += Complex64::new(d, 0.0),
            1 => v[0] += Complex64::new(0.0, d),
            2 => v[1] += Complex64::new(d, 0.0),
            _ => v[1] += Complex64::new(0.0, d),
        }
        v
    };
    let second = |p: usize, q: usize, h: f64| -> Result<f64, HarnessError> {
        if p == q {
            let c = eval(z)?;
            Ok((eval(shift(z, p, h))? - 2.0 * c + eval(shift(z, p, -h))?) / (h * h))
        } else {
            let pp = eval(shift(shift(z, p, h), q, h))?;
            let pm = eval(shift(shift(z, p, h), q, -h))?;
            let mp = eval(shift(shift(z, p, -h), q, h))?;
            let mm = eval(shift(shift(z, p, -h), q, -h))?;
            Ok((pp - pm - mp + mm) / (4.0 * h * h))
        }
    };
    let mut real = [[0.0f64; 4]; 4];
    for p in 0..4 {
        for q in p..4 {
            let coarse = second(p, q, h)?;
            let fine = second(p, q, h / 2.0)?;
            let v = (4.0 * fine - coarse) / 3.0;
            real[p][q] = v;
            real[q][p] = v;
        }
    }
    // g_{i jbar} = (1/4)[(d_{x_i x_j} + d_{y_i y_j}) + i (d_{x_i y_j} - d_{y_i x_j})]
    let mut g = [[num_complex::Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            g[i][j] = num_complex::Complex64::new(
                0.25 * (real[xi][xj] + real[yi][yj]),
                0.25 * (real[xi][yj] - real[yi][xj]),
            );
        }
    }
    Ok(g)
}

fn study_config(model: &str, npoints: usize) -> RunConfig {
    // the steepest admissible twist keeps the truncation error measurable
    let spec = match model {
        "hirzebruch" => SpecConfig {
            model: "hirzebruch".into(),
            a: Some(2),
            b0: Some(1.0),
            binf: Some(5.0),
            kappa: 1.0,
        },
        _ => SpecConfig {
            model: "product".into(),
            a: None,
            b0: None,
            binf: None,
            kappa: 1.0,
        },
    };
    let gauge = if model == "product" { 4.0 } else { 1.0 };
    RunConfig {
        schema_version: 1,
        spec,
        mesh: MeshConfig { npoints },
        schedule: ScheduleConfig {
            t_start: Some(0.25),
            t_end: Some(1.0),
            steps: Some(4),
            explicit: None,
        },
        solver: SolverConfig {
            tol: 1e-12,
            max_iter: 50,
        },
        gauge,
        outputs: OutputsConfig {
            directory: "unused".into(),
            formats: default_formats(),
        },
    }
}

/// Mesh, Jacobian, pointwise-metric, and self-convergence checks.
pub fn verify_numerics(seed: u64) -> Result<Vec<Check>, HarnessError> {
    use rand::{Rng, SeedableRng};
    let mut checks = Vec::new();

    // differentiation order on an analytic profile
    let f = |x: f64| (3.0 * x).sin() * x.exp();
    let f1 = |x: f64| (3.0 * x).sin() * x.exp() + 3.0 * (3.0 * x).cos() * x.exp();
    let mut errs = Vec::new();
    for n in [64usize, 128] {
        let m = build_mesh(n, 1.0)?;
        let vals: Vec<f64> = m.nodes.iter().map(|&x| f(x)).collect();
        let d = m.dx(&vals);
        let e = m
            .nodes
            .iter()
            .zip(&d)
            .fold(0.0f64, |acc, (&x, v)| acc.max((v - f1(x)).abs()));
        errs.push(e);
    }
    let order = (errs[0] / errs[1]).log2();
    checks.push(Check::new(
        "differentiation order on analytic data",
        order >= 3.8,
        format!("observed order {order:.2} (need 3.8)"),
    ));

    // Newton linearization against a finite-difference directional derivative
    let n = 48;
    let mesh = Arc::new(build_mesh(n, 1.0)?);
    let spec = ModelSpec::hirzebruch(1, 2.0, 4.0, 1.0);
    let omega = build_volume_form(&spec, 1.0, &mesh)?;
    let p = crate::path::path_problem(&spec, &omega, 1.0, &mesh)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // smooth random fields: rough noise would break metric positivity
    let mut smooth = |amp: f64| -> Vec<f64> {
        let coeffs: Vec<f64> = (1..=4).map(|_| rng.gen_range(-amp..amp)).collect();
        mesh.nodes
            .iter()
            .map(|&x| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let k = (k + 1) as f64;
                        c * (k * std::f64::consts::PI * x).sin() / (k * k)
                    })
                    .sum()
            })
            .collect()
    };
    let phi = smooth(0.05);
    let dir = smooth(1.0);
    let jac = linearization(&p, &phi).map_err(solve_to_harness)?;
    let analytic = jac.matvec(&dir);
    let h = 1e-6;
    let plus: Vec<f64> = phi.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = phi.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
    let rp = residual(&p, &plus).map_err(solve_to_harness)?;
    let rm = residual(&p, &minus).map_err(solve_to_harness)?;
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let jac_err = analytic
        .iter()
        .enumerate()
        .fold(0.0f64, |m, (i, v)| {
            m.max(((rp[i] - rm[i]) / (2.0 * h) - v).abs())
        })
        / scale;
    checks.push(Check::new(
        "Jacobian matches finite differences",
        jac_err <= 1e-6,
        format!("relative error {jac_err:.3e} (tol 1e-6)"),
    ));

    // pointwise metric components against an independent complex-Hessian FD
    let fine = Arc::new(build_mesh(256, 1.0)?);
    let pert: Vec<f64> = fine
        .nodes
        .iter()
        .map(|&x| 0.05 * (std::f64::consts::PI * x).sin().powi(2) + 0.02 * x)
        .collect();
    let u = RadialPotential::new(
        fine,
        crate::radial::ProfileKind::Surface,
        crate::radial::AnsatzBase::new(2.0, 2.0),
        pert,
    );
    let mut metric_err = 0.0f64;
    for _ in 0..20 {
        let z = [
            num_complex::Complex64::new(rng.gen_range(0.3..1.2), rng.gen_range(-0.8..0.8)),
            num_complex::Complex64::new(rng.gen_range(0.3..1.2), rng.gen_range(-0.8..0.8)),
        ];
        let analytic = metric_components(&u, z)?;
        let fd = fd_hessian(&u, z, 0.02)?;
        let mut scale = 0.0f64;
        for row in analytic {
            for v in row {
                scale = scale.max(v.norm());
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                metric_err = metric_err.max((analytic[i][j] - fd[i][j]).norm() / scale);
            }
        }
    }
    checks.push(Check::new(
        "metric components match complex-Hessian FD",
        metric_err <= 1e-6,
        format!("worst relative error {metric_err:.3e} at 20 points (tol 1e-6)"),
    ));

    // quick gauge covariance probe
    let probe = {
        let spec = ModelSpec::product(1.0);
        let mesh = Arc::new(build_mesh(64, 1.0)?);
        let o1 = build_volume_form(&spec, 4.0, &mesh)?;
        let o2 = build_volume_form(&spec, 8.0, &mesh)?;
        let s1 = crate::path::solve_at(&spec, &o1, 1.0, &mesh, None)?;
        let s2 = crate::path::solve_at(&spec, &o2, 1.0, &mesh, None)?;
        let predicted = -(1.0 - (-1.0f64).exp()) * 2.0f64.ln();
        s1.phi
            .iter()
            .zip(&s2.phi)
            .fold(0.0f64, |m, (a, b)| m.max((b - a - predicted).abs()))
    };
    checks.push(Check::new(
        "gauge covariance probe",
        probe <= 1e-9,
        format!("shift defect {probe:.3e} (tol 1e-9)"),
    ));

    // self-convergence via a Richardson triplet on both models
    for model in ["product", "hirzebruch"] {
        let study = cmd_study(&[48, 96, 192], &study_config(model, 48))?;
        checks.push(Check::new(
            &format!("{model}: study order"),
            study.passed,
            study.summary.clone(),
        ));
    }

    Ok(checks)
}

fn solve_to_harness(e: SolveError) -> HarnessError {
    HarnessError::Path(PathError::from(e))
}

/// Runs one named verification suite.
pub fn cmd_verify(suite: &str, seed: u64) -> Result<Vec<Check>, HarnessError> {
    match suite {
        "einstein" => verify_einstein(256),
        "hirzebruch" => verify_hirzebruch(256),
        "pipeline" => verify_pipeline(128),
        "numerics" => verify_numerics(seed),
        other => Err(HarnessError::UnknownSuite(other.into())),
    }
}

/// Per-resolution study measurements on the fixed evaluation lattice.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub npoints: usize,
    pub phi_end: Vec<f64>,
    pub psi: Vec<f64>,
    /// sup error against the closed form, when one exists.
    pub closed_err: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub phi_orders: Vec<f64>,
    pub psi_orders: Vec<f64>,
    pub passed: bool,
    pub summary: String,
}

/// At or below this sup difference two resolutions are indistinguishable
/// from the Newton stopping tolerance, so no order can be extracted.
const STUDY_FLOOR: f64 = 1e-8;

fn lattice_values(grid: &[f64], mesh: &crate::mesh::Mesh) -> Result<Vec<f64>, HarnessError> {
    (0..LATTICE_N)
        .map(|s| {
            let x = (s as f64 + 0.5) / LATTICE_N as f64;
            mesh.interpolate(grid, x).map_err(HarnessError::Mesh)
        })
        .collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Richardson self-convergence study: reruns the config per resolution and
/// estimates observed orders for the path potential at t_end and the limit
/// potential. Errors at the solver floor count as converged (the product
/// model solves its spatially constant solution exactly at any resolution).
pub fn cmd_study(resolutions: &[usize], cfg: &RunConfig) -> Result<StudyReport, HarnessError> {
    if resolutions.len() < 3 {
        return Err(HarnessError::ConfigInvalid(format!(
            "study needs at least 3 resolutions, got {}",
            resolutions.len()
        )));
    }
    if resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::ConfigInvalid(
            "resolutions must be strictly increasing".into(),
        ));
    }
    let schedule = cfg.schedule_points()?;
    let t_end = *schedule.last().expect("validated nonempty");
    let is_product = cfg.spec.model == "product";
    let mut rows = Vec::new();
    for &n in resolutions {
        let mut cfg_n = cfg.clone();
        cfg_n.mesh.npoints = n;
        let spec = cfg_n.model_spec()?;
        let mesh = Arc::new(build_mesh(n, spec.a())?);
        let omega = build_volume_form(&spec, spec.omega_gauge, &mesh)?;
        let mut states = Vec::new();
        march_resume(
            &spec,
            &omega,
            &mesh,
            &schedule,
            None,
            cfg_n.solve_options(),
            &mut |s| states.push(s.clone()),
        )?;
        let limit = build_limit_data(&spec, n)?;
        let last = states.last().expect("nonempty schedule");
        let closed_err = is_product.then(|| {
            let target = closed_phi(t_end);
            last.phi
                .iter()
                .fold(0.0f64, |m, v| m.max((v - target).abs()))
        });
        let base_mesh = limit.omega_y.mesh.clone();
        rows.push(StudyRow {
            npoints: n,
            phi_end: lattice_values(&last.phi, &mesh)?,
            psi: lattice_values(&limit.psi, &base_mesh)?,
            closed_err,
        });
    }
    let order_between = |e1: f64, e2: f64, r: f64| (e1 / e2).ln() / r.ln();
    let mut phi_orders = Vec::new();
    let mut psi_orders = Vec::new();
    let mut floored = 0usize;
    let mut max_diff = 0.0f64;
    for k in 0..rows.len() - 2 {
        let r = resolutions[k + 2] as f64 / resolutions[k + 1] as f64;
        let e1p = sup_diff(&rows[k].phi_end, &rows[k + 1].phi_end);
        let e2p = sup_diff(&rows[k + 1].phi_end, &rows[k + 2].phi_end);
        max_diff = max_diff.max(e1p).max(e2p);
        if e1p.max(e2p) <= STUDY_FLOOR {
            floored += 1;
        } else {
            phi_orders.push(order_between(e1p, e2p, r));
        }
        let e1s = sup_diff(&rows[k].psi, &rows[k + 1].psi);
        let e2s = sup_diff(&rows[k + 1].psi, &rows[k + 2].psi);
        max_diff = max_diff.max(e1s).max(e2s);
        if e1s.max(e2s) <= STUDY_FLOOR {
            floored += 1;
        } else {
            psi_orders.push(order_between(e1s, e2s, r));
        }
    }
    let min_order = phi_orders
        .iter()
        .chain(&psi_orders)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let closed_note = if is_product {
        let worst = rows
            .iter()
            .filter_map(|r| r.closed_err)
            .fold(0.0f64, f64::max);
        format!(", closed-form error <= {worst:.3e} at every resolution")
    } else {
        String::new()
    };
    let passed = if phi_orders.is_empty() && psi_orders.is_empty() {
        // everything at the solver floor: stronger than any observed order
        rows.iter()
            .filter_map(|r| r.closed_err)
            .all(|e| e <= STUDY_FLOOR)
            || !is_product
    } else {
        min_order >= 3.5
    };
    let summary = if phi_orders.is_empty() && psi_orders.is_empty() {
        format!(
            "all differences at the solver floor ({floored} pairs, largest {max_diff:.2e}){closed_note}"
        )
    } else {
        format!(
            "observed orders phi {:?}, psi {:?}{closed_note}",
            phi_orders
                .iter()
                .map(|v| (v * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
            psi_orders
                .iter()
                .map(|v| (v * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
        )
    };
    Ok(StudyReport {
        rows,
        phi_orders,
        psi_orders,
        passed,
        summary,
    })
}

/// Columns plotted on a log scale (positive, decaying).
const LOG_COLUMNS: [&str; 8] = [
    "vol_ratio_min",
    "vol_ratio_max",
    "phi_dot_sup",
    "fiber_c0_dist",
    "global_c0_dist",
    "c0_phi_minus_psi",
    "l1_phi_minus_psi",
    "fiber_diam",
];

fn plot_script(column: &str, index: usize) -> String {
    let log = if LOG_COLUMNS.contains(&column) {
        "set logscale y\n"
    } else {
        ""
    };
    format!(
        "# {column} along the continuity path\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 't'\n\
         set ylabel '{column}'\n\
         {log}plot 'diagnostics.csv' using 1:{index} with linespoints\n"
    )
}

#[derive(Debug)]
pub struct ReportOutputs {
    pub report_path: PathBuf,
    pub integrity_warnings: Vec<String>,
}

/// Summarizes a completed run directory: decay fits, extremes, integrity of
/// every manifest-listed file, and one gnuplot script per diagnostic series.
pub fn cmd_report(dir: &Path) -> Result<ReportOutputs, HarnessError> {
    let mut manifest = read_manifest(dir)?;
    let mut warnings = Vec::new();
    for (name, digest) in &manifest.files {
        let p = dir.join(name);
        match fs::read(&p) {
            Ok(bytes) => {
                let actual = sha256_hex(&bytes);
                if actual != *digest {
                    warnings.push(format!(
                        "{name}: digest mismatch (manifest {digest}, actual {actual})"
                    ));
                }
            }
            Err(_) => warnings.push(format!("{name}: listed in manifest but unreadable")),
        }
    }
    if !manifest.complete {
        warnings.push("manifest is marked incomplete (interrupted run)".into());
    }

    let rows = parse_diagnostics_csv(&dir.join("diagnostics.csv"))?;
    if rows.is_empty() {
        return Err(HarnessError::ArtifactMalformed(
            "diagnostics.csv has no rows".into(),
        ));
    }
    let last = rows.last().expect("nonempty");
    let header: Vec<&str> = DiagnosticsRow::CSV_HEADER.split(',').collect();

    let plots_dir = dir.join("plots");
    fs::create_dir_all(&plots_dir)?;
    let mut plot_files = Vec::new();
    for (i, col) in header.iter().enumerate().skip(1) {
        let name = format!("{col}.gp");
        fs::write(plots_dir.join(&name), plot_script(col, i + 1))?;
        plot_files.push(name);
    }

    let decay_series: [(&str, Box<dyn Fn(&DiagnosticsRow) -> f64>); 6] = [
        ("c0_phi_minus_psi", Box::new(|r| r.c0_phi_minus_psi)),
        ("phi_dot_sup", Box::new(|r| r.phi_dot_sup)),
        ("tr_omegaY_minus_k", Box::new(|r| r.tr_omega_y_minus_k.abs())),
        ("fiber_c0_dist", Box::new(|r| r.fiber_c0_dist)),
        ("global_c0_dist", Box::new(|r| r.global_c0_dist)),
        ("fiber_diam", Box::new(|r| r.fiber_diam)),
    ];
    let mut fits = Vec::new();
    for (name, extract) in &decay_series {
        let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, extract(r))).collect();
        match fit_decay(&series) {
            Ok(fit) => fits.push((name.to_string(), Some(fit))),
            Err(_) => fits.push((name.to_string(), None)),
        }
    }

    let mut md = String::new();
    md.push_str("# Run report\n\n");
    md.push_str(&format!(
        "- config sha256: `{}`\n- code version: {}\n- slices: {} (t in [{}, {}])\n- complete: {}\n\n",
        manifest.config_sha256,
        manifest.code_version,
        rows.len(),
        rows[0].t,
        last.t,
        manifest.complete,
    ));
    if warnings.is_empty() {
        md.push_str("Integrity: all manifest digests verified.\n\n");
    } else {
        md.push_str("## Integrity warnings\n\n");
        for w in &warnings {
            md.push_str(&format!("- WARNING: {w}\n"));
        }
        md.push('\n');
    }
    md.push_str("## Decay fits\n\n");
    md.push_str("| series | model | rate | constant | r2 |\n|---|---|---|---|---|\n");
    for (name, fit) in &fits {
        match fit {
            Some(f) => {
                let model = match f.model {
                    DecayModel::Exponential => "exp(-rate t)",
                    DecayModel::Polynomial => "t^-rate",
                };
                md.push_str(&format!(
                    "| {name} | {model} | {:.3} | {:.3e} | {:.4} |\n",
                    f.rate, f.constant, f.quality
                ));
            }
            None => md.push_str(&format!("| {name} | (not enough decaying samples) | | | |\n")),
        }
    }
    md.push_str("\n## Extremes over the run\n\n");
    let sup_phi = rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.sup_phi));
    let inf_phi = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.inf_phi));
    let teq_low = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.trace_equiv_low));
    let teq_high = rows
        .iter()
        .fold(f64::NEG_INFINITY, |m, r| m.max(r.trace_equiv_high));
    md.push_str(&format!(
        "- potential range [{inf_phi:.6e}, {sup_phi:.6e}]\n\
         - trace equivalence ratios within [{teq_low:.6}, {teq_high:.6}]\n\
         - worst Newton residual {:.3e}\n\n",
        rows.iter().fold(0.0f64, |m, r| m.max(r.residual)),
    ));
    md.push_str("## Final slice\n\n| quantity | value |\n|---|---|\n");
    for (i, col) in header.iter().enumerate() {
        let line = last.csv_line();
        let v = line.split(',').nth(i).unwrap_or("").to_string();
        md.push_str(&format!("| {col} | {v} |\n"));
    }
    md.push_str("\n## Plots\n\nGnuplot scripts, one per series, in `plots/`:\n\n");
    for f in &plot_files {
        md.push_str(&format!("- `plots/{f}`\n"));
    }

    let report_path = dir.join("report.md");
    fs::write(&report_path, md)?;

    // fold the new artifacts into the manifest inventory
    manifest
        .files
        .insert("report.md".into(), sha256_hex(&fs::read(&report_path)?));
    for f in &plot_files {
        let p = plots_dir.join(f);
        manifest
            .files
            .insert(format!("plots/{f}"), sha256_hex(&fs::read(&p)?));
    }
    write_manifest(dir, &manifest)?;

    Ok(ReportOutputs {
        report_path,
        integrity_warnings: warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_product_config(dir: &str) -> String {
        format!(
            r#"{{
  "schema_version": 1,
  "spec": {{ "model": "product", "kappa": 1.0 }},
  "mesh": {{ "npoints": 48 }},
  "schedule": {{ "explicit": [0.5, 1.0, 1.5, 2.0] }},
  "solver": {{ "tol": 1e-10, "max_iter": 50 }},
  "gauge": 4.0,
  "outputs": {{ "directory": "{dir}", "formats": ["csv", "json"] }}
}}
"#
        )
    }

    #[test]
    fn config_round_trips_through_json() {
        let text = tiny_product_config("runs/x");
        let cfg = RunConfig::from_slice(text.as_bytes()).unwrap();
        let back = serde_json::to_vec(&cfg).unwrap();
        let again = RunConfig::from_slice(&back).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.schedule_points().unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = tiny_product_config("runs/x").replace(
            "\"gauge\": 4.0",
            "\"gauge\": 4.0, \"extra\": 1",
        );
        let err = RunConfig::from_slice(text.as_bytes()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn nested_unknown_keys_are_rejected() {
        let text = tiny_product_config("runs/x").replace(
            "\"npoints\": 48",
            "\"npoints\": 48, \"order\": 4",
        );
        assert_eq!(
            RunConfig::from_slice(text.as_bytes()).unwrap_err().exit_code(),
            2
        );
    }

    #[test]
    fn degenerate_moment_interval_is_a_config_error() {
        let text = r#"{
  "schema_version": 1,
  "spec": { "model": "hirzebruch", "a": 1, "b0": 4.0, "binf": 4.0, "kappa": 1.0 },
  "mesh": { "npoints": 48 },
  "schedule": { "explicit": [0.5, 1.0] },
  "solver": { "tol": 1e-10, "max_iter": 50 },
  "gauge": 1.0,
  "outputs": { "directory": "runs/x", "formats": ["csv"] }
}"#;
        let err = RunConfig::from_slice(text.as_bytes()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("moment interval"), "{err}");
    }

    #[test]
    fn schedule_modes_are_mutually_exclusive() {
        let text = tiny_product_config("runs/x").replace(
            "\"explicit\": [0.5, 1.0, 1.5, 2.0]",
            "\"explicit\": [0.5, 1.0], \"t_start\": 0.5",
        );
        let err = RunConfig::from_slice(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("schedule"), "{err}");
    }

    #[test]
    fn range_schedule_is_inclusive_and_even() {
        let text = tiny_product_config("runs/x").replace(
            "\"explicit\": [0.5, 1.0, 1.5, 2.0]",
            "\"t_start\": 1.0, \"t_end\": 3.0, \"steps\": 5",
        );
        let cfg = RunConfig::from_slice(text.as_bytes()).unwrap();
        let pts = cfg.schedule_points().unwrap();
        assert_eq!(pts, vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn run_writes_every_artifact_and_completes_the_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        let cfg_path = tmp.path().join("config.json");
        fs::write(&cfg_path, tiny_product_config("unused")).unwrap();
        let out = cmd_run(&cfg_path, Some(&dir), Some(7)).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(out.resumed_from.is_none());
        for name in [
            "config.json",
            "diagnostics.csv",
            "phi_snapshots.csv",
            "limit_data.json",
            "manifest.json",
        ] {
            assert!(dir.join(name).exists(), "{name} missing");
        }
        let manifest = read_manifest(&dir).unwrap();
        assert!(manifest.complete);
        assert_eq!(manifest.seed, Some(7));
        assert_eq!(manifest.files.len(), 4);
        for (name, digest) in &manifest.files {
            let actual = sha256_hex(&fs::read(dir.join(name)).unwrap());
            assert_eq!(&actual, digest, "{name}");
        }
        // verbatim config copy hashes to the recorded config digest
        assert_eq!(
            manifest.config_sha256,
            sha256_hex(&fs::read(dir.join("config.json")).unwrap())
        );
        let rows = parse_diagnostics_csv(&dir.join("diagnostics.csv")).unwrap();
        assert_eq!(rows.len(), 4);
        assert!((rows[3].t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_configs_reproduce_bit_identical_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg_path = tmp.path().join("config.json");
        fs::write(&cfg_path, tiny_product_config("unused")).unwrap();
        let d1 = tmp.path().join("a");
        let d2 = tmp.path().join("b");
        cmd_run(&cfg_path, Some(&d1), None).unwrap();
        cmd_run(&cfg_path, Some(&d2), None).unwrap();
        for name in ["diagnostics.csv", "phi_snapshots.csv", "limit_data.json"] {
            let a = fs::read(d1.join(name)).unwrap();
            let b = fs::read(d2.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn interrupted_runs_resume_from_the_last_persisted_slice() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg_path = tmp.path().join("config.json");
        fs::write(&cfg_path, tiny_product_config("unused")).unwrap();
        let full = tmp.path().join("full");
        cmd_run(&cfg_path, Some(&full), None).unwrap();

        let crashed = tmp.path().join("crashed");
        cmd_run(&cfg_path, Some(&crashed), None).unwrap();
        // forge a crash: manifest incomplete, artifacts truncated mid-stream
        let mut manifest = read_manifest(&crashed).unwrap();
        manifest.complete = false;
        manifest.files.clear();
        write_manifest(&crashed, &manifest).unwrap();
        let snaps = fs::read_to_string(crashed.join("phi_snapshots.csv")).unwrap();
        let keep: Vec<&str> = snaps.lines().take(1 + 2 * 48 + 20).collect();
        fs::write(crashed.join("phi_snapshots.csv"), keep.join("\n") + "\n").unwrap();
        let diags = fs::read_to_string(crashed.join("diagnostics.csv")).unwrap();
        let keep: Vec<&str> = diags.lines().take(1 + 3).collect();
        fs::write(crashed.join("diagnostics.csv"), keep.join("\n") + "\n").unwrap();

        let out = cmd_run(&cfg_path, Some(&crashed), None).unwrap();
        assert_eq!(out.resumed_from, Some(1.0));
        assert!(read_manifest(&crashed).unwrap().complete);
        let resumed = parse_diagnostics_csv(&crashed.join("diagnostics.csv")).unwrap();
        let fresh = parse_diagnostics_csv(&full.join("diagnostics.csv")).unwrap();
        assert_eq!(resumed.len(), fresh.len());
        for (r, f) in resumed.iter().zip(&fresh) {
            assert!((r.t - f.t).abs() < 1e-12);
            assert!(
                (r.sup_phi - f.sup_phi).abs() < 1e-8,
                "resumed sup_phi diverged at t = {}",
                r.t
            );
        }
    }

    #[test]
    fn completed_runs_are_not_resumed() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg_path = tmp.path().join("config.json");
        fs::write(&cfg_path, tiny_product_config("unused")).unwrap();
        let dir = tmp.path().join("out");
        cmd_run(&cfg_path, Some(&dir), None).unwrap();
        let out = cmd_run(&cfg_path, Some(&dir), None).unwrap();
        assert!(out.resumed_from.is_none(), "complete run must restart fresh");
    }

    #[test]
    fn report_summarizes_a_run_and_flags_tampering() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg_path = tmp.path().join("config.json");
        fs::write(&cfg_path, tiny_product_config("unused")).unwrap();
        let dir = tmp.path().join("out");
        cmd_run(&cfg_path, Some(&dir), None).unwrap();
        let rep = cmd_report(&dir).unwrap();
        assert!(rep.integrity_warnings.is_empty());
        let text = fs::read_to_string(&rep.report_path).unwrap();
        assert!(text.contains("## Decay fits"));
        assert!(text.contains("## Final slice"));
        assert!(dir.join("plots/global_c0_dist.gp").exists());
        let manifest = read_manifest(&dir).unwrap();
        assert!(manifest.files.contains_key("report.md"));

        // tamper with an artifact and re-report
        let mut bytes = fs::read(dir.join("limit_data.json")).unwrap();
        bytes.push(b' ');
        fs::write(dir.join("limit_data.json"), bytes).unwrap();
        let rep = cmd_report(&dir).unwrap();
        assert!(rep.integrity_warnings.iter().any(|w| w.contains("limit_data")));
        let text = fs::read_to_string(&rep.report_path).unwrap();
        assert!(text.contains("WARNING"));
    }

    #[test]
    fn report_requires_a_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let err = cmd_report(tmp.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn study_rejects_degenerate_resolution_lists() {
        let cfg = study_config("product", 48);
        assert_eq!(
            cmd_study(&[48, 96], &cfg).unwrap_err().exit_code(),
            2,
            "two resolutions"
        );
        assert_eq!(
            cmd_study(&[48, 96, 96], &cfg).unwrap_err().exit_code(),
            2,
            "non-increasing"
        );
    }

    #[test]
    fn unknown_suite_is_a_usage_error() {
        let err = cmd_verify("einsteinn", 0).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn solver_failure_leaves_an_error_record_and_an_incomplete_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg_path = tmp.path().join("config.json");
        // max_iter 1 cannot converge a cold start at t = 0.5
        let text = tiny_product_config("unused")
            .replace("\"max_iter\": 50", "\"max_iter\": 1")
            .replace("[0.5, 1.0, 1.5, 2.0]", "[3.0, 4.0]");
        fs::write(&cfg_path, text).unwrap();
        let dir = tmp.path().join("out");
        let err = cmd_run(&cfg_path, Some(&dir), None).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(dir.join("error.json").exists());
        assert!(!read_manifest(&dir).unwrap().complete);
    }

    /// Regenerates the frozen regression fixture; run explicitly after an
    /// intentional change to the reference dynamics, then commit the file.
    #[test]
    #[ignore]
    fn regenerate_frozen_reference() {
        let fixture = freeze_reference(512, &fixture_path()).unwrap();
        assert_eq!(fixture.npoints, 512);
    }
}
