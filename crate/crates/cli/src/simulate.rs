//! `simulate`: one run from a configuration to its output directory.
//!
//! Output layout:
//!
//! ```text
//! DIR/diagnostics.csv
//! DIR/snapshots/step_00000000.chdg ...
//! DIR/manifest.json
//! DIR/FAILED              only when the run stopped early
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chdg_core::diagnostics::DiagnosticsRecord;
use chdg_core::stepper::{run, Scheme, SimState};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::initial::initial_field;
use crate::io::{save_snapshot, DiagnosticsWriter};

pub const MASS_DRIFT_TOL: f64 = 1e-11;
pub const ENERGY_INCREASE_TOL: f64 = 1e-9;
pub const FAILURE_MARKER: &str = "FAILED";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { message: String },
}

/// Invariant monitors accumulated over the emitted records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monitors {
    pub initial_mass: f64,
    pub max_mass_drift: f64,
    /// Largest `(E_next - E_prev) / (1 + |E_prev|)` between consecutive records.
    pub max_relative_energy_increase: f64,
    pub energy_checked: bool,
    pub min_separation_gap: f64,
    pub passed: bool,
}

impl Monitors {
    fn new(initial_mass: f64, energy_checked: bool) -> Self {
        Monitors {
            initial_mass,
            max_mass_drift: 0.0,
            max_relative_energy_increase: f64::NEG_INFINITY,
            energy_checked,
            min_separation_gap: f64::INFINITY,
            passed: true,
        }
    }

    /// Folds in `record`; returns a description of the first violated invariant, if any.
    fn observe(&mut self, prev: Option<&DiagnosticsRecord>, record: &DiagnosticsRecord) -> Option<String> {
        let drift = (record.mass - self.initial_mass).abs();
        self.max_mass_drift = self.max_mass_drift.max(drift);
        self.min_separation_gap = self.min_separation_gap.min(record.separation_gap);
        let mut violation = None;
        if let Some(p) = prev {
            let rise = (record.energy - p.energy) / (1.0 + p.energy.abs());
            self.max_relative_energy_increase = self.max_relative_energy_increase.max(rise);
            if self.energy_checked && rise > ENERGY_INCREASE_TOL {
                violation = Some(format!("energy increased by {rise:e} (relative) at t = {}", record.t));
            }
        }
        if drift > MASS_DRIFT_TOL {
            violation = Some(format!("mass drift {drift:e} at t = {}", record.t));
        }
        if !(record.separation_gap > 0.0) {
            violation = Some(format!("separation lost at t = {}", record.t));
        }
        if violation.is_some() {
            self.passed = false;
        }
        violation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub steps: usize,
    pub final_time: f64,
    pub final_energy: f64,
    pub records: usize,
    pub snapshots: Vec<String>,
    pub monitors: Monitors,
}

impl RunSummary {
    /// 0 when the run completed and every monitor held, 1 for a monitor violation, 2 for a solver failure.
    pub fn exit_code(&self) -> i32 {
        match (&self.status, self.monitors.passed) {
            (RunStatus::Completed, true) => 0,
            (RunStatus::Completed, false) => 1,
            (RunStatus::Failed { .. }, _) => 2,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    format_version: u32,
    config: &'a RunConfig,
    summary: &'a RunSummary,
    diagnostics: &'static str,
}

fn snapshot_name(step: usize) -> String {
    format!("snapshots/step_{step:08}.chdg")
}

/// Runs `cfg` and writes all outputs into `out`. With `strict`, the first monitor
/// violation stops the run as a failure. Solver failures are reported in the
/// summary (with a `FAILED` marker on disk), not as `Err`.
pub fn run_simulation(cfg: &RunConfig, out: &Path, strict: bool) -> Result<RunSummary> {
    fs::create_dir_all(out.join("snapshots"))?;
    let marker = out.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let u0 = initial_field(cfg)?;
    let mut writer = DiagnosticsWriter::new(BufWriter::new(File::create(out.join("diagnostics.csv"))?))?;
    let mut monitors = Monitors::new(chdg_core::ops::mean(&u0), cfg.stepper.scheme == Scheme::ConvexSplitting);
    let mut prev: Option<DiagnosticsRecord> = None;
    let mut snapshots = Vec::new();
    let mut last_state: Option<(usize, f64, f64)> = None;
    let mut records = 0usize;
    let mut io_error: Option<CliError> = None;

    let result = {
        let mut sink = |record: &DiagnosticsRecord, state: &SimState| -> chdg_core::Result<()> {
            let step = state.step_index;
            let mut write = || -> Result<()> {
                writer.write(record)?;
                let due = step == 0 || (cfg.snapshot_stride > 0 && step % cfg.snapshot_stride == 0);
                if due {
                    let name = snapshot_name(step);
                    save_snapshot(&out.join(&name), state.t, &state.u)?;
                    snapshots.push(name);
                }
                Ok(())
            };
            if let Err(e) = write() {
                let message = e.to_string();
                io_error = Some(e);
                return Err(chdg_core::Error::Aborted(format!("output failed: {message}")));
            }
            let violation = monitors.observe(prev.as_ref(), record);
            prev = Some(*record);
            records += 1;
            last_state = Some((step, state.t, record.energy));
            match violation {
                Some(v) if strict => Err(chdg_core::Error::Aborted(format!("monitor violation: {v}"))),
                _ => Ok(()),
            }
        };
        run(u0, &cfg.params, &cfg.stepper, cfg.t_end, cfg.stride, &mut sink)
    };
    writer.flush()?;
    if let Some(e) = io_error {
        return Err(e);
    }

    let (status, final_state) = match result {
        Ok(state) => (RunStatus::Completed, Some(state)),
        Err(e) => (RunStatus::Failed { message: e.to_string() }, None),
    };
    if let Some(state) = &final_state {
        let name = snapshot_name(state.step_index);
        if !snapshots.contains(&name) {
            save_snapshot(&out.join(&name), state.t, &state.u)?;
            snapshots.push(name);
        }
    }
    let (steps, final_time, final_energy) = last_state.unwrap_or((0, 0.0, f64::NAN));
    let summary = RunSummary {
        status,
        steps,
        final_time,
        final_energy,
        records,
        snapshots,
        monitors,
    };
    if let RunStatus::Failed { message } = &summary.status {
        fs::write(&marker, format!("{message}\n"))?;
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        config: cfg,
        summary: &summary,
        diagnostics: "diagnostics.csv",
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text)?;
    Ok(summary)
}

/// Default output directory when `--out` is absent.
pub fn default_out_dir(config_path: &Path) -> PathBuf {
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    PathBuf::from(format!("{stem}-out"))
}
