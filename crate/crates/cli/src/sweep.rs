//! `sweep`: one simulation per value of a single configuration key.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{is_known_key, override_key, parse_config_in, RunConfig};
use crate::error::{CliError, Result};
use crate::io::format_float;
use crate::simulate::{run_simulation, RunStatus, RunSummary};

pub const SUMMARY_HEADER: [&str; 9] = [
    "member",
    "value",
    "status",
    "exit_code",
    "steps",
    "final_time",
    "final_energy",
    "max_mass_drift",
    "min_separation_gap",
];

#[derive(Debug, Clone)]
pub struct SweepMember {
    pub value: String,
    pub dir: PathBuf,
    pub summary: RunSummary,
}

/// Directory name of the member with `axis = value`.
pub fn member_dir_name(axis: &str, value: &str) -> String {
    let safe: String = value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "+-.".contains(c) { c } else { '_' })
        .collect();
    format!("{axis}={safe}")
}

/// Runs the configuration `template` once per entry of `values` with `axis`
/// overridden, in parallel, writing each member into its own subdirectory of
/// `out` and a `summary.csv` table. Every member configuration is validated
/// before any run starts.
pub fn run_sweep(
    template: &str,
    base: &Path,
    axis: &str,
    values: &[String],
    out: &Path,
    strict: bool,
) -> Result<Vec<SweepMember>> {
    if !is_known_key(axis) {
        return Err(CliError::Usage(format!("unknown sweep axis {axis}")));
    }
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|v| {
            parse_config_in(&override_key(template, axis, v), base).map_err(|e| match e {
                CliError::Config { line, message } => CliError::Config {
                    line,
                    message: format!("{axis} = {v}: {message}"),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<RunConfig>>>()?;
    fs::create_dir_all(out)?;
    let members = values
        .par_iter()
        .zip(configs.par_iter())
        .map(|(value, cfg)| {
            let dir = out.join(member_dir_name(axis, value));
            let summary = run_simulation(cfg, &dir, strict)?;
            Ok(SweepMember {
                value: value.clone(),
                dir,
                summary,
            })
        })
        .collect::<Result<Vec<SweepMember>>>()?;
    write_summary(&out.join("summary.csv"), axis, &members)?;
    Ok(members)
}

fn write_summary(path: &Path, axis: &str, members: &[SweepMember]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for m in members {
        let s = &m.summary;
        let status = match s.status {
            RunStatus::Completed => "completed",
            RunStatus::Failed { .. } => "failed",
        };
        w.write_record([
            member_dir_name(axis, &m.value),
            m.value.clone(),
            status.to_string(),
            s.exit_code().to_string(),
            s.steps.to_string(),
            format_float(s.final_time),
            format_float(s.final_energy),
            format_float(s.monitors.max_mass_drift),
            format_float(s.monitors.min_separation_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn member_names_are_path_safe() {
        assert_eq!(member_dir_name("model.delta", "0.0625"), "model.delta=0.0625");
        assert_eq!(member_dir_name("ic.path", "a/b c"), "ic.path=a_b_c");
    }
}
