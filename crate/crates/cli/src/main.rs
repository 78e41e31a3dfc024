use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chdg_cli::config::{override_key, parse_config_in};
use chdg_cli::error::{CliError, Result};
use chdg_cli::io::load_snapshot;
use chdg_cli::simulate::{default_out_dir, run_simulation, RunStatus};
use chdg_cli::suites::{format_report, run_suite};
use chdg_cli::sweep::run_sweep;
use clap::{Parser, Subcommand};

/// Exit status for configuration, usage and I/O errors.
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "chdg", version, about = "Cahn-Hilliard solver with logarithmic potential and singular gradient weight")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Abort a run at the first invariant-monitor violation.
    #[arg(long, global = true)]
    strict: bool,

    /// Overrides `run.seed` of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Simulate { config: PathBuf },
    /// Run a verification suite (`all` for every suite).
    Verify { suite: String },
    /// Run one simulation per value of a configuration key.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Print the header and summary statistics of a snapshot.
    Inspect { snapshot: PathBuf },
}

fn read_template(path: &Path, seed: Option<u64>) -> Result<String> {
    let text = fs::read_to_string(path)?;
    Ok(match seed {
        Some(s) => override_key(&text, "run.seed", &s.to_string()),
        None => text,
    })
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { config } => {
            let cfg = parse_config_in(&read_template(&config, cli.seed)?, base_dir(&config))?;
            let out = cli.out.unwrap_or_else(|| default_out_dir(&config));
            let summary = run_simulation(&cfg, &out, cli.strict)?;
            match &summary.status {
                RunStatus::Completed => println!(
                    "completed {} steps to t = {} in {}",
                    summary.steps,
                    summary.final_time,
                    out.display()
                ),
                RunStatus::Failed { message } => eprintln!("run failed: {message}"),
            }
            let m = &summary.monitors;
            println!(
                "mass drift {:e}, max relative energy increase {:e}, min separation gap {}: {}",
                m.max_mass_drift,
                m.max_relative_energy_increase,
                m.min_separation_gap,
                if m.passed { "monitors passed" } else { "MONITOR VIOLATION" }
            );
            Ok(summary.exit_code() as u8)
        }
        Command::Verify { suite } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from(format!("verify-{suite}")));
            fs::create_dir_all(&out)?;
            let reports = run_suite(&suite, &out)?;
            for r in &reports {
                println!("{}", format_report(r));
            }
            let mut text = serde_json::to_string_pretty(&reports)?;
            text.push('\n');
            fs::write(out.join("reports.json"), text)?;
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!("{} of {} checks passed", reports.len() - failed, reports.len());
            Ok(u8::from(failed > 0))
        }
        Command::Sweep { config, axis, values } => {
            let template = read_template(&config, cli.seed)?;
            let out = cli.out.unwrap_or_else(|| default_out_dir(&config));
            let members = run_sweep(&template, base_dir(&config), &axis, &values, &out, cli.strict)?;
            let mut code = 0;
            for m in &members {
                let c = m.summary.exit_code();
                println!("{axis} = {}: exit {c}, {} steps", m.value, m.summary.steps);
                code = code.max(c);
            }
            println!("summary written to {}", out.join("summary.csv").display());
            Ok(code as u8)
        }
        Command::Inspect { snapshot } => {
            let (t, field) = load_snapshot(&snapshot)?;
            let grid = field.grid();
            let n = field.values().len() as f64;
            println!("time    {t}");
            println!("cells   {:?}", grid.cells());
            println!("lengths {:?}", grid.lengths());
            println!("min     {}", field.min());
            println!("max     {}", field.max());
            println!("mean    {}", field.values().iter().sum::<f64>() / n);
            println!("gap     {}", 1.0 - field.max_abs());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Solver(_) => ExitCode::from(2),
                _ => ExitCode::from(EXIT_USAGE),
            }
        }
    }
}
