//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! grid.n = 128            # or "64, 64" for a rectangle
//! grid.length = 32.0      # one value per axis, default 1
//! model.lambda = 3
//! stepper.dt = 0.02
//! run.t_end = 100
//! ic.kind = cosine        # constant | cosine | tanh | file
//! ```
//!
//! Every key may appear at most once and unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chdg_core::grid::Grid;
use chdg_core::stepper::{Constitutive, Scheme, StepperConfig};
use chdg_core::ModelParams;
use serde::Serialize;

use crate::error::{CliError, Result};

const KEYS: &[&str] = &[
    "grid.n",
    "grid.length",
    "model.lambda",
    "model.epsilon",
    "model.delta",
    "model.entropy_p",
    "model.k_delta",
    "stepper.scheme",
    "stepper.dt",
    "stepper.newton_tol",
    "stepper.newton_max_iter",
    "stepper.clip_margin",
    "stepper.constitutive",
    "run.t_end",
    "run.stride",
    "run.snapshot_stride",
    "run.seed",
    "ic.kind",
    "ic.mean",
    "ic.amplitude",
    "ic.mode",
    "ic.steepness",
    "ic.path",
    "ic.noise",
    "ic.regularize",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Constant { mean: f64 },
    /// `mean + amplitude cos(mode pi x / L)` (times the same factor in `y` in 2D).
    Cosine { mode: u32, amplitude: f64, mean: f64 },
    /// `mean + 0.999 (1 - |mean|) tanh(steepness (x - L/2))`.
    Tanh { steepness: f64, mean: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
    pub params: ModelParams,
    pub stepper: StepperConfig,
    pub t_end: f64,
    pub initial: InitialCondition,
    /// Amplitude of the seeded cosine-mode perturbation added to the initial condition.
    pub noise: f64,
    pub regularize: bool,
    pub stride: usize,
    /// Snapshot every this many steps; 0 writes only the first and last state.
    pub snapshot_stride: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(&self.cells, &self.lengths)?)
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Entries {
    map: BTreeMap<String, Entry>,
}

fn config_error(line: Option<usize>, message: impl Into<String>) -> CliError {
    CliError::Config {
        line,
        message: message.into(),
    }
}

impl Entries {
    fn take(&self, key: &str) -> Option<&Entry> {
        self.map.get(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<(T, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(|v| Some((v, e.line)))
                .map_err(|_| config_error(Some(e.line), format!("{key}: expected {what}, got '{}'", e.value))),
        }
    }

    fn real(&self, key: &str) -> Result<Option<(f64, usize)>> {
        match self.parse::<f64>(key, "a real number")? {
            Some((v, line)) if !v.is_finite() => Err(config_error(Some(line), format!("{key}: must be finite"))),
            other => Ok(other),
        }
    }

    fn real_or(&self, key: &str, default: f64) -> Result<(f64, Option<usize>)> {
        Ok(self.real(key)?.map_or((default, None), |(v, l)| (v, Some(l))))
    }

    fn list<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<(Vec<T>, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(|p| p.trim().parse::<T>())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map(|v| Some((v, e.line)))
                .map_err(|_| config_error(Some(e.line), format!("{key}: expected {what}, got '{}'", e.value))),
        }
    }

    fn required<T>(&self, key: &str, value: Option<T>) -> Result<T> {
        value.ok_or_else(|| config_error(None, format!("missing required key {key}")))
    }
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_error(Some(line), "expected 'key = value'"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(config_error(Some(line), "expected 'key = value'"));
        }
        if !KEYS.contains(&key) {
            return Err(config_error(Some(line), format!("unknown key {key}")));
        }
        if let Some(prev) = map.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        ) {
            return Err(config_error(
                Some(line),
                format!("duplicate key {key} (first set on line {})", prev.line),
            ));
        }
    }
    Ok(Entries { map })
}

fn check(line: Option<usize>, ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(config_error(line, message))
    }
}

/// Parses and validates a configuration; relative `ic.path` values are resolved against `base`.
pub fn parse_config_in(text: &str, base: &Path) -> Result<RunConfig> {
    let e = tokenize(text)?;

    let (cells, cells_line) = e.required("grid.n", e.list::<usize>("grid.n", "cell counts")?)?;
    check(
        Some(cells_line),
        cells.len() == 1 || cells.len() == 2,
        "grid.n: one or two cell counts",
    )?;
    let (lengths, lengths_line) = match e.list::<f64>("grid.length", "lengths")? {
        Some((l, line)) => (l, Some(line)),
        None => (vec![1.0; cells.len()], None),
    };
    check(
        lengths_line,
        lengths.len() == cells.len(),
        "grid.length: one length per axis",
    )?;
    let grid = Grid::new(&cells, &lengths).map_err(|err| config_error(Some(cells_line), err.to_string()))?;

    let defaults = ModelParams::default();
    let (lambda, lambda_line) = e.real_or("model.lambda", defaults.lambda)?;
    check(lambda_line, lambda >= 0.0, "model.lambda: must be non-negative")?;
    let (epsilon, eps_line) = e.real_or("model.epsilon", defaults.epsilon)?;
    check(eps_line, epsilon >= 0.0, "model.epsilon: must be non-negative")?;
    let (delta, delta_line) = e.real_or("model.delta", defaults.delta)?;
    check(
        delta_line,
        delta > 0.0 && delta < 1.0 / 6.0,
        "model.delta: must lie in (0, 1/6)",
    )?;
    let (p, p_line) = e.real_or("model.entropy_p", defaults.entropy_p)?;
    let mut params =
        ModelParams::new(lambda, epsilon, delta, p).map_err(|err| config_error(p_line, err.to_string()))?;
    if let Some((k, line)) = e.real("model.k_delta")? {
        params = params
            .with_k_delta(k)
            .map_err(|err| config_error(Some(line), err.to_string()))?;
    }

    let scheme = match e.take("stepper.scheme") {
        None => Scheme::ConvexSplitting,
        Some(entry) => match entry.value.as_str() {
            "convex_splitting" => Scheme::ConvexSplitting,
            "backward_euler_full" => Scheme::BackwardEulerFull,
            other => {
                return Err(config_error(
                    Some(entry.line),
                    format!("stepper.scheme: unknown scheme '{other}'"),
                ))
            }
        },
    };
    let dt = e.real_or("stepper.dt", StepperConfig::default_dt(&grid))?.0;
    let mut stepper = StepperConfig::new(scheme, dt);
    if let Some((tol, _)) = e.real("stepper.newton_tol")? {
        stepper.newton_tol = tol;
    }
    if let Some((it, _)) = e.parse::<usize>("stepper.newton_max_iter", "an integer")? {
        stepper.newton_max_iter = it;
    }
    if let Some((m, _)) = e.real("stepper.clip_margin")? {
        stepper.clip_margin = Some(m);
    }
    if let Some(entry) = e.take("stepper.constitutive") {
        stepper.constitutive = match entry.value.as_str() {
            "truncated" => Constitutive::Truncated,
            "exact" => Constitutive::Exact,
            other => {
                return Err(config_error(
                    Some(entry.line),
                    format!("stepper.constitutive: unknown value '{other}'"),
                ))
            }
        };
    }
    let stepper_line = e
        .take("stepper.dt")
        .or(e.take("stepper.newton_tol"))
        .or(e.take("stepper.clip_margin"))
        .map(|x| x.line);
    stepper
        .validate(&params)
        .map_err(|err| config_error(stepper_line, err.to_string()))?;

    let (t_end, t_line) = e.required("run.t_end", e.real("run.t_end")?)?;
    check(Some(t_line), t_end >= 0.0, "run.t_end: must be non-negative")?;
    let stride = e.parse::<usize>("run.stride", "an integer")?.map_or(1, |x| x.0);
    check(e.take("run.stride").map(|x| x.line), stride >= 1, "run.stride: must be at least 1")?;
    let snapshot_stride = e
        .parse::<usize>("run.snapshot_stride", "an integer")?
        .map_or(0, |x| x.0);
    let seed = e.parse::<u64>("run.seed", "an unsigned integer")?.map_or(0, |x| x.0);

    let kind = e.required("ic.kind", e.take("ic.kind"))?;
    let mean_entry = e.real("ic.mean")?;
    let mean = mean_entry.map_or(0.0, |x| x.0);
    check(
        mean_entry.map(|x| x.1),
        mean.abs() < 1.0,
        "ic.mean: must lie strictly inside (-1, 1)",
    )?;
    let initial = match kind.value.as_str() {
        "constant" => InitialCondition::Constant { mean },
        "cosine" => {
            let mode = e.parse::<u32>("ic.mode", "an integer")?.map_or(1, |x| x.0);
            let (amplitude, amp_line) = e.real_or("ic.amplitude", 0.1)?;
            check(
                amp_line,
                mean.abs() + amplitude.abs() < 1.0,
                "ic.amplitude: |mean| + |amplitude| must be below 1",
            )?;
            InitialCondition::Cosine { mode, amplitude, mean }
        }
        "tanh" => {
            let (steepness, _) = e.real_or("ic.steepness", 10.0)?;
            InitialCondition::Tanh { steepness, mean }
        }
        "file" => {
            let entry = e.required("ic.path", e.take("ic.path"))?;
            let path = base.join(&entry.value);
            check(
                Some(entry.line),
                path.is_file(),
                &format!("ic.path: no such file {}", path.display()),
            )?;
            InitialCondition::File { path }
        }
        other => {
            return Err(config_error(
                Some(kind.line),
                format!("ic.kind: unknown kind '{other}'"),
            ))
        }
    };
    let (noise, noise_line) = e.real_or("ic.noise", 0.0)?;
    check(noise_line, noise >= 0.0, "ic.noise: must be non-negative")?;
    let regularize = match e.take("ic.regularize") {
        None => true,
        Some(entry) => entry.value.parse::<bool>().map_err(|_| {
            config_error(Some(entry.line), "ic.regularize: expected true or false")
        })?,
    };

    Ok(RunConfig {
        cells,
        lengths,
        params,
        stepper,
        t_end,
        initial,
        noise,
        regularize,
        stride,
        snapshot_stride,
        seed,
    })
}

/// [`parse_config_in`] relative to the working directory.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_in(text, Path::new("."))
}

/// Reads and parses a configuration file; `ic.path` is resolved next to it.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_in(&text, base)
}

/// Replaces (or appends) `key = value` in configuration text; used by sweeps.
pub fn override_key(text: &str, key: &str, value: &str) -> String {
    let mut out = String::new();
    let mut found = false;
    for line in text.lines() {
        let content = line.split('#').next().unwrap_or("");
        let matches = content
            .split_once('=')
            .is_some_and(|(k, _)| k.trim() == key);
        if matches {
            out.push_str(&format!("{key} = {value}\n"));
            found = true;
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    if !found {
        out.push_str(&format!("{key} = {value}\n"));
    }
    out
}

/// Whether `key` is a recognised configuration key.
pub fn is_known_key(key: &str) -> bool {
    KEYS.contains(&key)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "grid.n = 64\nstepper.dt = 1e-4\nrun.t_end = 0.01\nic.kind = constant\nic.mean = 0.2\n";

    #[test]
    fn minimal_config_parses() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.cells, vec![64]);
        assert_eq!(cfg.lengths, vec![1.0]);
        assert_eq!(cfg.stepper.dt, 1e-4);
        assert_eq!(cfg.initial, InitialCondition::Constant { mean: 0.2 });
        assert!(cfg.regularize);
        assert_eq!(cfg.stride, 1);
    }

    #[test]
    fn full_config_parses() {
        let text = "# spinodal\ngrid.n = 32, 16\ngrid.length = 2.0, 1.0\nmodel.lambda = 3 # unstable\n\
                    model.epsilon = 0.1\nmodel.delta = 0.05\nmodel.entropy_p = 0.75\n\
                    stepper.scheme = backward_euler_full\nstepper.newton_tol = 1e-9\nstepper.clip_margin = 0.01\n\
                    run.t_end = 1\nrun.stride = 5\nrun.snapshot_stride = 10\nrun.seed = 42\n\
                    ic.kind = cosine\nic.mode = 2\nic.amplitude = 0.05\nic.noise = 1e-3\nic.regularize = false\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.cells, vec![32, 16]);
        assert_eq!(cfg.params.lambda, 3.0);
        assert_eq!(cfg.params.entropy_p, 0.75);
        assert_eq!(cfg.stepper.scheme, Scheme::BackwardEulerFull);
        assert_eq!(cfg.stepper.clip_margin, Some(0.01));
        assert_eq!(cfg.seed, 42);
        assert!(!cfg.regularize);
        assert_eq!(
            cfg.initial,
            InitialCondition::Cosine {
                mode: 2,
                amplitude: 0.05,
                mean: 0.0
            }
        );
    }

    fn line_of(err: CliError) -> Option<usize> {
        match err {
            CliError::Config { line, .. } => line,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn constraint_violations_name_the_line() {
        let negative = format!("{MINIMAL}model.lambda = -1\n");
        assert_eq!(line_of(parse_config(&negative).unwrap_err()), Some(6));
        let wide = format!("{MINIMAL}model.delta = 0.2\n");
        assert_eq!(line_of(parse_config(&wide).unwrap_err()), Some(6));
        let unknown = format!("{MINIMAL}model.gamma = 1\n");
        assert_eq!(line_of(parse_config(&unknown).unwrap_err()), Some(6));
        let duplicate = format!("{MINIMAL}grid.n = 32\n");
        assert_eq!(line_of(parse_config(&duplicate).unwrap_err()), Some(6));
        let typo = MINIMAL.replace("1e-4", "fast");
        assert_eq!(line_of(parse_config(&typo).unwrap_err()), Some(2));
        let pure = MINIMAL.replace("0.2", "1.0");
        assert_eq!(line_of(parse_config(&pure).unwrap_err()), Some(5));
        let garbage = format!("{MINIMAL}just words\n");
        assert_eq!(line_of(parse_config(&garbage).unwrap_err()), Some(6));
    }

    #[test]
    fn missing_keys_are_reported() {
        let no_end = MINIMAL.replace("run.t_end = 0.01\n", "");
        assert!(matches!(parse_config(&no_end), Err(CliError::Config { line: None, .. })));
        let no_ic = "grid.n = 8\nrun.t_end = 1\n";
        assert!(parse_config(no_ic).is_err());
        let missing_file = format!("{}ic.path = /nonexistent/u0.chdg\n", MINIMAL.replace("constant", "file"));
        assert!(parse_config(&missing_file).is_err());
    }

    #[test]
    fn default_dt_follows_grid_length() {
        let cfg = parse_config("grid.n = 16\ngrid.length = 3.0\nrun.t_end = 0\nic.kind = constant\n").unwrap();
        let grid = cfg.grid().unwrap();
        assert_eq!(cfg.stepper.dt, StepperConfig::default_dt(&grid));
    }

    #[test]
    fn override_replaces_or_appends() {
        let replaced = override_key(MINIMAL, "ic.mean", "0.4");
        assert_eq!(parse_config(&replaced).unwrap().initial, InitialCondition::Constant { mean: 0.4 });
        let appended = override_key(MINIMAL, "model.delta", "0.01");
        assert_eq!(parse_config(&appended).unwrap().params.delta, 0.01);
    }
}
