//! Verification suites run by `chdg verify <suite>`.
//!
//! Each suite is a battery of oracle comparisons returning one [`OracleReport`]
//! per check. Runs inside a suite are independent and execute in parallel.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use chdg_core::diagnostics::{energy, vprime_distance, DiagnosticsRecord};
use chdg_core::model::{
    gradient_weight, gradient_weight_d1, gradient_weight_d2, log_potential_prime, logistic_order,
    phase_angle_d1, EntropyWeight, SEPARATION_FLOOR,
};
use chdg_core::ops::{norm_l2, norm_vprime_zero_mean, seminorm_h1, solve_shifted_helmholtz};
use chdg_core::regularize::regularize_initial;
use chdg_core::stepper::{run, step, Scheme, SimState, StepperConfig};
use chdg_core::verification::{
    dispersion_oracle, dpgg_discrete_convergence, dpgg_identity_check, formulation_equivalence_suite,
    measure_growth_rate, reference_integrate, CosineSeries, Criterion, DispersionCase, OracleReport, SquareWeight,
};
use chdg_core::{Field, Grid, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{parse_config, RunConfig};
use crate::error::{CliError, Result};
use crate::initial::initial_field;
use crate::io::{read_snapshot, write_snapshot};
use crate::simulate::run_simulation;

pub const SUITES: [&str; 10] = [
    "identities",
    "regularization",
    "conservation",
    "dispersion",
    "formulations",
    "dpgg",
    "separation",
    "uniqueness",
    "reference",
    "determinism",
];

/// Runs the named suite (or `all`). `work` receives any files a suite writes.
pub fn run_suite(name: &str, work: &Path) -> Result<Vec<OracleReport>> {
    match name {
        "identities" => identities(),
        "regularization" => regularization(),
        "conservation" => conservation(),
        "dispersion" => dispersion(),
        "formulations" => formulations(),
        "dpgg" => dpgg(),
        "separation" => separation(),
        "uniqueness" => uniqueness(),
        "reference" => reference(),
        "determinism" => determinism(work),
        "all" => {
            let mut all = Vec::new();
            for s in SUITES {
                all.extend(run_suite(s, &work.join(s))?);
            }
            Ok(all)
        }
        other => Err(CliError::UnknownSuite(other.to_string())),
    }
}

/// One line per report: verdict, name, inputs and measured values.
pub fn format_report(r: &OracleReport) -> String {
    format!(
        "{} {} [{}] measured={:?} reference={:?} tol={:e}",
        if r.passed { "PASS" } else { "FAIL" },
        r.name,
        r.inputs,
        r.measured,
        r.reference,
        r.tolerance
    )
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn min_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, f64::min)
}

/// Runs a configuration and collects every emitted record.
fn collect_run(cfg: &RunConfig) -> Result<Vec<DiagnosticsRecord>> {
    let u0 = initial_field(cfg)?;
    let mut records = Vec::new();
    let mut sink = |r: &DiagnosticsRecord, _: &SimState| {
        records.push(*r);
        Ok(())
    };
    run(u0, &cfg.params, &cfg.stepper, cfg.t_end, cfg.stride, &mut sink)?;
    Ok(records)
}

// ---------------------------------------------------------------- identities

/// 1000 midpoints of `[-0.99, 0.99]`.
fn identity_points() -> Vec<f64> {
    (0..1000).map(|k| -0.99 + 1.98 * (k as f64 + 0.5) / 1000.0).collect()
}

/// Five-point central difference with a step proportional to the distance from `+-1`.
fn five_point(g: impl Fn(f64) -> chdg_core::Result<f64>, r: f64) -> Result<f64> {
    let h = 1e-3 * (1.0 - r.abs());
    Ok((g(r - 2.0 * h)? - 8.0 * g(r - h)? + 8.0 * g(r + h)? - g(r + 2.0 * h)?) / (12.0 * h))
}

fn identities() -> Result<Vec<OracleReport>> {
    let points = identity_points();
    let rel = |approx: f64, exact: f64| (approx - exact).abs() / exact.abs();

    let mut fd = [0.0f64; 3];
    let mut algebra = 0.0f64;
    let mut angle = 0.0f64;
    let mut inverse = 0.0f64;
    for &r in &points {
        let (a, a1, a2) = (gradient_weight(r)?, gradient_weight_d1(r)?, gradient_weight_d2(r)?);
        fd[0] = fd[0].max(rel(five_point(log_potential_prime, r)?, a));
        fd[1] = fd[1].max(rel(five_point(gradient_weight, r)?, a1));
        fd[2] = fd[2].max(rel(five_point(gradient_weight_d1, r)?, a2));
        algebra = algebra.max((a - 2.0 * a1 * a1 / a2 - 2.0 / (1.0 + 3.0 * r * r)).abs());
        let root = (a / 2.0).sqrt();
        angle = angle.max(rel(phase_angle_d1(r)?, root));
        inverse = inverse.max((logistic_order(log_potential_prime(r)?) - r).abs());
    }
    let params = ModelParams::new(3.0, 0.0, 1.0 / 32.0, 1.0)?;
    let sigma = dispersion_oracle(0.0, &params, 1, 2.0 * PI)?;
    Ok(vec![
        OracleReport::new(
            "derivative_chain",
            "a=f', a'=f'', a''=f''' by five-point differences, 1000 points",
            fd.to_vec(),
            vec![0.0; 3],
            1e-6,
            Criterion::AtMost,
        ),
        OracleReport::new(
            "weight_identity",
            "a - 2a'^2/a'' = 2/(1+3u^2), 1000 points",
            vec![algebra],
            vec![0.0],
            1e-12,
            Criterion::AtMost,
        ),
        OracleReport::new(
            "angle_derivative",
            "phi' = sqrt(a/2), relative, 1000 points",
            vec![angle],
            vec![0.0],
            1e-14,
            Criterion::AtMost,
        ),
        OracleReport::new(
            "drive_inverse",
            "j(f(u)) = u on [-0.99, 0.99]",
            vec![inverse],
            vec![0.0],
            1e-13,
            Criterion::AtMost,
        ),
        OracleReport::new(
            "dispersion_arithmetic",
            "m=0 lambda=3 eps=0 qh^2=1/4",
            vec![sigma],
            vec![0.125],
            1e-15,
            Criterion::Absolute,
        ),
    ])
}

// ------------------------------------------------------------ regularization

const DELTAS: [f64; 5] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];

fn tanh_battery() -> Result<Vec<(String, Field)>> {
    let grid = Grid::interval(256, 1.0)?;
    let mut out = Vec::new();
    for mean in [0.0, 0.3] {
        for steepness in [5.0, 20.0, 80.0] {
            let f = Field::from_fn(grid, |x| {
                mean + 0.999 * (1.0 - f64::abs(mean)) * (steepness * (x[0] - 0.5)).tanh()
            })?;
            out.push((format!("tanh(m={mean},s={steepness})"), f));
        }
    }
    Ok(out)
}

fn rough_battery() -> Result<Vec<(String, Field)>> {
    let line = Grid::interval(128, 1.0)?;
    let square = Grid::rectangle([24, 24], [1.0, 1.0])?;
    let mut out = vec![
        ("cos".to_string(), Field::from_fn(line, |x| (PI * x[0]).cos())?),
        (
            "clipped_cos".to_string(),
            Field::from_fn(line, |x| (1.5 * (3.0 * PI * x[0]).cos()).clamp(-1.0, 1.0))?,
        ),
        (
            "pure_phases".to_string(),
            Field::from_fn(line, |x| if x[0] < 0.4 { -1.0 } else { 1.0 })?,
        ),
        (
            "cos2d".to_string(),
            Field::from_fn(square, |x| (PI * x[0]).cos() * (PI * x[1]).cos())?,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 0..4 {
        let values: Vec<f64> = (0..line.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        out.push((format!("uniform_{k}"), Field::new(line, values)?));
    }
    Ok(out)
}

fn regularization() -> Result<Vec<OracleReport>> {
    let tanh = tanh_battery()?;
    let mut bound_margin = f64::INFINITY;
    for (_, u0) in tanh.iter().chain(rough_battery()?.iter()) {
        for &delta in &DELTAS {
            let u = regularize_initial(u0, delta)?;
            let hi = 1.0 - 3.0 * delta;
            bound_margin = bound_margin.min(hi - u.max()).min(u.min() + hi);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst_ratio = 0.0f64;
    for k in 0..100 {
        let grid = if k % 2 == 0 {
            Grid::interval(64, 1.0)?
        } else {
            Grid::rectangle([12, 20], [1.0, 1.5])?
        };
        let values: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let z = Field::new(grid, values)?;
        let delta = rng.gen_range(1e-3..1.0 / 6.0);
        let smoothed = solve_shifted_helmholtz(&z, delta)?;
        worst_ratio = worst_ratio.max(seminorm_h1(&smoothed) / seminorm_h1(&z));
    }

    let params = ModelParams::new(1.0, 0.0, 1.0 / 32.0, 1.0)?;
    let mut energy_report_values = Vec::new();
    let mut violations = 0.0;
    let mut distance_details = Vec::new();
    let mut smooth = tanh.clone();
    smooth.push((
        "cos0.9".to_string(),
        Field::from_fn(Grid::interval(256, 1.0)?, |x| 0.9 * (PI * x[0]).cos())?,
    ));
    for (name, u0) in &smooth {
        let e0 = energy(u0, &params)?;
        let mut last = f64::INFINITY;
        for &delta in &DELTAS {
            let u = regularize_initial(u0, delta)?;
            energy_report_values.push(energy(&u, &params)? / (1.0 + e0));
            if name.starts_with("tanh") {
                let d = norm_l2(&u.zip_map(u0, |a, b| a - b)?);
                if !(d < last) {
                    violations += 1.0;
                }
                distance_details.push((format!("{name} delta={delta}"), d));
                last = d;
            }
        }
    }
    let ratio_max = max_of(energy_report_values.iter().cloned());
    let ratio_min = min_of(energy_report_values.iter().cloned());
    let mut monotone = OracleReport::new(
        "regularization_distance_monotone",
        "tanh battery, delta = 2^-3..2^-7; count of non-decreasing steps",
        vec![violations],
        vec![0.0],
        0.0,
        Criterion::Absolute,
    );
    for (k, v) in distance_details {
        monotone = monotone.with_detail(k, v);
    }
    Ok(vec![
        OracleReport::new(
            "regularization_bounds",
            "tanh and rough batteries, delta = 2^-3..2^-7; min distance to [-1+3delta, 1-3delta] boundary",
            vec![bound_margin],
            vec![0.0],
            0.0,
            Criterion::AtLeast,
        ),
        OracleReport::new(
            "helmholtz_contraction",
            "100 random fields; max |grad z_delta| / |grad z|",
            vec![worst_ratio],
            vec![1.0],
            1e-13,
            Criterion::AtMost,
        ),
        OracleReport::new(
            "regularized_energy_bound",
            "lambda=1; max over delta and profiles of E(u0_delta)/(1+E(u0)), bound C=2",
            vec![ratio_max],
            vec![2.0],
            0.0,
            Criterion::AtMost,
        )
        .with_detail("min_ratio", ratio_min),
        monotone,
    ])
}

// -------------------------------------------------------------- conservation

const CONSERVATION_RUNS: [(&str, &str); 5] = [
    (
        "cos1d",
        "grid.n = 64\nmodel.lambda = 1\nstepper.dt = 1e-5\nrun.t_end = 0.01\n\
         ic.kind = cosine\nic.mode = 1\nic.amplitude = 0.5\nic.mean = 0.1\n",
    ),
    (
        "spinodal1d",
        "grid.n = 128\ngrid.length = 32\nmodel.lambda = 3\nstepper.dt = 0.02\nrun.t_end = 20\n\
         ic.kind = constant\nic.mean = 0.3\nic.noise = 1e-3\nrun.seed = 7\n",
    ),
    (
        "cos2d_full",
        "grid.n = 24, 24\nmodel.lambda = 2\nstepper.scheme = backward_euler_full\nstepper.dt = 1e-5\n\
         run.t_end = 0.01\nic.kind = cosine\nic.mode = 1\nic.amplitude = 0.3\nic.mean = 0.2\n",
    ),
    (
        "viscous1d",
        "grid.n = 64\ngrid.length = 4\nmodel.lambda = 3\nmodel.epsilon = 0.1\nstepper.dt = 1e-3\n\
         run.t_end = 1\nic.kind = constant\nic.mean = 0\nic.noise = 1e-2\nrun.seed = 3\n",
    ),
    (
        "front1d",
        "grid.n = 128\nmodel.lambda = 3\nstepper.dt = 1e-6\nrun.t_end = 1e-3\n\
         ic.kind = tanh\nic.steepness = 20\nic.mean = 0\n",
    ),
];

fn conservation() -> Result<Vec<OracleReport>> {
    let runs = CONSERVATION_RUNS
        .par_iter()
        .map(|(name, text)| {
            let cfg = parse_config(text)?;
            let records = collect_run(&cfg)?;
            Ok((*name, cfg, records))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for (name, cfg, records) in &runs {
        let steps = records.len() - 1;
        let m0 = records[0].mass;
        let drift = max_of(records.iter().map(|r| (r.mass - m0).abs()));
        reports.push(
            OracleReport::new(
                "mass_drift",
                format!("{name}, {steps} steps"),
                vec![drift],
                vec![0.0],
                1e-11,
                Criterion::AtMost,
            )
            .with_detail("steps", steps as f64),
        );
        if cfg.stepper.scheme == Scheme::ConvexSplitting {
            let rise = records
                .windows(2)
                .map(|w| (w[1].energy - w[0].energy) / (1.0 + w[0].energy.abs()))
                .fold(f64::NEG_INFINITY, f64::max);
            reports.push(OracleReport::new(
                "energy_non_increase",
                format!("{name}, {steps} steps; max (E_n+1 - E_n)/(1+|E_n|)"),
                vec![rise],
                vec![0.0],
                1e-9,
                Criterion::AtMost,
            ));
        }
    }

    for scheme in ["convex_splitting", "backward_euler_full"] {
        let sums = [50usize, 100, 200]
            .par_iter()
            .map(|&steps| {
                let text = format!(
                    "grid.n = 32\nmodel.lambda = 3\nstepper.scheme = {scheme}\nstepper.dt = {}\nrun.t_end = 1e-3\n\
                     ic.kind = cosine\nic.mode = 1\nic.amplitude = 0.3\nic.mean = 0.1\n",
                    1e-3 / steps as f64
                );
                let records = collect_run(&parse_config(&text)?)?;
                Ok(records.iter().map(|r| r.dissipation_residual).sum::<f64>().abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        reports.push(
            OracleReport::new(
                "dissipation_residual_ratio",
                format!("{scheme}, n=32, t=1e-3, dt = 1e-3/50, /100, /200; cumulative residual ratios"),
                vec![sums[0] / sums[1], sums[1] / sums[2]],
                vec![2.0, 2.0],
                0.4,
                Criterion::Absolute,
            )
            .with_detail("residual_dt0", sums[0])
            .with_detail("residual_dt1", sums[1])
            .with_detail("residual_dt2", sums[2]),
        );
    }
    Ok(reports)
}

// ---------------------------------------------------------------- dispersion

/// `(m, lambda, eps, q, L)`.
pub const DISPERSION_CASES: [(f64, f64, f64, u32, f64); 8] = [
    (0.0, 3.0, 0.0, 1, 2.0 * PI),
    (0.0, 1.0, 0.0, 1, 2.0 * PI),
    (0.3, 1.0, 0.0, 2, 2.0 * PI),
    (-0.5, 1.0, 0.5, 1, 4.0 * PI),
    (0.0, 3.0, 0.2, 1, 2.0 * PI),
    (0.3, 3.0, 0.0, 1, 4.0 * PI),
    (0.5, 2.0, 0.0, 3, 1.0),
    (0.0, 3.0, 0.0, 3, 2.0 * PI),
];

fn dispersion() -> Result<Vec<OracleReport>> {
    Ok(DISPERSION_CASES
        .par_iter()
        .map(|&(m, lambda, eps, q, length)| measure_growth_rate(&DispersionCase::new(m, lambda, eps, q, length), 0.01))
        .collect::<chdg_core::Result<Vec<_>>>()?)
}

// -------------------------------------------------------------- formulations

fn formulations() -> Result<Vec<OracleReport>> {
    let params = ModelParams::new(3.0, 0.0, 1.0 / 32.0, 1.0)?;
    let cases: Vec<(CosineSeries, [usize; 2])> = vec![
        (CosineSeries::interval(1.0, 0.0, &[(0.5, 1)]), [32, 1]),
        (CosineSeries::interval(1.0, 0.0, &[(0.9, 1)]), [32, 1]),
        (
            CosineSeries::rectangle([1.0, 1.0], 0.1, &[(0.4, [1, 1]), (0.2, [2, 0])]),
            [16, 16],
        ),
        (CosineSeries::interval(1.0, 0.3, &[]), [16, 1]),
    ];
    Ok(cases
        .par_iter()
        .map(|(profile, base)| formulation_equivalence_suite(profile, &params, *base, 0.2))
        .collect::<chdg_core::Result<Vec<_>>>()?)
}

// ---------------------------------------------------------------------- dpgg

fn dpgg() -> Result<Vec<OracleReport>> {
    let entropy = EntropyWeight::new(1.0)?;
    let cos1 = CosineSeries::interval(1.0, 0.0, &[(1.0, 1)]);
    let mixed1 = CosineSeries::interval(1.0, 0.1, &[(0.6, 1), (0.3, 2)]);
    let cos2 = CosineSeries::rectangle([1.0, 1.0], 0.0, &[(1.0, [1, 1])]);
    let mixed2 = CosineSeries::rectangle([1.0, 2.0], 0.2, &[(0.5, [1, 2]), (0.25, [2, 0])]);
    let flat = CosineSeries::rectangle([1.0, 1.0], 0.4, &[]);
    Ok(vec![
        dpgg_identity_check(&SquareWeight, &cos1, [64, 1], 1e-8)?,
        dpgg_identity_check(&entropy, &mixed1, [64, 1], 1e-8)?,
        dpgg_identity_check(&entropy, &cos2, [32, 32], 1e-6)?,
        dpgg_identity_check(&SquareWeight, &mixed2, [32, 32], 1e-6)?,
        dpgg_identity_check(&SquareWeight, &flat, [8, 8], 1e-14)?,
        dpgg_discrete_convergence(&SquareWeight, &cos1, [16, 1], 4, 1.0)?,
        dpgg_discrete_convergence(&entropy, &cos2, [8, 8], 3, 1.0)?,
    ])
}

// ---------------------------------------------------------------- separation

const SEPARATION_TAU: f64 = 0.01;

fn spinodal_config(mean: f64, cells: usize, delta: f64) -> Result<RunConfig> {
    let (t_end, dt) = (300.0, 0.05);
    parse_config(&format!(
        "grid.n = {cells}\ngrid.length = 32\nmodel.lambda = 3\nmodel.delta = {delta}\n\
         stepper.dt = {dt}\nrun.t_end = {t_end}\nrun.seed = 1\n\
         ic.kind = constant\nic.mean = {mean}\nic.noise = 1e-3\n"
    ))
}

/// Gap at the first record with `t >= tau` and the minimum gap over `[tau, T]`.
fn separation_floor(records: &[DiagnosticsRecord], tau: f64) -> (f64, f64, f64) {
    let late: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.t >= tau - 1e-12).collect();
    let at_tau = late.first().map_or(f64::NAN, |r| r.separation_gap);
    let floor = min_of(late.iter().map(|r| r.separation_gap));
    let last_max = late.last().map_or(f64::NAN, |r| r.max_u.max(-r.min_u));
    (at_tau, floor, last_max)
}

fn separation() -> Result<Vec<OracleReport>> {
    let variants: Vec<(f64, usize, f64)> = [0.0, 0.3]
        .iter()
        .flat_map(|&m| [(m, 128, 1.0 / 32.0), (m, 256, 1.0 / 32.0), (m, 128, 1.0 / 64.0)])
        .collect();
    let floors = variants
        .par_iter()
        .map(|&(m, n, delta)| {
            let records = collect_run(&spinodal_config(m, n, delta)?)?;
            Ok(separation_floor(&records, SEPARATION_TAU))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for (chunk, vars) in floors.chunks(3).zip(variants.chunks(3)) {
        let m = vars[0].0;
        let mut positive = OracleReport::new(
            "separation_positive",
            format!("lambda=3 m={m} noise=1e-3 L=32 tau={SEPARATION_TAU}; gaps at tau and floors over [tau,T]"),
            chunk.iter().flat_map(|&(a, f, _)| [a, f]).collect(),
            vec![SEPARATION_FLOOR; 6],
            0.0,
            Criterion::AtLeast,
        );
        for (&(_, n, delta), &(_, _, reach)) in vars.iter().zip(chunk) {
            positive = positive.with_detail(format!("final_max_abs n={n} delta={delta}"), reach);
        }
        reports.push(positive);
        let base = chunk[0].1;
        reports.push(
            OracleReport::new(
                "separation_floor_stability",
                format!("lambda=3 m={m}; floor ratios under mesh doubling and delta halving"),
                vec![chunk[1].1 / base, chunk[2].1 / base],
                vec![1.0, 1.0],
                0.2,
                Criterion::Absolute,
            )
            .with_detail("floor_base", base)
            .with_detail("floor_fine_mesh", chunk[1].1)
            .with_detail("floor_half_delta", chunk[2].1),
        );
    }
    Ok(reports)
}

// ---------------------------------------------------------------- uniqueness

const UNIQUENESS_DISTANCE: f64 = 1e-6;

/// Trajectory of `u0` sampled at every step.
fn trajectory(u0: &Field, params: &ModelParams, cfg: &StepperConfig, t_end: f64) -> Result<Vec<(f64, Field)>> {
    let mut out = Vec::new();
    let mut sink = |_: &DiagnosticsRecord, s: &SimState| {
        out.push((s.t, s.u.clone()));
        Ok(())
    };
    run(u0.clone(), params, cfg, t_end, 1, &mut sink)?;
    Ok(out)
}

/// `sup_{t in [tau, T]} d(t) / d(0)` for two runs started `UNIQUENESS_DISTANCE` apart in `V'`.
fn stability_constant(u0: &Field, params: &ModelParams, dt: f64, t_end: f64, tau: f64) -> Result<f64> {
    let grid = *u0.grid();
    let length = grid.lengths()[0];
    let shape = Field::from_fn(grid, |x| (3.0 * PI * x[0] / length).cos() + 0.5 * (5.0 * PI * x[0] / length).cos())?;
    let scale = UNIQUENESS_DISTANCE / norm_vprime_zero_mean(&shape)?;
    let v0 = u0.zip_map(&shape, |a, b| a + scale * b)?;
    let mut cfg = StepperConfig::new(Scheme::ConvexSplitting, dt);
    cfg.newton_tol = 1e-12;
    let (a, b) = rayon::join(
        || trajectory(u0, params, &cfg, t_end),
        || trajectory(&v0, params, &cfg, t_end),
    );
    let (a, b) = (a?, b?);
    if a.len() != b.len() {
        return Err(CliError::Usage("paired runs took different step sequences".into()));
    }
    let d0 = vprime_distance(&a[0].1, &b[0].1)?;
    let mut sup = 0.0f64;
    for ((t, ua), (tb, ub)) in a.iter().zip(&b) {
        if t != tb {
            return Err(CliError::Usage("paired runs took different step sequences".into()));
        }
        if *t >= tau - 1e-12 {
            sup = sup.max(vprime_distance(ua, ub)? / d0);
        }
    }
    Ok(sup)
}

fn uniqueness() -> Result<Vec<OracleReport>> {
    let cfg = parse_config(
        "grid.n = 64\ngrid.length = 16\nmodel.lambda = 3\nrun.t_end = 20\nrun.seed = 11\n\
         ic.kind = constant\nic.mean = 0\nic.noise = 1e-2\n",
    )?;
    let u0 = initial_field(&cfg)?;
    let tau = 0.01;
    let constants = [0.02, 0.01, 0.005]
        .par_iter()
        .map(|&dt| stability_constant(&u0, &cfg.params, dt, cfg.t_end, tau))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vec![OracleReport::new(
        "vprime_stability_constant",
        "lambda=3 L=16 n=64 T=20 tau=0.01, data 1e-6 apart in V'; C(dt/2)/C(dt) for dt = 0.02, 0.01",
        vec![constants[1] / constants[0], constants[2] / constants[1]],
        vec![1.0, 1.0],
        0.2,
        Criterion::Absolute,
    )
    .with_detail("C_dt_0.02", constants[0])
    .with_detail("C_dt_0.01", constants[1])
    .with_detail("C_dt_0.005", constants[2])])
}

// ----------------------------------------------------------------- reference

fn reference() -> Result<Vec<OracleReport>> {
    let grid = Grid::interval(32, 1.0)?;
    let t_end = 1e-3;
    let cases: Vec<(&str, ModelParams, Field)> = vec![
        (
            "lambda=3",
            ModelParams::new(3.0, 0.0, 1.0 / 32.0, 1.0)?,
            Field::from_fn(grid, |x| 0.1 + 0.2 * (PI * x[0]).cos() + 0.05 * (2.0 * PI * x[0]).cos())?,
        ),
        (
            "lambda=1 eps=0.01",
            ModelParams::new(1.0, 0.01, 1.0 / 32.0, 1.0)?,
            Field::from_fn(grid, |x| -0.2 + 0.4 * (PI * x[0]).cos())?,
        ),
    ];
    let mut reports = Vec::new();
    for (label, params, u0) in &cases {
        let exact = reference_integrate(u0, params, t_end)?;
        for scheme in [Scheme::ConvexSplitting, Scheme::BackwardEulerFull] {
            let errors = [8usize, 16, 32]
                .par_iter()
                .map(|&steps| {
                    let cfg = StepperConfig::new(scheme, t_end / steps as f64);
                    let mut s = SimState::initial(u0.clone(), params, &cfg)?;
                    for _ in 0..steps {
                        s = step(&s, params, &cfg)?;
                    }
                    Ok(norm_l2(&s.u.zip_map(&exact, |a, b| a - b)?))
                })
                .collect::<chdg_core::Result<Vec<f64>>>()?;
            reports.push(
                OracleReport::new(
                    "reference_order",
                    format!("{label} {scheme:?} n=32 t=1e-3, dt = t/8, t/16, t/32"),
                    vec![(errors[0] / errors[1]).log2(), (errors[1] / errors[2]).log2()],
                    vec![1.0, 1.0],
                    0.2,
                    Criterion::Absolute,
                )
                .with_detail("error_8", errors[0])
                .with_detail("error_16", errors[1])
                .with_detail("error_32", errors[2]),
            );
        }
    }
    Ok(reports)
}

// --------------------------------------------------------------- determinism

const DETERMINISM_CONFIGS: [(&str, &str); 2] = [
    (
        "line",
        "grid.n = 64\ngrid.length = 8\nmodel.lambda = 3\nstepper.dt = 0.01\nrun.t_end = 1\n\
         run.snapshot_stride = 25\nrun.seed = 3\nic.kind = constant\nic.mean = 0.1\nic.noise = 1e-2\n",
    ),
    (
        "square",
        "grid.n = 16, 12\ngrid.length = 2, 1.5\nmodel.lambda = 2\nstepper.dt = 1e-4\nrun.t_end = 2e-3\n\
         run.snapshot_stride = 5\nrun.seed = 9\nic.kind = cosine\nic.mode = 1\nic.amplitude = 0.3\nic.noise = 1e-3\n",
    ),
];

fn read_tree(root: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().into_owned();
                out.insert(key, fs::read(&path)?);
            }
        }
    }
    Ok(out)
}

fn determinism(work: &Path) -> Result<Vec<OracleReport>> {
    let mut reports = Vec::new();
    for (name, text) in DETERMINISM_CONFIGS {
        let cfg = parse_config(text)?;
        let dirs = [work.join(format!("{name}_a")), work.join(format!("{name}_b"))];
        for dir in &dirs {
            if dir.exists() {
                fs::remove_dir_all(dir)?;
            }
            run_simulation(&cfg, dir, false)?;
        }
        let (a, b) = (read_tree(&dirs[0])?, read_tree(&dirs[1])?);
        let names: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
        let differing = names.iter().filter(|k| a.get(**k) != b.get(**k)).count();
        reports.push(
            OracleReport::new(
                "repeat_byte_identical",
                format!("{name}: two runs, {} files each", a.len()),
                vec![differing as f64],
                vec![0.0],
                0.0,
                Criterion::Absolute,
            )
            .with_detail("files", a.len() as f64),
        );

        let mut mismatches = 0usize;
        let mut snapshots = 0usize;
        for (key, bytes) in a.iter().filter(|(k, _)| k.ends_with(".chdg")) {
            snapshots += 1;
            let (t, field) = read_snapshot(bytes.as_slice())?;
            let mut again = Vec::new();
            write_snapshot(&mut again, t, &field)?;
            if &again != bytes {
                mismatches += 1;
                eprintln!("snapshot {key} does not round-trip");
            }
        }
        reports.push(
            OracleReport::new(
                "snapshot_round_trip",
                format!("{name}: {snapshots} snapshots re-encoded after reading"),
                vec![mismatches as f64],
                vec![0.0],
                0.0,
                Criterion::Absolute,
            )
            .with_detail("snapshots", snapshots as f64),
        );
    }
    Ok(reports)
}
