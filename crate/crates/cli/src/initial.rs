//! Construction of the initial field from a [`RunConfig`].

use std::f64::consts::PI;

use chdg_core::regularize::{regularize_initial, InitialDatum};
use chdg_core::{Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialCondition, RunConfig};
use crate::error::{CliError, Result};
use crate::io::load_snapshot;

/// Highest cosine mode per axis in the seeded perturbation.
const NOISE_MODES_1D: u32 = 16;
const NOISE_MODES_2D: u32 = 4;

/// Zero-mean random combination of low cosine modes with `|p| <= amplitude`.
///
/// The coefficients depend only on `seed`, so the same continuum function is
/// sampled on every grid of the same domain.
pub fn seeded_perturbation(grid: &Grid, amplitude: f64, seed: u64) -> Result<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<[u32; 2]> = if grid.ndims() == 1 {
        (1..=NOISE_MODES_1D).map(|k| [k, 0]).collect()
    } else {
        (0..=NOISE_MODES_2D)
            .flat_map(|i| (0..=NOISE_MODES_2D).map(move |j| [i, j]))
            .filter(|m| *m != [0, 0])
            .collect()
    };
    let scale = amplitude / modes.len() as f64;
    let terms: Vec<(f64, [u32; 2])> = modes
        .into_iter()
        .map(|m| (scale * rng.gen_range(-1.0..1.0), m))
        .collect();
    let lengths = grid.lengths().to_vec();
    Ok(Field::from_fn(*grid, |x| {
        terms
            .iter()
            .map(|&(c, m)| {
                let mut v = c * (m[0] as f64 * PI * x[0] / lengths[0]).cos();
                if lengths.len() == 2 {
                    v *= (m[1] as f64 * PI * x[1] / lengths[1]).cos();
                }
                v
            })
            .sum()
    })?)
}

fn base_field(cfg: &RunConfig, grid: &Grid) -> Result<Field> {
    let lengths = grid.lengths().to_vec();
    let field = match &cfg.initial {
        InitialCondition::Constant { mean } => Field::constant(*grid, *mean),
        InitialCondition::Cosine { mode, amplitude, mean } => Field::from_fn(*grid, |x| {
            let mut c = (*mode as f64 * PI * x[0] / lengths[0]).cos();
            if lengths.len() == 2 {
                c *= (*mode as f64 * PI * x[1] / lengths[1]).cos();
            }
            mean + amplitude * c
        })?,
        InitialCondition::Tanh { steepness, mean } => Field::from_fn(*grid, |x| {
            mean + 0.999 * (1.0 - mean.abs()) * (steepness * (x[0] - 0.5 * lengths[0])).tanh()
        })?,
        InitialCondition::File { path } => {
            let (_, field) = load_snapshot(path)?;
            if field.grid() != grid {
                return Err(CliError::Usage(format!(
                    "{}: snapshot grid does not match grid.n / grid.length",
                    path.display()
                )));
            }
            field
        }
    };
    Ok(field)
}

/// Initial condition plus seeded noise, validated as an energy-class datum and,
/// unless disabled, regularised with the configured `delta`.
pub fn initial_field(cfg: &RunConfig) -> Result<Field> {
    let grid = cfg.grid()?;
    let mut u = base_field(cfg, &grid)?;
    if cfg.noise > 0.0 {
        let p = seeded_perturbation(&grid, cfg.noise, cfg.seed)?;
        u = u.zip_map(&p, |a, b| a + b)?;
    }
    let datum = InitialDatum::new(u, &cfg.params)?;
    if cfg.regularize {
        Ok(regularize_initial(datum.field(), cfg.params.delta)?)
    } else {
        Ok(datum.field().clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use chdg_core::ops::mean;

    #[test]
    fn perturbation_is_seeded_bounded_and_mean_free() {
        let grid = Grid::interval(128, 32.0).unwrap();
        let a = seeded_perturbation(&grid, 1e-3, 5).unwrap();
        let b = seeded_perturbation(&grid, 1e-3, 5).unwrap();
        let c = seeded_perturbation(&grid, 1e-3, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.max_abs() <= 1e-3);
        assert!(mean(&a).abs() < 1e-18);
        let fine = seeded_perturbation(&Grid::interval(256, 32.0).unwrap(), 1e-3, 5).unwrap();
        let x = fine.grid().cell_center(100)[0];
        let direct: f64 = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            (1..=16)
                .map(|k| 1e-3 / 16.0 * rng.gen_range(-1.0..1.0) * (k as f64 * PI * x / 32.0).cos())
                .sum()
        };
        assert!((fine.values()[100] - direct).abs() < 1e-18);
    }

    #[test]
    fn tanh_front_has_requested_mean() {
        let cfg = parse_config("grid.n = 64\nrun.t_end = 0\nic.kind = tanh\nic.mean = 0.3\nic.regularize = false\n")
            .unwrap();
        let u = initial_field(&cfg).unwrap();
        assert!((mean(&u) - 0.3).abs() < 1e-14);
        assert!(u.max_abs() < 1.0);
    }

    #[test]
    fn regularised_field_respects_bounds() {
        let cfg = parse_config("grid.n = 64\nrun.t_end = 0\nic.kind = tanh\nic.steepness = 40\nmodel.delta = 0.05\n")
            .unwrap();
        let u = initial_field(&cfg).unwrap();
        assert!(u.max_abs() <= 1.0 - 0.15);
    }
}
