//! Smoothing of energy-class initial data into uniformly separated data.
//!
//! Pipeline for a parameter `delta` in `(0, 1/6)`:
//! clamp into `[-1+3 delta, 1-3 delta]`, map to `z = arcsin u`, solve
//! `z_d - delta Lap z_d = z`, map back with `sin`. Since `I - delta Lap_h` is an
//! M-matrix the Helmholtz stage cannot create new extrema, so the clamped bounds
//! survive, and the stage contracts the `H^1` seminorm of `z`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::energy_allowing_pure_phases;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::{phase_angle, ModelParams};
use crate::ops::{mean, solve_shifted_helmholtz};

/// Values within this distance outside the bounds are treated as rounding and snapped.
const ROUNDING_SLACK: f64 = 1e-14;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 / 6.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "must lie in (0, 1/6)",
        })
    }
}

fn bounds(delta: f64) -> (f64, f64) {
    (-1.0 + 3.0 * delta, 1.0 - 3.0 * delta)
}

/// An admissible initial datum: `-1 <= u0 <= 1`, mean strictly inside `(-1, 1)`,
/// finite energy.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDatum {
    u0: Field,
    mean: f64,
    energy: f64,
}

impl InitialDatum {
    pub fn new(u0: Field, params: &ModelParams) -> Result<Self> {
        if let Some(cell) = u0.values().iter().position(|v| v.abs() > 1.0) {
            return Err(Error::Domain {
                function: "initial datum",
                value: u0.values()[cell],
            });
        }
        let m = mean(&u0);
        if m.abs() >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "mean",
                value: m,
                reason: "mean of the initial datum must lie strictly inside (-1, 1)",
            });
        }
        let energy = energy_allowing_pure_phases(&u0, params)?;
        if !energy.is_finite() {
            return Err(Error::InvalidParameter {
                name: "energy",
                value: energy,
                reason: "initial datum has infinite energy",
            });
        }
        Ok(InitialDatum { u0, mean: m, energy })
    }

    pub fn field(&self) -> &Field {
        &self.u0
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }
}

/// Cellwise clamp into `[-1+3 delta, 1-3 delta]`.
pub fn clamp_initial(u0: &Field, delta: f64) -> Result<Field> {
    check_delta(delta)?;
    let (lo, hi) = bounds(delta);
    u0.map(|v| v.clamp(lo, hi))
}

/// Full regularisation pipeline.
pub fn regularize_initial(u0: &Field, delta: f64) -> Result<Field> {
    let clamped = clamp_initial(u0, delta)?;
    let z1 = clamped.try_map(phase_angle)?;
    let z = solve_shifted_helmholtz(&z1, delta)?;
    let (lo, hi) = bounds(delta);
    let values = z
        .values()
        .iter()
        .map(|zi| {
            let u = zi.sin();
            if u > hi && u <= hi + ROUNDING_SLACK {
                hi
            } else if u < lo && u >= lo - ROUNDING_SLACK {
                lo
            } else {
                u
            }
        })
        .collect();
    Field::new(*u0.grid(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub min: f64,
    pub max: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Smallest distance from the regularised extrema to the bounds.
    pub margin: f64,
    /// `1 - max|u0|`, the limit of `margin` as `delta -> 0`.
    pub datum_gap: f64,
}

/// Checks `-1+3 delta <= u0_delta <= 1-3 delta` cellwise.
pub fn maximum_principle_check(
    u0: &Field,
    u0_delta: &Field,
    delta: f64,
) -> Result<MaxPrincipleReport> {
    check_delta(delta)?;
    u0.check_same_grid(u0_delta)?;
    let (lower, upper) = bounds(delta);
    if let Some(cell) = u0_delta.values().iter().position(|&v| v < lower || v > upper) {
        return Err(Error::MaximumPrinciple {
            cell,
            value: u0_delta.values()[cell],
            lower,
            upper,
        });
    }
    let (min, max) = (u0_delta.min(), u0_delta.max());
    Ok(MaxPrincipleReport {
        min,
        max,
        lower_bound: lower,
        upper_bound: upper,
        margin: (min - lower).min(upper - max),
        datum_gap: 1.0 - u0.max_abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{energy, gradient_energy};
    use crate::grid::Grid;
    use crate::model::phase_angle;
    use crate::ops::seminorm_h1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn clamp_arithmetic() {
        let grid = Grid::interval(4, 1.0).unwrap();
        let u = Field::new(grid, vec![0.99, 0.0, -1.0, 0.5]).unwrap();
        let c = clamp_initial(&u, 0.1).unwrap();
        assert!((c.values()[0] - 0.7).abs() < 1e-15);
        assert_eq!(c.values()[1], 0.0);
        assert!((c.values()[2] + 0.7).abs() < 1e-15);
        assert_eq!(c.values()[3], 0.5);
        assert!(clamp_initial(&u, 0.2).is_err());
    }

    #[test]
    fn clamp_does_not_increase_energy() {
        // F - lambda r^2/2 is nondecreasing in |r| on [1-3 delta, 1] for lambda <= 2 f(1/2)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = ModelParams::new(1.0, 0.0, 0.05, 1.0).unwrap();
        for n in [16, 64] {
            let grid = Grid::interval(n, 1.0).unwrap();
            for delta in [0.01, 0.05, 0.1, 0.16] {
                for _ in 0..10 {
                    let u = Field::new(grid, (0..n).map(|_| rng.gen_range(-0.999..0.999)).collect())
                        .unwrap();
                    let c = clamp_initial(&u, delta).unwrap();
                    assert!(energy(&c, &params).unwrap() <= energy(&u, &params).unwrap() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let grid = Grid::rectangle([12, 8], [1.0, 2.0]).unwrap();
        for m in [-0.4, 0.0, 0.3, 0.7] {
            let u = Field::constant(grid, m);
            let r = regularize_initial(&u, 0.1).unwrap();
            for &v in r.values() {
                assert!((v - m).abs() < 1e-15, "{v} vs {m}");
            }
            let report = maximum_principle_check(&u, &r, 0.1).unwrap();
            assert!((report.margin - (0.7 - f64::abs(m))).abs() < 1e-15);
        }
    }

    #[test]
    fn bounds_hold_for_oscillatory_data() {
        for n in [64, 256, 1024] {
            let grid = Grid::interval(n, 1.0).unwrap();
            let u = Field::from_fn(grid, |x| (40.0 * PI * x[0]).sin().signum() * 0.999).unwrap();
            let r = regularize_initial(&u, 0.05).unwrap();
            let report = maximum_principle_check(&u, &r, 0.05).unwrap();
            assert!(report.margin >= 0.0);
        }
    }

    #[test]
    fn helmholtz_stage_contracts_angle_seminorm() {
        let grid = Grid::interval(128, 1.0).unwrap();
        let u = Field::from_fn(grid, |x| 0.999 * (10.0 * (x[0] - 0.5)).tanh()).unwrap();
        for delta in [0.125, 0.0625, 0.01] {
            let c = clamp_initial(&u, delta).unwrap();
            let r = regularize_initial(&u, delta).unwrap();
            let zc = c.try_map(phase_angle).unwrap();
            let zr = r.try_map(phase_angle).unwrap();
            assert!(seminorm_h1(&zr) <= seminorm_h1(&zc) * (1.0 + 1e-12));
            assert!(gradient_energy(&r).unwrap() <= gradient_energy(&u).unwrap());
        }
    }

    #[test]
    fn margin_approaches_datum_gap() {
        let grid = Grid::interval(128, 1.0).unwrap();
        let u = Field::from_fn(grid, |x| 0.8 * (PI * x[0]).cos()).unwrap();
        let gaps: Vec<f64> = [0.1, 0.01, 0.001, 0.0001]
            .iter()
            .map(|&d| {
                let r = regularize_initial(&u, d).unwrap();
                let rep = maximum_principle_check(&u, &r, d).unwrap();
                (1.0 - 3.0 * d - r.max_abs()) - rep.datum_gap
            })
            .collect();
        assert!((gaps[3] - 0.0).abs() < 1e-3);
        assert!(gaps.windows(2).all(|w| w[1].abs() <= w[0].abs()));
    }

    #[test]
    fn violation_is_reported() {
        let grid = Grid::interval(5, 1.0).unwrap();
        let u = Field::constant(grid, 0.0);
        let bad = Field::new(grid, vec![0.0, 0.0, 0.95, 0.0, 0.0]).unwrap();
        assert!(matches!(
            maximum_principle_check(&u, &bad, 0.1),
            Err(Error::MaximumPrinciple { cell: 2, .. })
        ));
    }

    #[test]
    fn initial_datum_validation() {
        let grid = Grid::interval(8, 1.0).unwrap();
        let params = ModelParams::default();
        assert!(InitialDatum::new(Field::constant(grid, 1.0), &params).is_err());
        let step = Field::new(grid, vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]).unwrap();
        assert!(InitialDatum::new(step, &params).is_err());
        let touching = Field::new(grid, vec![1.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(InitialDatum::new(touching, &params).is_err());
        let jump = Field::new(grid, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(InitialDatum::new(jump, &params).is_err());
        let flat = Field::new(grid, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.9]).unwrap();
        assert!(InitialDatum::new(flat, &params).is_err());
        let datum = InitialDatum::new(Field::constant(grid, 0.2), &params).unwrap();
        assert!((datum.mean() - 0.2).abs() < 1e-15);
        assert!(datum.energy().is_finite());
        let over = Field::new(grid, vec![1.01; 8]).unwrap();
        assert!(InitialDatum::new(over, &params).is_err());
    }
}
