//! Neumann finite-difference operators, quadrature, and the elliptic solves.
//!
//! All stencils use ghost-cell reflection, so every boundary face carries zero
//! flux. The Laplacian is assembled face by face, which makes it symmetric,
//! annihilate constants, and sum to zero over the grid.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::transform::CosineBasis;

/// Backward-error tolerance for the transform-based elliptic solves.
pub const SOLVER_TOL: f64 = 1e-12;

/// Relative tolerance on the mean of right-hand sides handed to the Poisson solve.
pub const ZERO_MEAN_TOL: f64 = 1e-10;

fn check_finite(f: &Field) -> Result<()> {
    match f.values().iter().position(|v| !v.is_finite()) {
        Some(cell) => Err(Error::NonFinite {
            cell,
            value: f.values()[cell],
        }),
        None => Ok(()),
    }
}

pub(crate) fn laplacian_values(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    grid.for_each_face(|lo, hi, h| {
        let flux = (f[hi] - f[lo]) / (h * h);
        out[lo] += flux;
        out[hi] -= flux;
    });
    out
}

pub(crate) fn gradient_sq_values(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    grid.for_each_face(|lo, hi, h| {
        let d = (f[hi] - f[lo]) / h;
        let half = 0.5 * d * d;
        out[lo] += half;
        out[hi] += half;
    });
    out
}

/// Second-order Laplacian with homogeneous Neumann closure.
pub fn laplacian_neumann(f: &Field) -> Result<Field> {
    check_finite(f)?;
    Ok(Field::from_raw(*f.grid(), laplacian_values(f.grid(), f.values())))
}

/// Cell-centered `|grad f|^2`: squared face differences averaged onto the two adjacent cells.
///
/// With this placement `sum_cells |grad f|^2 * vol == -(laplacian f, f)` holds exactly.
pub fn gradient_sq(f: &Field) -> Result<Field> {
    check_finite(f)?;
    Ok(Field::from_raw(*f.grid(), gradient_sq_values(f.grid(), f.values())))
}

/// Squared Frobenius norm of the discrete Hessian, per cell.
///
/// Pure second differences match the Laplacian stencil; the mixed derivative is the
/// centered cross difference with reflected ghosts.
pub fn hessian_sq(f: &Field) -> Result<Field> {
    check_finite(f)?;
    let grid = *f.grid();
    let v = f.values();
    let mut out = vec![0.0; v.len()];
    let mut pure = vec![vec![0.0; v.len()]; grid.ndims()];
    for (axis, second) in pure.iter_mut().enumerate() {
        let h = grid.spacing(axis);
        let s = grid.stride(axis);
        let n = grid.cells()[axis];
        for (idx, out) in second.iter_mut().enumerate() {
            let i = grid.multi_index(idx)[axis];
            let lo = if i == 0 { v[idx] } else { v[idx - s] };
            let hi = if i + 1 == n { v[idx] } else { v[idx + s] };
            *out = (hi - 2.0 * v[idx] + lo) / (h * h);
        }
    }
    for idx in 0..v.len() {
        out[idx] = pure.iter().map(|p| p[idx] * p[idx]).sum();
    }
    if grid.ndims() == 2 {
        let [n0, n1] = [grid.cells()[0], grid.cells()[1]];
        let (h0, h1) = (grid.spacing(0), grid.spacing(1));
        let at = |i: isize, j: isize| {
            let i = i.clamp(0, n0 as isize - 1) as usize;
            let j = j.clamp(0, n1 as isize - 1) as usize;
            v[i * n1 + j]
        };
        for i in 0..n0 as isize {
            for j in 0..n1 as isize {
                let cross = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1)
                    + at(i - 1, j - 1))
                    / (4.0 * h0 * h1);
                out[i as usize * n1 + j as usize] += 2.0 * cross * cross;
            }
        }
    }
    Ok(Field::from_raw(grid, out))
}

/// Solves `z - delta * Laplacian_h z = rhs`.
///
/// The operator is diagonal in the cosine basis, so the solve is exact up to
/// rounding; the residual is still checked against a normwise backward-error bound.
pub fn solve_shifted_helmholtz(rhs: &Field, delta: f64) -> Result<Field> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "must be positive",
        });
    }
    check_finite(rhs)?;
    let grid = *rhs.grid();
    let basis = CosineBasis::new(&grid);
    let z = basis.apply_spectral(rhs.values(), |k| 1.0 / (1.0 + delta * k));

    let lap = laplacian_values(&grid, &z);
    let residual = z
        .iter()
        .zip(&lap)
        .zip(rhs.values())
        .fold(0.0f64, |m, ((zi, li), ri)| m.max((zi - delta * li - ri).abs()));
    let z_max = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = rhs.max_abs() + (1.0 + delta * basis.max_eigenvalue()) * z_max;
    if residual > SOLVER_TOL * scale {
        return Err(Error::LinearSolver {
            residual,
            iterations: 1,
        });
    }
    Field::new(grid, z)
}

/// Solves `-Laplacian_h y = rhs` for the zero-mean `y`. The right-hand side must have zero mean.
pub fn solve_poisson_zero_mean(rhs: &Field) -> Result<Field> {
    check_finite(rhs)?;
    check_zero_mean(rhs)?;
    let grid = *rhs.grid();
    let basis = CosineBasis::new(&grid);
    let y = basis.apply_spectral(rhs.values(), |k| if k > 0.0 { 1.0 / k } else { 0.0 });
    Field::new(grid, y)
}

fn check_zero_mean(f: &Field) -> Result<()> {
    let m = mean(f);
    let rms = norm_l2(f) / f.grid().volume().sqrt();
    let tolerance = ZERO_MEAN_TOL * rms;
    if m.abs() > tolerance {
        Err(Error::NonZeroMean { mean: m, tolerance })
    } else {
        Ok(())
    }
}

pub fn mean(f: &Field) -> f64 {
    f.values().iter().sum::<f64>() / f.len() as f64
}

/// Cell-volume weighted `(f, g)`.
pub fn inner(f: &Field, g: &Field) -> f64 {
    debug_assert_eq!(f.grid(), g.grid());
    f.values().iter().zip(g.values()).map(|(a, b)| a * b).sum::<f64>() * f.grid().cell_volume()
}

pub fn norm_l2(f: &Field) -> f64 {
    inner(f, f).sqrt()
}

pub fn seminorm_h1(f: &Field) -> f64 {
    let g = gradient_sq_values(f.grid(), f.values());
    (g.iter().sum::<f64>() * f.grid().cell_volume()).sqrt()
}

/// Dual norm `(A^{-1} f, f)^{1/2}` on zero-mean fields, `A = -Laplacian_h`.
pub fn norm_vprime_zero_mean(f: &Field) -> Result<f64> {
    let y = solve_poisson_zero_mean(f)?;
    Ok(inner(&y, f).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> Field {
        let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::new(grid, values).unwrap()
    }

    fn grids() -> Vec<Grid> {
        vec![
            Grid::interval(37, 1.0).unwrap(),
            Grid::interval(64, 2.5).unwrap(),
            Grid::rectangle([9, 14], [1.0, 2.0]).unwrap(),
        ]
    }

    #[test]
    fn laplacian_annihilates_constants() {
        for grid in grids() {
            let lap = laplacian_neumann(&Field::constant(grid, 3.7)).unwrap();
            assert!(lap.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn laplacian_is_symmetric_and_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for grid in grids() {
            for _ in 0..20 {
                let f = random_field(grid, &mut rng);
                let g = random_field(grid, &mut rng);
                let lf = laplacian_neumann(&f).unwrap();
                let lg = laplacian_neumann(&g).unwrap();
                let scale = norm_l2(&lf) * norm_l2(&g) + norm_l2(&f) * norm_l2(&lg);
                assert!((inner(&lf, &g) - inner(&f, &lg)).abs() <= 1e-12 * scale);
                assert!(inner(&lf, &f) <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn kernel_is_exactly_the_constants() {
        // smallest nonzero eigenvalue of -Laplacian_h is (4/h^2) sin^2(pi/2n) > 0
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for grid in grids() {
            for _ in 0..20 {
                let f = random_field(grid, &mut rng);
                let m = mean(&f);
                let centered = f.map(|v| v - m).unwrap();
                let energy = -inner(&laplacian_neumann(&centered).unwrap(), &centered);
                let gap = (0..grid.ndims())
                    .map(|a| {
                        let n = grid.cells()[a] as f64;
                        let h = grid.spacing(a);
                        4.0 / (h * h) * (PI / (2.0 * n)).sin().powi(2)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(energy >= 0.999 * gap * inner(&centered, &centered));
            }
        }
    }

    #[test]
    fn laplacian_of_cosine_is_second_order() {
        let length = 1.0;
        let mut errors = Vec::new();
        for n in [64, 128, 256, 512] {
            let grid = Grid::interval(n, length).unwrap();
            let f = Field::from_fn(grid, |x| (PI * x[0] / length).cos()).unwrap();
            let lap = laplacian_neumann(&f).unwrap();
            let k2 = (PI / length).powi(2);
            let err = f
                .values()
                .iter()
                .zip(lap.values())
                .fold(0.0f64, |m, (fv, lv)| m.max((lv + k2 * fv).abs()));
            let h = length / n as f64;
            // truncation error is (pi^4/12) h^2 at leading order
            assert!(err <= PI.powi(4) / 12.0 * h * h * 1.01);
            errors.push(err);
        }
        for pair in errors.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
        }
    }

    #[test]
    fn laplacian_rejects_non_finite() {
        let grid = Grid::interval(8, 1.0).unwrap();
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        let f = Field::from_raw(grid, v);
        assert!(matches!(laplacian_neumann(&f), Err(Error::NonFinite { cell: 3, .. })));
    }

    #[test]
    fn gradient_sq_cases() {
        let grid = Grid::interval(50, 1.0).unwrap();
        let g = gradient_sq(&Field::constant(grid, -0.4)).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));

        let lin = Field::from_fn(grid, |x| x[0]).unwrap();
        let g = gradient_sq(&lin).unwrap();
        for &v in &g.values()[1..49] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // boundary cells see one reflected (zero) face
        assert!((g.values()[0] - 0.5).abs() < 1e-12);

        let mut prev = f64::NAN;
        for n in [64, 128, 256] {
            let grid = Grid::interval(n, 1.0).unwrap();
            let f = Field::from_fn(grid, |x| (PI * x[0]).cos()).unwrap();
            let total: f64 = gradient_sq(&f).unwrap().values().iter().sum::<f64>() / n as f64;
            let err = (total - PI * PI / 2.0).abs();
            let h = 1.0 / n as f64;
            assert!(err <= PI.powi(4) / 12.0 * h * h * 1.01, "n={n} err={err}");
            if prev.is_finite() {
                assert!((prev / err - 4.0).abs() < 0.4);
            }
            prev = err;
        }
    }

    #[test]
    fn gradient_sq_sums_to_dirichlet_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for grid in grids() {
            let f = random_field(grid, &mut rng);
            let g: f64 = gradient_sq(&f).unwrap().values().iter().sum::<f64>() * grid.cell_volume();
            let form = -inner(&laplacian_neumann(&f).unwrap(), &f);
            assert!((g - form).abs() <= 1e-12 * form.abs().max(1.0));
        }
    }

    #[test]
    fn helmholtz_constant_and_cosine() {
        let grid = Grid::interval(128, 1.0).unwrap();
        let z = solve_shifted_helmholtz(&Field::constant(grid, 0.3), 0.1).unwrap();
        assert!(z.values().iter().all(|v| (v - 0.3).abs() < 1e-15));

        let rhs = Field::from_fn(grid, |x| (PI * x[0]).cos()).unwrap();
        let z = solve_shifted_helmholtz(&rhs, 0.1).unwrap();
        let h = 1.0 / 128.0;
        let kappa_h = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        for (zi, ri) in z.values().iter().zip(rhs.values()) {
            assert!((zi - ri / (1.0 + 0.1 * kappa_h)).abs() < 1e-14);
            // continuum value cos(pi x)/1.98696
            assert!((zi - ri / (1.0 + 0.1 * PI * PI)).abs() < 0.1 * PI.powi(4) / 12.0 * h * h);
        }
        assert!((1.0 + 0.1 * PI * PI - 1.98696).abs() < 1e-5);
    }

    #[test]
    fn helmholtz_residual_and_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for grid in grids() {
            for delta in [1e-3, 0.05, 0.16] {
                let rhs = random_field(grid, &mut rng);
                let z = solve_shifted_helmholtz(&rhs, delta).unwrap();
                let lz = laplacian_neumann(&z).unwrap();
                let res = z
                    .values()
                    .iter()
                    .zip(lz.values())
                    .zip(rhs.values())
                    .fold(0.0f64, |m, ((a, b), c)| m.max((a - delta * b - c).abs()));
                assert!(res < 1e-12 * (1.0 + delta * lz.max_abs()));
                assert!(seminorm_h1(&z) <= seminorm_h1(&rhs) * (1.0 + 1e-13));
                assert!((mean(&z) - mean(&rhs)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn helmholtz_rejects_bad_delta() {
        let grid = Grid::interval(8, 1.0).unwrap();
        assert!(solve_shifted_helmholtz(&Field::zeros(grid), 0.0).is_err());
        assert!(solve_shifted_helmholtz(&Field::zeros(grid), -1.0).is_err());
    }

    #[test]
    fn poisson_roundtrip_and_eigen() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for grid in grids() {
            let f = random_field(grid, &mut rng);
            let mut af = laplacian_neumann(&f).unwrap();
            af = af.map(|v| -v).unwrap();
            let y = solve_poisson_zero_mean(&af).unwrap();
            let m = mean(&f);
            for (yi, fi) in y.values().iter().zip(f.values()) {
                assert!((yi - (fi - m)).abs() < 1e-10);
            }
        }
        let grid = Grid::interval(256, 1.0).unwrap();
        let rhs = Field::from_fn(grid, |x| (PI * x[0]).cos()).unwrap();
        let y = solve_poisson_zero_mean(&rhs).unwrap();
        let h = 1.0 / 256.0;
        for (yi, ri) in y.values().iter().zip(rhs.values()) {
            assert!((yi - ri / (PI * PI)).abs() < h * h);
        }
        let zero = solve_poisson_zero_mean(&Field::zeros(grid)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn poisson_rejects_nonzero_mean() {
        let grid = Grid::interval(16, 1.0).unwrap();
        let f = Field::from_fn(grid, |x| 1.0 + (PI * x[0]).cos()).unwrap();
        assert!(matches!(solve_poisson_zero_mean(&f), Err(Error::NonZeroMean { .. })));
        assert!(norm_vprime_zero_mean(&f).is_err());
    }

    #[test]
    fn quadrature_basics() {
        let grid = Grid::rectangle([5, 7], [1.0, 1.0]).unwrap();
        assert!((mean(&Field::constant(grid, 2.5)) - 2.5).abs() < 1e-15);
        assert!((norm_l2(&Field::constant(grid, 1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vprime_norm_of_cosine() {
        let mut prev = f64::NAN;
        for n in [64, 128, 256] {
            let grid = Grid::interval(n, 1.0).unwrap();
            let f = Field::from_fn(grid, |x| (PI * x[0]).cos()).unwrap();
            let v = norm_vprime_zero_mean(&f).unwrap();
            let err = (v - (1.0 / (2.0 * PI * PI)).sqrt()).abs();
            let h = 1.0 / n as f64;
            assert!(err < h * h);
            if prev.is_finite() {
                assert!((prev / err - 4.0).abs() < 0.4);
            }
            prev = err;
        }
    }

    #[test]
    fn hessian_matches_laplacian_in_1d() {
        let grid = Grid::interval(40, 1.0).unwrap();
        let f = Field::from_fn(grid, |x| (PI * x[0]).cos() + 0.2 * (3.0 * PI * x[0]).cos()).unwrap();
        let lap = laplacian_neumann(&f).unwrap();
        let hs = hessian_sq(&f).unwrap();
        for (a, b) in lap.values().iter().zip(hs.values()) {
            assert!((a * a - b).abs() < 1e-9 * (1.0 + b));
        }
    }
}
