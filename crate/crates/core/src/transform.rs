//! Cosine transforms diagonalising the Neumann stencil.
//!
//! On a cell-centered grid with ghost-cell reflection the vectors
//! `cos(k pi (i + 1/2) / n)` are exact eigenvectors of the three-point
//! Laplacian, with eigenvalues `-(4 / h^2) sin^2(k pi / (2 n))`. The 2D basis
//! is the tensor product. Transforms go through a length-`2n` FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

struct AxisTransform {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    twiddle: Vec<Complex<f64>>,
    eigen: Vec<f64>,
}

impl AxisTransform {
    fn new(planner: &mut FftPlanner<f64>, n: usize, h: f64) -> Self {
        let twiddle = (0..n)
            .map(|k| Complex::from_polar(1.0, PI * k as f64 / (2 * n) as f64))
            .collect();
        let eigen = (0..n)
            .map(|k| {
                let s = (PI * k as f64 / (2 * n) as f64).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        AxisTransform {
            n,
            forward: planner.plan_fft_forward(2 * n),
            inverse: planner.plan_fft_inverse(2 * n),
            twiddle,
            eigen,
        }
    }

    /// Expansion coefficients: `x[i] = sum_k c[k] cos(k pi (i + 1/2) / n)`.
    fn analyse(&self, x: &mut [f64], buf: &mut [Complex<f64>]) {
        let n = self.n;
        for i in 0..n {
            buf[i] = Complex::new(x[i], 0.0);
            buf[2 * n - 1 - i] = Complex::new(x[i], 0.0);
        }
        self.forward.process(buf);
        let scale = 1.0 / n as f64;
        for k in 0..n {
            let dct = 0.5 * (self.twiddle[k].conj() * buf[k]).re;
            x[k] = if k == 0 { dct * scale } else { 2.0 * dct * scale };
        }
    }

    fn synthesise(&self, c: &mut [f64], buf: &mut [Complex<f64>]) {
        let n = self.n;
        for k in 0..n {
            buf[k] = self.twiddle[k] * c[k];
        }
        for b in buf.iter_mut().skip(n) {
            *b = Complex::new(0.0, 0.0);
        }
        self.inverse.process(buf);
        for i in 0..n {
            c[i] = buf[i].re;
        }
    }
}

/// Discrete cosine basis of a [`Grid`].
pub struct CosineBasis {
    grid: Grid,
    axes: Vec<AxisTransform>,
}

impl CosineBasis {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let axes = (0..grid.ndims())
            .map(|a| AxisTransform::new(&mut planner, grid.cells()[a], grid.spacing(a)))
            .collect();
        CosineBasis { grid: *grid, axes }
    }

    /// Eigenvalue of `-Laplacian_h` for the mode stored at flat index `idx`.
    pub fn eigenvalue(&self, idx: usize) -> f64 {
        let m = self.grid.multi_index(idx);
        self.axes.iter().enumerate().map(|(a, t)| t.eigen[m[a]]).sum()
    }

    /// Largest eigenvalue of `-Laplacian_h`.
    pub fn max_eigenvalue(&self) -> f64 {
        self.axes.iter().map(|t| t.eigen[t.n - 1]).sum()
    }

    pub fn analyse(&self, values: &[f64]) -> Vec<f64> {
        let mut out = values.to_vec();
        self.apply(&mut out, true);
        out
    }

    pub fn synthesise(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = coeffs.to_vec();
        self.apply(&mut out, false);
        out
    }

    /// Applies the diagonal operator `c_k -> multiplier(kappa_k) * c_k`.
    pub fn apply_spectral<F: Fn(f64) -> f64>(&self, values: &[f64], multiplier: F) -> Vec<f64> {
        let mut c = self.analyse(values);
        for (idx, ck) in c.iter_mut().enumerate() {
            *ck *= multiplier(self.eigenvalue(idx));
        }
        self.synthesise(&c)
    }

    fn apply(&self, data: &mut [f64], forward: bool) {
        let cells = self.grid.cells();
        if self.grid.ndims() == 1 {
            let t = &self.axes[0];
            let mut buf = vec![Complex::new(0.0, 0.0); 2 * t.n];
            if forward {
                t.analyse(data, &mut buf)
            } else {
                t.synthesise(data, &mut buf)
            }
            return;
        }
        let (n0, n1) = (cells[0], cells[1]);
        // axis 1: contiguous rows
        {
            let t = &self.axes[1];
            let mut buf = vec![Complex::new(0.0, 0.0); 2 * n1];
            for row in data.chunks_mut(n1) {
                if forward {
                    t.analyse(row, &mut buf)
                } else {
                    t.synthesise(row, &mut buf)
                }
            }
        }
        // axis 0: strided columns
        let t = &self.axes[0];
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * n0];
        let mut col = vec![0.0; n0];
        for j in 0..n1 {
            for i in 0..n0 {
                col[i] = data[i * n1 + j];
            }
            if forward {
                t.analyse(&mut col, &mut buf)
            } else {
                t.synthesise(&mut col, &mut buf)
            }
            for i in 0..n0 {
                data[i * n1 + j] = col[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_1d_and_2d() {
        for grid in [
            Grid::interval(17, 2.0).unwrap(),
            Grid::rectangle([6, 9], [1.0, 3.0]).unwrap(),
        ] {
            let basis = CosineBasis::new(&grid);
            let x: Vec<f64> = (0..grid.len()).map(|i| ((i * 7 + 3) % 11) as f64 - 4.5).collect();
            let back = basis.synthesise(&basis.analyse(&x));
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_mode_is_recovered() {
        let n = 12;
        let grid = Grid::interval(n, 1.0).unwrap();
        let basis = CosineBasis::new(&grid);
        let x: Vec<f64> = (0..n)
            .map(|i| 0.7 * (3.0 * PI * (i as f64 + 0.5) / n as f64).cos() + 0.25)
            .collect();
        let c = basis.analyse(&x);
        assert!((c[0] - 0.25).abs() < 1e-14);
        assert!((c[3] - 0.7).abs() < 1e-14);
        for (k, ck) in c.iter().enumerate() {
            if k != 0 && k != 3 {
                assert!(ck.abs() < 1e-14);
            }
        }
    }
}
