//! Sparse matrices and the two linear solvers used by the Newton iteration:
//! banded LU with partial pivoting, and restarted right-preconditioned GMRES.

use crate::error::{Error, Result};

/// Compressed sparse row matrix, square.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..n {
            let row = &mut entries[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            for &(c, v) in row.iter() {
                if cols.len() > row_ptr[r] && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        CsrMatrix::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `self * other`.
    pub fn mul(&self, other: &CsrMatrix) -> CsrMatrix {
        let mut triplets = Vec::new();
        let mut acc = vec![0.0; self.n];
        let mut mark = vec![usize::MAX; self.n];
        let mut touched = Vec::new();
        for i in 0..self.n {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                triplets.push((i, j, acc[j]));
            }
            touched.clear();
        }
        CsrMatrix::from_triplets(self.n, &triplets)
    }

    /// `alpha * self + beta * other`.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.vals.len() + other.vals.len());
        for i in 0..self.n {
            t.extend(self.row(i).map(|(c, v)| (i, c, alpha * v)));
            t.extend(other.row(i).map(|(c, v)| (i, c, beta * v)));
        }
        CsrMatrix::from_triplets(self.n, &t)
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }
}

/// LU factorisation of a banded matrix with partial pivoting.
///
/// Row `i` of the working array covers columns `i - kl ..= i + ku + kl`; fill-in
/// from row interchanges stays inside that window.
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    rows: Vec<f64>,
    mult: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let (kl, ku) = a.bandwidth();
        let width = 2 * kl + ku + 1;
        let mut rows = vec![0.0; n * width];
        // column c of row i sits at i * width + (c + kl - i)
        for i in 0..n {
            for (c, v) in a.row(i) {
                rows[i * width + c + kl - i] += v;
            }
        }
        let at = |i: usize, c: usize| i * width + c + kl - i;
        let mut mult = vec![0.0; n * kl.max(1)];
        let mut pivots = vec![0; n];
        let scale = rows.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = rows[at(k, k)].abs();
            for i in k + 1..=last {
                let v = rows[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 * scale || !best.is_finite() {
                return Err(Error::SingularMatrix(k));
            }
            pivots[k] = p;
            let cmax = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    rows.swap(at(k, c), at(p, c));
                }
            }
            let pivot = rows[at(k, k)];
            for i in k + 1..=last {
                let l = rows[at(i, k)] / pivot;
                mult[k * kl + (i - k - 1)] = l;
                if l != 0.0 {
                    for c in k + 1..=cmax {
                        rows[at(i, c)] -= l * rows[at(k, c)];
                    }
                }
                rows[at(i, k)] = 0.0;
            }
        }
        Ok(BandLu {
            n,
            kl,
            width,
            rows,
            mult,
            pivots,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let ku_fill = width - kl - 1;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            for i in k + 1..=last {
                x[i] -= self.mult[k * kl + (i - k - 1)] * x[k];
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + ku_fill).min(n - 1);
            let mut s = x[k];
            for c in k + 1..=cmax {
                s -= self.rows[k * width + c + kl - k] * x[c];
            }
            x[k] = s / self.rows[k * width + kl];
        }
        x
    }
}

/// Restarted GMRES with right preconditioning. Stops when `||b - A x|| <= tol * ||b||`.
pub fn gmres<A, P>(
    apply: A,
    precondition: P,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<Vec<f64>>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut iterations = 0;
    let mut rnorm = bnorm;
    while iterations < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        rnorm = norm(&r);
        if rnorm <= tol * bnorm {
            return Ok(x);
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / rnorm).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![rnorm];
        let mut inner_done = 0;
        for j in 0..restart {
            iterations += 1;
            let z = precondition(&basis[j]);
            let mut w = apply(&z);
            zs.push(z);
            let mut col = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                col[i] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm(&w);
            col[j + 1] = wn;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = (col[j] * col[j] + col[j + 1] * col[j + 1]).sqrt();
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[j] / denom, col[j + 1] / denom) };
            cs.push(c);
            sn.push(s);
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = 0.0;
            g.push(-s * g[j]);
            g[j] *= c;
            hess.push(col);
            inner_done = j + 1;
            rnorm = g[j + 1].abs();
            if rnorm <= tol * bnorm || wn == 0.0 || iterations >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; inner_done];
        for i in (0..inner_done).rev() {
            let mut s = g[i];
            for k in i + 1..inner_done {
                s -= hess[k][i] * y[k];
            }
            y[i] = s / hess[i][i];
        }
        for (yk, z) in y.iter().zip(&zs) {
            for (xi, zi) in x.iter_mut().zip(z) {
                *xi += yk * zi;
            }
        }
    }
    let ax = apply(&x);
    let true_res = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
    if true_res <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::LinearSolver {
            residual: true_res.max(rnorm) / bnorm,
            iterations,
        })
    }
}
