//! Constitutive functions of the singular-diffusion Cahn-Hilliard model.
//!
//! ```text
//! F(r)  = (1-r) log(1-r) + (1+r) log(1+r)        homogeneous free energy
//! f(r)  = log((1+r)/(1-r)) = F'(r)                chemical drive
//! a(r)  = 2/(1-r^2) = f'(r)                      gradient-energy weight
//! phi   = arcsin,  phi'(r) = sqrt(a(r)/2)
//! j(v)  = tanh(v/2), the inverse of f
//! m(v)  = 1/(2(1+v^2)^p)                          entropy weight
//! ```
//!
//! Everything singular at `|r| = 1` returns [`Error::Domain`] there.

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::ops::{gradient_sq, laplacian_neumann};

/// Cells must satisfy `|u| <= 1 - SEPARATION_FLOOR` before a chemical potential is evaluated.
pub const SEPARATION_FLOOR: f64 = 1e-6;

/// Tolerance for `(u, z)` and `(u, v)` pairs to count as consistent.
pub const CONSISTENCY_TOL: f64 = 1e-10;

fn open_domain(function: &'static str, r: f64) -> Result<()> {
    if r.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { function, value: r })
    }
}

fn closed_domain(function: &'static str, r: f64) -> Result<()> {
    if r.abs() <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { function, value: r })
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Logarithmic potential `F`, extended to `r = +-1` by continuity.
pub fn log_potential(r: f64) -> Result<f64> {
    closed_domain("log_potential", r)?;
    Ok(xlogx(1.0 - r) + xlogx(1.0 + r))
}

/// `f(r) = log((1+r)/(1-r))`.
pub fn log_potential_prime(r: f64) -> Result<f64> {
    open_domain("log_potential_prime", r)?;
    Ok(2.0 * r.atanh())
}

/// `a(r) = 2/(1-r^2)`.
pub fn gradient_weight(r: f64) -> Result<f64> {
    open_domain("gradient_weight", r)?;
    Ok(2.0 / ((1.0 - r) * (1.0 + r)))
}

pub fn gradient_weight_d1(r: f64) -> Result<f64> {
    open_domain("gradient_weight_d1", r)?;
    let s = (1.0 - r) * (1.0 + r);
    Ok(4.0 * r / (s * s))
}

pub fn gradient_weight_d2(r: f64) -> Result<f64> {
    open_domain("gradient_weight_d2", r)?;
    let s = (1.0 - r) * (1.0 + r);
    Ok(4.0 * (1.0 + 3.0 * r * r) / (s * s * s))
}

/// `phi(r) = arcsin r`; `z = phi(u)` linearises the gradient energy.
pub fn phase_angle(r: f64) -> Result<f64> {
    closed_domain("phase_angle", r)?;
    Ok(r.asin())
}

pub fn phase_angle_d1(r: f64) -> Result<f64> {
    open_domain("phase_angle_d1", r)?;
    Ok(1.0 / ((1.0 - r) * (1.0 + r)).sqrt())
}

/// Inverse of [`log_potential_prime`]: `(e^v - 1)/(e^v + 1)`, evaluated as `tanh(v/2)`.
pub fn logistic_order(v: f64) -> f64 {
    (0.5 * v).tanh()
}

/// `2 e^v / (e^v + 1)^2`, evaluated as `1 / (2 cosh^2(v/2))`.
pub fn logistic_order_d1(v: f64) -> f64 {
    let c = (0.5 * v).cosh();
    0.5 / (c * c)
}

/// Entropy weight `m(v) = 1/(2 (1+v^2)^p)` with `p` in `(1/2, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyWeight {
    p: f64,
}

impl EntropyWeight {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.5 && p <= 1.0 {
            Ok(EntropyWeight { p })
        } else {
            Err(Error::InvalidParameter {
                name: "entropy_p",
                value: p,
                reason: "must lie in (1/2, 1]",
            })
        }
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    pub fn value(&self, v: f64) -> f64 {
        0.5 / (1.0 + v * v).powf(self.p)
    }

    pub fn d1(&self, v: f64) -> f64 {
        -self.p * v / (1.0 + v * v).powf(self.p + 1.0)
    }

    pub fn d2(&self, v: f64) -> f64 {
        let p = self.p;
        ((2.0 * p * p + p) * v * v - p) / (1.0 + v * v).powf(p + 2.0)
    }
}

/// Physical and numerical parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub entropy_p: f64,
    pub k_delta: f64,
}

impl ModelParams {
    /// Validated parameters with the default cap `K_delta = a(1 - delta/2)`.
    pub fn new(lambda: f64, epsilon: f64, delta: f64, entropy_p: f64) -> Result<Self> {
        check_delta(delta)?;
        let k_delta = default_k_delta(delta);
        ModelParams {
            lambda,
            epsilon,
            delta,
            entropy_p,
            k_delta,
        }
        .validated()
    }

    pub fn with_k_delta(mut self, k_delta: f64) -> Result<Self> {
        self.k_delta = k_delta;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: self.lambda,
                reason: "must be nonnegative",
            });
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: self.epsilon,
                reason: "must be nonnegative",
            });
        }
        check_delta(self.delta)?;
        EntropyWeight::new(self.entropy_p)?;
        let floor = 2.0 / (self.delta * (2.0 - self.delta));
        if !(self.k_delta >= floor && self.k_delta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "k_delta",
                value: self.k_delta,
                reason: "must be at least a(1 - delta)",
            });
        }
        let t = self.truncation();
        let overshoot = (0..=2000)
            .map(|i| t.blend(i as f64 / 2000.0).0)
            .any(|v| v > self.k_delta * (1.0 + 1e-12) || v < 1.0);
        if overshoot {
            return Err(Error::InvalidParameter {
                name: "k_delta",
                value: self.k_delta,
                reason: "too small: the C2 blend leaves [1, K_delta]",
            });
        }
        Ok(self)
    }

    pub fn entropy_weight(&self) -> EntropyWeight {
        EntropyWeight { p: self.entropy_p }
    }

    pub fn truncation(&self) -> Truncation {
        Truncation::new(self.delta, self.k_delta)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams::new(0.0, 0.0, 1.0 / 32.0, 1.0).expect("default parameters are valid")
    }
}

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

/// `a(1 - delta/2)`.
pub fn default_k_delta(delta: f64) -> f64 {
    let r = 1.0 - 0.5 * delta;
    2.0 / ((1.0 - r) * (1.0 + r))
}

/// Truncated drive `f_delta` and capped weight `a_delta`.
///
/// `f_delta` equals `f` on `[-1+2d, 1-2d]`. Beyond `s0 = 1-2d` it continues the
/// second-order Taylor polynomial of `f` at `s0` plus `C (r-s0)^3 / ((1-d) - r)`,
/// which is monotone, dominates `|f|`, and blows up at `1-d`. `C = d a''(1-d)/6`
/// bounds the Taylor remainder of `f`.
///
/// `a_delta` equals `a` on `[-1+d, 1-d]`, is the constant `K` for `|r| >= 1`, and
/// is a quintic Hermite blend (C2 at both ends) in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    delta: f64,
    k: f64,
    s0: f64,
    f_s0: f64,
    a_s0: f64,
    a1_s0: f64,
    cubic: f64,
    // blend data on (1-d, 1), scaled to s in (0,1)
    p0: f64,
    p1: f64,
    p2: f64,
}

impl Truncation {
    pub fn new(delta: f64, k: f64) -> Self {
        let s0 = 1.0 - 2.0 * delta;
        let c = 1.0 - delta;
        let a = |r: f64| 2.0 / ((1.0 - r) * (1.0 + r));
        let a1 = |r: f64| {
            let s = (1.0 - r) * (1.0 + r);
            4.0 * r / (s * s)
        };
        let a2 = |r: f64| {
            let s = (1.0 - r) * (1.0 + r);
            4.0 * (1.0 + 3.0 * r * r) / (s * s * s)
        };
        Truncation {
            delta,
            k,
            s0,
            f_s0: 2.0 * s0.atanh(),
            a_s0: a(s0),
            a1_s0: a1(s0),
            cubic: delta * a2(c) / 6.0,
            p0: a(c),
            p1: a1(c) * delta,
            p2: a2(c) * delta * delta,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn k_delta(&self) -> f64 {
        self.k
    }

    /// Singular points of `f_delta` are at `+-(1 - delta)`.
    pub fn drive_limit(&self) -> f64 {
        1.0 - self.delta
    }

    fn drive_domain(&self, r: f64) -> Result<()> {
        if r.abs() < self.drive_limit() {
            Ok(())
        } else {
            Err(Error::Domain {
                function: "truncated_drive",
                value: r,
            })
        }
    }

    /// `f_delta(r)`, defined on `(-1+delta, 1-delta)`.
    pub fn drive(&self, r: f64) -> Result<f64> {
        self.drive_domain(r)?;
        let x = r.abs();
        if x <= self.s0 {
            return Ok(2.0 * r.atanh());
        }
        let t = x - self.s0;
        let gap = self.drive_limit() - x;
        let g = self.f_s0 + self.a_s0 * t + 0.5 * self.a1_s0 * t * t + self.cubic * t * t * t / gap;
        Ok(g.copysign(r))
    }

    /// `f_delta'(r)`.
    pub fn drive_d1(&self, r: f64) -> Result<f64> {
        self.drive_domain(r)?;
        let x = r.abs();
        if x <= self.s0 {
            return Ok(2.0 / ((1.0 - r) * (1.0 + r)));
        }
        let t = x - self.s0;
        let gap = self.drive_limit() - x;
        Ok(self.a_s0 + self.a1_s0 * t + self.cubic * (3.0 * t * t / gap + t * t * t / (gap * gap)))
    }

    /// Blend value and its first two derivatives in the scaled variable `s`.
    fn blend(&self, s: f64) -> (f64, f64, f64) {
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
        let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
        let h2 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
        let h5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
        let d0 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
        let d1 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
        let d2 = 0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4);
        let d5 = -d0;
        let e0 = -60.0 * s + 180.0 * s2 - 120.0 * s3;
        let e1 = -36.0 * s + 96.0 * s2 - 60.0 * s3;
        let e2 = 0.5 * (2.0 - 18.0 * s + 36.0 * s2 - 20.0 * s3);
        let e5 = -e0;
        (
            self.p0 * h0 + self.p1 * h1 + self.p2 * h2 + self.k * h5,
            self.p0 * d0 + self.p1 * d1 + self.p2 * d2 + self.k * d5,
            self.p0 * e0 + self.p1 * e1 + self.p2 * e2 + self.k * e5,
        )
    }

    /// `(a_delta, a_delta', a_delta'')` at `r`; total on the reals.
    pub fn weight_all(&self, r: f64) -> (f64, f64, f64) {
        let x = r.abs();
        let inner = 1.0 - self.delta;
        if x <= inner {
            let s = (1.0 - r) * (1.0 + r);
            (2.0 / s, 4.0 * r / (s * s), 4.0 * (1.0 + 3.0 * r * r) / (s * s * s))
        } else if x >= 1.0 {
            (self.k, 0.0, 0.0)
        } else {
            let (v, d, e) = self.blend((x - inner) / self.delta);
            (v, d.copysign(r) / self.delta, e / (self.delta * self.delta))
        }
    }

    pub fn weight(&self, r: f64) -> f64 {
        self.weight_all(r).0
    }
}

/// Validates that `u` is separated and that `u_t` shares its grid.
fn check_state(u: &Field, u_t: &Field) -> Result<()> {
    u.check_same_grid(u_t)?;
    u.check_separated(1.0 - SEPARATION_FLOOR)
}

/// `w = -a(u) Lap u - a'(u)/2 |grad u|^2 + f(u) - lambda u + eps u_t`.
pub fn chemical_potential_order(u: &Field, u_t: &Field, params: &ModelParams) -> Result<Field> {
    check_state(u, u_t)?;
    let lap = laplacian_neumann(u)?;
    let g = gradient_sq(u)?;
    let values = (0..u.len())
        .map(|i| {
            let r = u.values()[i];
            Ok(-gradient_weight(r)? * lap.values()[i] - 0.5 * gradient_weight_d1(r)? * g.values()[i]
                + log_potential_prime(r)?
                - params.lambda * r
                + params.epsilon * u_t.values()[i])
        })
        .collect::<Result<Vec<_>>>()?;
    Field::new(*u.grid(), values)
}

/// `w = -2 phi'(u) Lap z + f(u) - lambda u + eps u_t` with `z = arcsin u`.
pub fn chemical_potential_angle(
    u: &Field,
    z: &Field,
    u_t: &Field,
    params: &ModelParams,
) -> Result<Field> {
    check_state(u, u_t)?;
    u.check_same_grid(z)?;
    for (cell, (&r, &zi)) in u.values().iter().zip(z.values()).enumerate() {
        let discrepancy = (phase_angle(r)? - zi).abs();
        if discrepancy > CONSISTENCY_TOL {
            return Err(Error::Inconsistent {
                what: "(u, z)",
                cell,
                discrepancy,
            });
        }
    }
    let lap = laplacian_neumann(z)?;
    let values = (0..u.len())
        .map(|i| {
            let r = u.values()[i];
            Ok(-2.0 * phase_angle_d1(r)? * lap.values()[i] + log_potential_prime(r)?
                - params.lambda * r
                + params.epsilon * u_t.values()[i])
        })
        .collect::<Result<Vec<_>>>()?;
    Field::new(*u.grid(), values)
}

/// `w = -Lap v + v + j(v)/2 |grad v|^2 - lambda j(v) + eps u_t` with `v = f(u)`.
pub fn chemical_potential_drive(
    u: &Field,
    v: &Field,
    u_t: &Field,
    params: &ModelParams,
) -> Result<Field> {
    u.check_same_grid(u_t)?;
    u.check_same_grid(v)?;
    for (cell, (&r, &vi)) in u.values().iter().zip(v.values()).enumerate() {
        let discrepancy = (log_potential_prime(r)? - vi).abs();
        if discrepancy > CONSISTENCY_TOL * vi.abs().max(1.0) {
            return Err(Error::Inconsistent {
                what: "(u, v)",
                cell,
                discrepancy,
            });
        }
    }
    let lap = laplacian_neumann(v)?;
    let g = gradient_sq(v)?;
    let values = (0..u.len())
        .map(|i| {
            let vi = v.values()[i];
            let ji = logistic_order(vi);
            -lap.values()[i] + vi + 0.5 * ji * g.values()[i] - params.lambda * ji
                + params.epsilon * u_t.values()[i]
        })
        .collect();
    Field::new(*u.grid(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn potential_values() {
        assert_eq!(log_potential(0.0).unwrap(), 0.0);
        assert!(close(log_potential(1.0).unwrap(), 2.0 * LN_2, 1e-15));
        assert!(close(log_potential(-1.0).unwrap(), 2.0 * LN_2, 1e-15));
        // 0.5 ln 0.5 + 1.5 ln 1.5
        assert!(close(log_potential(0.5).unwrap(), 0.261624, 5e-7));
        assert!(close(log_potential(0.3).unwrap(), log_potential(-0.3).unwrap(), 1e-16));
        assert!(log_potential(1.0 + 1e-12).is_err());
    }

    #[test]
    fn drive_and_weight_values() {
        assert_eq!(log_potential_prime(0.0).unwrap(), 0.0);
        assert_eq!(gradient_weight(0.0).unwrap(), 2.0);
        assert_eq!(gradient_weight_d1(0.0).unwrap(), 0.0);
        assert_eq!(gradient_weight_d2(0.0).unwrap(), 4.0);
        assert!(close(log_potential_prime(0.5).unwrap(), 3f64.ln(), 1e-15));
        assert!(close(gradient_weight(0.5).unwrap(), 8.0 / 3.0, 1e-15));
        assert!(close(gradient_weight_d1(0.5).unwrap(), 32.0 / 9.0, 1e-14));
        let r = 0.5;
        let a = gradient_weight(r).unwrap();
        let a1 = gradient_weight_d1(r).unwrap();
        let a2 = gradient_weight_d2(r).unwrap();
        assert!(close(a - 2.0 * a1 * a1 / a2, 8.0 / 7.0, 1e-14));
        for f in [log_potential_prime, gradient_weight, gradient_weight_d1, gradient_weight_d2] {
            assert!(matches!(f(1.0), Err(Error::Domain { .. })));
            assert!(f(-1.0).is_err());
        }
    }

    #[test]
    fn angle_values() {
        assert_eq!(phase_angle(0.0).unwrap(), 0.0);
        assert!(close(phase_angle(0.5).unwrap(), PI / 6.0, 1e-15));
        assert!(phase_angle(1.0).is_ok());
        assert!(phase_angle_d1(1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let r: f64 = rng.gen_range(-0.999..0.999);
            let d = phase_angle_d1(r).unwrap();
            assert!(close(d * d, gradient_weight(r).unwrap() / 2.0, 1e-14 * d * d));
            assert!(d >= 1.0);
        }
    }

    #[test]
    fn logistic_inverse() {
        assert_eq!(logistic_order(0.0), 0.0);
        assert!(close(logistic_order(log_potential_prime(0.7).unwrap()), 0.7, 1e-13));
        assert!(close(logistic_order(3f64.ln()), 0.5, 1e-15));
        for v in [-800.0, -31.0, 31.0, 800.0] {
            let j = logistic_order(v);
            assert!(j.is_finite() && j.abs() <= 1.0);
            assert!(logistic_order_d1(v).is_finite() && logistic_order_d1(v) >= 0.0);
        }
        // direct form for moderate v
        let v: f64 = 1.3;
        let ev = v.exp();
        assert!(close(logistic_order(v), (ev - 1.0) / (ev + 1.0), 1e-15));
        assert!(close(logistic_order_d1(v), 2.0 * ev / ((ev + 1.0) * (ev + 1.0)), 1e-15));
    }

    #[test]
    fn entropy_weight_values() {
        let m1 = EntropyWeight::new(1.0).unwrap();
        assert_eq!(m1.value(0.0), 0.5);
        assert_eq!(m1.value(1.0), 0.25);
        for p in [0.51, 0.75, 1.0] {
            let m = EntropyWeight::new(p).unwrap();
            assert_eq!(m.d1(0.0), 0.0);
            for v in [-3.0, -0.4, 0.0, 0.9, 12.0] {
                assert!(m.value(v) > 0.0 && m.value(v) <= 0.5);
                let h = 1e-5;
                let fd1 = (m.value(v + h) - m.value(v - h)) / (2.0 * h);
                let fd2 = (m.d1(v + h) - m.d1(v - h)) / (2.0 * h);
                assert!(close(fd1, m.d1(v), 1e-8));
                assert!(close(fd2, m.d2(v), 1e-8));
            }
        }
        assert!(EntropyWeight::new(0.5).is_err());
        assert!(EntropyWeight::new(1.01).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(-1.0, 0.0, 0.05, 1.0).is_err());
        assert!(ModelParams::new(1.0, -0.1, 0.05, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.2, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.05, 0.4).is_err());
        let p = ModelParams::new(3.0, 0.1, 0.05, 0.75).unwrap();
        assert!(p.with_k_delta(1.0).is_err());
        // exactly a(1 - delta): the blend rises above the cap
        assert!(p.with_k_delta(gradient_weight(0.95).unwrap()).is_err());
        assert!(p.with_k_delta(1e4).is_ok());
    }

    #[test]
    fn truncated_drive_properties() {
        for delta in [0.15, 0.05, 1.0 / 32.0, 1.0 / 128.0] {
            let t = ModelParams::new(0.0, 0.0, delta, 1.0).unwrap().truncation();
            let inner = 1.0 - 2.0 * delta;
            for i in 0..=100 {
                let r = -inner + 2.0 * inner * i as f64 / 100.0;
                assert_eq!(t.drive(r).unwrap(), log_potential_prime(r).unwrap());
            }
            let limit = 1.0 - delta;
            let mut prev = f64::NEG_INFINITY;
            for i in 1..2000 {
                let r = -limit + 2.0 * limit * i as f64 / 2000.0;
                let fd = t.drive(r).unwrap();
                assert!(fd.abs() >= log_potential_prime(r).unwrap().abs());
                assert!(fd > prev);
                assert!(t.drive_d1(r).unwrap() > 0.0);
                prev = fd;
                // derivative check
                let h = 1e-7 * delta;
                if r.abs() + h < limit {
                    let fdd = (t.drive(r + h).unwrap() - t.drive(r - h).unwrap()) / (2.0 * h);
                    let exact = t.drive_d1(r).unwrap();
                    assert!(close(fdd, exact, 1e-5 * exact.abs().max(1.0)), "r={r}");
                }
            }
            assert!(t.drive(limit * (1.0 - 1e-12)).unwrap() > 20.0);
            assert!(t.drive(limit).is_err());
            assert!(t.drive(-limit).is_err());
        }
    }

    #[test]
    fn truncated_weight_properties() {
        for delta in [0.15, 0.05, 1.0 / 32.0] {
            let p = ModelParams::new(0.0, 0.0, delta, 1.0).unwrap();
            let t = p.truncation();
            assert_eq!(t.weight(2.0), p.k_delta);
            assert_eq!(t.weight(-5.0), p.k_delta);
            assert_eq!(t.weight(0.0), 2.0);
            for i in 0..=4000 {
                let r = -1.5 + 3.0 * i as f64 / 4000.0;
                let (v, d, e) = t.weight_all(r);
                assert!((1.0..=p.k_delta * (1.0 + 1e-12)).contains(&v), "r={r} a={v}");
                if r.abs() <= 1.0 - delta {
                    assert_eq!(v, gradient_weight(r).unwrap());
                }
                // C2: compare against centered differences
                let h = 1e-6;
                let fd1 = (t.weight(r + h) - t.weight(r - h)) / (2.0 * h);
                let fd2 = (t.weight_all(r + h).1 - t.weight_all(r - h).1) / (2.0 * h);
                assert!(close(fd1, d, 1e-5 * d.abs().max(v)), "r={r}");
                assert!(close(fd2, e, 1e-4 * e.abs().max(v)), "r={r}");
            }
            // junction continuity up to second derivative
            let c = 1.0 - delta;
            let below = t.weight_all(c - 1e-12);
            let above = t.weight_all(c + 1e-12);
            assert!(close(below.0, above.0, 1e-6 * below.0));
            assert!(close(below.1, above.1, 1e-5 * below.1));
            assert!(close(below.2, above.2, 1e-4 * below.2));
            let edge = t.weight_all(1.0 - 1e-12);
            assert!(close(edge.0, p.k_delta, 1e-6 * p.k_delta));
            assert!(edge.1.abs() < 1e-3 && edge.2.abs() < 1e-3 * p.k_delta / (delta * delta));
        }
    }

    #[test]
    fn chemical_potentials_on_constants() {
        let grid = Grid::interval(16, 1.0).unwrap();
        let params = ModelParams::new(1.7, 0.3, 0.05, 1.0).unwrap();
        let m = 0.35;
        let u = Field::constant(grid, m);
        let zero = Field::zeros(grid);
        let z = u.try_map(phase_angle).unwrap();
        let v = u.try_map(log_potential_prime).unwrap();
        let expected = log_potential_prime(m).unwrap() - params.lambda * m;
        for w in [
            chemical_potential_order(&u, &zero, &params).unwrap(),
            chemical_potential_angle(&u, &z, &zero, &params).unwrap(),
            chemical_potential_drive(&u, &v, &zero, &params).unwrap(),
        ] {
            for &wi in w.values() {
                assert!(close(wi, expected, 1e-15));
            }
        }
    }

    #[test]
    fn chemical_potentials_reject_bad_input() {
        let grid = Grid::interval(8, 1.0).unwrap();
        let params = ModelParams::default();
        let zero = Field::zeros(grid);
        let mut vals = vec![0.2; 8];
        vals[5] = 1.0 - 1e-7;
        let u = Field::new(grid, vals).unwrap();
        assert!(matches!(
            chemical_potential_order(&u, &zero, &params),
            Err(Error::Separation { cell: 5, .. })
        ));
        let u = Field::constant(grid, 0.2);
        let z = Field::constant(grid, 0.2);
        assert!(matches!(
            chemical_potential_angle(&u, &z, &zero, &params),
            Err(Error::Inconsistent { .. })
        ));
        let v = Field::constant(grid, 0.41);
        assert!(matches!(
            chemical_potential_drive(&u, &v, &zero, &params),
            Err(Error::Inconsistent { .. })
        ));
    }
}
