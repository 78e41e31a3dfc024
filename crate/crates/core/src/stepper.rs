//! Implicit time integration of
//!
//! ```text
//! (u+ - u)/dt = Lap_h w+
//! w+ = dJ_h(u+) + f_d(u+) - lambda u* + eps (u+ - u)/dt
//! ```
//!
//! where `J_h(u) = sum_faces (a_d(u_lo) + a_d(u_hi))/4 |D u|^2 vol` is the discrete
//! gradient energy (the same quadrature [`crate::diagnostics::gradient_energy`] uses)
//! and `dJ_h` its gradient divided by the cell volume. To second order `dJ_h`
//! is `-a Lap u - a'/2 |grad u|^2`; taking the exact variation keeps the energy
//! law of the scheme intact. `u*` is `u+` for backward Euler and `u` for the
//! convex splitting.
//!
//! Newton runs on the Schur complement in `u` (the `w` block is eliminated
//! exactly), so every iterate satisfies the `w` equation and the linear system is
//! `(I + dt L H) du = -r` with `L = -Lap_h` and `H` the Hessian of the potential.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::linalg::{gmres, BandLu, CsrMatrix};
use crate::model::{ModelParams, Truncation};
use crate::ops::laplacian_values;
use crate::transform::CosineBasis;

/// Largest half-bandwidth of the Newton matrix factored directly; wider systems use GMRES.
const BAND_LIMIT: usize = 64;
const GMRES_TOL: f64 = 1e-11;
const GMRES_RESTART: usize = 60;
const GMRES_MAX_ITER: usize = 600;
const LINE_SEARCH_HALVINGS: usize = 30;
const MAX_DT_HALVINGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    BackwardEulerFull,
    ConvexSplitting,
}

/// Which constitutive functions enter the discrete potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constitutive {
    Truncated,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Iterates are clipped into `|u| <= 1 - delta - margin`. `None` means `delta/2`.
    pub clip_margin: Option<f64>,
    pub constitutive: Constitutive,
}

impl StepperConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Self {
        StepperConfig {
            scheme,
            dt,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            clip_margin: None,
            constitutive: Constitutive::Truncated,
        }
    }

    /// `1e-4 (L/pi)^4 / a(0)` for the longest side `L` of the grid.
    pub fn default_dt(grid: &Grid) -> f64 {
        let l = grid.lengths().iter().cloned().fold(0.0, f64::max);
        1e-4 * (l / std::f64::consts::PI).powi(4) / 2.0
    }

    pub fn clip_bound(&self, params: &ModelParams) -> f64 {
        let margin = self.clip_margin.unwrap_or(0.5 * params.delta);
        1.0 - params.delta - margin
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let invalid = |name, value, reason| Err(Error::InvalidParameter { name, value, reason });
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid("dt", self.dt, "must be positive and finite");
        }
        if !(self.newton_tol > 0.0 && self.newton_tol <= 1e-6) {
            return invalid("newton_tol", self.newton_tol, "must lie in (0, 1e-6]");
        }
        if self.newton_max_iter == 0 {
            return invalid("newton_max_iter", 0.0, "must be at least 1");
        }
        if let Some(m) = self.clip_margin {
            if !(m > 0.0 && m < params.delta) {
                return invalid("clip_margin", m, "must lie in (0, delta)");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    pub w: Field,
    pub u_prev: Field,
    pub step_index: usize,
}

impl SimState {
    /// State at `t = 0` with `w` the potential of `u` (no viscous contribution).
    pub fn initial(u: Field, params: &ModelParams, cfg: &StepperConfig) -> Result<Self> {
        let problem = StepProblem::new(&u, params, cfg)?;
        let w = problem.potential(u.values())?;
        Ok(SimState {
            t: 0.0,
            w: Field::new(*u.grid(), w)?,
            u_prev: u.clone(),
            u,
            step_index: 0,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Functions {
    Truncated(Truncation),
    Exact,
}

impl Functions {
    fn drive(&self, r: f64) -> Result<(f64, f64)> {
        match self {
            Functions::Truncated(t) => Ok((t.drive(r)?, t.drive_d1(r)?)),
            Functions::Exact => {
                if r.abs() >= 1.0 {
                    return Err(Error::Domain { function: "log_potential_prime", value: r });
                }
                Ok((2.0 * r.atanh(), 2.0 / ((1.0 - r) * (1.0 + r))))
            }
        }
    }

    fn weight(&self, r: f64) -> Result<(f64, f64, f64)> {
        match self {
            Functions::Truncated(t) => Ok(t.weight_all(r)),
            Functions::Exact => {
                if r.abs() >= 1.0 {
                    return Err(Error::Domain { function: "gradient_weight", value: r });
                }
                let s = (1.0 - r) * (1.0 + r);
                Ok((2.0 / s, 4.0 * r / (s * s), 4.0 * (1.0 + 3.0 * r * r) / (s * s * s)))
            }
        }
    }
}

/// Gradient of `J_h` divided by the cell volume.
fn gradient_variation(grid: &Grid, functions: Functions, u: &[f64]) -> Result<Vec<f64>> {
    let weights = u
        .iter()
        .map(|&r| functions.weight(r).map(|(a, d, _)| (a, d)))
        .collect::<Result<Vec<_>>>()?;
    let mut mu = vec![0.0; u.len()];
    grid.for_each_face(|lo, hi, h| {
        let ((al, dl), (ar, dr)) = (weights[lo], weights[hi]);
        let d = (u[hi] - u[lo]) / h;
        let flux = 0.5 * (al + ar) * d / h;
        mu[lo] += 0.25 * dl * d * d - flux;
        mu[hi] += 0.25 * dr * d * d + flux;
    });
    Ok(mu)
}

/// Semi-discrete chemical potential without viscosity: `dJ_h(u) + f(u) - lambda u`,
/// with truncated or exact constitutive functions.
pub fn discrete_potential(u: &Field, params: &ModelParams, constitutive: Constitutive) -> Result<Field> {
    let functions = match constitutive {
        Constitutive::Truncated => Functions::Truncated(params.truncation()),
        Constitutive::Exact => Functions::Exact,
    };
    let mut mu = gradient_variation(u.grid(), functions, u.values())?;
    for (m, &r) in mu.iter_mut().zip(u.values()) {
        *m += functions.drive(r)?.0 - params.lambda * r;
    }
    Field::new(*u.grid(), mu)
}

/// One implicit step seen as a nonlinear system in `u+`.
#[derive(Debug, Clone)]
pub struct StepProblem {
    grid: Grid,
    u_old: Vec<f64>,
    dt: f64,
    functions: Functions,
    lambda_implicit: f64,
    explicit: Vec<f64>,
    viscous: f64,
    bound: f64,
    neg_laplacian: CsrMatrix,
}

fn neg_laplacian_matrix(grid: &Grid) -> CsrMatrix {
    let mut triplets = Vec::new();
    grid.for_each_face(|lo, hi, h| {
        let c = 1.0 / (h * h);
        triplets.extend_from_slice(&[(lo, lo, c), (hi, hi, c), (lo, hi, -c), (hi, lo, -c)]);
    });
    CsrMatrix::from_triplets(grid.len(), &triplets)
}

impl StepProblem {
    pub fn new(u_old: &Field, params: &ModelParams, cfg: &StepperConfig) -> Result<Self> {
        let params = params.validated()?;
        cfg.validate(&params)?;
        let bound = cfg.clip_bound(&params);
        u_old.check_separated(bound)?;
        let (lambda_implicit, explicit) = match cfg.scheme {
            Scheme::BackwardEulerFull => (params.lambda, vec![0.0; u_old.len()]),
            Scheme::ConvexSplitting => (
                0.0,
                u_old.values().iter().map(|&r| -params.lambda * r).collect(),
            ),
        };
        let functions = match cfg.constitutive {
            Constitutive::Truncated => Functions::Truncated(params.truncation()),
            Constitutive::Exact => Functions::Exact,
        };
        Ok(StepProblem {
            grid: *u_old.grid(),
            u_old: u_old.values().to_vec(),
            dt: cfg.dt,
            functions,
            lambda_implicit,
            explicit,
            viscous: params.epsilon / cfg.dt,
            bound,
            neg_laplacian: neg_laplacian_matrix(u_old.grid()),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Iterates are kept in `[-bound, bound]`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `w(u)`: gradient-energy variation, drive, the `lambda` term and viscosity.
    pub fn potential(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut mu = gradient_variation(&self.grid, self.functions, u)?;
        for i in 0..u.len() {
            let (f, _) = self.functions.drive(u[i])?;
            mu[i] += f - self.lambda_implicit * u[i] + self.explicit[i]
                + self.viscous * (u[i] - self.u_old[i]);
        }
        Ok(mu)
    }

    /// Residual `u - u_old - dt Lap_h w(u)` together with `w(u)`.
    pub fn residual(&self, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mu = self.potential(u)?;
        let lap = laplacian_values(&self.grid, &mu);
        let r = (0..u.len())
            .map(|i| u[i] - self.u_old[i] - self.dt * lap[i])
            .collect();
        Ok((r, mu))
    }

    /// Hessian of the discrete potential at `u`.
    pub fn potential_hessian(&self, u: &[f64]) -> Result<CsrMatrix> {
        let n = u.len();
        let mut triplets = Vec::with_capacity(5 * n);
        let weights = u
            .iter()
            .map(|&r| self.functions.weight(r))
            .collect::<Result<Vec<_>>>()?;
        self.grid.for_each_face(|lo, hi, h| {
            let (wl, wr) = (weights[lo], weights[hi]);
            let d = (u[hi] - u[lo]) / h;
            let omega = 0.25 * (wl.0 + wr.0);
            let stiff = 2.0 * omega / (h * h);
            triplets.push((lo, lo, 0.25 * wl.2 * d * d - wl.1 * d / h + stiff));
            triplets.push((hi, hi, 0.25 * wr.2 * d * d + wr.1 * d / h + stiff));
            let off = 0.5 * (wl.1 - wr.1) * d / h - stiff;
            triplets.push((lo, hi, off));
            triplets.push((hi, lo, off));
        });
        for (i, &r) in u.iter().enumerate() {
            let (_, f1) = self.functions.drive(r)?;
            triplets.push((i, i, f1 - self.lambda_implicit + self.viscous));
        }
        Ok(CsrMatrix::from_triplets(n, &triplets))
    }

    /// Jacobian of [`StepProblem::residual`] applied to `x`.
    pub fn jacobian_apply(&self, u: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let hx = self.potential_hessian(u)?.matvec(x);
        let lhx = self.neg_laplacian.matvec(&hx);
        Ok(x.iter().zip(&lhx).map(|(a, b)| a + self.dt * b).collect())
    }

    /// Solves `J(u) du = rhs`.
    fn solve_linearized(&self, u: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let hess = self.potential_hessian(u)?;
        let lh = self.neg_laplacian.mul(&hess);
        let jac = CsrMatrix::identity(u.len()).add_scaled(1.0, &lh, self.dt);
        let (kl, ku) = jac.bandwidth();
        if kl.max(ku) <= BAND_LIMIT {
            return Ok(BandLu::factor(&jac)?.solve(rhs));
        }
        let basis = CosineBasis::new(&self.grid);
        let n = u.len() as f64;
        let mut a_mean = 0.0;
        let mut shift = 0.0;
        for &r in u {
            a_mean += self.functions.weight(r)?.0 / n;
            shift += self.functions.drive(r)?.1 / n;
        }
        shift += self.viscous - self.lambda_implicit;
        let dt = self.dt;
        gmres(
            |x| jac.matvec(x),
            |x| {
                basis.apply_spectral(x, |k| {
                    let p = 1.0 + dt * k * (a_mean * k + shift);
                    if p > 1e-3 {
                        1.0 / p
                    } else {
                        1.0
                    }
                })
            },
            rhs,
            GMRES_TOL,
            GMRES_RESTART,
            GMRES_MAX_ITER,
        )
    }

    fn clip(&self, u: &mut [f64]) {
        for v in u {
            *v = v.clamp(-self.bound, self.bound);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Max-norm residual before each iteration and after the last.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub u: Field,
    pub w: Field,
    pub report: NewtonReport,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration for `problem` starting from `guess` (clipped first).
pub fn newton_solve(problem: &StepProblem, guess: &Field, cfg: &StepperConfig) -> Result<NewtonOutcome> {
    let mut u = guess.values().to_vec();
    problem.clip(&mut u);
    let (mut r, mut mu) = problem.residual(&u)?;
    let mut res = max_abs(&r);
    let mut history = vec![res];
    let mut iterations = 0;
    while res > cfg.newton_tol {
        if iterations == cfg.newton_max_iter {
            return Err(Error::NewtonDivergence { residual: res, iterations });
        }
        iterations += 1;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut du = problem.solve_linearized(&u, &rhs)?;
        let shift = du.iter().sum::<f64>() / du.len() as f64;
        let drift = (u.iter().sum::<f64>() - problem.u_old.iter().sum::<f64>()) / u.len() as f64;
        for d in du.iter_mut() {
            *d -= shift + drift;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=LINE_SEARCH_HALVINGS {
            let mut trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + alpha * b).collect();
            problem.clip(&mut trial);
            if let Ok((rt, mut_)) = problem.residual(&trial) {
                let res_t = max_abs(&rt);
                if res_t < (1.0 - 1e-4 * alpha) * res {
                    accepted = Some((trial, rt, mut_, res_t));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, rt, mut_, res_t)) => {
                u = trial;
                r = rt;
                mu = mut_;
                res = res_t;
                history.push(res);
            }
            None => return Err(Error::NewtonDivergence { residual: res, iterations }),
        }
    }
    let grid = *problem.grid();
    Ok(NewtonOutcome {
        u: Field::new(grid, u)?,
        w: Field::new(grid, mu)?,
        report: NewtonReport {
            iterations,
            residual_history: history,
        },
    })
}

/// One step of size `cfg.dt`; returns the new state and the Newton report.
pub fn step_with_report(
    state: &SimState,
    params: &ModelParams,
    cfg: &StepperConfig,
) -> Result<(SimState, NewtonReport)> {
    let problem = StepProblem::new(&state.u, params, cfg)?;
    let outcome = newton_solve(&problem, &state.u, cfg)?;
    let bound = problem.bound();
    if let Some(cell) = outcome.u.values().iter().position(|v| v.abs() >= bound) {
        return Err(Error::Separation {
            cell,
            value: outcome.u.values()[cell],
            bound,
        });
    }
    let next = SimState {
        t: state.t + cfg.dt,
        u: outcome.u,
        w: outcome.w,
        u_prev: state.u.clone(),
        step_index: state.step_index + 1,
    };
    Ok((next, outcome.report))
}

pub fn step(state: &SimState, params: &ModelParams, cfg: &StepperConfig) -> Result<SimState> {
    step_with_report(state, params, cfg).map(|(s, _)| s)
}

/// Receives records emitted by [`run`], together with the state they describe.
pub trait DiagnosticsSink {
    fn emit(&mut self, record: &DiagnosticsRecord, state: &SimState) -> Result<()>;
}

impl<F> DiagnosticsSink for F
where
    F: FnMut(&DiagnosticsRecord, &SimState) -> Result<()>,
{
    fn emit(&mut self, record: &DiagnosticsRecord, state: &SimState) -> Result<()> {
        self(record, state)
    }
}

/// Advances `initial` to `t_end`, emitting the initial record, every `stride`-th
/// step, and the final state. A step whose Newton solve fails is retried with
/// halved `dt` (up to eight times); the next step returns to `cfg.dt`.
pub fn run<S: DiagnosticsSink>(
    initial: Field,
    params: &ModelParams,
    cfg: &StepperConfig,
    t_end: f64,
    stride: usize,
    sink: &mut S,
) -> Result<SimState> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            value: t_end,
            reason: "must be non-negative and finite",
        });
    }
    let stride = stride.max(1);
    let mut state = SimState::initial(initial, params, cfg)?;
    sink.emit(&diagnostics::record(&state, params, 0.0)?, &state)?;
    while t_end - state.t > 1e-12 * cfg.dt {
        let remaining = t_end - state.t;
        let mut local = *cfg;
        local.dt = if remaining <= cfg.dt * (1.0 + 1e-9) { remaining } else { cfg.dt };
        let mut halvings = 0;
        let next = loop {
            match step(&state, params, &local) {
                Ok(next) => break next,
                Err(
                    Error::NewtonDivergence { .. }
                    | Error::LinearSolver { .. }
                    | Error::SingularMatrix(_)
                    | Error::Separation { .. },
                ) if halvings < MAX_DT_HALVINGS => {
                    halvings += 1;
                    local.dt *= 0.5;
                }
                Err(e) => {
                    return Err(Error::StepFailed {
                        step: state.step_index + 1,
                        time: state.t,
                        source: Box::new(e),
                    })
                }
            }
        };
        let mut next = next;
        if local.dt == remaining {
            next.t = t_end;
        }
        let residual = diagnostics::dissipation_residual(&state, &next, params, local.dt)?;
        let last = t_end - next.t <= 1e-12 * cfg.dt;
        if next.step_index % stride == 0 || last {
            sink.emit(&diagnostics::record(&next, params, residual)?, &next)?;
        }
        state = next;
    }
    Ok(state)
}
