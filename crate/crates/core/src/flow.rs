//! Time integration of `∂ₜu = F(e^{-f} det h)`.

use crate::diagnostics::DiagnosticsRecord;
use crate::endo::{build_endo, linearized_coefficient, EndoField};
use crate::error::{Error, Result};
use crate::geometry::{laplacian_symbol, BackgroundMetric, ScalarField};
use crate::hermitian::C64;
use crate::identities::GMonitor;
use crate::oracle::compute_c0;
use crate::speed::SpeedFunction;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Step-size halvings allowed for one step before the run is aborted.
pub const MAX_RETRIES: usize = 10;

/// The data of one flow: background metric, `f`, speed and the limit constant `c₀`.
#[derive(Clone, Debug)]
pub struct FlowProblem {
    pub chi: BackgroundMetric,
    pub f: ScalarField,
    pub speed: SpeedFunction,
    pub c0: f64,
}

impl FlowProblem {
    pub fn new(chi: BackgroundMetric, f: ScalarField, speed: SpeedFunction) -> Result<Self> {
        if chi.dim() != f.grid().dim() {
            return Err(Error::GridMismatch("metric and f have different dimensions".into()));
        }
        let c0 = compute_c0(&chi, &f)?;
        Ok(FlowProblem { chi, f, speed, c0 })
    }

    pub fn dim(&self) -> usize {
        self.chi.dim()
    }
}

/// A point on the trajectory with every quantity derived from `u` cached.
#[derive(Clone, Debug)]
pub struct FlowState {
    t: f64,
    u: ScalarField,
    endo: EndoField,
    density: ScalarField,
    udot: ScalarField,
}

impl FlowState {
    pub fn new(problem: &FlowProblem, t: f64, u: ScalarField) -> Result<Self> {
        u.check_same_grid(&problem.f)?;
        let endo = build_endo(&problem.chi, &u)?;
        let density = endo.density(&problem.f)?;
        let mut udot = Vec::with_capacity(density.values().len());
        for &rho in density.values() {
            udot.push(problem.speed.eval(rho)?);
        }
        let udot = ScalarField::new(u.grid(), udot)?;
        Ok(FlowState { t, u, endo, density, udot })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    pub fn endo(&self) -> &EndoField {
        &self.endo
    }

    /// `H = e^{-f} det h`.
    pub fn density(&self) -> &ScalarField {
        &self.density
    }

    /// `u̇ = F(H)`.
    pub fn udot(&self) -> &ScalarField {
        &self.udot
    }

    /// `φ = u − ∫u χⁿ / V`.
    pub fn phi(&self) -> ScalarField {
        self.u.mean_free()
    }

    pub fn residual_sup(&self, c0: f64) -> f64 {
        self.density.values().iter().fold(0.0, |m, h| m.max((h - c0).abs()))
    }
}

/// `F(e^{-f} det h)` for an admissible `u`.
pub fn rhs(u: &ScalarField, f: &ScalarField, chi: &BackgroundMetric, speed: &SpeedFunction) -> Result<ScalarField> {
    let endo = build_endo(chi, u)?;
    let density = endo.density(f)?;
    let mut out = Vec::with_capacity(density.values().len());
    for &rho in density.values() {
        out.push(speed.eval(rho)?);
    }
    ScalarField::new(u.grid(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Imex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepPolicy {
    pub scheme: Scheme,
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub residual_tol: f64,
    pub t_max: f64,
    pub max_steps: usize,
    /// IMEX step as a multiple of the explicit stability limit.
    pub imex_factor: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            scheme: Scheme::Imex,
            cfl_safety: 0.25,
            dt_max: 0.05,
            residual_tol: 1e-8,
            t_max: 100.0,
            max_steps: 100_000,
            imex_factor: 100.0,
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::Config { key: format!("policy.{key}"), msg: msg.into() });
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety", "must lie in (0, 1]");
        }
        if !(self.dt_max > 0.0) {
            return bad("dt_max", "must be positive");
        }
        if !(self.residual_tol > 0.0) {
            return bad("residual_tol", "must be positive");
        }
        if !(self.t_max > 0.0) {
            return bad("t_max", "must be positive");
        }
        if !(self.imex_factor >= 1.0) {
            return bad("imex_factor", "must be at least 1");
        }
        Ok(())
    }
}

/// `max_x c / λ_min(h)`: bound on the coefficients of `L` relative to the
/// background Laplacian.
fn frozen_coefficient(problem: &FlowProblem, state: &FlowState) -> Result<f64> {
    let (c, _) = linearized_coefficient(&state.endo, &problem.speed, &problem.f)?;
    Ok(c.values()
        .iter()
        .zip(state.endo.eigenvalues())
        .fold(0.0, |m, (ci, e)| m.max(ci / e[0])))
}

/// Largest magnitude of the discrete background Laplacian symbol.
fn symbol_bound(problem: &FlowProblem) -> f64 {
    let grid = problem.f.grid();
    let n = grid.size() as f64;
    problem.chi.inverse_norm() * PI * PI * grid.dim() as f64 * n * n / 2.0
}

/// Explicit stability limit `cfl / (max c/λ_min · μ_max)`, capped by `dt_max`.
pub fn stable_dt(problem: &FlowProblem, state: &FlowState, policy: &StepPolicy) -> Result<f64> {
    let stiffness = frozen_coefficient(problem, state)? * symbol_bound(problem);
    Ok((policy.cfl_safety / stiffness).min(policy.dt_max))
}

/// Step size the chosen scheme uses from `state`.
pub fn scheme_dt(problem: &FlowProblem, state: &FlowState, policy: &StepPolicy) -> Result<f64> {
    let explicit = stable_dt(problem, state, policy)?;
    Ok(match policy.scheme {
        Scheme::Rk4 => explicit,
        Scheme::Imex => (policy.imex_factor * explicit).min(policy.dt_max),
    })
}

fn axpy(u: &ScalarField, a: f64, k: &ScalarField) -> Result<ScalarField> {
    u.zip_map(k, |x, y| x + a * y)
}

/// Classical fourth-order Runge-Kutta step.
pub fn step_rk4(problem: &FlowProblem, state: &FlowState, dt: f64) -> Result<FlowState> {
    let (f, chi, speed) = (&problem.f, &problem.chi, &problem.speed);
    let k1 = &state.udot;
    let k2 = rhs(&axpy(&state.u, 0.5 * dt, k1)?, f, chi, speed)?;
    let k3 = rhs(&axpy(&state.u, 0.5 * dt, &k2)?, f, chi, speed)?;
    let k4 = rhs(&axpy(&state.u, dt, &k3)?, f, chi, speed)?;
    let values = state
        .u
        .values()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            u + dt / 6.0 * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i])
        })
        .collect();
    FlowState::new(problem, state.t + dt, ScalarField::new(state.u.grid(), values)?)
}

/// Stabilized step `(1 − dt c̄ Δ)u⁺ = u + dt (F − c̄ Δu)`, solved exactly in
/// Fourier space, with `c̄ = max c/λ_min`.
pub fn step_imex(problem: &FlowProblem, state: &FlowState, dt: f64) -> Result<FlowState> {
    let grid = state.u.grid();
    let cbar = frozen_coefficient(problem, state)?;
    let forcing = grid.forward_real(state.udot.values());
    let increment = grid.apply_symbol(&forcing, |k| {
        let sigma = laplacian_symbol(grid, &problem.chi, k);
        C64::new(dt / (1.0 - dt * cbar * sigma), 0.0)
    });
    let values = state.u.values().iter().zip(increment).map(|(u, d)| u + d.re).collect();
    FlowState::new(problem, state.t + dt, ScalarField::new(grid, values)?)
}

pub fn step(problem: &FlowProblem, state: &FlowState, dt: f64, scheme: Scheme) -> Result<FlowState> {
    match scheme {
        Scheme::Rk4 => step_rk4(problem, state, dt),
        Scheme::Imex => step_imex(problem, state, dt),
    }
}

fn retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::Admissibility { .. } | Error::NonFinite { .. } | Error::Domain { .. } | Error::Parabolicity { .. }
    )
}

/// Summary of `state` for the diagnostics series.
pub fn record(problem: &FlowProblem, state: &FlowState, dt: f64, monitor: &GMonitor) -> Result<DiagnosticsRecord> {
    let phi = state.phi();
    let trace = state.endo.trace_field();
    Ok(DiagnosticsRecord {
        t: state.t,
        dt,
        h_min: state.density.min(),
        h_max: state.density.max(),
        trh_min: trace.min(),
        trh_max: trace.max(),
        lambda_min: state.endo.lambda_min(),
        lambda_max: state.endo.lambda_max(),
        osc_udot: state.udot.oscillation(),
        residual_sup: state.residual_sup(problem.c0),
        g_max: monitor.evaluate(state, &phi)?.max(),
        phi_mean: phi.mean(),
        phi_sup: phi.sup_norm(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    NotConverged,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "CONVERGED",
            RunStatus::NotConverged => "NOT_CONVERGED",
        })
    }
}

#[derive(Clone, Debug)]
pub struct FlowRun {
    pub state: FlowState,
    /// One record for the initial state and one per accepted step.
    pub records: Vec<DiagnosticsRecord>,
    pub status: RunStatus,
    pub steps: usize,
    /// Total step-size halvings over the run.
    pub retries: usize,
}

impl FlowRun {
    pub fn phi(&self) -> ScalarField {
        self.state.phi()
    }
}

pub fn run_flow(problem: &FlowProblem, u0: &ScalarField, policy: &StepPolicy) -> Result<FlowRun> {
    run_flow_with(problem, u0, policy, &GMonitor::default(), |_, _| Ok(()))
}

/// Integrates until the stationary residual drops below `residual_tol` or
/// the time/step budget runs out. `observe` sees every accepted state with
/// its record, the initial one included.
pub fn run_flow_with<O>(
    problem: &FlowProblem,
    u0: &ScalarField,
    policy: &StepPolicy,
    monitor: &GMonitor,
    mut observe: O,
) -> Result<FlowRun>
where
    O: FnMut(&FlowState, &DiagnosticsRecord) -> Result<()>,
{
    policy.validate()?;
    let mut state = FlowState::new(problem, 0.0, u0.clone())?;
    let (lo, hi) = (state.density.min(), state.density.max());
    problem.speed.validate_on(0.5 * lo, 2.0 * hi)?;

    let first = record(problem, &state, 0.0, monitor)?;
    observe(&state, &first)?;
    let mut records = vec![first];
    let mut steps = 0;
    let mut retries = 0;
    let status = loop {
        if records.last().expect("nonempty").residual_sup < policy.residual_tol {
            break RunStatus::Converged;
        }
        if steps >= policy.max_steps || state.t >= policy.t_max {
            break RunStatus::NotConverged;
        }
        let mut dt = scheme_dt(problem, &state, policy)?;
        let mut attempt = 0;
        let next = loop {
            match step(problem, &state, dt, policy.scheme) {
                Ok(next) => break next,
                Err(e) if retryable(&e) && attempt < MAX_RETRIES => {
                    attempt += 1;
                    retries += 1;
                    dt *= 0.5;
                }
                Err(e) if retryable(&e) => {
                    return Err(Error::StepFailed { retries: attempt, last: Box::new(e) });
                }
                Err(e) => return Err(e),
            }
        };
        state = next;
        steps += 1;
        let rec = record(problem, &state, dt, monitor)?;
        observe(&state, &rec)?;
        records.push(rec);
    };
    Ok(FlowRun { state, records, status, steps, retries })
}

/// Fixed-step trajectory of `steps` steps, initial state included.
pub fn trajectory(problem: &FlowProblem, u0: &ScalarField, dt: f64, steps: usize, scheme: Scheme) -> Result<Vec<FlowState>> {
    let mut states = vec![FlowState::new(problem, 0.0, u0.clone())?];
    for _ in 0..steps {
        let next = step(problem, states.last().expect("nonempty"), dt, scheme)?;
        states.push(next);
    }
    Ok(states)
}
