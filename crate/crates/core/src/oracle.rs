//! Independent solvers for the stationary equation
//! `e^{-f} det(χ + i∂∂̄φ) / det χ = c₀`, `c₀ = V / ∫ e^f χ^n`.

use crate::endo::{build_endo, EndoField};
use crate::error::{Error, Result};
use crate::geometry::{complex_hessian, integrate, poisson_solve, BackgroundMetric, ScalarField};
use crate::linsolve::{gmres, GmresOptions};

/// Armijo sufficient-decrease parameter.
const ARMIJO_SLOPE: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 20;

/// `c₀ = ∫χ^n / ∫e^f χ^n`.
pub fn compute_c0(chi: &BackgroundMetric, f: &ScalarField) -> Result<f64> {
    let weighted = integrate(&f.map(f64::exp)?, None, chi)?;
    Ok(chi.volume() / weighted)
}

#[derive(Clone, Debug)]
pub struct StationaryProblem {
    pub chi: BackgroundMetric,
    pub f: ScalarField,
    pub c0: f64,
    pub tol: f64,
}

impl StationaryProblem {
    pub fn new(chi: BackgroundMetric, f: ScalarField, tol: f64) -> Result<Self> {
        if chi.dim() != f.grid().dim() {
            return Err(Error::GridMismatch("metric and f have different dimensions".into()));
        }
        let c0 = compute_c0(&chi, &f)?;
        Ok(StationaryProblem { chi, f, c0, tol })
    }
}

/// Pointwise `e^{-f} det h − c₀` and its sup norm.
pub fn residual(chi: &BackgroundMetric, f: &ScalarField, phi: &ScalarField, c0: f64) -> Result<(ScalarField, f64)> {
    let endo = build_endo(chi, phi)?;
    let field = endo.density(f)?.map(|h| h - c0)?;
    let sup = field.sup_norm();
    Ok((field, sup))
}

/// Complex dimension one: `det h = 1 + Δφ`, so a single Poisson solve of
/// `Δφ = c₀e^f − 1` gives the mean-zero solution.
pub fn solve_n1(problem: &StationaryProblem) -> Result<ScalarField> {
    if problem.f.grid().dim() != 1 {
        return Err(Error::GridMismatch("solve_n1 needs complex dimension 1".into()));
    }
    let rhs = problem.f.map(|fv| problem.c0 * fv.exp() - 1.0)?;
    let phi = poisson_solve(&rhs, &problem.chi)?;
    match build_endo(&problem.chi, &phi) {
        Ok(_) => Ok(phi),
        Err(Error::Admissibility { index, value }) => Err(Error::OracleInadmissible(format!(
            "1 + Δφ = {value:e} at point {index}"
        ))),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub phi: ScalarField,
    pub iterations: usize,
    /// Sup norm of `log det h − f − log c₀` before each iteration and at the end.
    pub residual_history: Vec<f64>,
    pub linear_iterations: usize,
}

fn log_residual(endo: &EndoField, problem: &StationaryProblem) -> Result<ScalarField> {
    let shift = problem.c0.ln();
    let values = endo.det().iter().zip(problem.f.values()).map(|(d, f)| d.ln() - f - shift).collect();
    ScalarField::new(problem.f.grid(), values)
}

fn sum_squares(r: &ScalarField) -> f64 {
    r.values().iter().map(|v| v * v).sum()
}

/// `g^{jk̄} ∂_j∂_{k̄} v`, the linearization of `log det h`.
fn linearized(endo: &EndoField, v: &ScalarField) -> Result<Vec<f64>> {
    let dim = v.grid().dim();
    let hess = complex_hessian(v)?;
    Ok(endo
        .metric_inv()
        .iter()
        .zip(hess.values())
        .map(|(gi, hs)| (*gi * *hs).trace(dim).re)
        .collect())
}

/// Damped Newton on the log form `log det h = f + log c₀`.
///
/// Each correction solves `g^{jk̄}∂_j∂_{k̄}δ + m = −r` for a mean-zero `δ`
/// and a constant `m`, preconditioned on the right by the inverse background
/// Laplacian. Iterates are kept mean-zero.
pub fn solve_newton(problem: &StationaryProblem, initial_guess: Option<&ScalarField>) -> Result<NewtonReport> {
    solve_newton_with(problem, initial_guess, 50)
}

pub fn solve_newton_with(
    problem: &StationaryProblem,
    initial_guess: Option<&ScalarField>,
    max_iterations: usize,
) -> Result<NewtonReport> {
    let grid = problem.f.grid().clone();
    let chi = &problem.chi;
    let mut phi = match initial_guess {
        Some(g) => {
            g.check_same_grid(&problem.f)?;
            g.mean_free()
        }
        None => ScalarField::zeros(&grid),
    };
    let mut endo = build_endo(chi, &phi)?;
    let mut r = log_residual(&endo, problem)?;
    let mut history = vec![r.sup_norm()];
    let mut linear_iterations = 0;

    for iteration in 0..max_iterations {
        if r.sup_norm() < problem.tol {
            return Ok(NewtonReport { phi, iterations: iteration, residual_history: history, linear_iterations });
        }
        let apply = |z: &[f64]| -> Result<Vec<f64>> {
            let zf = ScalarField::new(&grid, z.to_vec())?;
            let mean = zf.mean();
            let delta = poisson_solve(&zf.mean_free(), chi)?;
            let mut out = linearized(&endo, &delta)?;
            for v in out.iter_mut() {
                *v += mean;
            }
            Ok(out)
        };
        let rhs: Vec<f64> = r.values().iter().map(|v| -v).collect();
        let solved = gmres(apply, &rhs, GmresOptions::default())?;
        linear_iterations += solved.iterations;
        let z = ScalarField::new(&grid, solved.x)?;
        let delta = poisson_solve(&z.mean_free(), chi)?;

        let merit = sum_squares(&r);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = phi.zip_map(&delta, |a, b| a + step * b)?.mean_free();
            match build_endo(chi, &trial) {
                Ok(trial_endo) => {
                    let trial_r = log_residual(&trial_endo, problem)?;
                    if sum_squares(&trial_r) <= (1.0 - 2.0 * ARMIJO_SLOPE * step) * merit {
                        accepted = Some((trial, trial_endo, trial_r));
                        break;
                    }
                }
                Err(Error::Admissibility { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        let Some((trial, trial_endo, trial_r)) = accepted else {
            return Err(Error::NonConvergence { iterations: iteration + 1, residual: r.sup_norm() });
        };
        phi = trial;
        endo = trial_endo;
        r = trial_r;
        history.push(r.sup_norm());
    }
    if r.sup_norm() < problem.tol {
        Ok(NewtonReport { phi, iterations: max_iterations, residual_history: history, linear_iterations })
    } else {
        Err(Error::NonConvergence { iterations: max_iterations, residual: r.sup_norm() })
    }
}
