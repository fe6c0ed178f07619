//! Residuals of the evolution identities satisfied along the flow on a flat
//! torus, evaluated on computed trajectories, and the test function
//! `G = log Tr h − Aφ + (B/2)F²`.

use crate::diagnostics::DiagnosticsRecord;
use crate::endo::{contract_gradients, third_order_square};
use crate::error::{Error, Result};
use crate::flow::{FlowProblem, FlowState};
use crate::geometry::{complex_hessian, complex_third_derivatives, gradient, laplacian, ScalarField};
use crate::hermitian::{CMat, C64};
use crate::speed::SpeedFunction;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const IDENTITY_CSV_TAG: &str = "# cmaflow-ident v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub t: f64,
    pub residual_sup: f64,
    pub dt: f64,
    #[serde(rename = "N")]
    pub size: usize,
}

pub const IDENTITY_COLUMNS: [&str; 5] = ["name", "t", "residual_sup", "dt", "N"];

pub fn write_identity_reports(path: &Path, reports: &[IdentityReport]) -> Result<()> {
    let mut file = File::create(path)?;
    writeln!(file, "{IDENTITY_CSV_TAG}")?;
    let mut w = csv::Writer::from_writer(file);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_identity_reports(path: &Path) -> Result<Vec<IdentityReport>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != IDENTITY_CSV_TAG {
        return Err(Error::Format(format!("missing `{IDENTITY_CSV_TAG}` tag line")));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();
    if header != IDENTITY_COLUMNS {
        return Err(Error::Format(format!("unexpected columns {header:?}")));
    }
    csv.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Time-difference stencil used for `∂ₜ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDifference {
    /// `(y₁ − y₀)/dt`, evaluated at the first state.
    Forward,
    /// Three-point derivative at the middle state; handles unequal steps.
    Centered,
}

impl TimeDifference {
    pub fn window(self) -> usize {
        match self {
            TimeDifference::Forward => 2,
            TimeDifference::Centered => 3,
        }
    }
}

/// Weights of the stencil and the index of the evaluation state.
fn stencil(window: &[FlowState]) -> Result<(Vec<f64>, usize, f64)> {
    match window {
        [a, b] => {
            let h = b.t() - a.t();
            if !(h > 0.0) {
                return Err(Error::InvalidGrid("states must have increasing time".into()));
            }
            Ok((vec![-1.0 / h, 1.0 / h], 0, h))
        }
        [a, b, c] => {
            let (hm, hp) = (b.t() - a.t(), c.t() - b.t());
            if !(hm > 0.0 && hp > 0.0) {
                return Err(Error::InvalidGrid("states must have increasing time".into()));
            }
            let w = vec![-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))];
            Ok((w, 1, hm.max(hp)))
        }
        _ => Err(Error::InvalidGrid(format!("time stencil needs 2 or 3 states, got {}", window.len()))),
    }
}

fn time_derivative<G>(window: &[FlowState], weights: &[f64], field: G) -> Vec<f64>
where
    G: Fn(&FlowState) -> Vec<f64>,
{
    let fields: Vec<Vec<f64>> = window.iter().map(field).collect();
    (0..fields[0].len())
        .map(|i| fields.iter().zip(weights).map(|(v, w)| w * v[i]).sum())
        .collect()
}

/// Pointwise quantities shared by the identities at one state.
struct Local {
    dim: usize,
    /// `c = F'(H) H`.
    c: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    /// `e^{-f}`.
    ef: Vec<f64>,
    grad_det: Vec<[C64; 2]>,
    grad_trh: Vec<[C64; 2]>,
    grad_f: Vec<[C64; 2]>,
    /// `χ^{pq̄} g^{jr̄} g^{sk̄} ∇_p g_{r̄s} ∇_{q̄} g_{k̄j}`.
    q: Vec<f64>,
    /// `e^f Δ e^{-f} = −Δf + |∇f|²_χ`.
    ef_lap: Vec<f64>,
}

impl Local {
    fn new(problem: &FlowProblem, state: &FlowState) -> Result<Self> {
        let dim = problem.dim();
        let chi_inv = *problem.chi.chi_inv();
        let endo = state.endo();
        let third = complex_third_derivatives(state.u())?;
        let gf = gradient(&problem.f);
        let lap_f = laplacian(&problem.f, &problem.chi)?;
        let len = state.u().values().len();
        let mut out = Local {
            dim,
            c: Vec::with_capacity(len),
            f1: Vec::with_capacity(len),
            f2: Vec::with_capacity(len),
            ef: Vec::with_capacity(len),
            grad_det: Vec::with_capacity(len),
            grad_trh: Vec::with_capacity(len),
            grad_f: Vec::with_capacity(len),
            q: Vec::with_capacity(len),
            ef_lap: Vec::with_capacity(len),
        };
        for i in 0..len {
            let t = [third[0].values()[i], if dim == 2 { third[1].values()[i] } else { CMat::zero() }];
            let g_inv = endo.metric_inv()[i];
            let det = endo.det()[i];
            let mut gd = [C64::new(0.0, 0.0); 2];
            let mut gt = [C64::new(0.0, 0.0); 2];
            let mut gfi = [C64::new(0.0, 0.0); 2];
            for p in 0..dim {
                gd[p] = det * (g_inv * t[p]).trace(dim);
                gt[p] = (chi_inv * t[p]).trace(dim);
                gfi[p] = gf[p][i];
            }
            let rho = state.density().values()[i];
            let f1 = problem.speed.deriv(rho)?;
            out.c.push(f1 * rho);
            out.f1.push(f1);
            out.f2.push(problem.speed.second_deriv(rho)?);
            out.ef.push((-problem.f.values()[i]).exp());
            out.q.push(third_order_square(&chi_inv, &g_inv, &t, dim));
            out.ef_lap.push(-lap_f.values()[i] + contract_gradients(&chi_inv, dim, &gfi, &gfi).re);
            out.grad_det.push(gd);
            out.grad_trh.push(gt);
            out.grad_f.push(gfi);
        }
        Ok(out)
    }
}

/// `L v = c g^{jk̄} ∂_j∂_{k̄} v`.
pub fn apply_l(problem: &FlowProblem, state: &FlowState, v: &ScalarField) -> Result<ScalarField> {
    let (c, g_inv) = crate::endo::linearized_coefficient(state.endo(), &problem.speed, &problem.f)?;
    let dim = problem.dim();
    let hess = complex_hessian(v)?;
    let values = hess
        .values()
        .iter()
        .zip(g_inv)
        .zip(c.values())
        .map(|((hs, gi), ci)| ci * (*gi * *hs).trace(dim).re)
        .collect();
    ScalarField::new(v.grid(), values)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn report(name: &str, state: &FlowState, residual_sup: f64, dt: f64) -> IdentityReport {
    IdentityReport { name: name.into(), t: state.t(), residual_sup, dt, size: state.u().grid().size() }
}

/// `(∂ₜ−L)u = F − n c + c g^{jk̄}χ_{k̄j}` and the same for `φ` with the mean
/// of `F` subtracted.
pub fn check_evol_u(problem: &FlowProblem, window: &[FlowState]) -> Result<Vec<IdentityReport>> {
    let (weights, at, dt) = stencil(window)?;
    let state = &window[at];
    let n = problem.dim() as f64;
    let (c, _) = crate::endo::linearized_coefficient(state.endo(), &problem.speed, &problem.f)?;
    let tr_inv = state.endo().trace_inverse(&problem.chi);
    let rhs: Vec<f64> = state
        .udot()
        .values()
        .iter()
        .zip(c.values())
        .zip(&tr_inv)
        .map(|((fv, ci), ti)| fv - n * ci + ci * ti)
        .collect();
    let lu = apply_l(problem, state, state.u())?;

    let ut = time_derivative(window, &weights, |s| s.u().values().to_vec());
    let lhs_u: Vec<f64> = ut.iter().zip(lu.values()).map(|(a, b)| a - b).collect();

    let phit = time_derivative(window, &weights, |s| s.phi().into_values());
    let lhs_phi: Vec<f64> = phit.iter().zip(lu.values()).map(|(a, b)| a - b).collect();
    let mean_f = state.udot().mean();
    let rhs_phi: Vec<f64> = rhs.iter().map(|r| r - mean_f).collect();

    Ok(vec![
        report("evol_u", state, sup_diff(&lhs_u, &rhs), dt),
        report("evol_phi", state, sup_diff(&lhs_phi, &rhs_phi), dt),
    ])
}

/// `(∂ₜ−L)F = 0`; `(∂ₜ−L)F²` against its three-term expansion; and the
/// expansion against `2F(∂ₜ−L)F − 2c|∇F|²_g = −2c|∇F|²_g` with `∇F` taken
/// spectrally from the `F` field, which involves no time difference.
pub fn check_evol_f(problem: &FlowProblem, window: &[FlowState]) -> Result<Vec<IdentityReport>> {
    let (weights, at, dt) = stencil(window)?;
    let state = &window[at];
    let dim = problem.dim();
    let local = Local::new(problem, state)?;
    let fvals = state.udot();

    let ft = time_derivative(window, &weights, |s| s.udot().values().to_vec());
    let lf = apply_l(problem, state, fvals)?;
    let lhs_f: Vec<f64> = ft.iter().zip(lf.values()).map(|(a, b)| a - b).collect();

    let f_sq = fvals.map(|v| v * v)?;
    let ft2 = time_derivative(window, &weights, |s| s.udot().values().iter().map(|v| v * v).collect());
    let lf2 = apply_l(problem, state, &f_sq)?;
    let lhs_f2: Vec<f64> = ft2.iter().zip(lf2.values()).map(|(a, b)| a - b).collect();

    let endo = state.endo();
    let grad_big_f = gradient(fvals);
    let mut three_terms = Vec::with_capacity(lhs_f2.len());
    let mut product_rule = Vec::with_capacity(lhs_f2.len());
    for i in 0..lhs_f2.len() {
        let g_inv = &endo.metric_inv()[i];
        let det = endo.det()[i];
        let (gd, gf) = (&local.grad_det[i], &local.grad_f[i]);
        let k = 2.0 * local.f1[i].powi(3) * local.ef[i].powi(3);
        three_terms.push(
            -k * det * contract_gradients(g_inv, dim, gd, gd).re
                - k * det.powi(3) * contract_gradients(g_inv, dim, gf, gf).re
                + 2.0 * k * det * det * contract_gradients(g_inv, dim, gf, gd).re,
        );
        let mut gbf = [C64::new(0.0, 0.0); 2];
        for (p, g) in gbf.iter_mut().enumerate().take(dim) {
            *g = grad_big_f[p][i];
        }
        product_rule.push(-2.0 * local.c[i] * contract_gradients(g_inv, dim, &gbf, &gbf).re);
    }
    Ok(vec![
        report("evol_F", state, lhs_f.iter().fold(0.0, |m, v| m.max(v.abs())), dt),
        report("evol_F2", state, sup_diff(&lhs_f2, &three_terms), dt),
        report("evol_F2_routes", state, sup_diff(&three_terms, &product_rule), dt),
    ])
}

/// Right side of `(∂ₜ−L) log Tr h` in its final flat form.
fn logtrh_final(local: &Local, state: &FlowState, chi_inv: &CMat) -> Vec<f64> {
    let dim = local.dim;
    let endo = state.endo();
    (0..local.c.len())
        .map(|i| {
            let (det, trh) = (endo.det()[i], endo.trace()[i]);
            let g_inv = &endo.metric_inv()[i];
            let (gd, gt, gf) = (&local.grad_det[i], &local.grad_trh[i], &local.grad_f[i]);
            let grad_det_sq = contract_gradients(chi_inv, dim, gd, gd).re;
            let grad_f_sq = contract_gradients(chi_inv, dim, gf, gf).re;
            let cross = contract_gradients(chi_inv, dim, gf, gd).re;
            let ratio = local.f2[i] * local.ef[i] / local.f1[i];
            let bracket = contract_gradients(g_inv, dim, gt, gt).re / trh - local.q[i] + grad_det_sq / (det * det)
                - 2.0 / det * cross
                + ratio * det * grad_f_sq
                + ratio * grad_det_sq / det
                - 2.0 * ratio * cross
                + local.ef_lap[i];
            local.c[i] / trh * bracket
        })
        .collect()
}

/// `(∂ₜ−L) log Tr h` against its flat right side.
pub fn check_evol_logtrh(problem: &FlowProblem, window: &[FlowState]) -> Result<IdentityReport> {
    let (weights, at, dt) = stencil(window)?;
    let state = &window[at];
    let local = Local::new(problem, state)?;
    let rhs = logtrh_final(&local, state, problem.chi.chi_inv());
    let log_trh = state.endo().trace_field().map(f64::ln)?;
    let lt = time_derivative(window, &weights, |s| s.endo().trace().iter().map(|v| v.ln()).collect());
    let ll = apply_l(problem, state, &log_trh)?;
    let lhs: Vec<f64> = lt.iter().zip(ll.values()).map(|(a, b)| a - b).collect();
    Ok(report("evol_logTrh", state, sup_diff(&lhs, &rhs), dt))
}

/// Rebuilds `(∂ₜ−L) log Tr h` from the intermediate steps of its derivation
/// (`Δ det h`, `∂ₜΔu`, `(∂ₜ−L) Tr h`) and returns the largest pointwise gap
/// to the final form, divided by `max(1, sup |final|)`.
pub fn precursor_consistency(problem: &FlowProblem, state: &FlowState) -> Result<f64> {
    let dim = problem.dim();
    let chi_inv = *problem.chi.chi_inv();
    let local = Local::new(problem, state)?;
    let endo = state.endo();
    let final_form = logtrh_final(&local, state, &chi_inv);

    let lap_u = endo.trace_field().map(|t| t - dim as f64)?;
    let hess_lap = complex_hessian(&lap_u)?;
    let mut assembled = Vec::with_capacity(final_form.len());
    for i in 0..final_form.len() {
        let (det, trh) = (endo.det()[i], endo.trace()[i]);
        let g_inv = &endo.metric_inv()[i];
        let (gd, gt, gf) = (&local.grad_det[i], &local.grad_trh[i], &local.grad_f[i]);
        let g_lap = (*g_inv * hess_lap.values()[i]).trace(dim).re;
        let grad_det_sq = contract_gradients(&chi_inv, dim, gd, gd).re;
        let cross = contract_gradients(&chi_inv, dim, gf, gd).re;
        let grad_f_sq = contract_gradients(&chi_inv, dim, gf, gf).re;
        let ef = local.ef[i];

        let lap_det = det * g_lap - det * local.q[i] + grad_det_sq / det;
        let grad_density_sq = ef * ef * (grad_det_sq + det * det * grad_f_sq - 2.0 * det * cross);
        let lap_ef = ef * local.ef_lap[i];
        let dt_lap_u = local.f1[i] * ef * lap_det - 2.0 * local.f1[i] * ef * cross
            + local.f2[i] * grad_density_sq
            + local.f1[i] * det * lap_ef;
        let trh_evol = dt_lap_u - local.c[i] * g_lap;
        assembled.push(trh_evol / trh + local.c[i] * contract_gradients(g_inv, dim, gt, gt).re / (trh * trh));
    }
    let scale = final_form.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    Ok(sup_diff(&assembled, &final_form) / scale)
}

/// Every identity at every admissible stencil position of `states`.
pub fn check_trajectory(
    problem: &FlowProblem,
    states: &[FlowState],
    diff: TimeDifference,
) -> Result<Vec<IdentityReport>> {
    let w = diff.window();
    if states.len() < w {
        return Err(Error::InvalidGrid(format!("need at least {w} states, got {}", states.len())));
    }
    let per_window: Vec<Result<Vec<IdentityReport>>> = states
        .par_windows(w)
        .map(|window| {
            let mut out = check_evol_u(problem, window)?;
            out.extend(check_evol_f(problem, window)?);
            out.push(check_evol_logtrh(problem, window)?);
            Ok(out)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_window {
        out.extend(r?);
    }
    Ok(out)
}

/// Largest residual per identity name, in first-seen order.
pub fn worst_by_name(reports: &[IdentityReport]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for r in reports {
        match out.iter_mut().find(|(n, _)| *n == r.name) {
            Some(entry) => entry.1 = entry.1.max(r.residual_sup),
            None => out.push((r.name.clone(), r.residual_sup)),
        }
    }
    out
}

/// `G = log Tr h − Aφ + (B/2)F²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GMonitor {
    pub a: f64,
    pub b: f64,
}

impl Default for GMonitor {
    fn default() -> Self {
        GMonitor { a: 10.0, b: 5.0 }
    }
}

impl GMonitor {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 1.0) {
            return Err(Error::Config { key: "A".into(), msg: format!("must exceed 1, got {a}") });
        }
        if !(b > 1.0) {
            return Err(Error::Config { key: "B".into(), msg: format!("must exceed 1, got {b}") });
        }
        Ok(GMonitor { a, b })
    }

    pub fn evaluate(&self, state: &FlowState, phi: &ScalarField) -> Result<ScalarField> {
        let values = state
            .endo()
            .trace()
            .iter()
            .zip(phi.values())
            .zip(state.udot().values())
            .map(|((tr, p), fv)| tr.ln() - self.a * p + 0.5 * self.b * fv * fv)
            .collect();
        ScalarField::new(phi.grid(), values)
    }

    /// `max_x G` at the state.
    pub fn monitor(&self, state: &FlowState) -> Result<f64> {
        Ok(self.evaluate(state, &state.phi())?.max())
    }

    /// `G_max(0) + A sup_t‖φ‖∞ + (B/2) sup_t‖F‖∞²` from a run's records.
    /// `‖F‖∞` is read off the `H` extrema since `F` is increasing.
    pub fn bound(&self, records: &[DiagnosticsRecord], speed: &SpeedFunction) -> Result<f64> {
        let first = records.first().ok_or_else(|| Error::Format("empty diagnostics series".into()))?;
        let mut phi_sup = 0.0f64;
        let mut f_sup = 0.0f64;
        for r in records {
            phi_sup = phi_sup.max(r.phi_sup);
            f_sup = f_sup.max(speed.eval(r.h_min)?.abs()).max(speed.eval(r.h_max)?.abs());
        }
        Ok(first.g_max + self.a * phi_sup + 0.5 * self.b * f_sup * f_sup)
    }

    /// Records whose `G_max` exceeds [`GMonitor::bound`].
    pub fn violations(&self, records: &[DiagnosticsRecord], speed: &SpeedFunction) -> Result<usize> {
        let bound = self.bound(records, speed)?;
        Ok(records.iter().filter(|r| r.g_max > bound).count())
    }
}
