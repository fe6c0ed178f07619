//! Pointwise algebra of the endomorphism `h^i_j = χ^{ik̄} g_{k̄j}` with
//! `g_{k̄j} = χ_{k̄j} + u_{k̄j}`.

use crate::error::{Error, Result};
use crate::geometry::{complex_hessian, complex_third_derivatives, BackgroundMetric, ComplexMatrixField, Grid, ScalarField};
use crate::hermitian::{CMat, C64};
use crate::speed::SpeedFunction;
use rayon::prelude::*;

/// Smallest eigenvalue of `h` accepted as admissible.
pub const ADMISSIBILITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
struct PointData {
    metric_inv: CMat,
    det: f64,
    trace: f64,
    eig: [f64; 2],
}

/// `h` and its cached invariants at every grid point.
#[derive(Clone, Debug)]
pub struct EndoField {
    grid: Grid,
    metric: Vec<CMat>,
    metric_inv: Vec<CMat>,
    det: Vec<f64>,
    trace: Vec<f64>,
    eig: Vec<[f64; 2]>,
}

fn point_data(chi: &BackgroundMetric, inv_sqrt: &CMat, g: &CMat) -> PointData {
    let dim = chi.dim();
    let det = g.det(dim).re / chi.det_chi();
    let trace = (*chi.chi_inv() * *g).trace(dim).re;
    // χ^{-1/2} g χ^{-1/2} is Hermitian and similar to h
    let sym = *inv_sqrt * *g * *inv_sqrt;
    let sym = (sym + sym.adjoint()).scale(0.5);
    let eig = sym.hermitian_eigenvalues(dim);
    let metric_inv = match g.inverse(dim) {
        Some(inv) => (inv + inv.adjoint()).scale(0.5),
        None => CMat::zero(),
    };
    PointData { metric_inv, det, trace, eig }
}

impl EndoField {
    /// Builds `h` from a precomputed complex Hessian of `u`.
    pub fn from_hessian(chi: &BackgroundMetric, hessian: &ComplexMatrixField) -> Result<Self> {
        let grid = hessian.grid().clone();
        if grid.dim() != chi.dim() {
            return Err(Error::GridMismatch("metric and grid dimensions differ".into()));
        }
        let inv_sqrt = chi.chi().sqrt_positive(chi.dim()).inverse(chi.dim()).expect("metric is positive");
        let metric: Vec<CMat> = hessian.values().iter().map(|hs| *chi.chi() + *hs).collect();
        let data: Vec<PointData> = metric.par_iter().map(|g| point_data(chi, &inv_sqrt, g)).collect();

        let mut worst = (0usize, f64::INFINITY);
        for (i, p) in data.iter().enumerate() {
            if !(p.eig[0] >= worst.1) {
                worst = (i, p.eig[0]);
            }
        }
        if !(worst.1 > ADMISSIBILITY_TOL) {
            return Err(Error::Admissibility { index: worst.0, value: worst.1 });
        }
        Ok(EndoField {
            grid,
            metric,
            metric_inv: data.iter().map(|p| p.metric_inv).collect(),
            det: data.iter().map(|p| p.det).collect(),
            trace: data.iter().map(|p| p.trace).collect(),
            eig: data.iter().map(|p| p.eig).collect(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `g_{k̄j}` per point.
    pub fn metric(&self) -> &[CMat] {
        &self.metric
    }

    /// `g^{jk̄}` per point.
    pub fn metric_inv(&self) -> &[CMat] {
        &self.metric_inv
    }

    pub fn det(&self) -> &[f64] {
        &self.det
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// Eigenvalues of `h`, ascending.
    pub fn eigenvalues(&self) -> &[[f64; 2]] {
        &self.eig
    }

    pub fn lambda_min(&self) -> f64 {
        self.eig.iter().fold(f64::INFINITY, |m, e| m.min(e[0]))
    }

    pub fn lambda_max(&self) -> f64 {
        self.eig.iter().fold(f64::NEG_INFINITY, |m, e| m.max(e[1]))
    }

    pub fn det_field(&self) -> ScalarField {
        ScalarField::new(&self.grid, self.det.clone()).expect("finite")
    }

    pub fn trace_field(&self) -> ScalarField {
        ScalarField::new(&self.grid, self.trace.clone()).expect("finite")
    }

    pub fn lambda_min_field(&self) -> ScalarField {
        ScalarField::new(&self.grid, self.eig.iter().map(|e| e[0]).collect()).expect("finite")
    }

    pub fn lambda_max_field(&self) -> ScalarField {
        ScalarField::new(&self.grid, self.eig.iter().map(|e| e[1]).collect()).expect("finite")
    }

    /// `g^{jk̄} χ_{k̄j} = Tr h^{-1}` per point.
    pub fn trace_inverse(&self, chi: &BackgroundMetric) -> Vec<f64> {
        let dim = chi.dim();
        self.metric_inv.iter().map(|gi| (*gi * *chi.chi()).trace(dim).re).collect()
    }

    /// `H = e^{-f} det h`.
    pub fn density(&self, f: &ScalarField) -> Result<ScalarField> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch("f lives on a different grid".into()));
        }
        let values = self.det.iter().zip(f.values()).map(|(d, fv)| (-fv).exp() * d).collect();
        ScalarField::new(&self.grid, values)
    }
}

/// Builds the endomorphism field of `u`, rejecting states outside the cone.
pub fn build_endo(chi: &BackgroundMetric, u: &ScalarField) -> Result<EndoField> {
    EndoField::from_hessian(chi, &complex_hessian(u)?)
}

/// Coefficient `c = F'(e^{-f} det h) e^{-f} det h` of the linearized operator
/// `L = c g^{jk̄}∂_j∂_{k̄}`, returned with `g^{jk̄}`.
pub fn linearized_coefficient<'a>(
    endo: &'a EndoField,
    speed: &SpeedFunction,
    f: &ScalarField,
) -> Result<(ScalarField, &'a [CMat])> {
    let density = endo.density(f)?;
    let mut c = Vec::with_capacity(density.values().len());
    for &rho in density.values() {
        c.push(speed.deriv(rho)? * rho);
    }
    Ok((ScalarField::new(endo.grid(), c)?, endo.metric_inv()))
}

/// Contraction `g^{jk̄} a_j conj(b_k)` of two holomorphic gradients.
#[inline]
pub fn contract_gradients(inv: &CMat, dim: usize, a: &[C64; 2], b: &[C64; 2]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for j in 0..dim {
        for k in 0..dim {
            s += inv.get(j, k) * a[j] * b[k].conj();
        }
    }
    s
}

/// `χ^{pq̄} g^{jr̄} g^{sk̄} ∇_p g_{r̄s} ∇_{q̄} g_{k̄j}` at one point, given
/// `third[p] = ∇_p g`.
#[inline]
pub fn third_order_square(chi_inv: &CMat, g_inv: &CMat, third: &[CMat; 2], dim: usize) -> f64 {
    let mut s = C64::new(0.0, 0.0);
    for p in 0..dim {
        for q in 0..dim {
            let w = chi_inv.get(p, q);
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            // g^{-1} T_p g^{-1}, contracted against conj(T_q)
            let left = *g_inv * third[p] * *g_inv;
            let mut inner = C64::new(0.0, 0.0);
            for j in 0..dim {
                for k in 0..dim {
                    inner += left.get(j, k) * third[q].get(j, k).conj();
                }
            }
            s += w * inner;
        }
    }
    s.re
}

/// Both sides of the Aubin–Yau inequality
/// `|∇ Tr h|²_g / Tr h ≤ χ^{pq̄} g^{jr̄} g^{sk̄} ∇_p g_{r̄s} ∇_{q̄} g_{k̄j}`.
#[derive(Clone, Debug)]
pub struct AubinYau {
    pub lhs: ScalarField,
    pub rhs: ScalarField,
    pub max_violation: f64,
}

pub fn aubin_yau_check(chi: &BackgroundMetric, u: &ScalarField) -> Result<AubinYau> {
    let endo = build_endo(chi, u)?;
    let grid = u.grid();
    let dim = grid.dim();
    let third = complex_third_derivatives(u)?;
    let chi_inv = chi.chi_inv();
    let mut lhs = Vec::with_capacity(grid.len());
    let mut rhs = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let t = [third[0].values()[i], if dim == 2 { third[1].values()[i] } else { CMat::zero() }];
        // ∂_j Tr h = χ^{ab̄} ∂_j g_{b̄a}
        let mut grad = [C64::new(0.0, 0.0); 2];
        for (j, g) in grad.iter_mut().enumerate().take(dim) {
            *g = (*chi_inv * t[j]).trace(dim);
        }
        let g_inv = &endo.metric_inv()[i];
        lhs.push(contract_gradients(g_inv, dim, &grad, &grad).re / endo.trace()[i]);
        rhs.push(third_order_square(chi_inv, g_inv, &t, dim));
    }
    let max_violation = lhs.iter().zip(&rhs).fold(f64::NEG_INFINITY, |m, (l, r)| m.max(l - r));
    Ok(AubinYau { lhs: ScalarField::new(grid, lhs)?, rhs: ScalarField::new(grid, rhs)?, max_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::laplacian;
    use std::f64::consts::PI;

    #[test]
    fn flat_potential_gives_identity() {
        for dim in [1, 2] {
            let g = Grid::new(dim, 8).unwrap();
            let endo = build_endo(&BackgroundMetric::identity(dim), &ScalarField::zeros(&g)).unwrap();
            for i in 0..g.len() {
                assert_eq!(endo.det()[i], 1.0);
                assert_eq!(endo.trace()[i], dim as f64);
                assert_eq!(endo.eigenvalues()[i], [1.0, 1.0]);
            }
        }
    }

    #[test]
    fn single_mode_determinant_n1() {
        // u = (0.5/π²) cos(2πx) has u_{1̄1} = -0.5 cos(2πx)
        let g = Grid::new(1, 32).unwrap();
        let u = ScalarField::from_fn(&g, |x| 0.5 / (PI * PI) * (2.0 * PI * x[0]).cos()).unwrap();
        let endo = build_endo(&BackgroundMetric::identity(1), &u).unwrap();
        for i in 0..g.len() {
            let expected = 1.0 - 0.5 * (2.0 * PI * g.coords(i)[0]).cos();
            assert!((endo.det()[i] - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn leaving_the_cone_is_reported() {
        let g = Grid::new(1, 32).unwrap();
        let u = ScalarField::from_fn(&g, |x| 2.0 / (PI * PI) * (2.0 * PI * x[0]).cos()).unwrap();
        match build_endo(&BackgroundMetric::identity(1), &u) {
            Err(Error::Admissibility { index, value }) => {
                assert_eq!(index, 0);
                assert!((value + 1.0).abs() < 1e-12);
            }
            other => panic!("expected admissibility error, got {other:?}"),
        }
    }

    #[test]
    fn linearized_coefficient_examples() {
        let g = Grid::new(2, 8).unwrap();
        let chi = BackgroundMetric::identity(2);
        let endo = build_endo(&chi, &ScalarField::zeros(&g)).unwrap();
        let zero = ScalarField::zeros(&g);
        let (c, inv) = linearized_coefficient(&endo, &SpeedFunction::log(), &zero).unwrap();
        assert!(c.values().iter().all(|&v| v == 1.0));
        assert!(inv.iter().all(|m| *m == CMat::identity(2)));
        let (c, _) = linearized_coefficient(&endo, &SpeedFunction::linear(), &zero).unwrap();
        assert!(c.values().iter().all(|&v| v == 1.0));
        let shift = ScalarField::constant(&g, 0.3);
        let (c, _) = linearized_coefficient(&endo, &SpeedFunction::power(2.0).unwrap(), &shift).unwrap();
        let expected = 2.0 * (-0.6f64).exp();
        assert!(c.values().iter().all(|&v| (v - expected).abs() < 1e-15));
        let bad = SpeedFunction::power(-2.0).unwrap();
        assert!(matches!(linearized_coefficient(&endo, &bad, &zero), Err(Error::Parabolicity { .. })));
    }

    #[test]
    fn trace_equals_dimension_plus_laplacian() {
        let g = Grid::new(2, 16).unwrap();
        let chi = BackgroundMetric::new(
            2,
            CMat([[C64::new(1.5, 0.0), C64::new(0.2, 0.1)], [C64::new(0.2, -0.1), C64::new(0.8, 0.0)]]),
        )
        .unwrap();
        let u = ScalarField::from_fn(&g, |x| {
            0.01 * (2.0 * PI * (x[0] + x[3])).sin() + 0.005 * (2.0 * PI * (x[1] - 2.0 * x[2])).cos()
        })
        .unwrap();
        let endo = build_endo(&chi, &u).unwrap();
        let lap = laplacian(&u, &chi).unwrap();
        let shifted = build_endo(&chi, &u.map(|v| v + 1.0).unwrap()).unwrap();
        for i in 0..g.len() {
            assert!((endo.trace()[i] - 2.0 - lap.values()[i]).abs() < 1e-10);
            let [lo, hi] = endo.eigenvalues()[i];
            assert!((lo * hi - endo.det()[i]).abs() < 1e-10 * endo.det()[i]);
            assert!(lo >= endo.det()[i] / hi - 1e-12);
            assert!((shifted.det()[i] - endo.det()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn aubin_yau_trivial_and_equality_cases() {
        let g = Grid::new(2, 8).unwrap();
        let ay = aubin_yau_check(&BackgroundMetric::identity(2), &ScalarField::zeros(&g)).unwrap();
        assert_eq!(ay.max_violation, 0.0);
        assert_eq!(ay.lhs.sup_norm(), 0.0);

        let g = Grid::new(1, 32).unwrap();
        let u = ScalarField::from_fn(&g, |x| 0.01 * (2.0 * PI * (x[0] + 2.0 * x[1])).sin()).unwrap();
        let ay = aubin_yau_check(&BackgroundMetric::identity(1), &u).unwrap();
        let scale = ay.rhs.sup_norm();
        assert!(scale > 1e-3);
        assert!(ay.lhs.sup_distance(&ay.rhs).unwrap() < 1e-12 * scale);
    }
}
