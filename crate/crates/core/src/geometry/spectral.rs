//! Fourier-multiplier differentiation on the torus.
//!
//! With `z_j = x_j + i y_j`, `∂_j = ½(∂_{x_j} − i∂_{y_j})` and
//! `∂_{j̄} = ½(∂_{x_j} + i∂_{y_j})`. The Christoffel symbols of a constant
//! metric vanish, so covariant and partial derivatives agree.
//!
//! Odd-order factors drop the Nyquist wavenumber; the diagonal second
//! derivatives `∂_j∂_{j̄} = ¼Δ_{x_j,y_j}` keep it.

use super::{BackgroundMetric, ComplexMatrixField, Grid, ScalarField};
use crate::error::{Error, Result};
use crate::hermitian::{CMat, C64};
use std::f64::consts::PI;

/// Mean tolerated on a Poisson right-hand side.
const COMPATIBILITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy)]
struct Symbols {
    nyquist: i64,
}

impl Symbols {
    fn new(grid: &Grid) -> Self {
        Symbols { nyquist: grid.nyquist() }
    }

    /// `2πk` along `axis`, zeroed at the Nyquist wavenumber.
    #[inline]
    fn odd(&self, k: &[i64; 4], axis: usize) -> f64 {
        if k[axis].abs() == self.nyquist {
            0.0
        } else {
            2.0 * PI * k[axis] as f64
        }
    }

    #[inline]
    fn holo(&self, k: &[i64; 4], j: usize) -> C64 {
        let a = self.odd(k, 2 * j);
        let b = self.odd(k, 2 * j + 1);
        C64::new(0.5 * b, 0.5 * a)
    }

    #[inline]
    fn antiholo(&self, k: &[i64; 4], j: usize) -> C64 {
        let a = self.odd(k, 2 * j);
        let b = self.odd(k, 2 * j + 1);
        C64::new(-0.5 * b, 0.5 * a)
    }

    /// Symbol of `∂_j ∂_{k̄}`, i.e. of the Hessian entry stored at `[k][j]`.
    #[inline]
    fn hessian(&self, k: &[i64; 4], bar: usize, j: usize) -> C64 {
        if bar == j {
            let a = 2.0 * PI * k[2 * j] as f64;
            let b = 2.0 * PI * k[2 * j + 1] as f64;
            C64::new(-0.25 * (a * a + b * b), 0.0)
        } else {
            self.holo(k, j) * self.antiholo(k, bar)
        }
    }

    fn laplacian(&self, k: &[i64; 4], chi: &BackgroundMetric) -> f64 {
        let inv = chi.chi_inv();
        let dim = chi.dim();
        let mut s = C64::new(0.0, 0.0);
        for p in 0..dim {
            for q in 0..dim {
                s += inv.get(p, q) * self.hessian(k, q, p);
            }
        }
        s.re
    }
}

/// Symbol of the background Laplacian `χ^{pq̄}∂_p∂_{q̄}` at wavenumber `k`.
pub fn laplacian_symbol(grid: &Grid, chi: &BackgroundMetric, k: &[i64; 4]) -> f64 {
    Symbols::new(grid).laplacian(k, chi)
}

fn check_metric(grid: &Grid, chi: &BackgroundMetric) -> Result<()> {
    if grid.dim() != chi.dim() {
        return Err(Error::GridMismatch(format!(
            "metric of dimension {} on a grid of dimension {}",
            chi.dim(),
            grid.dim()
        )));
    }
    Ok(())
}

/// Complex Hessian `u_{k̄j} = ∂_j∂_{k̄}u`, stored at `[k][j]`; exactly
/// Hermitian pointwise.
pub fn complex_hessian(u: &ScalarField) -> Result<ComplexMatrixField> {
    let grid = u.grid();
    let sym = Symbols::new(grid);
    let spectrum = grid.forward_real(u.values());
    let values = match grid.dim() {
        1 => grid
            .apply_symbol(&spectrum, |k| sym.hessian(k, 0, 0))
            .into_iter()
            .map(|v| {
                let mut m = CMat::zero();
                m.0[0][0] = C64::new(v.re, 0.0);
                m
            })
            .collect(),
        _ => {
            // both diagonal symbols are real and even, so one inverse
            // transform carries the pair in its real and imaginary parts
            let diag = grid.apply_symbol(&spectrum, |k| {
                sym.hessian(k, 0, 0) + C64::new(0.0, 1.0) * sym.hessian(k, 1, 1)
            });
            let off = grid.apply_symbol(&spectrum, |k| sym.hessian(k, 1, 0));
            diag.into_iter()
                .zip(off)
                .map(|(d, o)| CMat([[C64::new(d.re, 0.0), o.conj()], [o, C64::new(d.im, 0.0)]]))
                .collect()
        }
    };
    ComplexMatrixField::new(grid, values)
}

/// Third derivatives `T_p[r][s] = ∂_p∂_s∂_{r̄}u`, one matrix field per `p`.
/// Symmetric in `p` and `s`.
pub fn complex_third_derivatives(u: &ScalarField) -> Result<Vec<ComplexMatrixField>> {
    let grid = u.grid();
    let dim = grid.dim();
    let sym = Symbols::new(grid);
    let spectrum = grid.forward_real(u.values());
    let mut out = vec![vec![CMat::zero(); grid.len()]; dim];
    for p in 0..dim {
        for s in p..dim {
            for r in 0..dim {
                let field = grid.apply_symbol(&spectrum, |k| {
                    sym.holo(k, p) * sym.holo(k, s) * sym.antiholo(k, r)
                });
                for (i, v) in field.into_iter().enumerate() {
                    out[p][i].0[r][s] = v;
                    out[s][i].0[r][p] = v;
                }
            }
        }
    }
    out.into_iter().map(|vals| ComplexMatrixField::new(grid, vals)).collect()
}

/// Holomorphic gradient `∂_p u` for `p = 0..n`.
pub fn gradient(u: &ScalarField) -> Vec<Vec<C64>> {
    let grid = u.grid();
    let sym = Symbols::new(grid);
    let spectrum = grid.forward_real(u.values());
    (0..grid.dim()).map(|p| grid.apply_symbol(&spectrum, |k| sym.holo(k, p))).collect()
}

/// `Δu = χ^{pq̄} u_{q̄p}`; for the identity metric a quarter of the real
/// Laplacian.
pub fn laplacian(u: &ScalarField, chi: &BackgroundMetric) -> Result<ScalarField> {
    let grid = u.grid();
    check_metric(grid, chi)?;
    let sym = Symbols::new(grid);
    let spectrum = grid.forward_real(u.values());
    let out = grid.apply_symbol(&spectrum, |k| C64::new(sym.laplacian(k, chi), 0.0));
    ScalarField::new(grid, out.into_iter().map(|v| v.re).collect())
}

/// Mean-zero solution of `Δφ = rhs`.
pub fn poisson_solve(rhs: &ScalarField, chi: &BackgroundMetric) -> Result<ScalarField> {
    let grid = rhs.grid();
    check_metric(grid, chi)?;
    let mean = rhs.mean();
    if mean.abs() > COMPATIBILITY_TOL {
        return Err(Error::Incompatible { mean });
    }
    let sym = Symbols::new(grid);
    let spectrum = grid.forward_real(rhs.values());
    let out = grid.apply_symbol(&spectrum, |k| {
        if k.iter().all(|&v| v == 0) {
            C64::new(0.0, 0.0)
        } else {
            C64::new(1.0 / sym.laplacian(k, chi), 0.0)
        }
    });
    ScalarField::new(grid, out.into_iter().map(|v| v.re).collect())
}

/// `∫ u · weight χ^n` by the periodic trapezoid rule.
pub fn integrate(u: &ScalarField, weight: Option<&ScalarField>, chi: &BackgroundMetric) -> Result<f64> {
    check_metric(u.grid(), chi)?;
    let mean = match weight {
        Some(w) => {
            u.check_same_grid(w)?;
            u.values().iter().zip(w.values()).map(|(a, b)| a * b).sum::<f64>() / u.values().len() as f64
        }
        None => u.mean(),
    };
    Ok(chi.volume() * mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos_x(grid: &Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).cos()).unwrap()
    }

    #[test]
    fn hessian_of_constant_vanishes() {
        let g = Grid::new(2, 8).unwrap();
        let h = complex_hessian(&ScalarField::constant(&g, 3.7)).unwrap();
        assert!(h.values().iter().all(|m| m.max_abs(2) == 0.0));
    }

    #[test]
    fn single_mode_hessian_n1() {
        let g = Grid::new(1, 16).unwrap();
        let u = cos_x(&g);
        let h = complex_hessian(&u).unwrap();
        for (m, v) in h.values().iter().zip(u.values()) {
            assert!((m.0[0][0].re + PI * PI * v).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_examples() {
        let g = Grid::new(1, 32).unwrap();
        let chi = BackgroundMetric::identity(1);
        let u = cos_x(&g);
        let l = laplacian(&u, &chi).unwrap();
        for (a, b) in l.values().iter().zip(u.values()) {
            assert!((a + PI * PI * b).abs() < 1e-11);
        }
        assert_eq!(laplacian(&ScalarField::zeros(&g), &chi).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn poisson_examples() {
        let g = Grid::new(1, 32).unwrap();
        let chi = BackgroundMetric::identity(1);
        let rhs = cos_x(&g).map(|v| -PI * PI * v).unwrap();
        let phi = poisson_solve(&rhs, &chi).unwrap();
        assert!(phi.sup_distance(&cos_x(&g)).unwrap() < 1e-14);
        assert_eq!(poisson_solve(&ScalarField::zeros(&g), &chi).unwrap().sup_norm(), 0.0);
        let bad = ScalarField::constant(&g, 0.01);
        match poisson_solve(&bad, &chi) {
            Err(Error::Incompatible { mean }) => assert!((mean - 0.01).abs() < 1e-15),
            other => panic!("expected incompatibility, got {other:?}"),
        }
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::new(1, 64).unwrap();
        let chi = BackgroundMetric::identity(1);
        assert_eq!(integrate(&ScalarField::constant(&g, 1.0), None, &chi).unwrap(), 1.0);
        assert!(integrate(&cos_x(&g), None, &chi).unwrap().abs() < 1e-14);
        let other = Grid::new(1, 32).unwrap();
        assert!(integrate(&cos_x(&g), Some(&cos_x(&other)), &chi).is_err());
    }

    #[test]
    fn metric_dimension_must_match_grid() {
        let g = Grid::new(1, 16).unwrap();
        assert!(laplacian(&cos_x(&g), &BackgroundMetric::identity(2)).is_err());
    }
}
