//! The discrete flat torus `C^n / Z^{2n}` with unit periods, sampled fields,
//! and the constant background Kähler metric.
//!
//! Real axes are ordered `x_1, y_1, ..., x_n, y_n`; flat storage is row-major
//! with the last axis fastest.

mod spectral;

pub use spectral::{
    complex_hessian, complex_third_derivatives, gradient, integrate, laplacian,
    laplacian_symbol, poisson_solve,
};

use crate::error::{Error, Result};
use crate::hermitian::{CMat, C64};
use rustfft::{Fft, FftPlanner};
use std::fmt;
use std::sync::Arc;

struct FftPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Periodic lattice with `size` points per real axis on the torus of complex
/// dimension `dim`.
#[derive(Clone)]
pub struct Grid {
    dim: usize,
    size: usize,
    plans: Arc<FftPlans>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.size == other.size
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("dim", &self.dim).field("size", &self.size).finish()
    }
}

impl Grid {
    pub fn new(dim: usize, size: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("complex dimension must be 1 or 2, got {dim}")));
        }
        if size < 8 || !size.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {size}"
            )));
        }
        let mut planner = FftPlanner::new();
        let plans = FftPlans {
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        };
        Ok(Grid { dim, size, plans: Arc::new(plans) })
    }

    /// Complex dimension n.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per real axis N.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn axes(&self) -> usize {
        2 * self.dim
    }

    /// Total number of samples, `N^{2n}`.
    pub fn len(&self) -> usize {
        self.size.pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.size as f64
    }

    /// Integer index along each real axis; unused trailing slots are zero.
    pub fn multi_index(&self, mut flat: usize) -> [usize; 4] {
        let mut out = [0usize; 4];
        for a in (0..self.axes()).rev() {
            out[a] = flat % self.size;
            flat /= self.size;
        }
        out
    }

    /// Coordinates in `[0,1)` along `x_1, y_1, x_2, y_2`.
    pub fn coords(&self, flat: usize) -> [f64; 4] {
        let idx = self.multi_index(flat);
        let h = self.spacing();
        [idx[0] as f64 * h, idx[1] as f64 * h, idx[2] as f64 * h, idx[3] as f64 * h]
    }

    /// Signed wavenumbers in `(-N/2, N/2]` for the given flat spectral index.
    pub fn wavenumbers(&self, flat: usize) -> [i64; 4] {
        let idx = self.multi_index(flat);
        let n = self.size as i64;
        let mut k = [0i64; 4];
        for a in 0..self.axes() {
            let i = idx[a] as i64;
            k[a] = if i <= n / 2 { i } else { i - n };
        }
        k
    }

    pub fn nyquist(&self) -> i64 {
        (self.size / 2) as i64
    }

    fn transform(&self, data: &mut [C64], forward: bool) {
        let n = self.size;
        let total = data.len();
        let fft = if forward { &self.plans.forward } else { &self.plans.inverse };
        let mut lines = vec![C64::new(0.0, 0.0); total];
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..self.axes() {
            let stride = n.pow((self.axes() - 1 - axis) as u32);
            let block = n * stride;
            // gather every line along `axis` into contiguous storage
            let mut line = 0;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for k in 0..n {
                        lines[line * n + k] = data[base + k * stride];
                    }
                    line += 1;
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            let mut line = 0;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for k in 0..n {
                        data[base + k * stride] = lines[line * n + k];
                    }
                    line += 1;
                }
            }
        }
    }

    /// Unnormalized forward DFT of real samples.
    pub fn forward_real(&self, values: &[f64]) -> Vec<C64> {
        let mut data: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.transform(&mut data, true);
        data
    }

    /// Inverse DFT including the `1/len` normalization.
    pub fn inverse(&self, mut spectrum: Vec<C64>) -> Vec<C64> {
        self.transform(&mut spectrum, false);
        let scale = 1.0 / spectrum.len() as f64;
        for v in spectrum.iter_mut() {
            *v *= scale;
        }
        spectrum
    }

    /// Multiplies a spectrum by `symbol(k)` and transforms back.
    pub fn apply_symbol<S>(&self, spectrum: &[C64], symbol: S) -> Vec<C64>
    where
        S: Fn(&[i64; 4]) -> C64,
    {
        let out: Vec<C64> = spectrum
            .iter()
            .enumerate()
            .map(|(i, &v)| v * symbol(&self.wavenumbers(i)))
            .collect();
        self.inverse(out)
    }
}

/// Real samples of a periodic function.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![value; grid.len()] }
    }

    /// Samples `func` at the coordinates `(x_1, y_1, x_2, y_2)` of each point.
    pub fn from_fn<G: Fn(&[f64; 4]) -> f64>(grid: &Grid, func: G) -> Result<Self> {
        let values = (0..grid.len()).map(|i| func(&grid.coords(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<G: Fn(f64) -> f64>(&self, func: G) -> Result<Self> {
        Self::new(&self.grid, self.values.iter().map(|&v| func(v)).collect())
    }

    pub fn zip_map<G: Fn(f64, f64) -> f64>(&self, other: &ScalarField, func: G) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| func(a, b)).collect();
        Self::new(&self.grid, values)
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    /// The same field shifted to zero mean.
    pub fn mean_free(&self) -> Self {
        let m = self.mean();
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|v| v - m).collect() }
    }

    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// An n x n complex matrix at every grid point, stored as [`CMat`].
#[derive(Clone, Debug)]
pub struct ComplexMatrixField {
    grid: Grid,
    values: Vec<CMat>,
}

impl ComplexMatrixField {
    pub fn new(grid: &Grid, values: Vec<CMat>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} matrices, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(ComplexMatrixField { grid: grid.clone(), values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn max_hermitian_defect(&self) -> f64 {
        let dim = self.grid.dim();
        self.values.iter().fold(0.0, |m, a| m.max(a.hermitian_defect(dim)))
    }
}

/// Constant Hermitian positive background metric `chi_{k̄j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundMetric {
    dim: usize,
    chi: CMat,
    chi_inv: CMat,
    det_chi: f64,
    lambda_max_inv: f64,
}

impl BackgroundMetric {
    pub fn identity(dim: usize) -> Self {
        Self::new(dim, CMat::identity(dim)).expect("identity is a valid metric")
    }

    pub fn new(dim: usize, chi: CMat) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidMetric(format!("dimension {dim} not supported")));
        }
        let scale = chi.max_abs(dim).max(1.0);
        if chi.hermitian_defect(dim) > 1e-14 * scale {
            return Err(Error::InvalidMetric("matrix is not Hermitian".into()));
        }
        // symmetrize exactly so downstream contractions are real
        let chi = (chi + chi.adjoint()).scale(0.5);
        let [lo, _] = chi.hermitian_eigenvalues(dim);
        if !(lo > 0.0) {
            return Err(Error::InvalidMetric(format!("smallest eigenvalue {lo} is not positive")));
        }
        let chi_inv = chi.inverse(dim).ok_or_else(|| Error::InvalidMetric("singular".into()))?;
        let chi_inv = (chi_inv + chi_inv.adjoint()).scale(0.5);
        Ok(BackgroundMetric {
            dim,
            chi,
            chi_inv,
            det_chi: chi.det(dim).re,
            lambda_max_inv: 1.0 / lo,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chi(&self) -> &CMat {
        &self.chi
    }

    pub fn chi_inv(&self) -> &CMat {
        &self.chi_inv
    }

    pub fn det_chi(&self) -> f64 {
        self.det_chi
    }

    /// Largest eigenvalue of `chi^{-1}`.
    pub fn inverse_norm(&self) -> f64 {
        self.lambda_max_inv
    }

    /// Total volume `V = ∫ chi^n` of the unit torus.
    pub fn volume(&self) -> f64 {
        self.det_chi
    }
}
