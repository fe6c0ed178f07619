//! Closed-form algebra for the 1x1 and 2x2 complex matrices that appear
//! pointwise in the solver.
//!
//! A [`CMat`] always stores a 2x2 array. In complex dimension one only the
//! `[0][0]` entry is used and the remaining entries stay zero, so products,
//! sums and adjoints need no dimension argument; determinant, trace, inverse
//! and the spectral routines do.
//!
//! Index convention for metric-like data: `m[k][j]` holds the component with
//! barred index `k` and unbarred index `j`, e.g. `g[k][j] = g_{k̄j}`. With this
//! layout the matrix inverse holds the contravariant tensor, `inv[j][k] = g^{jk̄}`.

use rustfft::num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat(pub [[C64; 2]; 2]);

impl Default for CMat {
    fn default() -> Self {
        Self::zero()
    }
}

impl CMat {
    pub const fn zero() -> Self {
        CMat([[ZERO; 2]; 2])
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zero();
        for i in 0..dim {
            m.0[i][i] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from real and imaginary parts given row-major.
    pub fn from_parts(dim: usize, re: &[Vec<f64>], im: &[Vec<f64>]) -> Self {
        let mut m = Self::zero();
        for r in 0..dim {
            for c in 0..dim {
                m.0[r][c] = C64::new(re[r][c], im[r][c]);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[r][c]
    }

    pub fn adjoint(&self) -> Self {
        let a = &self.0;
        CMat([[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]])
    }

    pub fn scale(&self, s: f64) -> Self {
        let a = &self.0;
        CMat([[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]])
    }

    pub fn trace(&self, dim: usize) -> C64 {
        match dim {
            1 => self.0[0][0],
            _ => self.0[0][0] + self.0[1][1],
        }
    }

    pub fn det(&self, dim: usize) -> C64 {
        let a = &self.0;
        match dim {
            1 => a[0][0],
            _ => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        }
    }

    pub fn inverse(&self, dim: usize) -> Option<Self> {
        let d = self.det(dim);
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let a = &self.0;
        let out = match dim {
            1 => CMat([[C64::new(1.0, 0.0) / a[0][0], ZERO], [ZERO, ZERO]]),
            _ => {
                let inv = C64::new(1.0, 0.0) / d;
                CMat([[a[1][1] * inv, -a[0][1] * inv], [-a[1][0] * inv, a[0][0] * inv]])
            }
        };
        Some(out)
    }

    /// Largest modulus of `self[r][c] - conj(self[c][r])`.
    pub fn hermitian_defect(&self, dim: usize) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in 0..dim {
                worst = worst.max((self.0[r][c] - self.0[c][r].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self, dim: usize) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in 0..dim {
                worst = worst.max(self.0[r][c].norm());
            }
        }
        worst
    }

    /// Eigenvalues of a Hermitian matrix, ascending. In dimension one both
    /// slots hold the single eigenvalue.
    ///
    /// The smaller root of the 2x2 case is recovered as `det / lambda_max`
    /// when that is well conditioned, which avoids cancellation for nearly
    /// singular positive matrices.
    pub fn hermitian_eigenvalues(&self, dim: usize) -> [f64; 2] {
        let a = &self.0;
        if dim == 1 {
            return [a[0][0].re, a[0][0].re];
        }
        let p = a[0][0].re;
        let q = a[1][1].re;
        let b = 0.5 * (a[0][1] + a[1][0].conj());
        let mean = 0.5 * (p + q);
        let rad = (0.5 * (p - q)).hypot(b.norm());
        let det = p * q - b.norm_sqr();
        if mean > 0.0 {
            let hi = mean + rad;
            [det / hi, hi]
        } else {
            let lo = mean - rad;
            [lo, if lo != 0.0 { det / lo } else { mean + rad }]
        }
    }

    /// Principal square root of a Hermitian positive-definite matrix.
    pub fn sqrt_positive(&self, dim: usize) -> Self {
        if dim == 1 {
            return CMat([[C64::new(self.0[0][0].re.sqrt(), 0.0), ZERO], [ZERO, ZERO]]);
        }
        // sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A))
        let s = self.det(2).re.sqrt();
        let t = (self.trace(2).re + 2.0 * s).sqrt();
        (*self + CMat::identity(2).scale(s)).scale(1.0 / t)
    }
}

impl Add for CMat {
    type Output = CMat;
    fn add(self, o: CMat) -> CMat {
        let (a, b) = (&self.0, &o.0);
        CMat([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
}

impl Sub for CMat {
    type Output = CMat;
    fn sub(self, o: CMat) -> CMat {
        let (a, b) = (&self.0, &o.0);
        CMat([[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]])
    }
}

impl Mul for CMat {
    type Output = CMat;
    fn mul(self, o: CMat) -> CMat {
        let (a, b) = (&self.0, &o.0);
        CMat([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
}
