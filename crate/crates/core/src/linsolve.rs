//! Restarted GMRES for the linearized Monge-Ampère operator.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iters: usize,
    /// Target for `‖b − Ax‖ / ‖b‖`.
    pub rel_tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { restart: 60, max_iters: 2000, rel_tol: 1e-10 }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from zero. The achieved relative residual is
/// recomputed from scratch at every restart.
pub fn gmres<A>(apply: A, b: &[f64], opts: GmresOptions) -> Result<GmresOutcome>
where
    A: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, rel_residual: 0.0 });
    }
    let m = opts.restart.max(1);
    let mut iterations = 0;
    loop {
        let ax = apply(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        let rel = beta / b_norm;
        if rel <= opts.rel_tol {
            return Ok(GmresOutcome { x, iterations, rel_residual: rel });
        }
        if iterations >= opts.max_iters {
            return Err(Error::NonConvergence { iterations, residual: rel });
        }

        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&basis[k])?;
            // modified Gram-Schmidt
            for (j, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                hess[j][k] = h;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= h * vi;
                }
            }
            let h_next = norm(&w);
            hess[k + 1][k] = h_next;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            if g[k + 1].abs() / b_norm <= 0.1 * opts.rel_tol || h_next == 0.0 || iterations >= opts.max_iters {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }
        // back substitution on the triangular system
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * vi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        // tridiagonal with asymmetric off-diagonals
        let n = 50;
        let apply = |x: &[f64]| -> Result<Vec<f64>> {
            Ok((0..n)
                .map(|i| {
                    let mut v = 4.0 * x[i];
                    if i > 0 {
                        v -= 1.5 * x[i - 1];
                    }
                    if i + 1 < n {
                        v -= 0.5 * x[i + 1];
                    }
                    v
                })
                .collect())
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let opts = GmresOptions { restart: 10, ..Default::default() };
        let out = gmres(apply, &b, opts).unwrap();
        let r = apply(&out.x).unwrap();
        let err = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(out.rel_residual <= 1e-10);
        assert!(err < 1e-9);
    }

    #[test]
    fn zero_rhs_is_immediate() {
        let out = gmres(|x: &[f64]| Ok(x.to_vec()), &[0.0; 4], GmresOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![0.0; 4]);
    }
}
