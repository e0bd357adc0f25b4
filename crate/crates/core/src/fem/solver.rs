use serde::{Deserialize, Serialize};

use super::System;
use crate::error::{Error, Result};

/// Linear solver used for `K U = F`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Solver {
    /// Direct banded Cholesky factorization over the free dofs.
    #[default]
    BandedCholesky,
    /// Jacobi-preconditioned conjugate gradient, matrix free.
    Pcg { rel_tol: f64, max_iter: usize },
    /// Dense LU with partial pivoting; only for meshes up to 16x16.
    Dense,
}

impl Solver {
    pub fn pcg() -> Self {
        Solver::Pcg {
            rel_tol: 1e-10,
            max_iter: 100_000,
        }
    }

    pub(crate) fn solve(self, system: &System<'_>, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Solver::BandedCholesky => banded_cholesky(system, rhs),
            Solver::Pcg { rel_tol, max_iter } => pcg(system, rhs, rel_tol, max_iter),
            Solver::Dense => {
                if system.mesh.nelx > 16 || system.mesh.nely > 16 {
                    return Err(Error::Config(format!(
                        "dense solver is limited to 16x16 meshes, got {}x{}",
                        system.mesh.nelx, system.mesh.nely
                    )));
                }
                dense_lu(system, rhs)
            }
        }
    }
}

fn singular_at(system: &System<'_>, free: usize) -> Error {
    let dof = system.free_dofs[free];
    let node = dof / 2;
    let ny = system.mesh.nely + 1;
    Error::Singular(format!(
        "zero pivot at dof {dof} (node {}, {}): insufficient constraints or unsupported material",
        node / ny,
        node % ny
    ))
}

fn banded_cholesky(system: &System<'_>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = system.n();
    let mut bw = 0;
    system.for_each_element(|_, free| {
        let mut lo = usize::MAX;
        let mut hi = 0;
        for &f in free.iter().filter(|&&f| f != usize::MAX) {
            lo = lo.min(f);
            hi = hi.max(f);
        }
        if lo != usize::MAX {
            bw = bw.max(hi - lo);
        }
    });
    let width = bw + 1;
    // row i holds columns i-bw ..= i, column j stored at slot j + bw - i
    let mut band = vec![0.0; n * width];
    let ke = &system.ke;
    system.for_each_element(|e, free| {
        let s = system.scales[e];
        if s == 0.0 {
            return;
        }
        for (a, &fa) in free.iter().enumerate() {
            if fa == usize::MAX {
                continue;
            }
            for (b, &fb) in free.iter().enumerate() {
                if fb == usize::MAX || fb > fa {
                    continue;
                }
                band[fa * width + fb + bw - fa] += s * ke[a][b];
            }
        }
    });

    for i in 0..n {
        let row_start = i.saturating_sub(bw);
        let diag_orig = band[i * width + bw];
        for j in row_start..=i {
            let k_start = row_start.max(j.saturating_sub(bw));
            let mut sum = band[i * width + j + bw - i];
            let ri = i * width + bw - i;
            let rj = j * width + bw - j;
            for k in k_start..j {
                sum -= band[ri + k] * band[rj + k];
            }
            if i == j {
                if !(sum > 1e-12 * diag_orig.abs()) || !(diag_orig > 0.0) {
                    return Err(singular_at(system, i));
                }
                band[i * width + bw] = sum.sqrt();
            } else {
                band[i * width + j + bw - i] = sum / band[j * width + bw];
            }
        }
    }

    let mut y = rhs.to_vec();
    for i in 0..n {
        let ri = i * width + bw - i;
        let mut sum = y[i];
        for k in i.saturating_sub(bw)..i {
            sum -= band[ri + k] * y[k];
        }
        y[i] = sum / band[i * width + bw];
    }
    for i in (0..n).rev() {
        y[i] /= band[i * width + bw];
        let yi = y[i];
        let ri = i * width + bw - i;
        for k in i.saturating_sub(bw)..i {
            y[k] -= band[ri + k] * yi;
        }
    }
    Ok(y)
}

fn pcg(system: &System<'_>, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = system.n();
    let diag = system.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(singular_at(system, i));
    }
    let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= rel_tol * norm_b {
            return Ok(x);
        }
        system.apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Singular(
                "conjugate gradient met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numeric(format!(
        "conjugate gradient did not reach relative tolerance {rel_tol:e} in {max_iter} iterations"
    )))
}

fn dense_lu(system: &System<'_>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = system.n();
    let mut a = vec![0.0; n * n];
    system.for_each_element(|e, free| {
        let s = system.scales[e];
        for (i, &fi) in free.iter().enumerate() {
            if fi == usize::MAX {
                continue;
            }
            for (j, &fj) in free.iter().enumerate() {
                if fj != usize::MAX {
                    a[fi * n + fj] += s * system.ke[i][j];
                }
            }
        }
    });
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let mut b = rhs.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p * n + col].abs().total_cmp(&a[q * n + col].abs()))
            .unwrap_or(col);
        if !(a[pivot * n + col].abs() > 1e-12 * scale) {
            return Err(singular_at(system, col));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut sum = b[row];
        for k in (row + 1)..n {
            sum -= a[row * n + k] * b[k];
        }
        b[row] = sum / a[row * n + row];
    }
    Ok(b)
}
