//! Restarted GMRES with optional right Jacobi preconditioning.
//!
//! Right preconditioning keeps the Arnoldi residual equal to the residual of
//! the original system, and the true residual `b - K x` is recomputed at
//! every restart before convergence is declared.

use serde::{Deserialize, Serialize};

use super::sparse::CsrMatrix;
use super::FemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
    pub precond: Preconditioner,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            restart: 50,
            max_iter: 2000,
            precond: Preconditioner::Jacobi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolveReport {
    /// Total Arnoldi steps over all restart cycles.
    pub iterations: usize,
    /// `||K x - b|| / ||b||` of the returned iterate.
    pub relative_residual: f64,
    pub converged: bool,
    /// The Krylov basis collapsed before the tolerance was met.
    pub breakdown: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(k: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) {
    k.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

pub fn gmres_solve(
    k: &CsrMatrix,
    b: &[f64],
    opts: &GmresOptions,
) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
    let n = k.n_rows();
    if k.n_cols() != n {
        return Err(FemError::Dimension(format!(
            "GMRES needs a square matrix, got {}x{}",
            n,
            k.n_cols()
        )));
    }
    if b.len() != n {
        return Err(FemError::Dimension(format!(
            "right side has length {} but the matrix has {n} rows",
            b.len()
        )));
    }
    if opts.restart == 0 || !(opts.tol > 0.0) {
        return Err(FemError::InvalidArgument(
            "GMRES needs restart >= 1 and tol > 0".into(),
        ));
    }

    let inv_diag: Vec<f64> = match opts.precond {
        Preconditioner::None => vec![1.0; n],
        Preconditioner::Jacobi => k
            .diagonal()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect(),
    };

    let mut x = vec![0.0; n];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            x,
            LinearSolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
                breakdown: false,
            },
        ));
    }
    let target = opts.tol * b_norm;
    let m = opts.restart.min(n.max(1));

    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
    let mut g = vec![0.0; m + 1];
    let mut iterations = 0usize;
    let mut breakdown = false;

    residual(k, &x, b, &mut r);
    let mut r_norm = norm(&r);

    while r_norm > target && iterations < opts.max_iter {
        basis.clear();
        basis.push(r.iter().map(|v| v / r_norm).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = r_norm;
        let mut steps = 0;

        for j in 0..m {
            if iterations >= opts.max_iter {
                break;
            }
            for (zi, (vi, di)) in z.iter_mut().zip(basis[j].iter().zip(&inv_diag)) {
                *zi = vi * di;
            }
            k.mul_vec_into(&z, &mut w);
            let w_norm_before = norm(&w);
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let h_next = norm(&w);
            h[j + 1][j] = h_next;

            for i in 0..j {
                let tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = tmp;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                breakdown = true;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];

            iterations += 1;
            steps = j + 1;

            let lucky = h_next <= 1e-14 * w_norm_before.max(f64::MIN_POSITIVE);
            if g[j + 1].abs() <= target || lucky {
                breakdown |= lucky;
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        if steps == 0 {
            break;
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; steps];
        for i in (0..steps).rev() {
            let s: f64 = (i + 1..steps).map(|l| h[i][l] * y[l]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (l, yl) in y.iter().enumerate() {
            for ((xi, vi), di) in x.iter_mut().zip(&basis[l]).zip(&inv_diag) {
                *xi += yl * vi * di;
            }
        }
        residual(k, &x, b, &mut r);
        r_norm = norm(&r);
        if breakdown {
            if r_norm <= target {
                breakdown = false;
            }
            break;
        }
    }

    Ok((
        x,
        LinearSolveReport {
            iterations,
            relative_residual: r_norm / b_norm,
            converged: r_norm <= target,
            breakdown,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_converges_in_one_step() {
        let k = CsrMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 4.0];
        let (x, rep) = gmres_solve(&k, &b, &GmresOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn upper_triangular_two_by_two() {
        let k = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 1, 2.0)]).unwrap();
        for precond in [Preconditioner::None, Preconditioner::Jacobi] {
            let opts = GmresOptions {
                precond,
                ..Default::default()
            };
            let (x, rep) = gmres_solve(&k, &[3.0, 2.0], &opts).unwrap();
            assert!(rep.converged);
            assert!(rep.relative_residual <= 1e-10);
            assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let k = CsrMatrix::identity(3);
        let (x, rep) = gmres_solve(&k, &[0.0; 3], &GmresOptions::default()).unwrap();
        assert_eq!(x, vec![0.0; 3]);
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        // 1D Laplacian, too few iterations to converge
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let k = CsrMatrix::from_triplets(n, n, t).unwrap();
        let opts = GmresOptions {
            tol: 1e-12,
            restart: 5,
            max_iter: 7,
            precond: Preconditioner::None,
        };
        let (_, rep) = gmres_solve(&k, &vec![1.0; n], &opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 7);
        assert!(rep.relative_residual > 1e-12);
    }

    #[test]
    fn singular_inconsistent_system_breaks_down() {
        let k = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0)]).unwrap();
        let (_, rep) = gmres_solve(
            &k,
            &[1.0, 1.0],
            &GmresOptions {
                precond: Preconditioner::None,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!rep.converged);
        assert!(rep.breakdown);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = CsrMatrix::identity(3);
        assert!(gmres_solve(&k, &[1.0; 2], &GmresOptions::default()).is_err());
    }
}
