//! Discrete Dirichlet problem for `div(A grad u) = div F` with continuous
//! piecewise-linear elements.

mod assembly;
mod gmres;
mod sparse;

pub use assembly::{
    apply_dirichlet, assemble_load, assemble_stiffness, weak_residual, ElementRules, Stiffness,
};
pub use gmres::{gmres_solve, GmresOptions, LinearSolveReport, Preconditioner};
pub use sparse::CsrMatrix;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeff::{CoeffError, CoefficientField};
use crate::mesh::{ElementGeometry, MeshError, MeshTri};
use crate::Point;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("coefficient undefined at quadrature node ({x}, {y})")]
    Coefficient {
        x: f64,
        y: f64,
        #[source]
        source: CoeffError,
    },
    #[error("evaluator undefined at ({x}, {y})")]
    Evaluation { x: f64, y: f64 },
    #[error("GMRES did not converge: relative residual {:e} after {} iterations", .0.relative_residual, .0.iterations)]
    NoConvergence(LinearSolveReport),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub gmres: GmresOptions,
    pub quad_order: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gmres: GmresOptions::default(),
            quad_order: 3,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        let mut o = Self::default();
        o.gmres.tol = tol;
        o
    }
}

/// Piecewise-linear function on a mesh, one coefficient per vertex.
#[derive(Debug, Clone)]
pub struct FemSolution<'a> {
    pub mesh: &'a MeshTri,
    pub field: &'a CoefficientField,
    pub coeffs: Vec<f64>,
    geometry: Vec<ElementGeometry>,
    locator: PointLocator,
}

impl<'a> FemSolution<'a> {
    pub fn new(mesh: &'a MeshTri, field: &'a CoefficientField, coeffs: Vec<f64>) -> Result<Self, FemError> {
        if coeffs.len() != mesh.n_vertices() {
            return Err(FemError::Dimension(format!(
                "{} coefficients for {} vertices",
                coeffs.len(),
                mesh.n_vertices()
            )));
        }
        Ok(Self {
            geometry: mesh.geometries()?,
            locator: PointLocator::new(mesh),
            mesh,
            field,
            coeffs,
        })
    }

    pub fn geometry(&self, t: usize) -> &ElementGeometry {
        &self.geometry[t]
    }

    /// Constant gradient of `u_h` on triangle `t`.
    pub fn element_gradient(&self, t: usize) -> [f64; 2] {
        let g = &self.geometry[t].grad_basis;
        let v = self.mesh.triangles[t].0;
        // difference form: exactly zero for constant data
        let c0 = self.coeffs[v[0]];
        let (d1, d2) = (self.coeffs[v[1]] - c0, self.coeffs[v[2]] - c0);
        [d1 * g[1][0] + d2 * g[2][0], d1 * g[1][1] + d2 * g[2][1]]
    }

    /// `u_h(p)`, or `None` outside the mesh.
    pub fn eval(&self, p: Point) -> Option<f64> {
        let (t, bary) = self.locator.locate(self.mesh, p)?;
        let v = self.mesh.triangles[t].0;
        Some(bary[0] * self.coeffs[v[0]] + bary[1] * self.coeffs[v[1]] + bary[2] * self.coeffs[v[2]])
    }

    /// `int |grad u_h|^2` over the whole mesh.
    pub fn dirichlet_energy(&self) -> f64 {
        (0..self.mesh.n_triangles())
            .map(|t| {
                let g = self.element_gradient(t);
                self.geometry[t].area * (g[0] * g[0] + g[1] * g[1])
            })
            .sum()
    }
}

/// Bucket grid over the mesh bounding box for point location.
#[derive(Debug, Clone)]
struct PointLocator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    fn new(mesh: &MeshTri) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &mesh.vertices {
            lo = [lo[0].min(v.x), lo[1].min(v.y)];
            hi = [hi[0].max(v.x), hi[1].max(v.y)];
        }
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let per_side = ((mesh.n_triangles() as f64).sqrt().ceil() as usize).clamp(1, 1024);
        let cell = side / per_side as f64;
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).min(per_side + 1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).min(per_side + 1);
        let mut buckets = vec![Vec::new(); nx * ny];
        let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let c = mesh.corners(t);
            let bx0 = c.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let bx1 = c.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let by0 = c.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let by1 = c.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            let (i0, i1) = (clamp((bx0 - lo[0]) / cell, nx), clamp((bx1 - lo[0]) / cell, nx));
            let (j0, j1) = (clamp((by0 - lo[1]) / cell, ny), clamp((by1 - lo[1]) / cell, ny));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(ti);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn locate(&self, mesh: &MeshTri, p: Point) -> Option<(usize, [f64; 3])> {
        let fx = (p[0] - self.origin[0]) / self.cell;
        let fy = (p[1] - self.origin[1]) / self.cell;
        if fx < -1e-9 || fy < -1e-9 {
            return None;
        }
        let (i, j) = ((fx.max(0.0) as usize), (fy.max(0.0) as usize));
        if i >= self.nx || j >= self.ny {
            return None;
        }
        let tol = 1e-12;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let c = mesh.corners(&mesh.triangles[t]);
            let bary = barycentric(&c, p);
            let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= -tol {
                return Some((t, bary));
            }
            if best.map_or(true, |b| worst > b.2) {
                best = Some((t, bary, worst));
            }
        }
        // points on a curved-boundary chord may miss by roundoff only
        best.filter(|b| b.2 >= -1e-9).map(|b| (b.0, b.1))
    }
}

fn barycentric(c: &[Point; 3], p: Point) -> [f64; 3] {
    let det = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]);
    let l1 = ((p[0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (p[1] - c[0][1])) / det;
    let l2 = ((c[1][0] - c[0][0]) * (p[1] - c[0][1]) - (p[0] - c[0][0]) * (c[1][1] - c[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Assembles, applies boundary data `g` and solves with GMRES. A solver that
/// fails to reach the tolerance is reported as [`FemError::NoConvergence`].
pub fn solve_problem<'a, F, G>(
    mesh: &'a MeshTri,
    field: &'a CoefficientField,
    f: &F,
    g: &G,
    opts: &SolveOptions,
) -> Result<(FemSolution<'a>, LinearSolveReport), FemError>
where
    F: Fn(f64, f64) -> Option<[f64; 2]> + ?Sized,
    G: Fn(f64, f64) -> f64 + ?Sized,
{
    let k = assemble_stiffness(mesh, field, opts.quad_order)?;
    let b = assemble_load(mesh, f, opts.quad_order)?;
    let (k_bc, b_bc) = apply_dirichlet(&k.matrix, &b, mesh, g)?;
    let (mut x, report) = gmres_solve(&k_bc, &b_bc, &opts.gmres)?;
    if !report.converged {
        return Err(FemError::NoConvergence(report));
    }
    // boundary rows are identity rows: assign the data exactly
    for (xi, v) in x.iter_mut().zip(&mesh.vertices) {
        if v.on_boundary {
            *xi = g(v.x, v.y);
        }
    }
    Ok((FemSolution::new(mesh, field, x)?, report))
}
