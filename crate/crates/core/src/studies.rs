//! Ready-made problem setups shared by the command-line tool and the test
//! suites: graded mesh families, the manufactured problem, the example
//! problem with exact boundary data, and refinement studies built on them.

use serde::{Deserialize, Serialize};

use crate::coeff::{CoeffError, CoefficientField, OracleSolution};
use crate::fem::{solve_problem, weak_residual, FemError, FemSolution, LinearSolveReport, SolveOptions};
use crate::mesh::{build_disk_mesh, refine, MeshError, MeshTri};
use crate::quadrature::TriangleRule;

/// Disk meshes graded toward the origin. Level `L` has
/// `rings * 2^L` rings and `sectors * 2^L` sectors, so the innermost element
/// size shrinks like `(2^-L)^grading`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradedFamily {
    pub rings: usize,
    pub sectors: usize,
    pub grading: f64,
}

impl Default for GradedFamily {
    fn default() -> Self {
        Self {
            rings: 4,
            sectors: 16,
            grading: 3.0,
        }
    }
}

impl GradedFamily {
    pub fn mesh(&self, level: usize) -> Result<MeshTri, MeshError> {
        let scale = 1usize << level;
        let mut mesh = build_disk_mesh(self.rings * scale, self.sectors * scale, self.grading)?;
        mesh.level = level;
        Ok(mesh)
    }
}

/// Solver settings for graded meshes: GMRES(50) stagnates on the finest
/// levels of [`GradedFamily::default`], GMRES(200) does not.
pub fn graded_solve_options() -> SolveOptions {
    let mut o = SolveOptions::default();
    o.gmres.restart = 200;
    o.gmres.max_iter = 20_000;
    o
}

/// `mesh` refined uniformly `levels` times.
pub fn refined(mesh: &MeshTri, levels: usize) -> MeshTri {
    (0..levels).fold(mesh.clone(), |m, _| refine(&m))
}

/// Coarse quasi-uniform disk mesh used as the base of uniform refinement studies.
pub fn uniform_base_mesh() -> Result<MeshTri, MeshError> {
    build_disk_mesh(4, 16, 1.0)
}

/// Exact solution `u* = 1 - x^2 - y^2` of the manufactured problem.
pub fn manufactured_value(x: f64, y: f64) -> f64 {
    1.0 - x * x - y * y
}

pub fn manufactured_gradient(x: f64, y: f64) -> [f64; 2] {
    [-2.0 * x, -2.0 * y]
}

/// Right side `F = A grad u*`, so that `u*` solves the problem with zero
/// boundary data. Undefined where the coefficient is.
pub fn manufactured_rhs(field: &CoefficientField) -> impl Fn(f64, f64) -> Option<[f64; 2]> + Sync + '_ {
    move |x, y| field.apply(x, y, manufactured_gradient(x, y)).ok()
}

pub fn zero_rhs(_: f64, _: f64) -> Option<[f64; 2]> {
    Some([0.0, 0.0])
}

/// `|grad (u_h - u)|_{L2} / |grad u|_{L2}` with a 3-point rule per element.
pub fn relative_h1_error<G>(sol: &FemSolution<'_>, grad: &G) -> Result<f64, FemError>
where
    G: Fn(f64, f64) -> Option<[f64; 2]> + ?Sized,
{
    let rule = TriangleRule::three_point();
    let (mut err, mut norm) = (0.0, 0.0);
    for (t, tri) in sol.mesh.triangles.iter().enumerate() {
        let c = sol.mesh.corners(tri);
        let area = sol.geometry(t).area;
        let gh = sol.element_gradient(t);
        for (p, w) in rule.map(&c) {
            let g = grad(p[0], p[1]).ok_or(FemError::Evaluation { x: p[0], y: p[1] })?;
            err += w * area * ((gh[0] - g[0]).powi(2) + (gh[1] - g[1]).powi(2));
            norm += w * area * (g[0] * g[0] + g[1] * g[1]);
        }
    }
    Ok((err / norm).sqrt())
}

/// `|u_h - u|_{L2}` with a 3-point rule per element.
pub fn l2_error<U>(sol: &FemSolution<'_>, u: &U) -> Result<f64, FemError>
where
    U: Fn(f64, f64) -> f64 + ?Sized,
{
    let rule = TriangleRule::three_point();
    let mut err = 0.0;
    for (t, tri) in sol.mesh.triangles.iter().enumerate() {
        let c = sol.mesh.corners(tri);
        let area = sol.geometry(t).area;
        for (p, w) in rule.map(&c) {
            let uh = sol.eval(p).ok_or(FemError::Evaluation { x: p[0], y: p[1] })?;
            err += w * area * (uh - u(p[0], p[1])).powi(2);
        }
    }
    Ok(err.sqrt())
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: usize,
    pub n_vertices: usize,
    pub h_max: f64,
    pub error: f64,
    pub solve: LinearSolveReport,
}

/// `log2(e_k / e_{k+1})` for consecutive levels.
pub fn observed_rates(levels: &[LevelResult]) -> Vec<f64> {
    levels.windows(2).map(|w| (w[0].error / w[1].error).log2()).collect()
}

/// Relative H1 error of the manufactured problem on `levels + 1` uniformly
/// refined meshes (levels `0..=levels`).
pub fn manufactured_convergence(
    field: &CoefficientField,
    levels: usize,
    opts: &SolveOptions,
) -> Result<Vec<LevelResult>, FemError> {
    let f = manufactured_rhs(field);
    let grad = |x: f64, y: f64| Some(manufactured_gradient(x, y));
    let mut mesh = uniform_base_mesh()?;
    let mut out = Vec::with_capacity(levels + 1);
    for level in 0..=levels {
        if level > 0 {
            mesh = refine(&mesh);
        }
        let (sol, report) = solve_problem(&mesh, field, &f, &|_, _| 0.0, opts)?;
        out.push(LevelResult {
            level,
            n_vertices: mesh.n_vertices(),
            h_max: mesh.max_edge_length(),
            error: relative_h1_error(&sol, &grad)?,
            solve: report,
        });
    }
    Ok(out)
}

/// Solves the example problem (`F = 0`, exact boundary data) on `mesh`.
pub fn solve_oracle_problem<'a>(
    mesh: &'a MeshTri,
    field: &'a CoefficientField,
    oracle: &OracleSolution,
    opts: &SolveOptions,
) -> Result<(FemSolution<'a>, LinearSolveReport), FemError> {
    solve_problem(mesh, field, &zero_rhs, &|x, y| oracle.value_or_zero(x, y), opts)
}

/// L2 error of the example problem on graded levels `0..=levels`.
pub fn oracle_convergence(
    mu: f64,
    family: &GradedFamily,
    levels: usize,
    opts: &SolveOptions,
) -> Result<Vec<LevelResult>, FemError> {
    let field = CoefficientField::example(mu).map_err(coeff_err)?;
    let oracle = OracleSolution::new(mu).map_err(coeff_err)?;
    (0..=levels)
        .map(|level| {
            let mesh = family.mesh(level)?;
            let (sol, report) = solve_oracle_problem(&mesh, &field, &oracle, opts)?;
            Ok(LevelResult {
                level,
                n_vertices: mesh.n_vertices(),
                h_max: mesh.max_edge_length(),
                error: l2_error(&sol, &|x, y| oracle.value_or_zero(x, y))?,
                solve: report,
            })
        })
        .collect()
}

fn coeff_err(e: CoeffError) -> FemError {
    FemError::InvalidArgument(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualLevel {
    pub level: usize,
    pub n_vertices: usize,
    pub max_residual: f64,
}

/// Largest interior weak residual of the exact example solution on graded
/// levels `0..=levels`.
pub fn oracle_weak_residuals(
    mu: f64,
    family: &GradedFamily,
    levels: usize,
    quad_order: usize,
) -> Result<Vec<ResidualLevel>, FemError> {
    let field = CoefficientField::example(mu).map_err(coeff_err)?;
    let oracle = OracleSolution::new(mu).map_err(coeff_err)?;
    let grad = |x: f64, y: f64| oracle.gradient(x, y).ok();
    (0..=levels)
        .map(|level| {
            let mesh = family.mesh(level)?;
            let r = weak_residual(&mesh, &field, &grad, quad_order)?;
            Ok(ResidualLevel {
                level,
                n_vertices: mesh.n_vertices(),
                max_residual: r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            })
        })
        .collect()
}

/// Coefficient used by [`meyers_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScanField {
    /// Example drift field; `u_h` solves the problem with exact boundary data.
    Example { mu: f64 },
    /// Identity control; `u_h` solves `Laplace u = div F` with smooth `F`
    /// and zero boundary data.
    Identity,
}

/// Smooth right side of the identity control problem.
pub fn control_rhs(x: f64, y: f64) -> Option<[f64; 2]> {
    Some([x.exp(), (2.0 * y).cos()])
}

/// Radii of the balls centered at the origin: `2^-2 .. 2^-9`.
pub fn origin_ball_radii() -> Vec<f64> {
    crate::analysis::dyadic_radii(2, 8)
}

/// Balls of a reverse Hölder scan: the dyadic sequence centered at the
/// origin, then radii `2^-2 .. 2^-4` around the points of a `0.25`-spaced
/// grid within distance `1/2` of the origin (so doubled balls stay inside
/// the unit disk).
pub fn meyers_scan_balls() -> Vec<(crate::Point, f64)> {
    let mut balls: Vec<_> = origin_ball_radii().into_iter().map(|r| ([0.0, 0.0], r)).collect();
    for i in -2i32..=2 {
        for j in -2i32..=2 {
            let c = [0.25 * i as f64, 0.25 * j as f64];
            if (i, j) != (0, 0) && c[0].hypot(c[1]) <= 0.5 {
                balls.extend(crate::analysis::dyadic_radii(2, 3).into_iter().map(|r| (c, r)));
            }
        }
    }
    balls
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeyersScan {
    pub field: ScanField,
    pub level: usize,
    pub scan: crate::analysis::RhScanResult,
    pub solve: LinearSolveReport,
}

impl MeyersScan {
    /// Ratios on the origin-centered balls for grid exponent `k`, ordered by
    /// decreasing radius.
    pub fn origin_ratios(&self, k: usize) -> Vec<f64> {
        self.scan
            .balls
            .iter()
            .zip(&self.scan.ratios[k])
            .filter(|(b, _)| b.0 == [0.0, 0.0])
            .map(|(_, &r)| r)
            .collect()
    }
}

/// Reverse Hölder scan of `g = |grad u_h|`, `f = |F|` on level `level` of
/// the default graded family.
pub fn meyers_scan(field: ScanField, level: usize, p_grid: &[f64]) -> Result<MeyersScan, crate::analysis::AnalysisError> {
    use crate::analysis::{reverse_holder_scan_balls, BallSamples};
    let mesh = GradedFamily::default().mesh(level).map_err(FemError::from)?;
    let opts = graded_solve_options();
    let rule = TriangleRule::three_point().subdivided(1);
    let (scan, solve) = match field {
        ScanField::Example { mu } => {
            let coeff = CoefficientField::example(mu)?;
            let oracle = OracleSolution::new(mu)?;
            let (sol, rep) = solve_oracle_problem(&mesh, &coeff, &oracle, &opts)?;
            let samples = BallSamples::from_fem(&sol, &zero_rhs, &rule)?;
            (reverse_holder_scan_balls(&samples, &meyers_scan_balls(), p_grid)?, rep)
        }
        ScanField::Identity => {
            let coeff = CoefficientField::identity();
            let (sol, rep) = solve_problem(&mesh, &coeff, &control_rhs, &|_, _| 0.0, &opts)?;
            let samples = BallSamples::from_fem(&sol, &control_rhs, &rule)?;
            (reverse_holder_scan_balls(&samples, &meyers_scan_balls(), p_grid)?, rep)
        }
    };
    Ok(MeyersScan {
        field,
        level,
        scan,
        solve,
    })
}
