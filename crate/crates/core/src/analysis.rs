//! Regularity diagnostics for analytic and discrete solutions: gradient
//! `L^p` integrals, log-log exponent fits, the integrability and Hölder
//! thresholds of the singular example, energy and Caccioppoli ratios, and
//! reverse Hölder (Gehring-type) ratio scans over balls.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeff::{CoeffError, OracleSolution};
use crate::fem::{ElementRules, FemError, FemSolution};
use crate::mesh::MeshTri;
use crate::quadrature::TriangleRule;
use crate::Point;

/// Fitted slope of the shell integrals at or below which `|grad u|^p` is
/// declared non-integrable at the origin.
pub const DIVERGENCE_SLOPE: f64 = 0.05;

/// Minimum span, in decades, of the abscissae of a log-log fit.
pub const MIN_FIT_DECADES: f64 = 2.0;

/// A reverse Hölder ratio counts as bounded while it stays below this
/// multiple of its value at the first exponent of the grid.
pub const RH_BLOWUP_FACTOR: f64 = 10.0;

/// Subdivision depth used on elements cut by a region boundary.
const CUT_SUBDIVISION: u32 = 4;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no quadrature point falls inside the region")]
    EmptyRegion,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("right side has zero L2 norm")]
    ZeroRhs,
    #[error("only {found} elements intersect the ball (need at least {needed})")]
    RegionTooSmall { found: usize, needed: usize },
    #[error("no exponent in the grid shows divergence")]
    NoDivergence,
    #[error("evaluator undefined at ({x}, {y})")]
    Evaluation { x: f64, y: f64 },
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

pub type AnalyticGrad<'a> = &'a (dyn Fn(f64, f64) -> Option<[f64; 2]> + Sync);
pub type AnalyticValue<'a> = &'a (dyn Fn(f64, f64) -> Option<f64> + Sync);

/// Where a gradient comes from.
#[derive(Clone, Copy)]
pub enum GradSource<'a> {
    /// The closed-form example solution, integrated exactly in polar
    /// coordinates where the region allows it.
    Oracle(OracleSolution),
    /// A discrete solution (gradient constant per element).
    Fem(&'a FemSolution<'a>),
    /// An analytic gradient integrated with the quadrature of a mesh.
    OnMesh { mesh: &'a MeshTri, grad: AnalyticGrad<'a> },
}

/// Where point values come from.
#[derive(Clone, Copy)]
pub enum ValueSource<'a> {
    Oracle(OracleSolution),
    Fem(&'a FemSolution<'a>),
    Analytic(AnalyticValue<'a>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Ball { center: Point, radius: f64 },
    /// Annulus centered at the origin.
    Annulus { r_in: f64, r_out: f64 },
    /// The whole computational domain (the unit disk for the oracle).
    Whole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Overlap {
    Inside,
    Outside,
    Cut,
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * dx, a[1] + t * dy])
}

fn point_in_triangle(p: Point, c: &[Point; 3]) -> bool {
    let s = |a: Point, b: Point| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    s(c[0], c[1]) >= 0.0 && s(c[1], c[2]) >= 0.0 && s(c[2], c[0]) >= 0.0
}

/// Distance from `p` to the closed triangle, and to its farthest vertex.
fn distance_range(p: Point, c: &[Point; 3]) -> (f64, f64) {
    let far = c.iter().map(|&v| dist(p, v)).fold(0.0, f64::max);
    if point_in_triangle(p, c) {
        return (0.0, far);
    }
    let near = (0..3)
        .map(|k| point_segment_distance(p, c[k], c[(k + 1) % 3]))
        .fold(f64::INFINITY, f64::min);
    (near, far)
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Region::Ball { center, radius } => dist(p, center) < radius,
            Region::Annulus { r_in, r_out } => {
                let r = p[0].hypot(p[1]);
                r >= r_in && r < r_out
            }
            Region::Whole => true,
        }
    }

    fn overlap(&self, c: &[Point; 3]) -> Overlap {
        match *self {
            Region::Whole => Overlap::Inside,
            Region::Ball { center, radius } => {
                let (near, far) = distance_range(center, c);
                if far <= radius {
                    Overlap::Inside
                } else if near >= radius {
                    Overlap::Outside
                } else {
                    Overlap::Cut
                }
            }
            Region::Annulus { r_in, r_out } => {
                let (near, far) = distance_range([0.0, 0.0], c);
                if near >= r_in && far <= r_out {
                    Overlap::Inside
                } else if far <= r_in || near >= r_out {
                    Overlap::Outside
                } else {
                    Overlap::Cut
                }
            }
        }
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        let ok = match *self {
            Region::Ball { radius, .. } => radius > 0.0 && radius.is_finite(),
            Region::Annulus { r_in, r_out } => r_in >= 0.0 && r_out > r_in && r_out.is_finite(),
            Region::Whole => true,
        };
        if ok {
            Ok(())
        } else {
            Err(AnalysisError::InvalidArgument(format!("invalid region {self:?}")))
        }
    }
}

/// Calls `visit(t, x, w)` for every quadrature point `x` of the mesh lying in
/// `region`, with `w` the weight including the element area. Elements cut by
/// the region boundary are integrated with a subdivided rule and an indicator.
fn for_each_point_in_region<V>(
    mesh: &MeshTri,
    region: &Region,
    rules: &ElementRules,
    fine: &TriangleRule,
    mut visit: V,
) -> Result<usize, AnalysisError>
where
    V: FnMut(usize, Point, f64) -> Result<(), AnalysisError>,
{
    let mut count = 0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let c = mesh.corners(tri);
        let area = crate::mesh::element_geometry(mesh, t).map_err(FemError::from)?.area;
        match region.overlap(&c) {
            Overlap::Outside => {}
            Overlap::Inside => {
                for (p, w) in rules.for_element(&c).map(&c) {
                    visit(t, p, w * area)?;
                    count += 1;
                }
            }
            Overlap::Cut => {
                for (p, w) in fine.map(&c) {
                    if region.contains(p) {
                        visit(t, p, w * area)?;
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(count)
}

/// `int_0^{2 pi} (mu^2 cos^2 t + sin^2 t)^(p/2) dt`, the angular factor of
/// `int |grad u|^p` for the example solution (trapezoidal rule, which is
/// spectrally accurate for this smooth periodic integrand).
pub fn oracle_angular_integral(mu: f64, p: f64) -> f64 {
    let n = 4096;
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|k| {
            let t = k as f64 * h;
            let (c, s) = (t.cos(), t.sin());
            (mu * mu * c * c + s * s).powf(0.5 * p)
        })
        .sum::<f64>()
        * h
}

/// `int_a^b r^(s - 1) dr` with `s = (mu - 1) p + 2`, infinite when `a = 0`
/// and `s <= 0`.
fn oracle_radial_integral(mu: f64, p: f64, a: f64, b: f64) -> f64 {
    let s = (mu - 1.0) * p + 2.0;
    if a == 0.0 {
        return if s > 0.0 { b.powf(s) / s } else { f64::INFINITY };
    }
    let l = (b / a).ln();
    if s.abs() < 1e-12 {
        l
    } else {
        a.powf(s) * (s * l).exp_m1() / s
    }
}

fn oracle_power_integral(o: &OracleSolution, region: &Region, p: f64) -> Result<f64, AnalysisError> {
    let mu = o.mu();
    let (a, b) = match *region {
        Region::Annulus { r_in, r_out } => (r_in, r_out),
        Region::Whole => (0.0, 1.0),
        Region::Ball { center, radius } if center == [0.0, 0.0] => (0.0, radius),
        Region::Ball { center, radius } => {
            // off-center ball: polar midpoint rule around the ball center
            let n = 512;
            let (dr, dt) = (radius / n as f64, 2.0 * PI / n as f64);
            let mut sum = 0.0;
            for i in 0..n {
                let r = (i as f64 + 0.5) * dr;
                for j in 0..n {
                    let t = (j as f64 + 0.5) * dt;
                    if let Ok(g) = o.gradient(center[0] + r * t.cos(), center[1] + r * t.sin()) {
                        sum += r * dr * dt * g[0].hypot(g[1]).powf(p);
                    }
                }
            }
            return Ok(sum);
        }
    };
    Ok(oracle_angular_integral(mu, p) * oracle_radial_integral(mu, p, a, b))
}

/// `int_region |grad u|^p`.
pub fn gradient_power_integral(
    source: GradSource<'_>,
    region: &Region,
    p: f64,
    quad_order: usize,
) -> Result<f64, AnalysisError> {
    region.validate()?;
    if !(p >= 1.0) {
        return Err(AnalysisError::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    match source {
        GradSource::Oracle(o) => oracle_power_integral(&o, region, p),
        GradSource::Fem(sol) => {
            let rules = ElementRules::new(quad_order, None)?;
            let fine = TriangleRule::centroid().subdivided(CUT_SUBDIVISION);
            let mut sum = 0.0;
            let mut cached: Option<(usize, f64)> = None;
            let n = for_each_point_in_region(sol.mesh, region, &rules, &fine, |t, _, w| {
                let gp = match cached {
                    Some((ct, v)) if ct == t => v,
                    _ => {
                        let g = sol.element_gradient(t);
                        let v = g[0].hypot(g[1]).powf(p);
                        cached = Some((t, v));
                        v
                    }
                };
                sum += w * gp;
                Ok(())
            })?;
            if n == 0 {
                return Err(AnalysisError::EmptyRegion);
            }
            Ok(sum)
        }
        GradSource::OnMesh { mesh, grad } => {
            let rules = ElementRules::new(quad_order, Some([0.0, 0.0]))?;
            let fine = TriangleRule::three_point().subdivided(CUT_SUBDIVISION);
            let mut sum = 0.0;
            let n = for_each_point_in_region(mesh, region, &rules, &fine, |_, x, w| {
                let g = grad(x[0], x[1]).ok_or(AnalysisError::Evaluation { x: x[0], y: x[1] })?;
                sum += w * g[0].hypot(g[1]).powf(p);
                Ok(())
            })?;
            if n == 0 {
                return Err(AnalysisError::EmptyRegion);
            }
            Ok(sum)
        }
    }
}

/// `(int_region |grad u|^p)^(1/p)`.
pub fn lp_norm_gradient(
    source: GradSource<'_>,
    region: &Region,
    p: f64,
    quad_order: usize,
) -> Result<f64, AnalysisError> {
    Ok(gradient_power_integral(source, region, p, quad_order)?.powf(1.0 / p))
}

/// `values[k] = int_{B_{1/2} \ B_{radii[k]}} |grad u|^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSeries {
    pub p: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

/// Outer radius of the scanned annuli.
pub const SCAN_OUTER_RADIUS: f64 = 0.5;

impl AnnulusSeries {
    /// Integrals over the shells `[radii[k], radii[k-1])` (the first shell
    /// ends at the outer radius), paired with their inner radius. For the
    /// homogeneous example and dyadic radii these scale exactly like
    /// `r^((mu - 1) p + 2)`, whether or not `I_p` itself converges.
    pub fn shells(&self) -> (Vec<f64>, Vec<f64>) {
        let inc = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| if k == 0 { v } else { v - self.values[k - 1] })
            .collect();
        (self.radii.clone(), inc)
    }
}

pub fn annulus_scan(
    source: GradSource<'_>,
    p: f64,
    radii: &[f64],
    quad_order: usize,
) -> Result<AnnulusSeries, AnalysisError> {
    if radii.is_empty() {
        return Err(AnalysisError::InvalidArgument("no radii".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0])
        || radii[0] >= SCAN_OUTER_RADIUS
        || !(radii[radii.len() - 1] > 0.0)
    {
        return Err(AnalysisError::InvalidArgument(
            "radii must decrease strictly inside (0, 1/2)".into(),
        ));
    }
    let values = radii
        .iter()
        .map(|&r| {
            gradient_power_integral(
                source,
                &Region::Annulus {
                    r_in: r,
                    r_out: SCAN_OUTER_RADIUS,
                },
                p,
                quad_order,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AnnulusSeries {
        p,
        radii: radii.to_vec(),
        values,
    })
}

/// `radii[k] = 2^-(first + k)` for `k < count`.
pub fn dyadic_radii(first: i32, count: usize) -> Vec<f64> {
    (0..count).map(|k| 0.5f64.powi(first + k as i32)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// Least-squares line through `(log r, log v)`.
pub fn fit_exponent(radii: &[f64], values: &[f64]) -> Result<ExponentFit, AnalysisError> {
    if radii.len() != values.len() {
        return Err(AnalysisError::InvalidArgument(format!(
            "{} radii for {} values",
            radii.len(),
            values.len()
        )));
    }
    let n = radii.len();
    if n < 4 {
        return Err(AnalysisError::DegenerateFit(format!("need at least 4 points, got {n}")));
    }
    if let Some(v) = radii.iter().chain(values).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(AnalysisError::DegenerateFit(format!(
            "log-log fit needs finite positive data, got {v}"
        )));
    }
    let (lo, hi) = radii
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let decades = (hi / lo).log10();
    if decades < MIN_FIT_DECADES - 1e-9 {
        return Err(AnalysisError::DegenerateFit(format!(
            "radii span {decades:.2} decades, need {MIN_FIT_DECADES}"
        )));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ExponentFit {
        slope,
        intercept,
        r2,
        n_points: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    /// Smallest grid exponent whose shell slope is at most [`DIVERGENCE_SLOPE`].
    pub p_star: f64,
    pub p_grid: Vec<f64>,
    pub slopes: Vec<f64>,
}

/// Integrability threshold: the first `p` for which the integrals of
/// `|grad u|^p` over dyadic shells stop decaying toward the origin.
pub fn integrability_threshold(
    source: GradSource<'_>,
    p_grid: &[f64],
    radii: &[f64],
    quad_order: usize,
) -> Result<ThresholdScan, AnalysisError> {
    if p_grid.is_empty() || p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::InvalidArgument(
            "p grid must be nonempty and increasing".into(),
        ));
    }
    let slopes = p_grid
        .par_iter()
        .map(|&p| {
            let series = annulus_scan(source, p, radii, quad_order)?;
            let (r, shells) = series.shells();
            Ok(fit_exponent(&r, &shells)?.slope)
        })
        .collect::<Result<Vec<f64>, AnalysisError>>()?;
    let p_star = p_grid
        .iter()
        .zip(&slopes)
        .find(|(_, &s)| s <= DIVERGENCE_SLOPE)
        .map(|(&p, _)| p)
        .ok_or(AnalysisError::NoDivergence)?;
    Ok(ThresholdScan {
        p_star,
        p_grid: p_grid.to_vec(),
        slopes,
    })
}

/// `p` values `start, start + step, ...` up to `end` inclusive.
pub fn linear_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha: f64,
    pub fit: ExponentFit,
    pub scales: Vec<f64>,
    /// `M(r) = max over the circle |x| = r of |u(x) - u(0)|`.
    pub moduli: Vec<f64>,
}

fn value_at(source: &ValueSource<'_>, p: Point) -> Result<f64, AnalysisError> {
    let undefined = || AnalysisError::Evaluation { x: p[0], y: p[1] };
    match source {
        ValueSource::Oracle(o) => {
            if p == [0.0, 0.0] {
                Ok(0.0)
            } else {
                Ok(o.value(p[0], p[1])?)
            }
        }
        ValueSource::Fem(sol) => sol.eval(p).ok_or_else(undefined),
        ValueSource::Analytic(f) => f(p[0], p[1]).ok_or_else(undefined),
    }
}

/// Hölder exponent at the origin: slope of `log M(r)` against `log r`.
pub fn holder_exponent(
    source: ValueSource<'_>,
    scales: &[f64],
    n_angles: usize,
) -> Result<HolderEstimate, AnalysisError> {
    if n_angles == 0 {
        return Err(AnalysisError::InvalidArgument("n_angles must be positive".into()));
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) || scales.iter().any(|&s| !(s > 0.0 && s < 0.5)) {
        return Err(AnalysisError::InvalidArgument(
            "scales must decrease strictly inside (0, 1/2)".into(),
        ));
    }
    let center = value_at(&source, [0.0, 0.0])?;
    let moduli = scales
        .iter()
        .map(|&r| {
            (0..n_angles).try_fold(0.0f64, |m, j| {
                let t = 2.0 * PI * j as f64 / n_angles as f64;
                let v = value_at(&source, [r * t.cos(), r * t.sin()])?;
                Ok(m.max((v - center).abs()))
            })
        })
        .collect::<Result<Vec<f64>, AnalysisError>>()?;
    let fit = fit_exponent(scales, &moduli)?;
    Ok(HolderEstimate {
        alpha: fit.slope,
        fit,
        scales: scales.to_vec(),
        moduli,
    })
}

fn integrate_vector_field_sq<F>(mesh: &MeshTri, f: &F, quad_order: usize, singular: Option<Point>) -> Result<f64, AnalysisError>
where
    F: Fn(f64, f64) -> Option<[f64; 2]> + ?Sized,
{
    let rules = ElementRules::new(quad_order, singular)?;
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let c = mesh.corners(tri);
        let area = crate::mesh::element_geometry(mesh, t).map_err(FemError::from)?.area;
        for (p, w) in rules.for_element(&c).map(&c) {
            let v = f(p[0], p[1]).ok_or(AnalysisError::Evaluation { x: p[0], y: p[1] })?;
            sum += w * area * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    Ok(sum)
}

/// `||grad u_h||^2 / ||F||^2` over the solution domain.
pub fn energy_ratio<F>(sol: &FemSolution<'_>, f: &F, quad_order: usize) -> Result<f64, AnalysisError>
where
    F: Fn(f64, f64) -> Option<[f64; 2]> + ?Sized,
{
    let f_sq = integrate_vector_field_sq(sol.mesh, f, quad_order, sol.field.singular_point())?;
    if f_sq == 0.0 {
        return Err(AnalysisError::ZeroRhs);
    }
    Ok(sol.dirichlet_energy() / f_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliRatio {
    /// `int_{B_r} |grad u|^2`.
    pub lhs: f64,
    /// `r^(2n/s' - 2) ([[d]]^2 + 1) (int_{B_{3r/2}} |u - m|^(2s/(2-s)))^((2-s)/s)
    ///  + int_{B_{3r/2}} |F|^2`.
    pub rhs: f64,
    pub ratio: f64,
    /// Average subtracted from `u` (zero when the ball leaves the domain).
    pub mean: f64,
}

/// Minimum number of elements a Caccioppoli ball must meet.
pub const CACCIOPPOLI_MIN_ELEMENTS: usize = 10;

fn ball_inside_mesh(mesh: &MeshTri, center: Point, radius: f64) -> bool {
    let inside_polygon = mesh
        .triangles
        .iter()
        .any(|t| point_in_triangle(center, &mesh.corners(t)));
    inside_polygon
        && mesh.boundary_edges().iter().all(|&(a, b)| {
            point_segment_distance(center, mesh.vertices[a].point(), mesh.vertices[b].point()) >= radius
        })
}

/// Ratio of the two sides of the Caccioppoli inequality on `B_r(x0)`, with
/// the measured BMO seminorm `bmo` standing in for `[[d]]`.
pub fn caccioppoli_ratio<F>(
    sol: &FemSolution<'_>,
    f: &F,
    x0: Point,
    r: f64,
    s: f64,
    bmo: f64,
) -> Result<CaccioppoliRatio, AnalysisError>
where
    F: Fn(f64, f64) -> Option<[f64; 2]> + ?Sized,
{
    if !(s > 1.0 && s < 2.0) {
        return Err(AnalysisError::InvalidArgument(format!("s must lie in (1, 2), got {s}")));
    }
    if !(r > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    let mesh = sol.mesh;
    let inner = Region::Ball { center: x0, radius: r };
    let outer = Region::Ball {
        center: x0,
        radius: 1.5 * r,
    };
    let found = mesh
        .triangles
        .iter()
        .filter(|t| inner.overlap(&mesh.corners(t)) != Overlap::Outside)
        .count();
    if found < CACCIOPPOLI_MIN_ELEMENTS {
        return Err(AnalysisError::RegionTooSmall {
            found,
            needed: CACCIOPPOLI_MIN_ELEMENTS,
        });
    }

    let rules = ElementRules::new(6, sol.field.singular_point())?;
    let fine = TriangleRule::three_point().subdivided(CUT_SUBDIVISION);
    let value = |t: usize, p: Point| {
        let c = mesh.corners(&mesh.triangles[t]);
        let bary = barycentric(&c, p);
        let v = mesh.triangles[t].0;
        bary[0] * sol.coeffs[v[0]] + bary[1] * sol.coeffs[v[1]] + bary[2] * sol.coeffs[v[2]]
    };

    let mean = if ball_inside_mesh(mesh, x0, r) {
        let (mut num, mut den) = (0.0, 0.0);
        for_each_point_in_region(mesh, &inner, &rules, &fine, |t, p, w| {
            num += w * value(t, p);
            den += w;
            Ok(())
        })?;
        num / den
    } else {
        0.0
    };

    let mut lhs = 0.0;
    for_each_point_in_region(mesh, &inner, &rules, &fine, |t, _, w| {
        let g = sol.element_gradient(t);
        lhs += w * (g[0] * g[0] + g[1] * g[1]);
        Ok(())
    })?;

    let lambda = 2.0 * s / (2.0 - s);
    let (mut u_term, mut f_term) = (0.0, 0.0);
    for_each_point_in_region(mesh, &outer, &rules, &fine, |t, p, w| {
        u_term += w * (value(t, p) - mean).abs().powf(lambda);
        let fv = f(p[0], p[1]).ok_or(AnalysisError::Evaluation { x: p[0], y: p[1] })?;
        f_term += w * (fv[0] * fv[0] + fv[1] * fv[1]);
        Ok(())
    })?;

    // n = 2, s' = s / (s - 1)
    let scale = r.powf(4.0 * (s - 1.0) / s - 2.0);
    let rhs = scale * (bmo * bmo + 1.0) * u_term.powf((2.0 - s) / s) + f_term;
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(CaccioppoliRatio { lhs, rhs, ratio, mean })
}

fn barycentric(c: &[Point; 3], p: Point) -> [f64; 3] {
    let det = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]);
    let l1 = ((p[0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (p[1] - c[0][1])) / det;
    let l2 = ((c[1][0] - c[0][0]) * (p[1] - c[0][1]) - (p[0] - c[0][0]) * (c[1][1] - c[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Weighted point samples of `g` (typically `|grad u|`) and `f` (typically
/// `|F|`) used for ball averages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BallSamples {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
}

impl BallSamples {
    pub fn push(&mut self, p: Point, w: f64, g: f64, f: f64) {
        self.points.push(p);
        self.weights.push(w);
        self.g.push(g);
        self.f.push(f);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `g = |grad u_h|` and `f = |F|` at the nodes of `rule` on every element.
    pub fn from_fem<F>(sol: &FemSolution<'_>, f: &F, rule: &TriangleRule) -> Result<Self, AnalysisError>
    where
        F: Fn(f64, f64) -> Option<[f64; 2]> + ?Sized,
    {
        let mut out = Self::default();
        for (t, tri) in sol.mesh.triangles.iter().enumerate() {
            let c = sol.mesh.corners(tri);
            let area = sol.geometry(t).area;
            let g = sol.element_gradient(t);
            let gn = g[0].hypot(g[1]);
            for (p, w) in rule.map(&c) {
                let fv = f(p[0], p[1]).ok_or(AnalysisError::Evaluation { x: p[0], y: p[1] })?;
                out.push(p, w * area, gn, fv[0].hypot(fv[1]));
            }
        }
        Ok(out)
    }

    /// Analytic `g` and `f` sampled at the nodes of `rule` on every element.
    pub fn from_mesh<G, F>(mesh: &MeshTri, g: &G, f: &F, rule: &TriangleRule) -> Result<Self, AnalysisError>
    where
        G: Fn(f64, f64) -> Option<f64> + ?Sized,
        F: Fn(f64, f64) -> Option<f64> + ?Sized,
    {
        let mut out = Self::default();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let c = mesh.corners(tri);
            let area = crate::mesh::element_geometry(mesh, t).map_err(FemError::from)?.area;
            for (p, w) in rule.map(&c) {
                let undefined = AnalysisError::Evaluation { x: p[0], y: p[1] };
                let gv = g(p[0], p[1]).ok_or(undefined)?;
                let fv = f(p[0], p[1]).ok_or(AnalysisError::Evaluation { x: p[0], y: p[1] })?;
                out.push(p, w * area, gv, fv);
            }
        }
        Ok(out)
    }

    /// Indices of the samples inside `B_radius(center)`.
    fn select(&self, center: Point, radius: f64) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, &p)| dist(p, center) < radius)
            .map(|(i, _)| i)
            .collect()
    }

    /// `(avg of h^p)^(1/p)` over the selected samples.
    fn power_mean(&self, idx: &[usize], values: &[f64], p: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in idx {
            num += self.weights[i] * values[i].powf(p);
            den += self.weights[i];
        }
        (num / den).powf(1.0 / p)
    }
}

/// `(avg_{B_r} g^p)^(1/p) / [(avg_{B_2r} g^2)^(1/2) + (avg_{B_2r} f^p)^(1/p)]`.
pub fn reverse_holder_ratio(samples: &BallSamples, center: Point, radius: f64, p: f64) -> Result<f64, AnalysisError> {
    let small = samples.select(center, radius);
    let big = samples.select(center, 2.0 * radius);
    ratio_on(samples, &small, &big, p)
}

fn ratio_on(samples: &BallSamples, small: &[usize], big: &[usize], p: f64) -> Result<f64, AnalysisError> {
    if small.is_empty() || big.is_empty() {
        return Err(AnalysisError::EmptyRegion);
    }
    let num = samples.power_mean(small, &samples.g, p);
    if num == 0.0 {
        return Ok(0.0);
    }
    let den = samples.power_mean(big, &samples.g, 2.0) + samples.power_mean(big, &samples.f, p);
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhScanResult {
    pub p_grid: Vec<f64>,
    /// Largest ratio over all balls, per exponent.
    pub max_ratio: Vec<f64>,
    /// Ball `(center, radius)` attaining each maximum.
    pub argmax: Vec<(Point, f64)>,
    /// Every scanned ball `(center, radius)`.
    pub balls: Vec<(Point, f64)>,
    /// `ratios[p][ball]`, indexed like `balls`.
    pub ratios: Vec<Vec<f64>>,
    /// Largest `p` up to which every max ratio stays below
    /// [`RH_BLOWUP_FACTOR`] times the first one.
    pub p_star: f64,
}

/// Reverse Hölder ratios for every ball `B_r(c)` and every `p` in the grid.
pub fn reverse_holder_scan(
    samples: &BallSamples,
    centers: &[Point],
    radii: &[f64],
    p_grid: &[f64],
) -> Result<RhScanResult, AnalysisError> {
    let balls: Vec<(Point, f64)> = centers
        .iter()
        .flat_map(|&c| radii.iter().map(move |&r| (c, r)))
        .collect();
    reverse_holder_scan_balls(samples, &balls, p_grid)
}

/// [`reverse_holder_scan`] over an explicit list of balls.
pub fn reverse_holder_scan_balls(
    samples: &BallSamples,
    balls: &[(Point, f64)],
    p_grid: &[f64],
) -> Result<RhScanResult, AnalysisError> {
    if p_grid.is_empty() || p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::InvalidArgument(
            "p grid must be nonempty and increasing".into(),
        ));
    }
    if balls.is_empty() || balls.iter().any(|b| !(b.1 > 0.0)) {
        return Err(AnalysisError::InvalidArgument("need balls with positive radii".into()));
    }
    // per_ball[ball][p]
    let per_ball = balls
        .par_iter()
        .map(|&(c, r)| {
            let small = samples.select(c, r);
            let big = samples.select(c, 2.0 * r);
            p_grid
                .iter()
                .map(|&p| ratio_on(samples, &small, &big, p))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let ratios: Vec<Vec<f64>> = (0..p_grid.len())
        .map(|k| per_ball.iter().map(|row| row[k]).collect())
        .collect();
    let mut max_ratio = Vec::with_capacity(p_grid.len());
    let mut argmax = Vec::with_capacity(p_grid.len());
    for row in &ratios {
        let (best, v) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        max_ratio.push(v);
        argmax.push(balls[best]);
    }
    let reference = max_ratio[0];
    let mut p_star = p_grid[0];
    for (&p, &m) in p_grid.iter().zip(&max_ratio) {
        if m < RH_BLOWUP_FACTOR * reference {
            p_star = p;
        } else {
            break;
        }
    }
    Ok(RhScanResult {
        p_grid: p_grid.to_vec(),
        max_ratio,
        argmax,
        balls: balls.to_vec(),
        ratios,
        p_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientField;
    use crate::fem::assemble_stiffness;
    use crate::mesh::{build_disk_mesh, build_square_mesh};

    fn linear_solution<'a>(mesh: &'a MeshTri, field: &'a CoefficientField) -> FemSolution<'a> {
        let coeffs = mesh.vertices.iter().map(|v| v.x).collect();
        FemSolution::new(mesh, field, coeffs).unwrap()
    }

    #[test]
    fn unit_gradient_norm_is_area_power() {
        let mesh = build_square_mesh(8).unwrap();
        let id = CoefficientField::identity();
        let sol = linear_solution(&mesh, &id);
        let whole = lp_norm_gradient(GradSource::Fem(&sol), &Region::Whole, 3.0, 3).unwrap();
        assert!((whole - 1.0).abs() < 1e-12);
        // ball of radius 0.25 inside the square: area pi/16, cut elements
        // integrated by subdivision
        let ball = Region::Ball {
            center: [0.5, 0.5],
            radius: 0.25,
        };
        let v = lp_norm_gradient(GradSource::Fem(&sol), &ball, 2.0, 3).unwrap();
        assert!((v * v - PI / 16.0).abs() < 2e-3, "{}", v * v);
    }

    #[test]
    fn oracle_annulus_closed_form() {
        let o = OracleSolution::new(0.5).unwrap();
        let region = Region::Annulus { r_in: 0.25, r_out: 0.5 };
        let v = lp_norm_gradient(GradSource::Oracle(o), &region, 2.0, 3).unwrap();
        assert!((v - (0.3125 * PI).sqrt()).abs() < 1e-12);
        assert!((v - 0.9908).abs() < 1e-4);
    }

    #[test]
    fn energy_norm_matches_stiffness() {
        let mesh = build_disk_mesh(3, 16, 1.5).unwrap();
        let id = CoefficientField::identity();
        let coeffs: Vec<f64> = mesh.vertices.iter().map(|v| (3.0 * v.x).sin() + v.y * v.y).collect();
        let k = assemble_stiffness(&mesh, &id, 3).unwrap();
        let energy = k.sym.quadratic_form(&coeffs);
        let sol = FemSolution::new(&mesh, &id, coeffs).unwrap();
        let v = gradient_power_integral(GradSource::Fem(&sol), &Region::Whole, 2.0, 3).unwrap();
        assert!((v - energy).abs() < 1e-10 * energy.max(1.0));
    }

    #[test]
    fn empty_region_is_an_error() {
        let mesh = build_square_mesh(4).unwrap();
        let id = CoefficientField::identity();
        let sol = linear_solution(&mesh, &id);
        let far = Region::Ball {
            center: [5.0, 5.0],
            radius: 0.1,
        };
        assert!(matches!(
            gradient_power_integral(GradSource::Fem(&sol), &far, 2.0, 3),
            Err(AnalysisError::EmptyRegion)
        ));
        assert!(gradient_power_integral(GradSource::Fem(&sol), &Region::Whole, 0.5, 3).is_err());
    }

    #[test]
    fn critical_exponent_gives_constant_shells() {
        let o = OracleSolution::new(0.5).unwrap();
        let radii = dyadic_radii(2, 8);
        let s = annulus_scan(GradSource::Oracle(o), 4.0, &radii, 3).unwrap();
        let (_, shells) = s.shells();
        for w in shells.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 1e-10);
        }
        assert!(s.values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn pure_powers_fit_exactly() {
        let radii = dyadic_radii(1, 10);
        let vals: Vec<f64> = radii.iter().map(|r| 3.0 * r.powf(-1.25)).collect();
        let fit = fit_exponent(&radii, &vals).unwrap();
        assert!((fit.slope + 1.25).abs() < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert_eq!(fit.r2, 1.0);
        assert_eq!(fit.n_points, 10);
    }

    #[test]
    fn constant_data_and_short_spans() {
        let radii = dyadic_radii(1, 8);
        let fit = fit_exponent(&radii, &[2.0; 8]).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        // 4 dyadic radii span 0.9 decades
        let short = dyadic_radii(1, 4);
        assert!(matches!(
            fit_exponent(&short, &[1.0; 4]),
            Err(AnalysisError::DegenerateFit(_))
        ));
        assert!(fit_exponent(&radii[..3], &[1.0; 3]).is_err());
        assert!(fit_exponent(&radii, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn thresholds_of_the_example() {
        for (mu, target) in [(0.5, 4.0), (0.75, 8.0)] {
            let o = OracleSolution::new(mu).unwrap();
            let grid = linear_grid(2.0, target + 2.0, 0.25);
            let scan = integrability_threshold(GradSource::Oracle(o), &grid, &dyadic_radii(2, 10), 3).unwrap();
            assert_eq!(scan.p_star, target);
        }
    }

    #[test]
    fn holder_exponent_of_oracle_and_linear() {
        let o = OracleSolution::new(0.3).unwrap();
        let est = holder_exponent(ValueSource::Oracle(o), &dyadic_radii(2, 10), 64).unwrap();
        assert!((est.alpha - 0.3).abs() < 1e-10);
        let lin = |x: f64, y: f64| Some(2.0 * x - y);
        let est = holder_exponent(ValueSource::Analytic(&lin), &dyadic_radii(2, 10), 64).unwrap();
        assert!((est.alpha - 1.0).abs() < 1e-10);
    }

    #[test]
    fn galerkin_energy_ratio_is_one() {
        let mesh = build_disk_mesh(3, 16, 1.0).unwrap();
        let id = CoefficientField::identity();
        let v: Vec<f64> = mesh
            .vertices
            .iter()
            .map(|p| if p.on_boundary { 0.0 } else { 1.0 - p.x * p.x - p.y * p.y })
            .collect();
        let vh = FemSolution::new(&mesh, &id, v).unwrap();
        let geo = mesh.geometries().unwrap();
        let grads: Vec<[f64; 2]> = (0..mesh.n_triangles()).map(|t| vh.element_gradient(t)).collect();
        let locate = |x: f64, y: f64| {
            mesh.triangles.iter().position(|t| point_in_triangle([x, y], &mesh.corners(t)))
        };
        let f = |x: f64, y: f64| locate(x, y).map(|t| grads[t]);
        let (sol, _) = crate::fem::solve_problem(&mesh, &id, &f, &|_, _| 0.0, &Default::default()).unwrap();
        for (a, b) in sol.coeffs.iter().zip(&vh.coeffs) {
            assert!((a - b).abs() < 1e-8);
        }
        let ratio = energy_ratio(&sol, &f, 1).unwrap();
        assert!((ratio - 1.0).abs() < 1e-8, "{ratio}");
        assert!(geo.len() == mesh.n_triangles());
        assert!(matches!(energy_ratio(&sol, &|_, _| Some([0.0, 0.0]), 3), Err(AnalysisError::ZeroRhs)));
    }

    #[test]
    fn caccioppoli_of_constant_is_zero() {
        let mesh = build_disk_mesh(6, 32, 1.0).unwrap();
        let id = CoefficientField::identity();
        let sol = FemSolution::new(&mesh, &id, vec![2.0; mesh.n_vertices()]).unwrap();
        let c = caccioppoli_ratio(&sol, &|_, _| Some([0.0, 0.0]), [0.2, 0.1], 0.3, 1.5, 0.0).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.ratio, 0.0);
        assert!((c.mean - 2.0).abs() < 1e-12);
        assert!(matches!(
            caccioppoli_ratio(&sol, &|_, _| Some([0.0, 0.0]), [0.2, 0.1], 1e-4, 1.5, 0.0),
            Err(AnalysisError::RegionTooSmall { .. })
        ));
    }

    #[test]
    fn reverse_holder_of_constant_is_one() {
        let mut s = BallSamples::default();
        for i in 0..40 {
            for j in 0..40 {
                s.push([-1.0 + i as f64 / 20.0, -1.0 + j as f64 / 20.0], 1.0, 3.0, 0.0);
            }
        }
        let res = reverse_holder_scan(&s, &[[0.0, 0.0], [0.1, -0.2]], &[0.25, 0.125], &linear_grid(2.0, 8.0, 1.0)).unwrap();
        for row in &res.ratios {
            for r in row {
                assert!((r - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(res.p_star, 8.0);
        assert!(matches!(
            reverse_holder_ratio(&s, [9.0, 9.0], 0.1, 2.0),
            Err(AnalysisError::EmptyRegion)
        ));
    }
}
