//! Coefficient fields `A = a + d` with a symmetric elliptic part `a` and a
//! skew-symmetric part `d`, the discontinuous-drift example family and its
//! closed-form solution, and a sampled BMO seminorm estimator.
//!
//! In two dimensions the skew part is `[[0, d], [-d, 0]]` and is carried as
//! the scalar `d`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Point;

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoeffError {
    #[error("coefficient undefined at the origin")]
    UndefinedAtOrigin,
    #[error("example parameter mu must lie in (0, 1), got {0}")]
    InvalidMu(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("field undefined on {undefined} of {total} quadrature points of the ball centered at ({cx}, {cy}) with radius {radius}")]
    EvaluationFailure {
        cx: f64,
        cy: f64,
        radius: f64,
        undefined: usize,
        total: usize,
    },
    #[error("ellipticity violated at ({x}, {y}): {reason}")]
    Ellipticity { x: f64, y: f64, reason: String },
}

/// Symmetric 2x2 matrix stored by its three independent entries, so that
/// `a12 == a21` holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymMat2 {
    pub const IDENTITY: Self = Self {
        a11: 1.0,
        a12: 0.0,
        a22: 1.0,
    };

    pub fn to_matrix(self) -> Mat2 {
        [[self.a11, self.a12], [self.a12, self.a22]]
    }

    pub fn eigenvalues(self) -> (f64, f64) {
        let mean = 0.5 * (self.a11 + self.a22);
        let rad = (0.5 * (self.a11 - self.a22)).hypot(self.a12);
        (mean - rad, mean + rad)
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a12 * v[0] + self.a22 * v[1],
        ]
    }
}

/// `C_mu = (mu^2 - 1) / mu`.
pub fn example_constant(mu: f64) -> f64 {
    (mu * mu - 1.0) / mu
}

/// `sup |d| = pi (1 - mu^2) / (2 mu)` for the example family.
pub fn example_sup_norm(mu: f64) -> f64 {
    PI * (1.0 - mu * mu) / (2.0 * mu)
}

fn check_mu(mu: f64) -> Result<(), CoeffError> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(CoeffError::InvalidMu(mu))
    }
}

/// Skew coefficient of the example family: `C_mu arctan(y / x)` off the
/// y-axis and `C_mu (pi / 2) sgn(y)` on it.
pub fn eval_example_d(x: f64, y: f64, mu: f64) -> Result<f64, CoeffError> {
    check_mu(mu)?;
    example_d_unchecked(x, y, mu)
}

fn example_d_unchecked(x: f64, y: f64, mu: f64) -> Result<f64, CoeffError> {
    let c = example_constant(mu);
    if x != 0.0 {
        Ok(c * (y / x).atan())
    } else if y != 0.0 {
        Ok(c * 0.5 * PI * y.signum())
    } else {
        Err(CoeffError::UndefinedAtOrigin)
    }
}

pub type SymFn = Arc<dyn Fn(f64, f64) -> SymMat2 + Send + Sync>;
pub type SkewFn = Arc<dyn Fn(f64, f64) -> Option<f64> + Send + Sync>;

#[derive(Clone)]
pub enum FieldKind {
    Identity,
    Example { mu: f64 },
    Custom { sym: SymFn, skew: SkewFn },
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Identity => write!(f, "Identity"),
            FieldKind::Example { mu } => f.debug_struct("Example").field("mu", mu).finish(),
            FieldKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Evaluator for `a(x, y)`, `d(x, y)` and `A(x, y)` together with the
/// ellipticity constant `Lambda`.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    kind: FieldKind,
    lambda: f64,
    singular_point: Option<Point>,
}

impl CoefficientField {
    pub fn identity() -> Self {
        Self {
            kind: FieldKind::Identity,
            lambda: 1.0,
            singular_point: None,
        }
    }

    /// `A = I + [[0, d], [-d, 0]]` with `d = C_mu arctan(y / x)`. The quadratic
    /// form equals `|xi|^2`, so `Lambda = 1`.
    pub fn example(mu: f64) -> Result<Self, CoeffError> {
        check_mu(mu)?;
        Ok(Self {
            kind: FieldKind::Example { mu },
            lambda: 1.0,
            singular_point: Some([0.0, 0.0]),
        })
    }

    /// User-supplied parts. `skew` returns `None` where it is undefined;
    /// `singular_point` marks a vertex location where element quadrature must
    /// fall back to the centroid rule.
    pub fn custom(lambda: f64, sym: SymFn, skew: SkewFn, singular_point: Option<Point>) -> Result<Self, CoeffError> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(CoeffError::InvalidArgument(format!(
                "ellipticity constant must lie in (0, 1], got {lambda}"
            )));
        }
        Ok(Self {
            kind: FieldKind::Custom { sym, skew },
            lambda,
            singular_point,
        })
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> Option<f64> {
        match self.kind {
            FieldKind::Example { mu } => Some(mu),
            _ => None,
        }
    }

    pub fn singular_point(&self) -> Option<Point> {
        self.singular_point
    }

    pub fn has_skew_part(&self) -> bool {
        !matches!(self.kind, FieldKind::Identity)
    }

    pub fn sym_part(&self, x: f64, y: f64) -> SymMat2 {
        match &self.kind {
            FieldKind::Identity | FieldKind::Example { .. } => SymMat2::IDENTITY,
            FieldKind::Custom { sym, .. } => sym(x, y),
        }
    }

    pub fn skew_scalar(&self, x: f64, y: f64) -> Result<f64, CoeffError> {
        match &self.kind {
            FieldKind::Identity => Ok(0.0),
            FieldKind::Example { mu } => example_d_unchecked(x, y, *mu),
            FieldKind::Custom { skew, .. } => skew(x, y).ok_or(CoeffError::UndefinedAtOrigin),
        }
    }

    /// Full matrix `A = a + [[0, d], [-d, 0]]`.
    pub fn eval_matrix(&self, x: f64, y: f64) -> Result<Mat2, CoeffError> {
        let a = self.sym_part(x, y);
        let d = self.skew_scalar(x, y)?;
        Ok([[a.a11, a.a12 + d], [a.a12 - d, a.a22]])
    }

    /// `A(x, y) v`.
    pub fn apply(&self, x: f64, y: f64, v: [f64; 2]) -> Result<[f64; 2], CoeffError> {
        let m = self.eval_matrix(x, y)?;
        Ok([m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]])
    }

    /// Checks `Lambda |xi|^2 <= <a xi, xi>` and `|a| <= 1 / Lambda` at the
    /// given sample points (points where `d` is undefined are skipped).
    pub fn check_ellipticity(&self, points: &[Point]) -> Result<(), CoeffError> {
        for &[x, y] in points {
            let a = self.sym_part(x, y);
            let (lo, hi) = a.eigenvalues();
            if lo < self.lambda * (1.0 - 1e-12) {
                return Err(CoeffError::Ellipticity {
                    x,
                    y,
                    reason: format!("smallest eigenvalue {lo} below Lambda = {}", self.lambda),
                });
            }
            if hi.abs().max(lo.abs()) > (1.0 / self.lambda) * (1.0 + 1e-12) {
                return Err(CoeffError::Ellipticity {
                    x,
                    y,
                    reason: format!("norm {hi} above 1 / Lambda = {}", 1.0 / self.lambda),
                });
            }
        }
        Ok(())
    }
}

/// Closed-form weak solution `u = x (x^2 + y^2)^((mu - 1) / 2) = r^mu cos(theta)`
/// of `div(A grad u) = 0` for the example coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    mu: f64,
}

impl OracleSolution {
    pub fn new(mu: f64) -> Result<Self, CoeffError> {
        check_mu(mu)?;
        Ok(Self { mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn value(&self, x: f64, y: f64) -> Result<f64, CoeffError> {
        let rr = x * x + y * y;
        if rr == 0.0 {
            return Err(CoeffError::UndefinedAtOrigin);
        }
        Ok(x * rr.powf(0.5 * (self.mu - 1.0)))
    }

    pub fn gradient(&self, x: f64, y: f64) -> Result<[f64; 2], CoeffError> {
        let rr = x * x + y * y;
        if rr == 0.0 {
            return Err(CoeffError::UndefinedAtOrigin);
        }
        let m = self.mu;
        let s = rr.powf(0.5 * (m - 3.0));
        Ok([s * (rr + (m - 1.0) * x * x), s * (m - 1.0) * x * y])
    }

    /// Value and gradient together.
    pub fn eval(&self, x: f64, y: f64) -> Result<(f64, [f64; 2]), CoeffError> {
        Ok((self.value(x, y)?, self.gradient(x, y)?))
    }

    /// Boundary data `u = cos(theta)` on the unit circle; extends to the whole
    /// plane as the oracle itself (zero at the origin).
    pub fn value_or_zero(&self, x: f64, y: f64) -> f64 {
        self.value(x, y).unwrap_or(0.0)
    }
}

/// Sampled estimate of the BMO seminorm: the largest mean oscillation over the
/// probed balls, a lower bound for the true supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmoEstimate {
    pub value: f64,
    pub argmax_center: Point,
    pub argmax_radius: f64,
    pub n_centers: usize,
    pub n_scales: usize,
    pub n_balls: usize,
    pub quadrature_points_per_ball: usize,
}

/// Fraction of undefined quadrature points above which a ball is rejected.
const UNDEFINED_FRACTION: f64 = 1e-3;

/// Mean oscillation `(1/|B|) int_B |f - mean_B f|` on one ball, using the
/// midpoint rule on a polar `quad_n x quad_n` grid.
pub fn mean_oscillation<F>(field: &F, center: Point, radius: f64, quad_n: usize) -> Result<f64, CoeffError>
where
    F: Fn(f64, f64) -> Option<f64> + ?Sized,
{
    let dr = radius / quad_n as f64;
    let dt = 2.0 * PI / quad_n as f64;
    let mut samples = Vec::with_capacity(quad_n * quad_n);
    let mut undefined = 0usize;
    for i in 0..quad_n {
        let r = (i as f64 + 0.5) * dr;
        // exact cell area r dr dtheta for the midpoint radius
        let w = r * dr * dt;
        for j in 0..quad_n {
            let t = (j as f64 + 0.5) * dt;
            let (x, y) = (center[0] + r * t.cos(), center[1] + r * t.sin());
            match field(x, y) {
                Some(v) if v.is_finite() => samples.push((w, v)),
                _ => undefined += 1,
            }
        }
    }
    let total = quad_n * quad_n;
    if undefined as f64 > UNDEFINED_FRACTION * total as f64 || samples.is_empty() {
        return Err(CoeffError::EvaluationFailure {
            cx: center[0],
            cy: center[1],
            radius,
            undefined,
            total,
        });
    }
    let wsum: f64 = samples.iter().map(|s| s.0).sum();
    // shifting by one sample keeps constant fields exactly at zero oscillation
    let shift = samples[0].1;
    let mean = shift + samples.iter().map(|&(w, v)| w * (v - shift)).sum::<f64>() / wsum;
    Ok(samples.iter().map(|&(w, v)| w * (v - mean).abs()).sum::<f64>() / wsum)
}

/// Maximum mean oscillation over every `(center, radius)` pair.
pub fn bmo_seminorm<F>(field: &F, centers: &[Point], radii: &[f64], quad_n: usize) -> Result<BmoEstimate, CoeffError>
where
    F: Fn(f64, f64) -> Option<f64> + Sync + ?Sized,
{
    if quad_n < 64 {
        return Err(CoeffError::InvalidArgument(format!(
            "quad_n must be at least 64, got {quad_n}"
        )));
    }
    if centers.is_empty() || radii.is_empty() {
        return Err(CoeffError::InvalidArgument("no balls to sample".into()));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(CoeffError::InvalidArgument(format!("radius {r} is not positive")));
    }

    let balls: Vec<(Point, f64)> = centers
        .iter()
        .flat_map(|&c| radii.iter().map(move |&r| (c, r)))
        .collect();
    let oscillations: Vec<f64> = balls
        .par_iter()
        .map(|&(c, r)| mean_oscillation(field, c, r, quad_n))
        .collect::<Result<_, _>>()?;

    // first maximum wins, so the argmax does not depend on scheduling
    let (best, value) = oscillations
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });

    Ok(BmoEstimate {
        value,
        argmax_center: balls[best].0,
        argmax_radius: balls[best].1,
        n_centers: centers.len(),
        n_scales: radii.len(),
        n_balls: balls.len(),
        quadrature_points_per_ball: quad_n * quad_n,
    })
}

/// `grid x grid` centers on `[-1, 1]^2` and dyadic radii `2^0 .. 2^-min_exp`.
pub fn default_bmo_sampling(grid: usize, min_exp: u32) -> (Vec<Point>, Vec<f64>) {
    let coord = |i: usize| {
        if grid == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (grid - 1) as f64
        }
    };
    let centers = (0..grid)
        .flat_map(|j| (0..grid).map(move |i| [coord(i), coord(j)]))
        .collect();
    let radii = (0..=min_exp).map(|k| 0.5f64.powi(k as i32)).collect();
    (centers, radii)
}
