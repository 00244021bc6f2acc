//! Finite-element laboratory for `div(A grad u) = div F` on planar domains,
//! where `A` is a symmetric elliptic matrix plus a possibly discontinuous
//! skew-symmetric part.
//!
//! * [`mesh`]: graded disk and square triangulations.
//! * [`coeff`]: coefficient fields, the `arctan` drift example with its exact
//!   solution `u = r^mu cos(theta)`, and a sampled BMO seminorm.
//! * [`fem`]: P1 assembly, Dirichlet elimination, restarted GMRES.
//! * [`analysis`]: gradient `L^p` norms, integrability and Hölder exponent
//!   estimates, energy and Caccioppoli ratios, reverse Hölder scans.

pub mod analysis;
pub mod coeff;
pub mod fem;
pub mod mesh;
pub mod quadrature;
pub mod studies;

/// A point of the plane.
pub type Point = [f64; 2];

pub use coeff::{CoefficientField, OracleSolution};
pub use fem::{CsrMatrix, FemSolution, LinearSolveReport};
pub use mesh::MeshTri;
