//! Conforming triangulations of the unit disk and the unit square.
//!
//! Disk meshes are built from concentric vertex rings at radii
//! `r_k = (k / K)^grading` joined by `n_sectors` rays. Because the sector
//! count is a multiple of four, two of those rays run along the positive and
//! negative y-axis, so no triangle has vertices on both sides of `x = 0`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Point;

/// Area below which an element is treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-14;

const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate element {index}: area {area:e}")]
    DegenerateElement { index: usize, area: f64 },
    #[error("mesh invariant violated: {0}")]
    Invariant(String),
    #[error("malformed mesh file at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
    pub on_boundary: bool,
}

impl Vertex {
    pub fn point(&self) -> Point {
        [self.x, self.y]
    }
}

/// Counterclockwise vertex indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triangle(pub [usize; 3]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Unit disk centered at the origin; boundary midpoints are projected
    /// back onto the circle during refinement.
    Disk,
    /// The square `[0, 1]^2`.
    Square,
    /// Read from a file; refinement does no boundary projection.
    Imported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshTri {
    pub vertices: Vec<Vertex>,
    pub triangles: Vec<Triangle>,
    pub domain: Domain,
    pub grading: f64,
    pub level: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    /// Constant gradients of the three barycentric basis functions.
    pub grad_basis: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn from_points(p: &[Point; 3]) -> Option<Self> {
        let twice = signed_twice_area(p);
        let area = 0.5 * twice;
        if area <= DEGENERATE_AREA {
            return None;
        }
        let inv = 1.0 / twice;
        let grad_basis = [
            [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
            [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
            [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
        ];
        Some(Self { area, grad_basis })
    }
}

fn signed_twice_area(p: &[Point; 3]) -> f64 {
    (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])
}

/// `(cos, sin)` of `2 pi j / n` with exact values on the coordinate axes.
/// Requires `n % 4 == 0`.
fn axis_exact_direction(j: usize, n: usize) -> (f64, f64) {
    let quarter = n / 4;
    let (q, m) = (j / quarter, j % quarter);
    let phi = 2.0 * PI * m as f64 / n as f64;
    let (c, s) = if m == 0 { (1.0, 0.0) } else { (phi.cos(), phi.sin()) };
    match q % 4 {
        0 => (c, s),
        1 => (-s, c),
        2 => (-c, -s),
        _ => (s, -c),
    }
}

/// Ring/sector mesh of the unit disk, graded toward the origin.
pub fn build_disk_mesh(
    n_rings: usize,
    n_sectors: usize,
    grading: f64,
) -> Result<MeshTri, MeshError> {
    if n_rings < 2 {
        return Err(MeshError::InvalidArgument(format!(
            "n_rings must be at least 2, got {n_rings}"
        )));
    }
    if n_sectors < 8 || n_sectors % 4 != 0 {
        return Err(MeshError::InvalidArgument(format!(
            "n_sectors must be a multiple of 4 and at least 8, got {n_sectors}"
        )));
    }
    if !(grading >= 1.0) || !grading.is_finite() {
        return Err(MeshError::InvalidArgument(format!(
            "grading must be a finite value >= 1, got {grading}"
        )));
    }

    let mut vertices = Vec::with_capacity(1 + n_rings * n_sectors);
    vertices.push(Vertex {
        x: 0.0,
        y: 0.0,
        on_boundary: false,
    });
    for k in 1..=n_rings {
        let r = if k == n_rings {
            1.0
        } else {
            (k as f64 / n_rings as f64).powf(grading)
        };
        for j in 0..n_sectors {
            let (c, s) = axis_exact_direction(j, n_sectors);
            vertices.push(Vertex {
                x: r * c,
                y: r * s,
                on_boundary: k == n_rings,
            });
        }
    }

    let idx = |k: usize, j: usize| 1 + (k - 1) * n_sectors + (j % n_sectors);
    let mut triangles = Vec::with_capacity(n_sectors * (2 * n_rings - 1));
    for j in 0..n_sectors {
        triangles.push(Triangle([0, idx(1, j), idx(1, j + 1)]));
    }
    for k in 2..=n_rings {
        for j in 0..n_sectors {
            let (a, b) = (idx(k - 1, j), idx(k - 1, j + 1));
            let (c, d) = (idx(k, j), idx(k, j + 1));
            triangles.push(Triangle([a, c, d]));
            triangles.push(Triangle([a, d, b]));
        }
    }

    Ok(MeshTri {
        vertices,
        triangles,
        domain: Domain::Disk,
        grading,
        level: 0,
    })
}

/// Uniform mesh of `[0, 1]^2` with `n x n` cells, each cut along its diagonal.
pub fn build_square_mesh(n: usize) -> Result<MeshTri, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidArgument("n must be positive".into()));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vertex {
                x: i as f64 * h,
                y: j as f64 * h,
                on_boundary: i == 0 || j == 0 || i == n || j == n,
            });
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push(Triangle([a, b, c]));
            triangles.push(Triangle([a, c, d]));
        }
    }
    Ok(MeshTri {
        vertices,
        triangles,
        domain: Domain::Square,
        grading: 1.0,
        level: 0,
    })
}

/// Map from undirected edge `(min, max)` to the number of incident triangles.
fn edge_counts(triangles: &[Triangle]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::with_capacity(triangles.len() * 2);
    for t in triangles {
        for (a, b) in edges_of(t) {
            *counts.entry(ordered(a, b)).or_insert(0) += 1;
        }
    }
    counts
}

fn edges_of(t: &Triangle) -> [(usize, usize); 3] {
    let [a, b, c] = t.0;
    [(a, b), (b, c), (c, a)]
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Splits every triangle into four through its edge midpoints.
pub fn refine(mesh: &MeshTri) -> MeshTri {
    let counts = edge_counts(&mesh.triangles);
    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(counts.len());
    let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);

    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vertex>| -> usize {
        let key = ordered(a, b);
        if let Some(&m) = midpoints.get(&key) {
            return m;
        }
        let (va, vb) = (vertices[a], vertices[b]);
        let boundary_edge = counts.get(&key) == Some(&1);
        let mut x = 0.5 * (va.x + vb.x);
        let mut y = 0.5 * (va.y + vb.y);
        if boundary_edge && mesh.domain == Domain::Disk {
            let r = x.hypot(y);
            x /= r;
            y /= r;
        }
        let m = vertices.len();
        vertices.push(Vertex {
            x,
            y,
            on_boundary: boundary_edge,
        });
        midpoints.insert(key, m);
        m
    };

    for t in &mesh.triangles {
        let [a, b, c] = t.0;
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        triangles.push(Triangle([a, ab, ca]));
        triangles.push(Triangle([ab, b, bc]));
        triangles.push(Triangle([ca, bc, c]));
        triangles.push(Triangle([ab, bc, ca]));
    }

    MeshTri {
        vertices,
        triangles,
        domain: mesh.domain,
        grading: mesh.grading,
        level: mesh.level + 1,
    }
}

pub fn element_geometry(mesh: &MeshTri, t: usize) -> Result<ElementGeometry, MeshError> {
    let tri = mesh
        .triangles
        .get(t)
        .ok_or_else(|| MeshError::InvalidArgument(format!("triangle index {t} out of range")))?;
    let corners = mesh.corners(tri);
    ElementGeometry::from_points(&corners).ok_or(MeshError::DegenerateElement {
        index: t,
        area: 0.5 * signed_twice_area(&corners),
    })
}

impl MeshTri {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: &Triangle) -> [Point; 3] {
        let [a, b, c] = t.0;
        [
            self.vertices[a].point(),
            self.vertices[b].point(),
            self.vertices[c].point(),
        ]
    }

    /// Geometry of every element, in triangle order.
    pub fn geometries(&self) -> Result<Vec<ElementGeometry>, MeshError> {
        (0..self.triangles.len())
            .map(|t| element_geometry(self, t))
            .collect()
    }

    /// Longest edge over all elements.
    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| edges_of(t))
            .map(|(a, b)| {
                let (va, vb) = (self.vertices[a], self.vertices[b]);
                (va.x - vb.x).hypot(va.y - vb.y)
            })
            .fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| 0.5 * signed_twice_area(&self.corners(t)))
            .sum()
    }

    /// Boundary edges oriented as they appear in their (counterclockwise)
    /// triangle, sorted for determinism.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let counts = edge_counts(&self.triangles);
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| edges_of(t))
            .filter(|&(a, b)| counts[&ordered(a, b)] == 1)
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Area enclosed by the boundary polygon (shoelace formula).
    pub fn polygon_area(&self) -> f64 {
        self.boundary_edges()
            .iter()
            .map(|&(a, b)| {
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                0.5 * (pa.x * pb.y - pb.x * pa.y)
            })
            .sum()
    }

    /// Checks every structural and geometric invariant of the mesh.
    pub fn validate(&self) -> Result<(), MeshError> {
        let nv = self.vertices.len();
        for (i, t) in self.triangles.iter().enumerate() {
            if t.0.iter().any(|&v| v >= nv) {
                return Err(MeshError::Invariant(format!(
                    "triangle {i} references a missing vertex"
                )));
            }
            let c = self.corners(t);
            let area = 0.5 * signed_twice_area(&c);
            if area <= 0.0 {
                return Err(MeshError::Invariant(format!(
                    "triangle {i} has non-positive signed area {area:e}"
                )));
            }
            let all_right = c.iter().all(|p| p[0] >= 0.0);
            let all_left = c.iter().all(|p| p[0] <= 0.0);
            if !(all_right || all_left) {
                return Err(MeshError::Invariant(format!(
                    "triangle {i} crosses the y-axis"
                )));
            }
        }

        let counts = edge_counts(&self.triangles);
        let mut on_boundary_edge = vec![false; nv];
        for (&(a, b), &n) in &counts {
            match n {
                1 => {
                    on_boundary_edge[a] = true;
                    on_boundary_edge[b] = true;
                }
                2 => {}
                _ => {
                    return Err(MeshError::Invariant(format!(
                        "edge ({a}, {b}) shared by {n} triangles"
                    )))
                }
            }
        }

        for (i, v) in self.vertices.iter().enumerate() {
            if v.on_boundary != on_boundary_edge[i] {
                return Err(MeshError::Invariant(format!(
                    "vertex {i} boundary flag {} disagrees with the topology",
                    v.on_boundary
                )));
            }
            let geometric = match self.domain {
                Domain::Disk => {
                    let rr = v.x * v.x + v.y * v.y;
                    if rr > 1.0 + 1e-12 {
                        return Err(MeshError::Invariant(format!(
                            "vertex {i} lies outside the unit disk"
                        )));
                    }
                    (rr - 1.0).abs() <= BOUNDARY_TOL
                }
                Domain::Square => {
                    let on = |s: f64| s.abs() <= BOUNDARY_TOL || (s - 1.0).abs() <= BOUNDARY_TOL;
                    on(v.x) || on(v.y)
                }
                Domain::Imported => v.on_boundary,
            };
            if geometric != v.on_boundary {
                return Err(MeshError::Invariant(format!(
                    "vertex {i} boundary flag {} disagrees with the geometry",
                    v.on_boundary
                )));
            }
        }

        let (sum, poly) = (self.total_area(), self.polygon_area());
        if (sum - poly).abs() > 1e-9 {
            return Err(MeshError::Invariant(format!(
                "element areas sum to {sum} but the boundary polygon encloses {poly}"
            )));
        }
        Ok(())
    }

    /// ASCII format: `nv nt`, then `x y flag` per vertex, then `i j k` per
    /// triangle (0-based).
    pub fn write_ascii<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.vertices.len(), self.triangles.len())?;
        for v in &self.vertices {
            writeln!(out, "{:?} {:?} {}", v.x, v.y, u8::from(v.on_boundary))?;
        }
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t.0[0], t.0[1], t.0[2])?;
        }
        Ok(())
    }

    pub fn read_ascii<R: BufRead>(input: R) -> Result<Self, MeshError> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, Vec<String>), MeshError> {
            let (i, line) = lines.next().ok_or_else(|| MeshError::Parse {
                line: 0,
                message: format!("unexpected end of file while reading {what}"),
            })?;
            Ok((
                i + 1,
                line?.split_whitespace().map(str::to_owned).collect(),
            ))
        };
        fn field<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, MeshError> {
            s.parse().map_err(|_| MeshError::Parse {
                line,
                message: format!("cannot parse {s:?}"),
            })
        }
        fn expect_len(line: usize, f: &[String], n: usize) -> Result<(), MeshError> {
            if f.len() != n {
                return Err(MeshError::Parse {
                    line,
                    message: format!("expected {n} fields, found {}", f.len()),
                });
            }
            Ok(())
        }

        let (ln, head) = next("header")?;
        expect_len(ln, &head, 2)?;
        let nv: usize = field(ln, &head[0])?;
        let nt: usize = field(ln, &head[1])?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, f) = next("vertex")?;
            expect_len(ln, &f, 3)?;
            let flag: u8 = field(ln, &f[2])?;
            vertices.push(Vertex {
                x: field(ln, &f[0])?,
                y: field(ln, &f[1])?,
                on_boundary: flag != 0,
            });
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, f) = next("triangle")?;
            expect_len(ln, &f, 3)?;
            triangles.push(Triangle([
                field(ln, &f[0])?,
                field(ln, &f[1])?,
                field(ln, &f[2])?,
            ]));
        }
        Ok(MeshTri {
            vertices,
            triangles,
            domain: Domain::Imported,
            grading: 1.0,
            level: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_vertex_count_matches_ring_formula() {
        let mesh = build_disk_mesh(2, 8, 1.0).unwrap();
        assert_eq!(mesh.n_vertices(), 17);
        assert_eq!(mesh.n_triangles(), 8 * 3);
        mesh.validate().unwrap();
        for t in &mesh.triangles {
            let c = mesh.corners(t);
            assert!(c.iter().all(|p| p[0] >= 0.0) || c.iter().all(|p| p[0] <= 0.0));
        }
    }

    #[test]
    fn graded_inner_ring_radius() {
        let mesh = build_disk_mesh(4, 16, 2.0).unwrap();
        let r = mesh.vertices[1].x.hypot(mesh.vertices[1].y);
        assert!((r - 0.0625).abs() < 1e-15);
        mesh.validate().unwrap();
    }

    #[test]
    fn rejects_bad_sector_counts() {
        assert!(matches!(
            build_disk_mesh(3, 10, 1.0),
            Err(MeshError::InvalidArgument(_))
        ));
        assert!(build_disk_mesh(1, 8, 1.0).is_err());
        assert!(build_disk_mesh(3, 4, 1.0).is_err());
        assert!(build_disk_mesh(3, 8, 0.5).is_err());
    }

    #[test]
    fn y_axis_vertices_are_exact() {
        let mesh = build_disk_mesh(3, 12, 1.5).unwrap();
        let on_axis = mesh.vertices.iter().filter(|v| v.x == 0.0).count();
        // center + two rays of three vertices
        assert_eq!(on_axis, 7);
    }

    #[test]
    fn refine_quadruples_and_projects_boundary() {
        let mesh = build_disk_mesh(3, 8, 1.0).unwrap();
        let fine = refine(&mesh);
        assert_eq!(fine.n_triangles(), 4 * mesh.n_triangles());
        assert_eq!(fine.level, 1);
        fine.validate().unwrap();
        for v in fine.vertices.iter().filter(|v| v.on_boundary) {
            assert!((v.x * v.x + v.y * v.y - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn reference_element_geometry() {
        let g = ElementGeometry::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(g.area, 0.5);
        assert_eq!(g.grad_basis, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);

        let g2 = ElementGeometry::from_points(&[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(g2.area, 4.0 * g.area);
        for k in 0..3 {
            for c in 0..2 {
                assert_eq!(g2.grad_basis[k][c], 0.5 * g.grad_basis[k][c]);
            }
        }
    }

    #[test]
    fn degenerate_element_is_reported() {
        let mut mesh = build_square_mesh(1).unwrap();
        // collapse triangle 0 onto the bottom edge
        mesh.vertices[3] = Vertex {
            x: 0.5,
            y: 0.0,
            on_boundary: true,
        };
        assert!(matches!(
            element_geometry(&mesh, 0),
            Err(MeshError::DegenerateElement { index: 0, .. })
        ));
    }

    #[test]
    fn square_mesh_is_valid() {
        let mesh = build_square_mesh(4).unwrap();
        mesh.validate().unwrap();
        assert!((mesh.total_area() - 1.0).abs() < 1e-14);
        let fine = refine(&mesh);
        fine.validate().unwrap();
        assert!((fine.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ascii_round_trip() {
        let mesh = refine(&build_disk_mesh(2, 8, 1.3).unwrap());
        let mut buf = Vec::new();
        mesh.write_ascii(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("{} {}\n", mesh.n_vertices(), mesh.n_triangles())));
        let back = MeshTri::read_ascii(&buf[..]).unwrap();
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.triangles, mesh.triangles);
        back.validate().unwrap();
    }

    #[test]
    fn malformed_file_is_rejected() {
        let err = MeshTri::read_ascii("2 1\n0 0 1\n1 0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 3, .. }));
    }
}
