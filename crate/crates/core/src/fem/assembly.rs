//! P1 assembly of the bilinear form `B(u, v) = int <A grad u, grad v>`, the
//! divergence-form load `int F . grad v`, Dirichlet elimination and weak
//! residuals of analytic candidate solutions.

use crate::coeff::CoefficientField;
use crate::mesh::{element_geometry, MeshTri, Triangle};
use crate::quadrature::TriangleRule;
use crate::Point;

use super::sparse::CsrMatrix;
use super::FemError;

/// Assembled stiffness `K = K_sym + K_skew`. All three matrices share one
/// sparsity pattern; `skew` is exactly antisymmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Stiffness {
    pub matrix: CsrMatrix,
    pub sym: CsrMatrix,
    pub skew: CsrMatrix,
}

/// Quadrature selection: the requested rule everywhere except on elements
/// with a vertex at the coefficient's singular point, which use the centroid.
#[derive(Debug, Clone)]
pub struct ElementRules {
    regular: TriangleRule,
    centroid: TriangleRule,
    singular_point: Option<Point>,
}

impl ElementRules {
    pub fn new(quad_order: usize, singular_point: Option<Point>) -> Result<Self, FemError> {
        let regular = TriangleRule::with_points(quad_order).ok_or_else(|| {
            FemError::InvalidArgument(format!(
                "quadrature order must be 1, 3 or 6, got {quad_order}"
            ))
        })?;
        Ok(Self {
            regular,
            centroid: TriangleRule::centroid(),
            singular_point,
        })
    }

    pub fn for_element(&self, corners: &[Point; 3]) -> &TriangleRule {
        match self.singular_point {
            Some(s) if corners.iter().any(|c| (c[0] - s[0]).hypot(c[1] - s[1]) <= 1e-14) => {
                &self.centroid
            }
            _ => &self.regular,
        }
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn local_pairs(t: &Triangle) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
    (0..3).flat_map(move |a| (0..3).map(move |b| (a, b, t.0[a], t.0[b])))
}

pub fn assemble_stiffness(
    mesh: &MeshTri,
    field: &CoefficientField,
    quad_order: usize,
) -> Result<Stiffness, FemError> {
    let rules = ElementRules::new(quad_order, field.singular_point())?;
    let n = mesh.n_vertices();
    let nt = mesh.n_triangles();
    let mut sym_t = Vec::with_capacity(9 * nt);
    let mut skew_t = Vec::with_capacity(9 * nt);

    for (ti, t) in mesh.triangles.iter().enumerate() {
        let geo = element_geometry(mesh, ti)?;
        let corners = mesh.corners(t);
        let rule = rules.for_element(&corners);
        let g = geo.grad_basis;

        // element-averaged a (symmetric) and d (scalar)
        let (mut a11, mut a12, mut a22, mut d) = (0.0, 0.0, 0.0, 0.0);
        for (p, w) in rule.map(&corners) {
            let a = field.sym_part(p[0], p[1]);
            a11 += w * a.a11;
            a12 += w * a.a12;
            a22 += w * a.a22;
            if field.has_skew_part() {
                d += w * field
                    .skew_scalar(p[0], p[1])
                    .map_err(|e| FemError::Coefficient { x: p[0], y: p[1], source: e })?;
            }
        }
        let area = geo.area;

        for (a, b, i, j) in local_pairs(t) {
            let ga = g[a];
            let gb = g[b];
            let s = area
                * (ga[0] * (a11 * gb[0] + a12 * gb[1]) + ga[1] * (a12 * gb[0] + a22 * gb[1]));
            sym_t.push((i, j, s));
            // <D grad phi_b, grad phi_a> = d (grad phi_a x grad phi_b); the upper
            // local pair is computed once and mirrored with a sign flip
            let k = match a.cmp(&b) {
                std::cmp::Ordering::Less => area * d * cross(ga, gb),
                std::cmp::Ordering::Greater => -(area * d * cross(gb, ga)),
                std::cmp::Ordering::Equal => 0.0,
            };
            skew_t.push((i, j, k));
        }
    }

    let sym = CsrMatrix::from_triplets(n, n, sym_t)?;
    let mut skew = CsrMatrix::from_triplets(n, n, skew_t)?;
    antisymmetrize(&mut skew);
    let mut matrix = sym.clone();
    for (m, s) in matrix.values_mut().iter_mut().zip(skew.values()) {
        *m += s;
    }
    Ok(Stiffness { matrix, sym, skew })
}

/// Copies the negated strict upper triangle onto the lower triangle and zeroes
/// the diagonal, so `M^T = -M` holds bit for bit.
fn antisymmetrize(m: &mut CsrMatrix) {
    let n = m.n_rows();
    for i in 0..n {
        let (start, end) = (m.row_ptr()[i], m.row_ptr()[i + 1]);
        for k in start..end {
            let j = m.col_idx()[k];
            if j == i {
                m.values_mut()[k] = 0.0;
            } else if j > i {
                let v = m.values()[k];
                if let Some(kt) = m.position(j, i) {
                    m.values_mut()[kt] = -v;
                }
            }
        }
    }
}

/// `b[i] = sum_T int_T F . grad phi_i`.
pub fn assemble_load<F>(mesh: &MeshTri, f: &F, quad_order: usize) -> Result<Vec<f64>, FemError>
where
    F: Fn(f64, f64) -> Option<[f64; 2]> + ?Sized,
{
    let rules = ElementRules::new(quad_order, None)?;
    let mut b = vec![0.0; mesh.n_vertices()];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let geo = element_geometry(mesh, ti)?;
        let corners = mesh.corners(t);
        let mut favg = [0.0; 2];
        for (p, w) in rules.for_element(&corners).map(&corners) {
            let v = f(p[0], p[1]).ok_or(FemError::Evaluation { x: p[0], y: p[1] })?;
            favg[0] += w * v[0];
            favg[1] += w * v[1];
        }
        for (a, &i) in t.0.iter().enumerate() {
            let g = geo.grad_basis[a];
            b[i] += geo.area * (favg[0] * g[0] + favg[1] * g[1]);
        }
    }
    Ok(b)
}

/// Replaces boundary rows by identity rows with right side `g(x_i)`, and
/// moves boundary columns of interior rows to the right side.
pub fn apply_dirichlet<G>(
    k: &CsrMatrix,
    b: &[f64],
    mesh: &MeshTri,
    g: &G,
) -> Result<(CsrMatrix, Vec<f64>), FemError>
where
    G: Fn(f64, f64) -> f64 + ?Sized,
{
    let n = mesh.n_vertices();
    if k.n_rows() != n || k.n_cols() != n || b.len() != n {
        return Err(FemError::Dimension(format!(
            "system of size {}x{} with right side {} does not match {n} vertices",
            k.n_rows(),
            k.n_cols(),
            b.len()
        )));
    }
    let fixed: Vec<Option<f64>> = mesh
        .vertices
        .iter()
        .map(|v| v.on_boundary.then(|| g(v.x, v.y)))
        .collect();

    let mut k2 = k.clone();
    let mut b2 = b.to_vec();
    for i in 0..n {
        let (start, end) = (k2.row_ptr()[i], k2.row_ptr()[i + 1]);
        if let Some(gi) = fixed[i] {
            for p in start..end {
                let j = k2.col_idx()[p];
                k2.values_mut()[p] = if j == i { 1.0 } else { 0.0 };
            }
            b2[i] = gi;
        } else {
            for p in start..end {
                let j = k2.col_idx()[p];
                if let Some(gj) = fixed[j] {
                    b2[i] -= k2.values()[p] * gj;
                    k2.values_mut()[p] = 0.0;
                }
            }
        }
    }
    Ok((k2, b2))
}

/// `r[i] = sum_T int_T <A grad u, grad phi_i>` at interior vertices (zero on
/// the boundary) for an analytic gradient `grad_u`.
pub fn weak_residual<G>(
    mesh: &MeshTri,
    field: &CoefficientField,
    grad_u: &G,
    quad_order: usize,
) -> Result<Vec<f64>, FemError>
where
    G: Fn(f64, f64) -> Option<[f64; 2]> + ?Sized,
{
    let rules = ElementRules::new(quad_order, field.singular_point().or(Some([0.0, 0.0])))?;
    let mut r = vec![0.0; mesh.n_vertices()];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let geo = element_geometry(mesh, ti)?;
        let corners = mesh.corners(t);
        let mut flux = [0.0; 2];
        for (p, w) in rules.for_element(&corners).map(&corners) {
            let gu = grad_u(p[0], p[1]).ok_or(FemError::Evaluation { x: p[0], y: p[1] })?;
            let ag = field
                .apply(p[0], p[1], gu)
                .map_err(|e| FemError::Coefficient { x: p[0], y: p[1], source: e })?;
            flux[0] += w * ag[0];
            flux[1] += w * ag[1];
        }
        for (a, &i) in t.0.iter().enumerate() {
            let g = geo.grad_basis[a];
            r[i] += geo.area * (flux[0] * g[0] + flux[1] * g[1]);
        }
    }
    for (ri, v) in r.iter_mut().zip(&mesh.vertices) {
        if v.on_boundary {
            *ri = 0.0;
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{gmres_solve, GmresOptions};
    use crate::mesh::{build_disk_mesh, build_square_mesh, Domain, Vertex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_triangle() -> MeshTri {
        let v = |x, y| Vertex { x, y, on_boundary: true };
        MeshTri {
            vertices: vec![v(0.0, 0.0), v(1.0, 0.0), v(0.0, 1.0)],
            triangles: vec![Triangle([0, 1, 2])],
            domain: Domain::Imported,
            grading: 1.0,
            level: 0,
        }
    }

    #[test]
    fn reference_element_matrix() {
        let k = assemble_stiffness(&reference_triangle(), &CoefficientField::identity(), 3).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let dense = k.matrix.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert!((dense[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!(k.skew.max_abs(), 0.0);
    }

    #[test]
    fn identity_stiffness_is_symmetric() {
        let mesh = build_disk_mesh(5, 24, 2.0).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::identity(), 3).unwrap();
        assert!(k.matrix.symmetry_defect() <= 1e-13);
    }

    #[test]
    fn skew_part_is_exactly_antisymmetric_and_annihilates() {
        let mesh = build_disk_mesh(4, 16, 2.0).unwrap();
        let field = CoefficientField::example(0.5).unwrap();
        let k = assemble_stiffness(&mesh, &field, 3).unwrap();
        let t = k.skew.transpose();
        for (a, b) in k.skew.values().iter().zip(t.values()) {
            assert_eq!(*a, -*b);
        }
        assert!(k.skew.max_abs() > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let z: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let zz: f64 = z.iter().map(|v| v * v).sum();
            assert!(k.skew.quadratic_form(&z).abs() <= 1e-12 * zz * k.skew.max_abs());
        }
    }

    #[test]
    fn assembly_is_deterministic() {
        let mesh = build_disk_mesh(4, 16, 2.0).unwrap();
        let field = CoefficientField::example(0.25).unwrap();
        let a = assemble_stiffness(&mesh, &field, 6).unwrap();
        let b = assemble_stiffness(&mesh, &field, 6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_quadrature_order() {
        let mesh = build_square_mesh(2).unwrap();
        assert!(matches!(
            assemble_stiffness(&mesh, &CoefficientField::identity(), 4),
            Err(FemError::InvalidArgument(_))
        ));
    }

    #[test]
    fn load_vectors() {
        let mesh = build_disk_mesh(3, 16, 1.0).unwrap();
        let zero = assemble_load(&mesh, &|_, _| Some([0.0, 0.0]), 3).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let c = assemble_load(&mesh, &|_, _| Some([0.7, -1.3]), 3).unwrap();
        assert!(c.iter().sum::<f64>().abs() < 1e-13);
        assert!(assemble_load(&mesh, &|_, _| None, 3).is_err());
    }

    #[test]
    fn gradient_load_equals_stiffness_times_vector() {
        // P1 function v on the two-triangle unit square
        let mesh = build_square_mesh(1).unwrap();
        let v = [0.0, 0.3, -0.2, 1.0];
        let geo = mesh.geometries().unwrap();
        let grad = |t: usize| {
            let tri = mesh.triangles[t].0;
            let mut g = [0.0; 2];
            for a in 0..3 {
                g[0] += v[tri[a]] * geo[t].grad_basis[a][0];
                g[1] += v[tri[a]] * geo[t].grad_basis[a][1];
            }
            g
        };
        // x > y lies in triangle 0 ([0,1,3]), x < y in triangle 1
        let f = |x: f64, y: f64| Some(if x > y { grad(0) } else { grad(1) });
        let b = assemble_load(&mesh, &f, 3).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::identity(), 3).unwrap();
        let kv = k.matrix.mul_vec(&v);
        for (x, y) in b.iter().zip(&kv) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_rows_and_constant_solution() {
        let mesh = build_disk_mesh(4, 16, 1.0).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::identity(), 3).unwrap();
        let b = vec![0.0; mesh.n_vertices()];
        let (k0, b0) = apply_dirichlet(&k.matrix, &b, &mesh, &|_, _| 0.0).unwrap();
        for (i, v) in mesh.vertices.iter().enumerate() {
            if v.on_boundary {
                let (cols, vals) = k0.row(i);
                for (c, x) in cols.iter().zip(vals) {
                    assert_eq!(*x, if *c == i { 1.0 } else { 0.0 });
                }
                assert_eq!(b0[i], 0.0);
            }
        }
        let (k1, b1) = apply_dirichlet(&k.matrix, &b, &mesh, &|_, _| 1.0).unwrap();
        let (x, rep) = gmres_solve(&k1, &b1, &GmresOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(x.iter().all(|u| (u - 1.0).abs() < 1e-10));
        assert!(apply_dirichlet(&k.matrix, &b[1..], &mesh, &|_, _| 0.0).is_err());
    }

    #[test]
    fn residual_of_linear_function_vanishes() {
        // linear functions are discrete harmonic for the Laplacian; a constant
        // gradient has zero residual at every interior vertex
        let mesh = build_disk_mesh(4, 16, 1.5).unwrap();
        let r = weak_residual(&mesh, &CoefficientField::identity(), &|_, _| Some([0.4, -1.1]), 3).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }
}
