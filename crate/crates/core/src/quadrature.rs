//! Symmetric quadrature rules on triangles, expressed in barycentric
//! coordinates with weights normalized to sum to one (multiply by the
//! element area to integrate).

use crate::Point;

/// A single barycentric node with its normalized weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    points: Vec<QuadPoint>,
}

impl TriangleRule {
    /// Rule selected by its number of nodes: 1 (centroid, degree 1),
    /// 3 (interior points, degree 2) or 6 (degree 4).
    pub fn with_points(n: usize) -> Option<Self> {
        match n {
            1 => Some(Self::centroid()),
            3 => Some(Self::three_point()),
            6 => Some(Self::six_point()),
            _ => None,
        }
    }

    pub fn centroid() -> Self {
        Self {
            points: vec![QuadPoint {
                bary: [1.0 / 3.0; 3],
                weight: 1.0,
            }],
        }
    }

    pub fn three_point() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        Self {
            points: orbit3(a, b, 1.0 / 3.0),
        }
    }

    pub fn six_point() -> Self {
        let a = 0.445_948_490_915_964_886;
        let wa = 0.223_381_589_678_011_466;
        let b = 0.091_576_213_509_770_743;
        let wb = 0.109_951_743_655_321_868;
        let mut points = orbit3(1.0 - 2.0 * a, a, wa);
        points.extend(orbit3(1.0 - 2.0 * b, b, wb));
        Self { points }
    }

    /// Applies `self` on each of the `4^levels` congruent subtriangles obtained
    /// by repeated midpoint quadrisection.
    pub fn subdivided(&self, levels: u32) -> Self {
        let mut cells: Vec<[[f64; 3]; 3]> =
            vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
        for _ in 0..levels {
            let mut next = Vec::with_capacity(cells.len() * 4);
            for [a, b, c] in cells {
                let ab = mid(a, b);
                let bc = mid(b, c);
                let ca = mid(c, a);
                next.push([a, ab, ca]);
                next.push([ab, b, bc]);
                next.push([ca, bc, c]);
                next.push([ab, bc, ca]);
            }
            cells = next;
        }
        let scale = 1.0 / cells.len() as f64;
        let mut points = Vec::with_capacity(cells.len() * self.points.len());
        for cell in &cells {
            for q in &self.points {
                let mut bary = [0.0; 3];
                for (k, corner) in cell.iter().enumerate() {
                    for m in 0..3 {
                        bary[m] += q.bary[k] * corner[m];
                    }
                }
                points.push(QuadPoint {
                    bary,
                    weight: q.weight * scale,
                });
            }
        }
        Self { points }
    }

    pub fn points(&self) -> &[QuadPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical coordinates of every node on the triangle with corners `tri`.
    pub fn map(&self, tri: &[Point; 3]) -> impl Iterator<Item = (Point, f64)> + '_ {
        let tri = *tri;
        self.points.iter().map(move |q| (to_physical(&tri, q.bary), q.weight))
    }
}

fn orbit3(a: f64, b: f64, w: f64) -> Vec<QuadPoint> {
    vec![
        QuadPoint {
            bary: [a, b, b],
            weight: w,
        },
        QuadPoint {
            bary: [b, a, b],
            weight: w,
        },
        QuadPoint {
            bary: [b, b, a],
            weight: w,
        },
    ]
}

fn mid(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        0.5 * (a[0] + b[0]),
        0.5 * (a[1] + b[1]),
        0.5 * (a[2] + b[2]),
    ]
}

pub fn to_physical(tri: &[Point; 3], bary: [f64; 3]) -> Point {
    [
        bary[0] * tri[0][0] + bary[1] * tri[1][0] + bary[2] * tri[2][0],
        bary[0] * tri[0][1] + bary[1] * tri[1][1] + bary[2] * tri[2][1],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    // integral of x^i y^j over the reference triangle: i! j! / (i + j + 2)!
    fn exact_monomial(i: u32, j: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    fn reference() -> [Point; 3] {
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    }

    fn check_degree(rule: &TriangleRule, degree: u32) {
        for i in 0..=degree {
            for j in 0..=(degree - i) {
                let approx: f64 = rule
                    .map(&reference())
                    .map(|(p, w)| 0.5 * w * p[0].powi(i as i32) * p[1].powi(j as i32))
                    .sum();
                let exact = exact_monomial(i, j);
                assert!(
                    (approx - exact).abs() < 1e-14,
                    "x^{i} y^{j}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn rules_integrate_polynomials_to_their_degree() {
        check_degree(&TriangleRule::centroid(), 1);
        check_degree(&TriangleRule::three_point(), 2);
        check_degree(&TriangleRule::six_point(), 4);
        check_degree(&TriangleRule::three_point().subdivided(2), 2);
    }

    #[test]
    fn weights_sum_to_one() {
        for n in [1, 3, 6] {
            let rule = TriangleRule::with_points(n).unwrap();
            let s: f64 = rule.points().iter().map(|q| q.weight).sum();
            assert!((s - 1.0).abs() < 1e-14);
            let sub = rule.subdivided(3);
            assert_eq!(sub.len(), 64 * n);
            let s: f64 = sub.points().iter().map(|q| q.weight).sum();
            assert!((s - 1.0).abs() < 1e-13);
        }
        assert!(TriangleRule::with_points(4).is_none());
    }
}
