//! Planar points and symmetric 2x2 matrices.

use core::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// z-component of the cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, o: Point) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned bounding box of a point set, `(min, max)`.
/// An empty set yields the degenerate box at the origin.
pub fn bounding_box(points: impl IntoIterator<Item = Point>) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for p in points {
        any = true;
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if any {
        (lo, hi)
    } else {
        (Point::ORIGIN, Point::ORIGIN)
    }
}

/// Symmetric matrix `[[a, b], [b, c]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Eigenpairs of a symmetric 2x2 matrix, eigenvalues ascending.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigen2 {
    pub values: [f64; 2],
    pub vectors: [Point; 2],
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Mat2 { a, b, c }
    }

    pub const fn diag(a: f64, c: f64) -> Self {
        Mat2 { a, b: 0.0, c }
    }

    /// Builds from a full matrix, rejecting asymmetry beyond `1e-12`
    /// (relative to the largest entry).
    pub fn from_rows(rows: [[f64; 2]; 2]) -> Option<Self> {
        let scale = rows.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
        if (rows[0][1] - rows[1][0]).abs() > 1e-12 * scale {
            return None;
        }
        Some(Mat2::new(rows[0][0], 0.5 * (rows[0][1] + rows[1][0]), rows[1][1]))
    }

    pub fn quad(&self, v: Point) -> f64 {
        self.a * v.x * v.x + 2.0 * self.b * v.x * v.y + self.c * v.y * v.y
    }

    pub fn apply(&self, v: Point) -> Point {
        Point::new(self.a * v.x + self.b * v.y, self.b * v.x + self.c * v.y)
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn mul(&self, o: &Mat2) -> [[f64; 2]; 2] {
        [
            [self.a * o.a + self.b * o.b, self.a * o.b + self.b * o.c],
            [self.b * o.a + self.c * o.b, self.b * o.b + self.c * o.c],
        ]
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.eigen().values[0] > 0.0
    }

    /// Closed-form symmetric eigendecomposition.
    pub fn eigen(&self) -> Eigen2 {
        let half_tr = 0.5 * (self.a + self.c);
        let half_diff = 0.5 * (self.a - self.c);
        let r = libm::hypot(half_diff, self.b);
        let (lo, hi) = (half_tr - r, half_tr + r);
        if r == 0.0 {
            return Eigen2 {
                values: [lo, hi],
                vectors: [Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            };
        }
        // eigenvector of the larger eigenvalue, picked from the better-conditioned row
        let v_hi = if half_diff >= 0.0 {
            Point::new(half_diff + r, self.b)
        } else {
            Point::new(self.b, r - half_diff)
        };
        let v_hi = v_hi * (1.0 / v_hi.norm());
        let v_lo = Point::new(-v_hi.y, v_hi.x);
        Eigen2 {
            values: [lo, hi],
            vectors: [v_lo, v_hi],
        }
    }

    /// `Σ λ_i v_i v_iᵀ`.
    pub fn from_eigen(values: [f64; 2], vectors: [Point; 2]) -> Self {
        let mut m = Mat2::new(0.0, 0.0, 0.0);
        for (l, v) in values.iter().zip(vectors) {
            m.a += l * v.x * v.x;
            m.b += l * v.x * v.y;
            m.c += l * v.y * v.y;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs() {
        for m in [
            Mat2::new(2.0, 0.3, 1.0),
            Mat2::new(1.0, -0.7, 5.0),
            Mat2::diag(0.5, 2.0),
            Mat2::IDENTITY,
        ] {
            let e = m.eigen();
            assert!(e.values[0] <= e.values[1]);
            let r = Mat2::from_eigen(e.values, e.vectors);
            assert!((r.a - m.a).abs() < 1e-12 && (r.b - m.b).abs() < 1e-12 && (r.c - m.c).abs() < 1e-12);
            assert!(e.vectors[0].dot(e.vectors[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_rows_rejected() {
        assert!(Mat2::from_rows([[1.0, 0.1], [0.2, 1.0]]).is_none());
        assert_eq!(Mat2::from_rows([[1.0, 0.1], [0.1, 1.0]]), Some(Mat2::new(1.0, 0.1, 1.0)));
    }
}
