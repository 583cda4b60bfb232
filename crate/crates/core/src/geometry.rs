//! Planar vector math and the small dense solves used by the simulator.

use serde::{Deserialize, Serialize};

/// 2D vector / point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Scalar 2D cross product (z component of the 3D cross).
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Rotate by `angle` radians (counter-clockwise positive).
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(self.x * c - self.y * s, self.x * s + self.y * c)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Line segment between two points.
#[derive(Clone, Copy, Debug)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Closest point on the segment to `p`.
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let d = self.b - self.a;
        let len_sq = d.norm_sq();
        if len_sq == 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(d) / len_sq).clamp(0.0, 1.0);
        self.a + d * t
    }

    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        (p - self.closest_point(p)).norm()
    }

    /// Closest pair of points between two segments.
    pub fn closest_points(&self, other: &Segment) -> (Vec2, Vec2) {
        if self.intersects(other) {
            // Overlapping segments: any shared point works; take the crossing.
            let p = self.intersection_point(other).unwrap_or(self.a);
            return (p, p);
        }
        let mut best = (self.a, other.closest_point(self.a));
        let mut best_d = (best.0 - best.1).norm_sq();
        for (p, q) in [
            (self.b, other.closest_point(self.b)),
            (other.closest_point(self.a), self.a),
            (other.closest_point(self.b), self.b),
            (self.closest_point(other.a), other.a),
            (self.closest_point(other.b), other.b),
        ] {
            // Candidates are stored as (point on self, point on other); fix
            // the two entries that were generated the other way round.
            let (s, o) = if self.contains_approx(p) { (p, q) } else { (q, p) };
            let d = (s - o).norm_sq();
            if d < best_d {
                best_d = d;
                best = (s, o);
            }
        }
        best
    }

    fn contains_approx(&self, p: Vec2) -> bool {
        self.distance_to_point(p) < 1e-12
    }

    pub fn intersects(&self, other: &Segment) -> bool {
        let d1 = self.b - self.a;
        let d2 = other.b - other.a;
        let denom = d1.cross(d2);
        let delta = other.a - self.a;
        if denom.abs() < 1e-18 {
            // Parallel: overlap only if collinear and ranges intersect.
            if delta.cross(d1).abs() > 1e-18 {
                return false;
            }
            let len_sq = d1.norm_sq();
            if len_sq == 0.0 {
                return other.distance_to_point(self.a) < 1e-15;
            }
            let t0 = delta.dot(d1) / len_sq;
            let t1 = t0 + d2.dot(d1) / len_sq;
            let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
            return hi >= 0.0 && lo <= 1.0;
        }
        let t = delta.cross(d2) / denom;
        let u = delta.cross(d1) / denom;
        (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)
    }

    fn intersection_point(&self, other: &Segment) -> Option<Vec2> {
        let d1 = self.b - self.a;
        let d2 = other.b - other.a;
        let denom = d1.cross(d2);
        if denom.abs() < 1e-18 {
            return None;
        }
        let t = (other.a - self.a).cross(d2) / denom;
        Some(self.a + d1 * t)
    }
}

/// Distance between two segments (0 when they intersect).
pub fn segment_segment_distance(s1: &Segment, s2: &Segment) -> f64 {
    if s1.intersects(s2) {
        return 0.0;
    }
    let (p, q) = s1.closest_points(s2);
    (p - q).norm()
}

/// Convex polygon, counter-clockwise vertex order.
#[derive(Clone, Debug)]
pub struct ConvexPolygon {
    pub vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vec2>) -> Self {
        debug_assert!(vertices.len() >= 3);
        ConvexPolygon { vertices }
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| Segment::new(self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (b - a).cross(p - a) < 0.0 {
                return false;
            }
        }
        true
    }

    /// Signed distance from `p`: negative inside, positive outside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let boundary: f64 = self
            .edges()
            .map(|e| e.distance_to_point(p))
            .fold(f64::INFINITY, f64::min);
        if self.contains(p) {
            -boundary
        } else {
            boundary
        }
    }
}

/// Solve `A x = b` in place for a small dense symmetric positive definite
/// system via Gaussian elimination with partial pivoting. Returns `None`
/// for a numerically singular matrix.
pub fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n);
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        if pivot != col {
            a.swap(pivot, col);
            b.swap(pivot, col);
        }
        let inv = 1.0 / a[col][col];
        for row in col + 1..n {
            let factor = a[row][col] * inv;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut sum = b[row];
        for k in row + 1..n {
            sum -= a[row][k] * x[k];
        }
        x[row] = sum / a[row][row];
    }
    Some(x)
}
