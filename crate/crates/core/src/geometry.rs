//! Planar geometry used by the scene model, the pedestrian simulator and the
//! oracle's collision checks.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or zero for a (near) zero vector.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 1e-12 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Expresses `self` in a frame rotated by `theta`.
    pub fn rotate_into(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x + s * self.y, -s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Radians in (−π, π].
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose2D {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

/// Closest point to `p` on segment `ab`.
pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Iterates the closed polygon's edges as `(start, end)`.
pub fn edges(poly: &[Vec2]) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
    let n = poly.len();
    (0..n).map(move |i| (poly[i], poly[(i + 1) % n]))
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let mut inside = false;
    for (a, b) in edges(poly) {
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Closest point on the polygon boundary.
pub fn closest_boundary_point(p: Vec2, poly: &[Vec2]) -> Vec2 {
    let mut best = poly[0];
    let mut best_d = f64::INFINITY;
    for (a, b) in edges(poly) {
        let q = closest_point_on_segment(p, a, b);
        let d = p.distance(q);
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

pub fn distance_to_boundary(p: Vec2, poly: &[Vec2]) -> f64 {
    p.distance(closest_boundary_point(p, poly))
}

/// Signed distance: negative inside, positive outside.
pub fn signed_distance_to_polygon(p: Vec2, poly: &[Vec2]) -> f64 {
    let d = distance_to_boundary(p, poly);
    if point_in_polygon(p, poly) {
        -d
    } else {
        d
    }
}

/// Twice-signed area; positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    edges(poly).map(|(a, b)| a.cross(b)).sum::<f64>() * 0.5
}

pub fn is_convex_ccw(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        (b - a).cross(c - b) > 0.0
    })
}

/// Proper or touching intersection of segments `p1p2` and `q1q2`; returns the
/// parameter along `p1p2`.
pub fn segment_intersection(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> Option<f64> {
    let r = p2 - p1;
    let s = q2 - q1;
    let denom = r.cross(s);
    if denom.abs() < 1e-15 {
        return None;
    }
    let qp = q1 - p1;
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Axis-aligned bounding box `(min, max)` of a point set.
pub fn bounding_box(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Vec2> {
        vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ]
    }

    #[test]
    fn angle_wrapping() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(normalize_angle(0.25), 0.25);
    }

    #[test]
    fn polygon_queries() {
        let sq = square();
        assert!(point_in_polygon(Vec2::new(1.0, 1.0), &sq));
        assert!(!point_in_polygon(Vec2::new(3.0, 1.0), &sq));
        assert!((distance_to_boundary(Vec2::new(1.0, 0.5), &sq) - 0.5).abs() < 1e-12);
        assert!(signed_distance_to_polygon(Vec2::new(1.0, 1.0), &sq) < 0.0);
        assert!((signed_distance_to_polygon(Vec2::new(3.0, 1.0), &sq) - 1.0).abs() < 1e-12);
        assert!(signed_area(&sq) > 0.0);
        assert!(is_convex_ccw(&sq));
        let mut cw = sq.clone();
        cw.reverse();
        assert!(!is_convex_ccw(&cw));
    }

    #[test]
    fn segments() {
        let t = segment_intersection(
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0),
        );
        assert_eq!(t, Some(0.5));
        assert_eq!(
            closest_point_on_segment(Vec2::new(5.0, 1.0), Vec2::ZERO, Vec2::new(2.0, 0.0)),
            Vec2::new(2.0, 0.0)
        );
    }

    #[test]
    fn frame_rotation() {
        let v = Vec2::new(0.0, 1.0).rotate_into(PI / 2.0);
        assert!((v.x - 1.0).abs() < 1e-12 && v.y.abs() < 1e-12);
    }
}
