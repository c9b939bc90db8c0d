//! Planar geometry primitives used by the mesh builders.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// A point or vector in the x-y plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    /// z component of the cross product `self x other`.
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn dist(self, other: Self) -> T {
        (self - other).norm()
    }

    pub fn scaled(self, s: T) -> Self {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Self {
        Vec2::new(-self.y, self.x)
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec2::new(-self.x, -self.y)
    }
}

impl<T: Scalar> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scaled(s)
    }
}

/// A line segment between two endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment<T> {
    pub a: Vec2<T>,
    pub b: Vec2<T>,
}

impl<T: Scalar> Segment<T> {
    pub fn new(a: Vec2<T>, b: Vec2<T>) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> T {
        self.a.dist(self.b)
    }

    pub fn midpoint(&self) -> Vec2<T> {
        (self.a + self.b).scaled(T::lit(0.5))
    }

    /// Signed distance factors of `p` along the segment: returns `(t, d)`
    /// where `t` is the projection parameter (0 at `a`, 1 at `b`) and `d`
    /// the perpendicular distance to the supporting line.
    pub fn project(&self, p: Vec2<T>) -> (T, T) {
        let ab = self.b - self.a;
        let len2 = ab.dot(ab);
        let t = (p - self.a).dot(ab) / len2;
        let d = (p - self.a).cross(ab).abs() / len2.sqrt();
        (t, d)
    }

    /// Mirror image of `p` across the supporting line.
    pub fn reflect(&self, p: Vec2<T>) -> Vec2<T> {
        let ab = self.b - self.a;
        let t = (p - self.a).dot(ab) / ab.dot(ab);
        let foot = self.a + ab.scaled(t);
        foot + (foot - p)
    }
}

/// Signed area of the triangle `(a, b, c)`; positive when counter-clockwise.
pub fn orient<T: Scalar>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> T {
    (b - a).cross(c - a)
}

fn on_segment_collinear<T: Scalar>(s: &Segment<T>, p: Vec2<T>, eps: T) -> bool {
    p.x >= s.a.x.min(s.b.x) - eps
        && p.x <= s.a.x.max(s.b.x) + eps
        && p.y >= s.a.y.min(s.b.y) - eps
        && p.y <= s.a.y.max(s.b.y) + eps
}

/// Whether two segments intersect, counting endpoint touches and collinear
/// overlap. `eps` is an absolute coordinate tolerance.
pub fn segments_intersect<T: Scalar>(s1: &Segment<T>, s2: &Segment<T>, eps: T) -> bool {
    let scale1 = s1.length();
    let scale2 = s2.length();
    if scale1 < eps || scale2 < eps {
        return false;
    }
    // Normalize orientation tests by segment length so eps stays a length.
    let d1 = orient(s2.a, s2.b, s1.a) / scale2;
    let d2 = orient(s2.a, s2.b, s1.b) / scale2;
    let d3 = orient(s1.a, s1.b, s2.a) / scale1;
    let d4 = orient(s1.a, s1.b, s2.b) / scale1;

    let neg = |d: T| d < -eps;
    let pos = |d: T| d > eps;
    if ((pos(d1) && neg(d2)) || (neg(d1) && pos(d2))) && ((pos(d3) && neg(d4)) || (neg(d3) && pos(d4))) {
        return true;
    }
    (d1.abs() <= eps && on_segment_collinear(s2, s1.a, eps))
        || (d2.abs() <= eps && on_segment_collinear(s2, s1.b, eps))
        || (d3.abs() <= eps && on_segment_collinear(s1, s2.a, eps))
        || (d4.abs() <= eps && on_segment_collinear(s1, s2.b, eps))
}

/// Area of a simple polygon by the shoelace formula; positive when
/// counter-clockwise.
pub fn polygon_area<T: Scalar>(vertices: &[Vec2<T>]) -> T {
    let n = vertices.len();
    let mut s = T::zero();
    for i in 0..n {
        let j = (i + 1) % n;
        s = s + vertices[i].cross(vertices[j]);
    }
    s * T::lit(0.5)
}

/// Centroid of a simple polygon (standard area-weighted formula).
pub fn polygon_centroid<T: Scalar>(vertices: &[Vec2<T>]) -> Vec2<T> {
    let n = vertices.len();
    let area = polygon_area(vertices);
    let mut cx = T::zero();
    let mut cy = T::zero();
    for i in 0..n {
        let j = (i + 1) % n;
        let w = vertices[i].cross(vertices[j]);
        cx = cx + (vertices[i].x + vertices[j].x) * w;
        cy = cy + (vertices[i].y + vertices[j].y) * w;
    }
    let six_a = T::lit(6.0) * area;
    Vec2::new(cx / six_a, cy / six_a)
}

/// Whether `p` lies inside (or on the boundary of) a convex counter-clockwise
/// polygon, with tolerance `eps` on the half-plane tests.
pub fn point_in_convex_polygon<T: Scalar>(vertices: &[Vec2<T>], p: Vec2<T>, eps: T) -> bool {
    let n = vertices.len();
    for i in 0..n {
        let j = (i + 1) % n;
        let edge_len = vertices[i].dist(vertices[j]);
        if edge_len == T::zero() {
            continue;
        }
        if orient(vertices[i], vertices[j], p) / edge_len < -eps {
            return false;
        }
    }
    true
}
