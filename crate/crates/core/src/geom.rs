//! Small fixed-size linear algebra and planar convex-polygon routines.
//!
//! Everything here is generic over [`Real`] so the same code runs in `f32`
//! and `f64`. The frame used throughout the crate is x toward west, y toward
//! south and z toward the zenith.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::real::{Degrees, Real};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vector3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn distance(&self, o: &Self) -> T {
        (*self - *o).norm()
    }

    pub fn cast<U: Real>(&self) -> Vector3<U> {
        Vector3::new(
            U::lit(self.x.as_f64()),
            U::lit(self.y.as_f64()),
            U::lit(self.z.as_f64()),
        )
    }
}

impl<T: Real> Add for Vector3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vector3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vector3<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

impl<T: Real> Neg for Vector3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

/// 3x3 rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Rotation3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    /// Rotation about the y-axis by `deg` degrees.
    pub fn about_y(deg: T) -> Self {
        let (s, c) = (deg.sind(), deg.cosd());
        let z = T::zero();
        Self {
            m: [[c, z, s], [z, T::one(), z], [-s, z, c]],
        }
    }

    /// Rotation about the x-axis by `deg` degrees.
    pub fn about_x(deg: T) -> Self {
        let (s, c) = (deg.sind(), deg.cosd());
        let z = T::zero();
        Self {
            m: [[T::one(), z, z], [z, c, -s], [z, s, c]],
        }
    }

    /// Rotation about the z-axis by `deg` degrees (counter-clockwise seen from above).
    pub fn about_z(deg: T) -> Self {
        let (s, c) = (deg.sind(), deg.cosd());
        let z = T::zero();
        Self {
            m: [[c, -s, z], [s, c, z], [z, z, T::one()]],
        }
    }

    pub fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn apply(&self, v: &Vector3<T>) -> Vector3<T> {
        let m = &self.m;
        Vector3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest absolute entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> T {
        let p = self.transpose() * *self;
        let mut err = T::zero();
        for (i, row) in p.m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { T::one() } else { T::zero() };
                err = err.max((*v - want).abs());
            }
        }
        err
    }
}

impl<T: Real> Mul for Rotation3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).fold(T::zero(), |acc, k| acc + self.m[i][k] * o.m[k][j]);
            }
        }
        Self { m }
    }
}

/// Axis-aligned rectangle on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub min: Point2<T>,
    pub max: Point2<T>,
}

impl<T: Real> Rect<T> {
    pub fn new(min: Point2<T>, max: Point2<T>) -> Self {
        Self { min, max }
    }

    pub fn area(&self) -> T {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn overlaps(&self, o: &Self) -> bool {
        self.min.x <= o.max.x
            && o.min.x <= self.max.x
            && self.min.y <= o.max.y
            && o.min.y <= self.max.y
    }

    pub fn as_polygon(&self) -> ConvexPolygon<T> {
        ConvexPolygon::new(vec![
            self.min,
            Point2::new(self.max.x, self.min.y),
            self.max,
            Point2::new(self.min.x, self.max.y),
        ])
    }
}

/// Planar convex polygon, counter-clockwise after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon<T> {
    vertices: Vec<Point2<T>>,
}

impl<T: Real> ConvexPolygon<T> {
    /// Builds the polygon, reversing the vertex order if it is clockwise.
    pub fn new(mut vertices: Vec<Point2<T>>) -> Self {
        if signed_area(&vertices) < T::zero() {
            vertices.reverse();
        }
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices).abs()
    }

    pub fn bbox(&self) -> Option<Rect<T>> {
        let first = self.vertices.first()?;
        let mut r = Rect::new(*first, *first);
        for p in &self.vertices[1..] {
            r.min.x = r.min.x.min(p.x);
            r.min.y = r.min.y.min(p.y);
            r.max.x = r.max.x.max(p.x);
            r.max.y = r.max.y.max(p.y);
        }
        Some(r)
    }

    /// True when every consecutive turn is non-clockwise (within `tol` of cross product).
    pub fn is_convex(&self, tol: T) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return true;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            cross(a, b, c) >= -tol
        })
    }

    /// Point-in-polygon test; points within `tol` of the boundary count as inside.
    pub fn contains(&self, p: Point2<T>, tol: T) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
            // signed distance of p to the left of edge a->b
            len == T::zero() || cross(a, b, p) / len >= -tol
        })
    }

    /// Interval of `y` covered by the polygon on the vertical line at `x`.
    pub fn y_range_at(&self, x: T) -> Option<(T, T)> {
        range_on_line(&self.vertices, x, |p| (p.x, p.y))
    }

    /// Interval of `x` covered by the polygon on the horizontal line at `y`.
    pub fn x_range_at(&self, y: T) -> Option<(T, T)> {
        range_on_line(&self.vertices, y, |p| (p.y, p.x))
    }

    /// Sutherland-Hodgman clip against another convex polygon.
    pub fn clip(&self, window: &ConvexPolygon<T>) -> ConvexPolygon<T> {
        let mut out = self.vertices.clone();
        let n = window.vertices.len();
        for i in 0..n {
            if out.is_empty() {
                break;
            }
            let a = window.vertices[i];
            let b = window.vertices[(i + 1) % n];
            out = clip_half_plane(&out, |p| cross(a, b, p));
        }
        ConvexPolygon { vertices: out }
    }

    pub fn clip_rect(&self, r: &Rect<T>) -> ConvexPolygon<T> {
        let mut out = self.vertices.clone();
        let (x0, x1, y0, y1) = (r.min.x, r.max.x, r.min.y, r.max.y);
        out = clip_half_plane(&out, |p| p.x - x0);
        out = clip_half_plane(&out, |p| x1 - p.x);
        out = clip_half_plane(&out, |p| p.y - y0);
        out = clip_half_plane(&out, |p| y1 - p.y);
        ConvexPolygon { vertices: out }
    }
}

fn cross<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> T {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

pub fn signed_area<T: Real>(v: &[Point2<T>]) -> T {
    let n = v.len();
    if n < 3 {
        return T::zero();
    }
    let mut s = T::zero();
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    s * T::lit(0.5)
}

/// Keeps the part of the polygon where `side(p) >= 0`.
fn clip_half_plane<T: Real>(poly: &[Point2<T>], side: impl Fn(Point2<T>) -> T) -> Vec<Point2<T>> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    if n == 0 {
        return out;
    }
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let (dp, dq) = (side(p), side(q));
        if dp >= T::zero() {
            out.push(p);
        }
        if (dp >= T::zero()) != (dq >= T::zero()) {
            let t = dp / (dp - dq);
            out.push(Point2::new(p.x + (q.x - p.x) * t, p.y + (q.y - p.y) * t));
        }
    }
    out
}

fn range_on_line<T: Real>(
    v: &[Point2<T>],
    at: T,
    split: impl Fn(&Point2<T>) -> (T, T),
) -> Option<(T, T)> {
    let n = v.len();
    if n < 3 {
        return None;
    }
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for i in 0..n {
        let (a_u, a_v) = split(&v[i]);
        let (b_u, b_v) = split(&v[(i + 1) % n]);
        let (u0, u1) = if a_u <= b_u { (a_u, b_u) } else { (b_u, a_u) };
        if at < u0 || at > u1 {
            continue;
        }
        if a_u == b_u {
            lo = lo.min(a_v.min(b_v));
            hi = hi.max(a_v.max(b_v));
        } else {
            let t = (at - a_u) / (b_u - a_u);
            let val = a_v + (b_v - a_v) * t;
            lo = lo.min(val);
            hi = hi.max(val);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Exact area of the union of convex polygons clipped to `window`.
///
/// Vertical slab decomposition: between consecutive breakpoints (vertex
/// abscissae and pairwise edge crossings) every covered interval has
/// endpoints linear in x and a fixed merge structure, so the union length is
/// linear across the slab and the midpoint rule integrates it exactly.
pub fn union_area<T: Real>(polygons: &[ConvexPolygon<T>], window: &Rect<T>) -> T {
    let clipped: Vec<(ConvexPolygon<T>, Rect<T>)> = polygons
        .iter()
        .map(|p| p.clip_rect(window))
        .filter(|p| !p.is_empty() && p.area() > T::zero())
        .filter_map(|p| p.bbox().map(|b| (p, b)))
        .collect();
    if clipped.is_empty() {
        return T::zero();
    }

    let mut xs: Vec<T> = Vec::new();
    for (p, _) in &clipped {
        xs.extend(p.vertices().iter().map(|v| v.x));
    }
    for i in 0..clipped.len() {
        for j in (i + 1)..clipped.len() {
            if !clipped[i].1.overlaps(&clipped[j].1) {
                continue;
            }
            edge_crossings(clipped[i].0.vertices(), clipped[j].0.vertices(), &mut xs);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    xs.dedup();

    let mut intervals: Vec<(T, T)> = Vec::with_capacity(clipped.len());
    let mut area = T::zero();
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let width = x1 - x0;
        if width <= T::zero() {
            continue;
        }
        let xm = (x0 + x1) * T::lit(0.5);
        intervals.clear();
        for (p, b) in &clipped {
            if b.min.x <= xm && xm <= b.max.x {
                if let Some(r) = p.y_range_at(xm) {
                    intervals.push(r);
                }
            }
        }
        area += width * merged_length(&mut intervals);
    }
    area
}

fn edge_crossings<T: Real>(a: &[Point2<T>], b: &[Point2<T>], xs: &mut Vec<T>) {
    let (na, nb) = (a.len(), b.len());
    for i in 0..na {
        let (p0, p1) = (a[i], a[(i + 1) % na]);
        for j in 0..nb {
            let (q0, q1) = (b[j], b[(j + 1) % nb]);
            let r = Point2::new(p1.x - p0.x, p1.y - p0.y);
            let s = Point2::new(q1.x - q0.x, q1.y - q0.y);
            let denom = r.x * s.y - r.y * s.x;
            if denom == T::zero() {
                continue;
            }
            let qp = Point2::new(q0.x - p0.x, q0.y - p0.y);
            let t = (qp.x * s.y - qp.y * s.x) / denom;
            let u = (qp.x * r.y - qp.y * r.x) / denom;
            if t > T::zero() && t < T::one() && u > T::zero() && u < T::one() {
                xs.push(p0.x + r.x * t);
            }
        }
    }
}

/// Total length covered by a set of closed intervals (sorted in place).
pub fn merged_length<T: Real>(intervals: &mut [(T, T)]) -> T {
    intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite interval"));
    let mut total = T::zero();
    let mut cur: Option<(T, T)> = None;
    for &(lo, hi) in intervals.iter() {
        match cur {
            Some((clo, chi)) if lo <= chi => cur = Some((clo, chi.max(hi))),
            Some((clo, chi)) => {
                total += chi - clo;
                cur = Some((lo, hi));
            }
            None => cur = Some((lo, hi)),
        }
    }
    if let Some((lo, hi)) = cur {
        total += hi - lo;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, s: f64) -> ConvexPolygon<f64> {
        ConvexPolygon::new(vec![
            Point2::new(x, y),
            Point2::new(x + s, y),
            Point2::new(x + s, y + s),
            Point2::new(x, y + s),
        ])
    }

    fn window() -> Rect<f64> {
        Rect::new(Point2::new(-10.0, -10.0), Point2::new(10.0, 10.0))
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let p = ConvexPolygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
        ]);
        assert!(signed_area(p.vertices()) > 0.0);
        assert!(p.is_convex(0.0));
    }

    #[test]
    fn union_of_offset_squares() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(0.5, 0.5, 1.0);
        assert!((union_area(&[a.clone(), b], &window()) - 1.75).abs() < 1e-12);
        assert!((union_area(&[a.clone(), a], &window()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn union_clips_to_window() {
        let big = square(-20.0, -20.0, 40.0);
        assert!((union_area(&[big], &window()) - 400.0).abs() < 1e-9);
    }

    #[test]
    fn union_of_rotated_diamonds() {
        // Two diamonds of area 2 overlapping in a diamond of area 0.5.
        let d = |cx: f64| {
            ConvexPolygon::new(vec![
                Point2::new(cx, -1.0),
                Point2::new(cx + 1.0, 0.0),
                Point2::new(cx, 1.0),
                Point2::new(cx - 1.0, 0.0),
            ])
        };
        let got = union_area(&[d(0.0), d(1.0)], &window());
        assert!((got - 3.5).abs() < 1e-12, "{got}");
    }

    #[test]
    fn contains_is_boundary_inclusive() {
        let s = square(0.0, 0.0, 1.0);
        assert!(s.contains(Point2::new(1.0, 0.5), 1e-9));
        assert!(s.contains(Point2::new(1.0 + 5e-10, 0.5), 1e-9));
        assert!(!s.contains(Point2::new(1.0 + 1e-6, 0.5), 1e-9));
    }

    #[test]
    fn rotation_about_y_maps_x_to_minus_z() {
        let r = Rotation3::about_y(90.0_f64);
        let v = r.apply(&Vector3::new(1.0, 0.0, 0.0));
        assert!(v.x.abs() < 1e-15 && v.y.abs() < 1e-15 && (v.z + 1.0).abs() < 1e-15);
    }

    #[test]
    fn ranges_on_lines() {
        let s = square(0.0, 0.0, 2.0);
        assert_eq!(s.y_range_at(1.0), Some((0.0, 2.0)));
        assert_eq!(s.x_range_at(3.0), None);
    }

    #[test]
    fn f32_union_matches_f64() {
        let a = ConvexPolygon::new(vec![
            Point2::new(0.0f32, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]);
        let b = ConvexPolygon::new(
            a.vertices()
                .iter()
                .map(|p| Point2::new(p.x + 0.5, p.y + 0.5))
                .collect(),
        );
        let w = Rect::new(Point2::new(-5.0f32, -5.0), Point2::new(5.0, 5.0));
        assert!((union_area(&[a, b], &w) - 1.75).abs() < 1e-5);
    }
}
