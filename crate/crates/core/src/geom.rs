//! Geometric vocabulary shared by every stage: points, planes, façade
//! rectangles and a handful of planar polygon predicates.

use nalgebra::{Point2, Vector2};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Point2d = Point2<f64>;
pub type Triangle = [Point3; 3];

/// Planarity and coplanarity tolerance, meters.
pub const EPS_PLANE: f64 = 1e-6;

/// Vertices closer than this are treated as the same vertex when building
/// edge adjacency.
pub const WELD_TOLERANCE: f64 = 1e-7;

/// Newell's normal of a polygon. Its length is twice the polygon area.
pub fn newell_normal(pts: &[Point3]) -> Vector3 {
    let mut n = Vector3::zeros();
    for (i, a) in pts.iter().enumerate() {
        let b = &pts[(i + 1) % pts.len()];
        n.x += (a.y - b.y) * (a.z + b.z);
        n.y += (a.z - b.z) * (a.x + b.x);
        n.z += (a.x - b.x) * (a.y + b.y);
    }
    n
}

pub fn centroid(pts: &[Point3]) -> Point3 {
    let mut c = Vector3::zeros();
    for p in pts {
        c += p.coords;
    }
    Point3::from(c / pts.len().max(1) as f64)
}

/// Oriented plane `normal · x = offset` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3,
    pub offset: f64,
}

impl Plane {
    pub fn from_point_normal(point: &Point3, normal: Vector3) -> Option<Self> {
        let len = normal.norm();
        if !(len > 0.0) || !len.is_finite() {
            return None;
        }
        let normal = normal / len;
        Some(Plane {
            normal,
            offset: normal.dot(&point.coords),
        })
    }

    /// Best-fit plane through a polygon (Newell normal through the centroid).
    pub fn fit(pts: &[Point3]) -> Option<Self> {
        if pts.len() < 3 {
            return None;
        }
        Self::from_point_normal(&centroid(pts), newell_normal(pts))
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }

    pub fn project(&self, p: &Point3) -> Point3 {
        p - self.normal * self.signed_distance(p)
    }

    /// In-plane orthonormal axes `(u, v)` with `v` pointing as close to world
    /// up as possible and `u × v = normal`. For horizontal planes `v` follows
    /// world +y.
    pub fn basis(&self) -> (Vector3, Vector3) {
        let n = self.normal;
        let up = Vector3::z();
        let mut v = up - n * n.dot(&up);
        if v.norm() < 1e-9 {
            let north = Vector3::y();
            v = north - n * n.dot(&north);
        }
        let v = v.normalize();
        let u = v.cross(&n).normalize();
        (u, v)
    }
}

/// Axis-aligned rectangle in façade UV coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvRect {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl UvRect {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Self {
        UvRect {
            u_min,
            v_min,
            u_max,
            v_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.u_min < self.u_max && self.v_min < self.v_max
    }

    pub fn intersection_area(&self, other: &UvRect) -> f64 {
        let w = self.u_max.min(other.u_max) - self.u_min.max(other.u_min);
        let h = self.v_max.min(other.v_max) - self.v_min.max(other.v_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn overlaps(&self, other: &UvRect) -> bool {
        self.intersection_area(other) > 0.0
    }

    pub fn union_bbox(&self, other: &UvRect) -> UvRect {
        UvRect {
            u_min: self.u_min.min(other.u_min),
            v_min: self.v_min.min(other.v_min),
            u_max: self.u_max.max(other.u_max),
            v_max: self.v_max.max(other.v_max),
        }
    }

    pub fn expand(&self, margin: f64) -> UvRect {
        UvRect {
            u_min: self.u_min - margin,
            v_min: self.v_min - margin,
            u_max: self.u_max + margin,
            v_max: self.v_max + margin,
        }
    }

    /// Corners counter-clockwise starting at `(u_min, v_min)`.
    pub fn corners(&self) -> [Point2d; 4] {
        [
            Point2d::new(self.u_min, self.v_min),
            Point2d::new(self.u_max, self.v_min),
            Point2d::new(self.u_max, self.v_max),
            Point2d::new(self.u_min, self.v_max),
        ]
    }
}

pub fn signed_area_2d(pts: &[Point2d]) -> f64 {
    let mut a = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let q = &pts[(i + 1) % pts.len()];
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a
}

/// Crossing-number point-in-polygon test. Points exactly on the boundary may
/// go either way.
pub fn point_in_polygon(p: &Point2d, poly: &[Point2d]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: &Point2d, b: &Point2d, c: &Point2d) -> f64 {
    (b - a).perp(&(c - a))
}

/// Distance from `p` to the closed segment `ab` in the plane.
pub fn point_segment_distance_2d(p: &Point2d, a: &Point2d, b: &Point2d) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// True if closed segments `ab` and `cd` share at least one point.
pub fn segments_intersect(a: &Point2d, b: &Point2d, c: &Point2d, d: &Point2d, tol: f64) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol))
        && ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol))
    {
        return true;
    }
    point_segment_distance_2d(a, c, d) <= tol
        || point_segment_distance_2d(b, c, d) <= tol
        || point_segment_distance_2d(c, a, b) <= tol
        || point_segment_distance_2d(d, a, b) <= tol
}

/// Clips an arbitrary (possibly concave) polygon against a convex,
/// counter-clockwise polygon. The result's signed area equals the area of the
/// intersection even when the output contains degenerate bridging edges.
pub fn clip_polygon_convex(subject: &[Point2d], clip: &[Point2d]) -> Vec<Point2d> {
    let mut output: Vec<Point2d> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let edge: Vector2<f64> = b - a;
        let inside = |p: &Point2d| edge.perp(&(p - a)) >= 0.0;
        let input = std::mem::take(&mut output);
        for (k, cur) in input.iter().enumerate() {
            let prev = &input[(k + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                let dp = cur - prev;
                let denom = edge.perp(&dp);
                if denom != 0.0 {
                    let t = edge.perp(&(a - prev)) / denom;
                    output.push(prev + dp * t.clamp(0.0, 1.0));
                }
            }
            if ci {
                output.push(*cur);
            }
        }
    }
    output
}
