use std::collections::BTreeSet;
use std::fmt;

use crate::geom::{point_in_polygon, segments_intersect, signed_area_2d, Plane, Point2d, Point3, EPS_PLANE};
use crate::mesh::{self, EdgeDefect};

use super::{BuildingSolid, Face};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonManifoldEdge { a: Point3, b: Point3, count: usize },
    InconsistentOrientation { a: Point3, b: Point3 },
    TooFewVertices { face: String },
    NonFiniteCoordinate { face: String },
    DegenerateFace { face: String },
    NonPlanar { face: String, deviation: f64 },
    SelfIntersectingRing { face: String },
    InnerRingOutside { face: String },
    InnerRingsOverlap { face: String },
    InnerRingOrientation { face: String },
    DuplicateFaceId { face: String },
    NonPositiveVolume { volume: f64 },
    OpenTemplate { template: String },
    BadAnchor { template: String },
    EmptyId,
}

fn pt(p: &Point3) -> String {
    format!("({} {} {})", p.x, p.y, p.z)
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonManifoldEdge { a, b, count } => {
                write!(f, "edge {}-{} used by {count} rings", pt(a), pt(b))
            }
            Violation::InconsistentOrientation { a, b } => {
                write!(f, "edge {}-{} traversed twice in the same direction", pt(a), pt(b))
            }
            Violation::TooFewVertices { face } => write!(f, "face {face}: ring with fewer than 3 vertices"),
            Violation::NonFiniteCoordinate { face } => write!(f, "face {face}: non-finite coordinate"),
            Violation::DegenerateFace { face } => write!(f, "face {face}: zero area"),
            Violation::NonPlanar { face, deviation } => {
                write!(f, "face {face}: planarity deviation {deviation:.3e} m")
            }
            Violation::SelfIntersectingRing { face } => write!(f, "face {face}: self-intersecting ring"),
            Violation::InnerRingOutside { face } => write!(f, "face {face}: inner ring not inside outer ring"),
            Violation::InnerRingsOverlap { face } => write!(f, "face {face}: inner rings overlap"),
            Violation::InnerRingOrientation { face } => {
                write!(f, "face {face}: inner ring must run opposite to the outer ring")
            }
            Violation::DuplicateFaceId { face } => write!(f, "duplicate face id {face}"),
            Violation::NonPositiveVolume { volume } => write!(f, "signed volume {volume} is not positive"),
            Violation::OpenTemplate { template } => {
                write!(f, "template {template}: mesh does not close against its anchor")
            }
            Violation::BadAnchor { template } => {
                write!(f, "template {template}: anchor is not the unit rectangle at depth 0")
            }
            Violation::EmptyId => write!(f, "empty identifier"),
        }
    }
}

pub(crate) fn edge_violations(defects: Vec<EdgeDefect>) -> Vec<Violation> {
    defects
        .into_iter()
        .map(|d| match d {
            EdgeDefect::Count { a, b, count } => Violation::NonManifoldEdge { a, b, count },
            EdgeDefect::Orientation { a, b } => Violation::InconsistentOrientation { a, b },
        })
        .collect()
}

/// Checks every [`BuildingSolid`] invariant. An empty result means the solid
/// is a closed, outward-oriented 2-manifold made of valid planar faces.
pub fn validate_solid(solid: &BuildingSolid) -> Vec<Violation> {
    let mut out = Vec::new();
    if solid.id.is_empty() {
        out.push(Violation::EmptyId);
    }
    let mut seen = BTreeSet::new();
    for face in &solid.faces {
        if !seen.insert(face.id.as_str()) {
            out.push(Violation::DuplicateFaceId {
                face: face.id.clone(),
            });
        }
        validate_face(face, &mut out);
    }
    let edge = edge_violations(mesh::edge_defects(solid.rings()));
    let closed = edge.is_empty();
    out.extend(edge);
    if closed && out.is_empty() {
        let volume = solid.signed_volume();
        if volume <= 0.0 {
            out.push(Violation::NonPositiveVolume { volume });
        }
    }
    out
}

pub(crate) fn validate_face(face: &Face, out: &mut Vec<Violation>) {
    let id = || face.id.clone();
    if face.rings().any(|r| r.len() < 3) {
        out.push(Violation::TooFewVertices { face: id() });
        return;
    }
    if face
        .rings()
        .flatten()
        .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
    {
        out.push(Violation::NonFiniteCoordinate { face: id() });
        return;
    }
    let Some(plane) = face.plane() else {
        out.push(Violation::DegenerateFace { face: id() });
        return;
    };
    let deviation = face
        .rings()
        .flatten()
        .map(|p| plane.signed_distance(p).abs())
        .fold(0.0, f64::max);
    if deviation > EPS_PLANE {
        out.push(Violation::NonPlanar {
            face: id(),
            deviation,
        });
        return;
    }

    let outer = project(&plane, &face.outer.vertices);
    if signed_area_2d(&outer).abs() < EPS_PLANE * EPS_PLANE {
        out.push(Violation::DegenerateFace { face: id() });
        return;
    }
    let inner: Vec<Vec<Point2d>> = face.inner.iter().map(|r| project(&plane, &r.vertices)).collect();
    if std::iter::once(&outer).chain(inner.iter()).any(|r| self_intersects(r)) {
        out.push(Violation::SelfIntersectingRing { face: id() });
        return;
    }
    for ring in &inner {
        if signed_area_2d(ring) >= 0.0 {
            out.push(Violation::InnerRingOrientation { face: id() });
        }
        let inside = ring.iter().all(|p| point_in_polygon(p, &outer))
            && !rings_touch(ring, &outer);
        if !inside {
            out.push(Violation::InnerRingOutside { face: id() });
        }
    }
    for i in 0..inner.len() {
        for j in i + 1..inner.len() {
            let (a, b) = (&inner[i], &inner[j]);
            if rings_touch(a, b)
                || a.iter().any(|p| point_in_polygon(p, b))
                || b.iter().any(|p| point_in_polygon(p, a))
            {
                out.push(Violation::InnerRingsOverlap { face: id() });
            }
        }
    }
}

fn project(plane: &Plane, ring: &[Point3]) -> Vec<Point2d> {
    mesh::to_plane_2d(plane, ring)
}

const RING_TOL: f64 = 1e-9;

fn self_intersects(ring: &[Point2d]) -> bool {
    let n = ring.len();
    for i in 0..n {
        for j in i + 1..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = (&ring[i], &ring[(i + 1) % n]);
            let (c, d) = (&ring[j], &ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d, RING_TOL) {
                return true;
            }
        }
    }
    false
}

fn rings_touch(a: &[Point2d], b: &[Point2d]) -> bool {
    for i in 0..a.len() {
        for j in 0..b.len() {
            if segments_intersect(
                &a[i],
                &a[(i + 1) % a.len()],
                &b[j],
                &b[(j + 1) % b.len()],
                RING_TOL,
            ) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_solid, Ring, SurfaceLabel};

    fn unit_cube() -> BuildingSolid {
        box_solid("cube", Point3::origin(), Point3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn unit_cube_has_no_violations() {
        assert_eq!(validate_solid(&unit_cube()), vec![]);
    }

    #[test]
    fn two_disjoint_triangles_give_six_open_edges() {
        let p = Point3::new;
        let s = BuildingSolid {
            id: "t".into(),
            lod: 2,
            faces: vec![
                Face::new("a", SurfaceLabel::Wall, vec![p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.)]),
                Face::new("b", SurfaceLabel::Wall, vec![p(5., 0., 0.), p(6., 0., 0.), p(5., 1., 0.)]),
            ],
        };
        let v = validate_solid(&s);
        assert_eq!(v.len(), 6);
        assert!(v
            .iter()
            .all(|x| matches!(x, Violation::NonManifoldEdge { count: 1, .. })));
    }

    #[test]
    fn hole_without_filler_leaves_four_open_edges() {
        let mut s = unit_cube();
        // +x face: vertices in the y/z plane; hole runs opposite to the outer ring
        let f = s.faces.iter_mut().find(|f| f.id == "cube_wall_xmax").unwrap();
        let p = |y: f64, z: f64| Point3::new(1.0, y, z);
        let hole = Ring::new(vec![p(0.4, 0.4), p(0.4, 0.6), p(0.6, 0.6), p(0.6, 0.4)]);
        f.inner.push(hole);
        let v = validate_solid(&s);
        assert_eq!(v.len(), 4, "{v:?}");
        assert!(v
            .iter()
            .all(|x| matches!(x, Violation::NonManifoldEdge { count: 1, .. })));
    }

    #[test]
    fn perturbed_vertex_breaks_planarity() {
        let mut s = unit_cube();
        let corner = Point3::new(1.0, 1.0, 1.0);
        let moved = Point3::new(1.0, 1.0, 1.0 + 10.0 * EPS_PLANE);
        for f in &mut s.faces {
            for p in &mut f.outer.vertices {
                if *p == corner {
                    *p = moved;
                }
            }
        }
        let v = validate_solid(&s);
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::NonPlanar { face, .. } if face == "cube_roof")));
    }

    #[test]
    fn inverted_solid_has_negative_volume() {
        let mut s = unit_cube();
        for f in &mut s.faces {
            f.outer = f.outer.reversed();
        }
        let v = validate_solid(&s);
        assert!(matches!(v.as_slice(), [Violation::NonPositiveVolume { .. }]));
    }

    #[test]
    fn duplicate_ids_and_inner_ring_outside() {
        let mut s = unit_cube();
        s.faces[1].id = s.faces[0].id.clone();
        let v = validate_solid(&s);
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicateFaceId { .. })));

        let mut s = unit_cube();
        let f = s.faces.iter_mut().find(|f| f.id == "cube_wall_xmax").unwrap();
        let p = |y: f64, z: f64| Point3::new(1.0, y, z);
        f.inner.push(Ring::new(vec![p(0.8, 0.4), p(0.8, 0.6), p(1.2, 0.6), p(1.2, 0.4)]));
        let v = validate_solid(&s);
        assert!(v.iter().any(|x| matches!(x, Violation::InnerRingOutside { .. })));
    }
}
