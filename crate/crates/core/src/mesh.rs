//! Polygon-soup topology: vertex welding, edge adjacency, signed volume and
//! triangulation of planar polygons with holes.

use std::collections::BTreeMap;

use crate::geom::{Plane, Point2d, Point3, Triangle, WELD_TOLERANCE};

pub(crate) type VertexKey = [i64; 3];

pub(crate) fn vertex_key(p: &Point3) -> VertexKey {
    [
        (p.x / WELD_TOLERANCE).round() as i64,
        (p.y / WELD_TOLERANCE).round() as i64,
        (p.z / WELD_TOLERANCE).round() as i64,
    ]
}

/// Problems found when checking that a polygon soup is a closed,
/// consistently oriented 2-manifold.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeDefect {
    /// Undirected edge used by a number of rings other than two.
    Count { a: Point3, b: Point3, count: usize },
    /// Edge used twice but traversed in the same direction both times.
    Orientation { a: Point3, b: Point3 },
}

/// Checks every undirected edge of the given closed rings. Consecutive
/// duplicate vertices are skipped.
pub fn edge_defects<'a, I>(rings: I) -> Vec<EdgeDefect>
where
    I: IntoIterator<Item = &'a [Point3]>,
{
    // undirected key -> (count, forward count, representative endpoints)
    let mut edges: BTreeMap<(VertexKey, VertexKey), (usize, usize, Point3, Point3)> =
        BTreeMap::new();
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (&ring[i], &ring[(i + 1) % n]);
            let (ka, kb) = (vertex_key(a), vertex_key(b));
            if ka == kb {
                continue;
            }
            let forward = ka < kb;
            let key = if forward { (ka, kb) } else { (kb, ka) };
            let entry = edges.entry(key).or_insert((0, 0, *a, *b));
            entry.0 += 1;
            if forward {
                entry.1 += 1;
            }
        }
    }
    let mut out = Vec::new();
    for (count, fwd, a, b) in edges.into_values() {
        if count != 2 {
            out.push(EdgeDefect::Count { a, b, count });
        } else if fwd != 1 {
            out.push(EdgeDefect::Orientation { a, b });
        }
    }
    out
}

/// Signed volume enclosed by closed rings (divergence theorem on a
/// fan triangulation). Positive for outward-oriented shells.
pub fn signed_volume<'a, I>(rings: I) -> f64
where
    I: IntoIterator<Item = &'a [Point3]>,
{
    let mut six_v = 0.0;
    for ring in rings {
        if ring.len() < 3 {
            continue;
        }
        let p0 = ring[0].coords;
        for i in 1..ring.len() - 1 {
            six_v += p0.dot(&ring[i].coords.cross(&ring[i + 1].coords));
        }
    }
    six_v / 6.0
}

/// True iff every edge of the triangle soup is shared by exactly two
/// triangles with opposite directions.
pub fn is_watertight(triangles: &[Triangle]) -> bool {
    !triangles.is_empty() && edge_defects(triangles.iter().map(|t| &t[..])).is_empty()
}

/// Triangulates a planar polygon with holes. Output triangles keep the
/// orientation of the outer ring.
pub fn triangulate_polygon(outer: &[Point3], holes: &[Vec<Point3>]) -> Vec<Triangle> {
    let Some(plane) = Plane::fit(outer) else {
        return Vec::new();
    };
    let (u, v) = plane.basis();
    let mut verts3: Vec<Point3> = Vec::new();
    let mut flat: Vec<f64> = Vec::new();
    let mut hole_starts = Vec::new();
    let push_ring = |ring: &[Point3], verts3: &mut Vec<Point3>, flat: &mut Vec<f64>| {
        for p in ring {
            verts3.push(*p);
            flat.push(u.dot(&p.coords));
            flat.push(v.dot(&p.coords));
        }
    };
    push_ring(outer, &mut verts3, &mut flat);
    for h in holes {
        hole_starts.push(verts3.len());
        push_ring(h, &mut verts3, &mut flat);
    }
    let Ok(idx) = earcutr::earcut(&flat, &hole_starts, 2) else {
        return Vec::new();
    };
    let mut tris = Vec::with_capacity(idx.len() / 3);
    for t in idx.chunks_exact(3) {
        let tri = [verts3[t[0]], verts3[t[1]], verts3[t[2]]];
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
        if n.norm_squared() == 0.0 {
            continue;
        }
        // earcut does not promise an orientation; match the outer ring.
        if n.dot(&plane.normal) < 0.0 {
            tris.push([tri[0], tri[2], tri[1]]);
        } else {
            tris.push(tri);
        }
    }
    tris
}

pub fn triangle_area(t: &Triangle) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}

/// Projects ring vertices into a plane's `(u, v)` basis.
pub(crate) fn to_plane_2d(plane: &Plane, ring: &[Point3]) -> Vec<Point2d> {
    let (u, v) = plane.basis();
    ring.iter()
        .map(|p| Point2d::new(u.dot(&p.coords), v.dot(&p.coords)))
        .collect()
}
