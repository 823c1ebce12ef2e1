//! Model-vs-observation visibility: surface voxels of the building solid are
//! classified as confirmed, conflicted or unknown from the occupancy tree,
//! weighted by Gaussian positioning uncertainty of the model and of the
//! laser points, and projected to façade conflict maps.

use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::geom::{clip_polygon_convex, signed_area_2d, Plane, Point2d, Point3, Vector3};
use crate::model::{BuildingSolid, Face};
use crate::occupancy::{OccupancyTree, VoxelKey, VoxelState};
use crate::raster::{FacadeFrame, FacadeRaster};

pub const CONFLICT_CHANNELS: [&str; 3] = ["conflicted", "confirmed", "unknown"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyConfig {
    pub mu_model: f64,
    pub sigma_model: f64,
    pub mu_cloud: f64,
    pub sigma_cloud: f64,
    /// When false (default) means and deviations are multiples of the voxel
    /// size; when true they are meters.
    pub absolute: bool,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig {
            mu_model: 0.0,
            sigma_model: 3.0,
            mu_cloud: 0.0,
            sigma_cloud: 2.85,
            absolute: false,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_model > 0.0 && self.sigma_cloud > 0.0) {
            return Err(Error::Config("uncertainty sigmas must be positive".into()));
        }
        Ok(())
    }

    fn in_voxel_units(&self, value: f64, voxel_size: f64) -> f64 {
        if self.absolute {
            value / voxel_size
        } else {
            value
        }
    }
}

/// How several voxels landing on one conflict-map pixel are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PixelAggregation {
    /// Keep the voxel with the largest conflicted probability.
    #[default]
    MaxConflicted,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceState {
    Confirmed,
    Conflicted,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSurfaceClassification {
    pub key: VoxelKey,
    pub face_id: String,
    pub base_state: SurfaceState,
    /// `None` for unknown voxels.
    pub p_confirmed: Option<f64>,
    pub p_conflicted: Option<f64>,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Gaussian mass of a positioning error falling inside the voxel slab
/// centered at distance `d`: `Φ((d + v/2)/(σv)) − Φ((d − v/2)/(σv))`, with
/// `sigma` in voxel units.
pub fn positioning_probability(d: f64, sigma: f64, voxel_size: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma {sigma} must be positive")));
    }
    let s = sigma * voxel_size;
    let half = 0.5 * voxel_size;
    Ok((std_normal_cdf((d + half) / s) - std_normal_cdf((d - half) / s)).max(0.0))
}

/// Slab mass at `d` relative to the mass at the distribution mean, in
/// `[0, 1]`: 1 when the observation sits exactly where the model expects it.
pub fn relative_positioning_probability(d: f64, mu: f64, sigma: f64, voxel_size: f64) -> Result<f64> {
    let peak = positioning_probability(0.0, sigma, voxel_size)?;
    let at = positioning_probability(d - mu * voxel_size, sigma, voxel_size)?;
    Ok((at / peak).min(1.0))
}

/// `(p_confirmed, p_conflicted) = (pA·pB, 1 − pA·pB)`.
pub fn joint_state_probability(p_a: f64, p_b: f64) -> (f64, f64) {
    let confirmed = p_a * p_b;
    (confirmed, 1.0 - confirmed)
}

const TOUCH_TOL: f64 = 1e-9;

/// Cube–plane cross-section of a voxel as a convex polygon in the face's
/// `(u, v)` basis, or `None` when the plane misses the voxel interior. A
/// plane lying exactly on a voxel face belongs to the voxel on the normal's
/// negative side.
fn voxel_section(plane: &Plane, center: &Point3, voxel_size: f64, u: &Vector3, v: &Vector3) -> Option<Vec<Point2d>> {
    let n = plane.normal;
    let h = 0.5 * voxel_size;
    let s = plane.signed_distance(center);
    let r = h * (n.x.abs() + n.y.abs() + n.z.abs());
    let tol = TOUCH_TOL * voxel_size;
    let interior = s.abs() < r - tol;
    let axis_aligned = [n.x, n.y, n.z].iter().filter(|c| c.abs() > 1e-12).count() == 1;
    let on_boundary = (s.abs() - r).abs() <= tol && s < 0.0 && axis_aligned;
    if !(interior || on_boundary) {
        return None;
    }
    let corners: Vec<Point3> = (0..8)
        .map(|i| {
            center
                + Vector3::new(
                    if i & 1 == 0 { -h } else { h },
                    if i & 2 == 0 { -h } else { h },
                    if i & 4 == 0 { -h } else { h },
                )
        })
        .collect();
    let mut pts: Vec<Point3> = Vec::new();
    if on_boundary {
        // the cube face lying in the plane
        pts.extend(corners.iter().filter(|c| plane.signed_distance(c).abs() <= 2.0 * tol).copied());
    } else {
        const EDGES: [(usize, usize); 12] = [
            (0, 1), (2, 3), (4, 5), (6, 7),
            (0, 2), (1, 3), (4, 6), (5, 7),
            (0, 4), (1, 5), (2, 6), (3, 7),
        ];
        for (a, b) in EDGES {
            let (pa, pb) = (corners[a], corners[b]);
            let (da, db) = (plane.signed_distance(&pa), plane.signed_distance(&pb));
            if (da <= 0.0 && db >= 0.0) || (da >= 0.0 && db <= 0.0) {
                if da == db {
                    pts.push(pa);
                    pts.push(pb);
                } else {
                    let t = da / (da - db);
                    pts.push(pa + (pb - pa) * t);
                }
            }
        }
    }
    if pts.len() < 3 {
        return None;
    }
    let mut flat: Vec<Point2d> = pts
        .iter()
        .map(|p| Point2d::new(u.dot(&p.coords), v.dot(&p.coords)))
        .collect();
    let c = flat.iter().fold(Point2d::origin(), |acc, p| acc + p.coords / flat.len() as f64);
    flat.sort_by(|a, b| {
        let aa = (a.y - c.y).atan2(a.x - c.x);
        let bb = (b.y - c.y).atan2(b.x - c.x);
        aa.total_cmp(&bb)
    });
    flat.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    (flat.len() >= 3).then_some(flat)
}

/// Area of a face (outer minus holes) inside a convex polygon.
fn overlap_area(outer: &[Point2d], holes: &[Vec<Point2d>], convex: &[Point2d]) -> f64 {
    let mut area = signed_area_2d(&clip_polygon_convex(outer, convex)).abs();
    for h in holes {
        area -= signed_area_2d(&clip_polygon_convex(h, convex)).abs();
    }
    area
}

/// Voxels whose cube shares a positive-area region with the face polygon.
pub fn face_voxels(face: &Face, grid_origin: &Point3, voxel_size: f64) -> Vec<VoxelKey> {
    let Some(plane) = face.plane() else {
        return Vec::new();
    };
    let (u, v) = plane.basis();
    let to2d = |p: &Point3| Point2d::new(u.dot(&p.coords), v.dot(&p.coords));
    let outer: Vec<Point2d> = face.outer.vertices.iter().map(to2d).collect();
    let holes: Vec<Vec<Point2d>> = face
        .inner
        .iter()
        .map(|r| r.vertices.iter().map(to2d).collect())
        .collect();
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &face.outer.vertices {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    let kmin = VoxelKey::of_point(&Point3::from(lo), grid_origin, voxel_size);
    let kmax = VoxelKey::of_point(&Point3::from(hi), grid_origin, voxel_size);
    let min_area = 1e-9 * voxel_size * voxel_size;
    let mut out = Vec::new();
    for ix in kmin.ix - 1..=kmax.ix + 1 {
        for iy in kmin.iy - 1..=kmax.iy + 1 {
            for iz in kmin.iz - 1..=kmax.iz + 1 {
                let key = VoxelKey::new(ix, iy, iz);
                let center = key.center(grid_origin, voxel_size);
                let Some(section) = voxel_section(&plane, &center, voxel_size, &u, &v) else {
                    continue;
                };
                if overlap_area(&outer, &holes, &section) > min_area {
                    out.push(key);
                }
            }
        }
    }
    out
}

/// Every `(voxel, face)` pair where the voxel cube intersects the face.
pub fn surface_voxels(solid: &BuildingSolid, grid_origin: &Point3, voxel_size: f64) -> Vec<(VoxelKey, String)> {
    solid
        .faces
        .iter()
        .flat_map(|f| {
            face_voxels(f, grid_origin, voxel_size)
                .into_iter()
                .map(move |k| (k, f.id.clone()))
        })
        .collect()
}

/// Classifies the surface voxels of one face.
pub fn classify_face_voxels(
    tree: &OccupancyTree,
    face: &Face,
    uncertainty: &UncertaintyConfig,
) -> Result<Vec<VoxelSurfaceClassification>> {
    uncertainty.validate()?;
    let plane = face
        .plane()
        .ok_or_else(|| Error::Domain(format!("face {} has no plane", face.id)))?;
    let vs = tree.voxel_size();
    let sigma_a = uncertainty.in_voxel_units(uncertainty.sigma_model, vs);
    let sigma_b = uncertainty.in_voxel_units(uncertainty.sigma_cloud, vs);
    let mu_a = uncertainty.in_voxel_units(uncertainty.mu_model, vs);
    let mu_b = uncertainty.in_voxel_units(uncertainty.mu_cloud, vs);
    let mut keys = face_voxels(face, &tree.grid_origin(), vs);
    keys.sort();
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        let (state, _) = tree.voxel_state(&key);
        let data = tree.voxel(&key);
        // distance to the model surface and along-ray distance to the return
        let geometry = match (state, data) {
            (VoxelState::Occupied, Some(d)) => d
                .hit
                .map(|h| (plane.signed_distance(&h.point).abs(), h.center_distance))
                .or_else(|| d.pass.map(|p| (plane.signed_distance(&p.point).abs(), p.to_endpoint))),
            (VoxelState::Empty, Some(d)) => d
                .pass
                .map(|p| (plane.signed_distance(&p.point).abs(), p.to_endpoint))
                .or_else(|| d.hit.map(|h| (plane.signed_distance(&h.point).abs(), h.center_distance))),
            _ => None,
        };
        let base_state = match state {
            VoxelState::Occupied => SurfaceState::Confirmed,
            VoxelState::Empty => SurfaceState::Conflicted,
            VoxelState::Unknown => SurfaceState::Unknown,
        };
        let (p_confirmed, p_conflicted) = match geometry {
            Some((d_plane, d_ray)) => {
                let p_a = relative_positioning_probability(d_plane, mu_a, sigma_a, vs)?;
                let p_b = relative_positioning_probability(d_ray, mu_b, sigma_b, vs)?;
                let (c, x) = joint_state_probability(p_a, p_b);
                (Some(c), Some(x))
            }
            None if base_state == SurfaceState::Unknown => (None, None),
            // measured voxel without recorded geometry: fall back to its state
            None => {
                let c = if base_state == SurfaceState::Confirmed { 1.0 } else { 0.0 };
                (Some(c), Some(1.0 - c))
            }
        };
        out.push(VoxelSurfaceClassification {
            key,
            face_id: face.id.clone(),
            base_state,
            p_confirmed,
            p_conflicted,
        });
    }
    Ok(out)
}

/// Classifies the surface voxels of every face, ordered by face then key.
pub fn classify_surface_voxels(
    tree: &OccupancyTree,
    solid: &BuildingSolid,
    uncertainty: &UncertaintyConfig,
) -> Result<Vec<VoxelSurfaceClassification>> {
    let mut out = Vec::new();
    for face in &solid.faces {
        out.extend(classify_face_voxels(tree, face, uncertainty)?);
    }
    Ok(out)
}

/// Projects classified voxels of one face onto its frame. Measured pixels
/// carry `(conflicted, confirmed, 0)`, unmeasured ones `(0, 0, 1)`.
pub fn project_conflict_map(
    classifications: &[VoxelSurfaceClassification],
    frame: &FacadeFrame,
    grid_origin: &Point3,
    voxel_size: f64,
    aggregation: PixelAggregation,
) -> FacadeRaster {
    let mut raster = FacadeRaster::new(frame.clone(), CONFLICT_CHANNELS.iter().map(|s| s.to_string()).collect());
    let cells = frame.rows * frame.cols;
    // (sum conflicted, sum confirmed, count) or max-conflicted pair
    let mut acc: Vec<Option<(f64, f64, usize)>> = vec![None; cells];
    for c in classifications.iter().filter(|c| c.face_id == frame.face_id) {
        let (Some(conf), Some(confl)) = (c.p_confirmed, c.p_conflicted) else {
            continue;
        };
        let center = c.key.center(grid_origin, voxel_size);
        let Some((row, col)) = frame.pixel_of_projected(&center) else {
            continue;
        };
        let slot = &mut acc[row * frame.cols + col];
        *slot = Some(match (*slot, aggregation) {
            (None, _) => (confl, conf, 1),
            (Some((x, y, n)), PixelAggregation::Mean) => (x + confl, y + conf, n + 1),
            (Some((x, y, n)), PixelAggregation::MaxConflicted) => {
                if confl > x {
                    (confl, conf, n + 1)
                } else {
                    (x, y, n + 1)
                }
            }
        });
    }
    for row in 0..frame.rows {
        for col in 0..frame.cols {
            let px = match acc[row * frame.cols + col] {
                None => [0.0, 0.0, 1.0],
                Some((x, y, n)) => match aggregation {
                    PixelAggregation::Mean => [x / n as f64, y / n as f64, 0.0],
                    PixelAggregation::MaxConflicted => [x, y, 0.0],
                },
            };
            raster.set_pixel(row, col, &px);
        }
    }
    raster
}

/// Conflict map of one face straight from the tree.
pub fn conflict_map_for_face(
    tree: &OccupancyTree,
    face: &Face,
    uncertainty: &UncertaintyConfig,
    aggregation: PixelAggregation,
) -> Result<FacadeRaster> {
    let frame = FacadeFrame::for_face(face, tree.voxel_size())?;
    let classes = classify_face_voxels(tree, face, uncertainty)?;
    Ok(project_conflict_map(
        &classes,
        &frame,
        &tree.grid_origin(),
        tree.voxel_size(),
        aggregation,
    ))
}
