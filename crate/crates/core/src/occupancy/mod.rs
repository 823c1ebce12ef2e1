//! Probabilistic occupancy from laser rays: clamped log-odds updates on a
//! sparse voxel octree.

mod io;
mod octree;
mod traverse;

use std::path::Path;

pub use io::{parse_rays, read_occupancy, read_rays, render_occupancy, write_occupancy, write_rays};
pub use octree::Octree;
pub use traverse::traverse_voxels;

use crate::error::{Error, Result};
use crate::geom::{Point3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl VoxelKey {
    pub fn new(ix: i64, iy: i64, iz: i64) -> Self {
        VoxelKey { ix, iy, iz }
    }

    /// Key of a point already expressed in grid units.
    pub(crate) fn from_grid(g: &Vector3) -> Self {
        VoxelKey::new(g.x.floor() as i64, g.y.floor() as i64, g.z.floor() as i64)
    }

    pub fn of_point(p: &Point3, grid_origin: &Point3, voxel_size: f64) -> Self {
        Self::from_grid(&((p - grid_origin) / voxel_size))
    }

    pub fn center(&self, grid_origin: &Point3, voxel_size: f64) -> Point3 {
        grid_origin
            + Vector3::new(
                self.ix as f64 + 0.5,
                self.iy as f64 + 0.5,
                self.iz as f64 + 0.5,
            ) * voxel_size
    }

    pub fn as_array(&self) -> [i64; 3] {
        [self.ix, self.iy, self.iz]
    }
}

/// One laser observation from sensor position to hit point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3,
    pub endpoint: Point3,
}

impl Ray {
    pub fn new(origin: Point3, endpoint: Point3) -> Self {
        Ray { origin, endpoint }
    }

    pub fn length(&self) -> f64 {
        (self.endpoint - self.origin).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyConfig {
    /// Voxel edge length, meters.
    pub voxel_size: f64,
    /// Prior occupancy probability of an unobserved voxel.
    pub prior: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub l_hit: f64,
    pub l_miss: f64,
    /// Probability at or above which a voxel counts as occupied.
    pub occ_threshold: f64,
    pub max_range: f64,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        OccupancyConfig {
            voxel_size: 0.1,
            prior: 0.5,
            l_min: -2.0,
            l_max: 3.5,
            l_hit: 0.85,
            l_miss: -0.4,
            occ_threshold: 0.5,
            max_range: 100.0,
        }
    }
}

impl OccupancyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.voxel_size > 0.0) || !self.voxel_size.is_finite() {
            return bad("voxel size must be positive");
        }
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return bad("prior must lie in (0, 1)");
        }
        if !(self.l_min < 0.0 && self.l_max > 0.0) {
            return bad("clamping requires l_min < 0 < l_max");
        }
        if !(self.l_hit > 0.0 && self.l_miss < 0.0) {
            return bad("log-odds increments require l_hit > 0 > l_miss");
        }
        if !(self.occ_threshold > 0.0 && self.occ_threshold < 1.0) {
            return bad("occupancy threshold must lie in (0, 1)");
        }
        if !(self.max_range > 0.0) {
            return bad("max range must be positive");
        }
        Ok(())
    }
}

/// `ln(p / (1 - p))`.
pub fn log_odds(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
    }
    Ok((p / (1.0 - p)).ln())
}

/// Inverse of [`log_odds`].
pub fn probability(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Adds a log-odds increment and clamps to `[l_min, l_max]`.
pub fn clamped_update(current: f64, increment: f64, l_min: f64, l_max: f64) -> f64 {
    (current + increment).min(l_max).max(l_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelState {
    Occupied,
    Empty,
    Unknown,
}

/// Hit point recorded in a voxel: the one nearest to the voxel center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitEvidence {
    pub point: Point3,
    pub center_distance: f64,
}

/// Pass-through recorded in a voxel: the ray whose endpoint is nearest along
/// the ray, measured from the point of the ray closest to the voxel center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassEvidence {
    pub point: Point3,
    pub to_endpoint: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelData {
    pub log_odds: f64,
    pub hit: Option<HitEvidence>,
    pub pass: Option<PassEvidence>,
}

#[derive(Debug, Clone)]
pub struct OccupancyTree {
    config: OccupancyConfig,
    grid_origin: Point3,
    prior_log_odds: f64,
    cells: Octree<VoxelData>,
}

impl OccupancyTree {
    pub fn new(grid_origin: Point3, config: OccupancyConfig) -> Result<Self> {
        config.validate()?;
        Ok(OccupancyTree {
            prior_log_odds: log_odds(config.prior)?,
            config,
            grid_origin,
            cells: Octree::new(),
        })
    }

    pub fn config(&self) -> &OccupancyConfig {
        &self.config
    }

    pub fn grid_origin(&self) -> Point3 {
        self.grid_origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.config.voxel_size
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn key_of(&self, p: &Point3) -> VoxelKey {
        VoxelKey::of_point(p, &self.grid_origin, self.config.voxel_size)
    }

    pub fn center_of(&self, key: &VoxelKey) -> Point3 {
        key.center(&self.grid_origin, self.config.voxel_size)
    }

    pub fn voxel(&self, key: &VoxelKey) -> Option<&VoxelData> {
        self.cells.get(key)
    }

    pub fn log_odds_at(&self, key: &VoxelKey) -> Option<f64> {
        self.cells.get(key).map(|v| v.log_odds)
    }

    /// Stored voxels in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&VoxelKey, &VoxelData)> {
        self.cells.iter()
    }

    fn update(&mut self, key: VoxelKey, increment: f64) -> &mut VoxelData {
        let prior = self.prior_log_odds;
        let (lo, hi) = (self.config.l_min, self.config.l_max);
        let cell = self.cells.get_or_insert_with(key, || VoxelData {
            log_odds: prior,
            hit: None,
            pass: None,
        });
        cell.log_odds = clamped_update(cell.log_odds, increment, lo, hi);
        cell
    }

    /// Applies one observation: every traversed voxel gets `l_miss`, the
    /// endpoint voxel gets `l_hit`. Rays longer than `max_range` are cut at
    /// the range and contribute misses only.
    pub fn integrate_ray(&mut self, ray: &Ray) {
        let length = ray.length();
        if !(length > 0.0) {
            return;
        }
        let dir = (ray.endpoint - ray.origin) / length;
        let within_range = length <= self.config.max_range;
        let end = if within_range {
            ray.endpoint
        } else {
            ray.origin + dir * self.config.max_range
        };
        let (go, vs) = (self.grid_origin, self.config.voxel_size);
        let l_miss = self.config.l_miss;
        let mut visited = Vec::new();
        traverse::for_each_traversed(&ray.origin, &end, &go, vs, |k, _, _| visited.push(k));
        for key in visited {
            let center = key.center(&go, vs);
            let s = (center - ray.origin).dot(&dir).clamp(0.0, length);
            let closest = ray.origin + dir * s;
            let to_endpoint = length - s;
            let cell = self.update(key, l_miss);
            if cell.pass.map_or(true, |p| to_endpoint < p.to_endpoint) {
                cell.pass = Some(PassEvidence {
                    point: closest,
                    to_endpoint,
                });
            }
        }
        if within_range {
            let key = self.key_of(&ray.endpoint);
            let center_distance = (self.center_of(&key) - ray.endpoint).norm();
            let l_hit = self.config.l_hit;
            let cell = self.update(key, l_hit);
            if cell.hit.map_or(true, |h| center_distance < h.center_distance) {
                cell.hit = Some(HitEvidence {
                    point: ray.endpoint,
                    center_distance,
                });
            }
        }
    }

    /// Occupancy state and probability of a voxel; never-updated voxels are
    /// unknown at the prior probability.
    pub fn voxel_state(&self, key: &VoxelKey) -> (VoxelState, f64) {
        match self.log_odds_at(key) {
            None => (VoxelState::Unknown, self.config.prior),
            Some(l) => {
                let p = probability(l);
                if p >= self.config.occ_threshold {
                    (VoxelState::Occupied, p)
                } else {
                    (VoxelState::Empty, p)
                }
            }
        }
    }

    pub(crate) fn insert_raw(&mut self, key: VoxelKey, data: VoxelData) {
        *self.cells.get_or_insert_with(key, || data) = data;
    }
}

/// Grid origin for a set of rays: the componentwise minimum of all ray
/// points, floored to a multiple of the voxel size.
pub fn grid_origin_for(rays: &[Ray], voxel_size: f64) -> Point3 {
    if rays.is_empty() {
        return Point3::origin();
    }
    let mut min = Vector3::repeat(f64::INFINITY);
    for r in rays {
        min = min.inf(&r.origin.coords).inf(&r.endpoint.coords);
    }
    Point3::from(min.map(|c| (c / voxel_size).floor() * voxel_size))
}

/// Integrates rays in order into a fresh tree.
pub fn integrate_all(rays: &[Ray], config: OccupancyConfig) -> Result<OccupancyTree> {
    let mut tree = OccupancyTree::new(grid_origin_for(rays, config.voxel_size), config)?;
    for r in rays {
        tree.integrate_ray(r);
    }
    Ok(tree)
}

/// Reads a rays file and integrates it in file order.
pub fn build_occupancy(rays_path: impl AsRef<Path>, config: OccupancyConfig) -> Result<OccupancyTree> {
    let rays = read_rays(rays_path)?;
    integrate_all(&rays, config)
}
