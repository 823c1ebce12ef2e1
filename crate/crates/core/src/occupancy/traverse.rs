use crate::geom::Point3;

use super::VoxelKey;

/// Voxels whose interior the open segment `(origin, endpoint)` passes
/// through, in order of increasing ray parameter, without the voxel that
/// contains `endpoint`.
///
/// Crossings exactly through a voxel edge or corner advance every tied axis
/// at once, so voxels touched only on their boundary never appear.
pub fn traverse_voxels(
    origin: &Point3,
    endpoint: &Point3,
    grid_origin: &Point3,
    voxel_size: f64,
) -> Vec<VoxelKey> {
    let mut out = Vec::new();
    for_each_traversed(origin, endpoint, grid_origin, voxel_size, |k, _, _| out.push(k));
    out
}

/// Visits traversed voxels with the ray-parameter interval `[t_enter, t_exit]`
/// (segment parameter in `[0, 1]`) covered inside each voxel.
pub(crate) fn for_each_traversed<F>(
    origin: &Point3,
    endpoint: &Point3,
    grid_origin: &Point3,
    voxel_size: f64,
    mut visit: F,
) where
    F: FnMut(VoxelKey, f64, f64),
{
    let g0 = (origin - grid_origin) / voxel_size;
    let g1 = (endpoint - grid_origin) / voxel_size;
    let d = g1 - g0;
    let end_key = VoxelKey::from_grid(&g1);
    // a segment lying in a grid plane touches voxels only on their boundary
    if (0..3).any(|a| d[a] == 0.0 && g0[a] == g0[a].floor()) {
        return;
    }
    let mut cell = [g0.x.floor() as i64, g0.y.floor() as i64, g0.z.floor() as i64];
    let mut step = [0i64; 3];
    let mut t_next = [f64::INFINITY; 3];
    for axis in 0..3 {
        if d[axis] > 0.0 {
            step[axis] = 1;
            t_next[axis] = ((cell[axis] + 1) as f64 - g0[axis]) / d[axis];
        } else if d[axis] < 0.0 {
            step[axis] = -1;
            t_next[axis] = (cell[axis] as f64 - g0[axis]) / d[axis];
        }
    }
    // A start point on a boundary plane moving in the negative direction
    // belongs to the lower cell for traversal purposes.
    for axis in 0..3 {
        if step[axis] < 0 && t_next[axis] <= 0.0 {
            cell[axis] -= 1;
            t_next[axis] = (cell[axis] as f64 - g0[axis]) / d[axis];
        }
    }

    let mut t_enter = 0.0f64;
    loop {
        let t_exit = t_next[0].min(t_next[1]).min(t_next[2]).min(1.0);
        let key = VoxelKey::new(cell[0], cell[1], cell[2]);
        if t_exit > t_enter && key != end_key {
            visit(key, t_enter, t_exit);
        }
        if t_exit >= 1.0 {
            break;
        }
        // advance x, then y, then z; all axes crossing at the same parameter
        // move together
        for axis in 0..3 {
            if t_next[axis] == t_exit {
                cell[axis] += step[axis];
                t_next[axis] = if step[axis] > 0 {
                    ((cell[axis] + 1) as f64 - g0[axis]) / d[axis]
                } else {
                    (cell[axis] as f64 - g0[axis]) / d[axis]
                };
            }
        }
        t_enter = t_exit;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(v: &[(i64, i64, i64)]) -> Vec<VoxelKey> {
        v.iter().map(|&(x, y, z)| VoxelKey::new(x, y, z)).collect()
    }

    #[test]
    fn straight_ray_along_x() {
        let got = traverse_voxels(
            &Point3::new(0.05, 0.05, 0.05),
            &Point3::new(0.35, 0.05, 0.05),
            &Point3::origin(),
            0.1,
        );
        assert_eq!(got, keys(&[(0, 0, 0), (1, 0, 0), (2, 0, 0)]));
    }

    #[test]
    fn same_voxel_is_empty() {
        let got = traverse_voxels(
            &Point3::new(0.01, 0.02, 0.03),
            &Point3::new(0.08, 0.07, 0.06),
            &Point3::origin(),
            0.1,
        );
        assert!(got.is_empty());
    }

    #[test]
    fn diagonal_through_corners_skips_boundary_voxels() {
        let got = traverse_voxels(
            &Point3::new(0.05, 0.05, 0.05),
            &Point3::new(0.25, 0.25, 0.05),
            &Point3::origin(),
            0.1,
        );
        assert_eq!(got, keys(&[(0, 0, 0), (1, 1, 0)]));
    }

    #[test]
    fn negative_direction_and_offset_grid() {
        let got = traverse_voxels(
            &Point3::new(1.35, 0.05, 0.05),
            &Point3::new(1.05, 0.05, 0.05),
            &Point3::new(1.0, 0.0, 0.0),
            0.1,
        );
        assert_eq!(got, keys(&[(3, 0, 0), (2, 0, 0), (1, 0, 0)]));
    }
}
