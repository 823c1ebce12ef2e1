//! Rays file (`sx sy sz px py pz` per line) and the occupancy dump exchanged
//! between the `raycast` and `conflicts` stages.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::textio::{self, header_fields, parse_f64, Line};

use super::{HitEvidence, OccupancyConfig, OccupancyTree, PassEvidence, Ray, VoxelData, VoxelKey};

pub fn parse_rays(text: &str) -> Result<Vec<Ray>> {
    let mut rays = Vec::new();
    for Line { number, tokens } in textio::lines(text) {
        if tokens.len() != 6 {
            return Err(Error::parse(number, format!("expected 6 numbers, found {}", tokens.len())));
        }
        let v: Vec<f64> = tokens
            .iter()
            .map(|t| parse_f64(t, number))
            .collect::<Result<_>>()?;
        let ray = Ray::new(Point3::new(v[0], v[1], v[2]), Point3::new(v[3], v[4], v[5]));
        if ray.origin == ray.endpoint {
            return Err(Error::parse(number, "zero-length ray"));
        }
        rays.push(ray);
    }
    Ok(rays)
}

pub fn read_rays(path: impl AsRef<Path>) -> Result<Vec<Ray>> {
    parse_rays(&textio::read_to_string(path.as_ref())?)
}

pub fn write_rays(rays: &[Ray], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(rays.len() * 64);
    for r in rays {
        let (o, e) = (r.origin, r.endpoint);
        let _ = writeln!(out, "{} {} {} {} {} {}", o.x, o.y, o.z, e.x, e.y, e.z);
    }
    textio::write_string(path.as_ref(), &out)
}

/// ```text
/// occupancy origin=<x y z> vs=<m> prior=<p> l_min=.. l_max=.. l_hit=.. l_miss=.. occ=.. max_range=..
/// v <ix> <iy> <iz> <log-odds> [h <x> <y> <z> <d>] [p <x> <y> <z> <t>]
/// ```
pub fn render_occupancy(tree: &OccupancyTree) -> String {
    let c = tree.config();
    let g = tree.grid_origin();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "occupancy origin={} {} {} vs={} prior={} l_min={} l_max={} l_hit={} l_miss={} occ={} max_range={}",
        g.x, g.y, g.z, c.voxel_size, c.prior, c.l_min, c.l_max, c.l_hit, c.l_miss, c.occ_threshold, c.max_range
    );
    let mut cells: Vec<(&VoxelKey, &VoxelData)> = tree.iter().collect();
    cells.sort_by_key(|(k, _)| **k);
    for (k, v) in cells {
        let _ = write!(out, "v {} {} {} {}", k.ix, k.iy, k.iz, v.log_odds);
        if let Some(h) = v.hit {
            let _ = write!(out, " h {} {} {} {}", h.point.x, h.point.y, h.point.z, h.center_distance);
        }
        if let Some(p) = v.pass {
            let _ = write!(out, " p {} {} {} {}", p.point.x, p.point.y, p.point.z, p.to_endpoint);
        }
        out.push('\n');
    }
    out
}

pub fn write_occupancy(tree: &OccupancyTree, path: impl AsRef<Path>) -> Result<()> {
    textio::write_string(path.as_ref(), &render_occupancy(tree))
}

fn parse_occupancy(text: &str) -> Result<OccupancyTree> {
    let mut tree: Option<OccupancyTree> = None;
    for Line { number, tokens } in textio::lines(text) {
        match tokens[0] {
            "occupancy" => {
                let mut config = OccupancyConfig::default();
                let mut origin = None;
                for (key, vals) in header_fields(&tokens[1..]) {
                    let nums: Vec<f64> = vals
                        .iter()
                        .map(|t| parse_f64(t, number))
                        .collect::<Result<_>>()?;
                    let one = || {
                        nums.first()
                            .copied()
                            .filter(|_| nums.len() == 1)
                            .ok_or_else(|| Error::parse(number, format!("`{key}` needs one value")))
                    };
                    match key {
                        "origin" if nums.len() == 3 => origin = Some(Point3::new(nums[0], nums[1], nums[2])),
                        "vs" => config.voxel_size = one()?,
                        "prior" => config.prior = one()?,
                        "l_min" => config.l_min = one()?,
                        "l_max" => config.l_max = one()?,
                        "l_hit" => config.l_hit = one()?,
                        "l_miss" => config.l_miss = one()?,
                        "occ" => config.occ_threshold = one()?,
                        "max_range" => config.max_range = one()?,
                        other => return Err(Error::parse(number, format!("bad header field `{other}`"))),
                    }
                }
                let origin = origin.ok_or_else(|| Error::parse(number, "missing origin"))?;
                tree = Some(
                    OccupancyTree::new(origin, config).map_err(|e| Error::parse(number, e.to_string()))?,
                );
            }
            "v" => {
                let t = tree
                    .as_mut()
                    .ok_or_else(|| Error::parse(number, "voxel before header"))?;
                let int = |s: &str| {
                    s.parse::<i64>()
                        .map_err(|_| Error::parse(number, format!("bad index `{s}`")))
                };
                if tokens.len() < 5 {
                    return Err(Error::parse(number, "truncated voxel line"));
                }
                let key = VoxelKey::new(int(tokens[1])?, int(tokens[2])?, int(tokens[3])?);
                let mut data = VoxelData {
                    log_odds: parse_f64(tokens[4], number)?,
                    hit: None,
                    pass: None,
                };
                let mut rest = &tokens[5..];
                while !rest.is_empty() {
                    if rest.len() < 5 {
                        return Err(Error::parse(number, "truncated evidence block"));
                    }
                    let n: Vec<f64> = rest[1..5]
                        .iter()
                        .map(|t| parse_f64(t, number))
                        .collect::<Result<_>>()?;
                    let point = Point3::new(n[0], n[1], n[2]);
                    match rest[0] {
                        "h" => {
                            data.hit = Some(HitEvidence {
                                point,
                                center_distance: n[3],
                            })
                        }
                        "p" => {
                            data.pass = Some(PassEvidence {
                                point,
                                to_endpoint: n[3],
                            })
                        }
                        other => return Err(Error::parse(number, format!("unknown evidence tag `{other}`"))),
                    }
                    rest = &rest[5..];
                }
                let c = t.config();
                if data.log_odds < c.l_min || data.log_odds > c.l_max {
                    return Err(Error::parse(number, "log-odds outside clamping band"));
                }
                t.insert_raw(key, data);
            }
            other => return Err(Error::parse(number, format!("unknown statement `{other}`"))),
        }
    }
    tree.ok_or_else(|| Error::parse(0, "missing occupancy header"))
}

pub fn read_occupancy(path: impl AsRef<Path>) -> Result<OccupancyTree> {
    parse_occupancy(&textio::read_to_string(path.as_ref())?)
}
