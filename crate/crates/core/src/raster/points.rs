//! Per-point semantic label probabilities and their projection onto a façade
//! raster.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::textio::{self, parse_f64, Line};

use super::{default_band_dist, world_to_pixel, FacadeFrame, FacadeRaster};

pub const POINT_LABELS: [&str; 8] = ["arch", "column", "molding", "floor", "door", "window", "wall", "other"];

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub position: Point3,
    /// Ordered as [`POINT_LABELS`].
    pub prob: [f64; 8],
}

impl LabeledPoint {
    pub fn is_valid(&self) -> bool {
        self.prob.iter().all(|p| (0.0..=1.0).contains(p)) && (self.prob.iter().sum::<f64>() - 1.0).abs() <= 1e-4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelAggregation {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointProjection {
    /// `None` means three cells.
    pub band_dist: Option<f64>,
    pub aggregation: ChannelAggregation,
}

impl Default for PointProjection {
    fn default() -> Self {
        PointProjection {
            band_dist: None,
            aggregation: ChannelAggregation::Max,
        }
    }
}

/// Each in-band point votes its whole probability vector into its pixel.
/// Pixels without points stay zero.
pub fn project_point_probabilities(points: &[LabeledPoint], frame: &FacadeFrame, opts: &PointProjection) -> FacadeRaster {
    let band = opts.band_dist.unwrap_or_else(|| default_band_dist(frame.cell));
    let mut raster = FacadeRaster::new(frame.clone(), POINT_LABELS.iter().map(|s| s.to_string()).collect());
    let mut counts = vec![0u32; frame.rows * frame.cols];
    let mut sums = match opts.aggregation {
        ChannelAggregation::Mean => vec![0.0; frame.rows * frame.cols * 8],
        ChannelAggregation::Max => Vec::new(),
    };
    for p in points {
        let Some((row, col)) = world_to_pixel(frame, &p.position, band) else {
            continue;
        };
        let idx = row * frame.cols + col;
        counts[idx] += 1;
        match opts.aggregation {
            ChannelAggregation::Max => {
                for (c, &x) in p.prob.iter().enumerate() {
                    if x > raster.get(row, col, c) {
                        raster.set(row, col, c, x);
                    }
                }
            }
            ChannelAggregation::Mean => {
                for (c, &x) in p.prob.iter().enumerate() {
                    sums[idx * 8 + c] += x;
                }
            }
        }
    }
    if opts.aggregation == ChannelAggregation::Mean {
        for row in 0..frame.rows {
            for col in 0..frame.cols {
                let idx = row * frame.cols + col;
                if counts[idx] > 0 {
                    let n = counts[idx] as f64;
                    let px: Vec<f64> = sums[idx * 8..idx * 8 + 8].iter().map(|s| s / n).collect();
                    raster.set_pixel(row, col, &px);
                }
            }
        }
    }
    raster
}

/// One point per line: `x y z` followed by the eight label probabilities.
pub fn parse_labeled_points(text: &str) -> Result<Vec<LabeledPoint>> {
    let mut out = Vec::new();
    for Line { number, tokens } in textio::lines(text) {
        if tokens.len() != 11 {
            return Err(Error::parse(number, format!("expected 11 numbers, found {}", tokens.len())));
        }
        let v: Vec<f64> = tokens.iter().map(|t| parse_f64(t, number)).collect::<Result<_>>()?;
        let mut prob = [0.0; 8];
        prob.copy_from_slice(&v[3..]);
        let p = LabeledPoint {
            position: Point3::new(v[0], v[1], v[2]),
            prob,
        };
        if !p.is_valid() {
            return Err(Error::parse(number, "label probabilities must lie in [0, 1] and sum to 1"));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn read_labeled_points(path: impl AsRef<Path>) -> Result<Vec<LabeledPoint>> {
    parse_labeled_points(&textio::read_to_string(path.as_ref())?)
}

pub fn write_labeled_points(points: &[LabeledPoint], path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("# x y z {}\n", POINT_LABELS.join(" "));
    for p in points {
        let _ = write!(out, "{} {} {}", p.position.x, p.position.y, p.position.z);
        for x in p.prob {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    textio::write_string(path.as_ref(), &out)
}
