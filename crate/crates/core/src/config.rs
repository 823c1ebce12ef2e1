//! Pipeline configuration: line-oriented `key = value` text.
//!
//! Keys (defaults in brackets):
//!
//! | key | meaning |
//! |---|---|
//! | `rays` | ray file, required |
//! | `solid` | prior building solid, required |
//! | `points` | labeled point file [none] |
//! | `image` | `<face id> <probability image> <correspondences>`, repeatable [none] |
//! | `templates` | template library [built-in] |
//! | `cpt` | conditional probability table [built-in] |
//! | `out_dir` | output directory [`out`]; overridden by `LOD3_OUT_DIR` |
//! | `gt_instances`, `gt_model` | ground truth for evaluation [none] |
//! | `vs` | voxel and raster cell size, m [0.1] |
//! | `prior`, `l_min`, `l_max`, `l_hit`, `l_miss`, `occ_threshold`, `max_range` | occupancy |
//! | `mu_model`, `sigma_model`, `mu_cloud`, `sigma_cloud` | positioning uncertainty [0, 3, 0, 2.85] |
//! | `sigma_units` | `voxels` or `meters` [voxels] |
//! | `conflict_aggregation`, `point_aggregation` | `max` or `mean` [max] |
//! | `band_dist` | point projection band, m [3 cells] |
//! | `resampling` | `nearest` or `bilinear` [nearest] |
//! | `p_high`, `kernel`, `pe_up`, `pe_lo`, `min_pixels` | extraction [0.7, 3, 95, 5, 4] |
//! | `depth` | recess depth, m [0.1] |
//! | `template_selection` | `first` or `nearest-aspect` [first] |
//! | `iou_min` | matching threshold [0.5] |
//! | `sample_spacing` | surface sampling for mesh deviation, m [0.05] |
//!
//! Relative paths are resolved against the directory of the config file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::extraction::ExtractionConfig;
use crate::occupancy::OccupancyConfig;
use crate::raster::{ChannelAggregation, PointProjection, Resampling};
use crate::reconstruct::{CutConfig, TemplateSelection};
use crate::textio;
use crate::visibility::{PixelAggregation, UncertaintyConfig};

pub const OUT_DIR_ENV: &str = "LOD3_OUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct ImageInput {
    pub face_id: String,
    pub image: PathBuf,
    pub correspondences: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub rays: PathBuf,
    pub solid: PathBuf,
    pub points: Option<PathBuf>,
    pub images: Vec<ImageInput>,
    pub templates: Option<PathBuf>,
    pub cpt: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub gt_instances: Option<PathBuf>,
    pub gt_model: Option<PathBuf>,
    pub occupancy: OccupancyConfig,
    pub uncertainty: UncertaintyConfig,
    pub conflict_aggregation: PixelAggregation,
    pub point_projection: PointProjection,
    pub resampling: Resampling,
    pub extraction: ExtractionConfig,
    pub depth: f64,
    pub template_selection: TemplateSelection,
    pub iou_min: f64,
    pub sample_spacing: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rays: PathBuf::new(),
            solid: PathBuf::new(),
            points: None,
            images: Vec::new(),
            templates: None,
            cpt: None,
            out_dir: PathBuf::from("out"),
            gt_instances: None,
            gt_model: None,
            occupancy: OccupancyConfig::default(),
            uncertainty: UncertaintyConfig::default(),
            conflict_aggregation: PixelAggregation::default(),
            point_projection: PointProjection::default(),
            resampling: Resampling::default(),
            extraction: ExtractionConfig::default(),
            depth: 0.1,
            template_selection: TemplateSelection::default(),
            iou_min: 0.5,
            sample_spacing: 0.05,
        }
    }
}

fn config_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn num(value: &str, line: usize) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| config_err(line, format!("`{value}` is not a number")))
}

fn aggregation(value: &str, line: usize) -> Result<bool> {
    match value {
        "max" => Ok(true),
        "mean" => Ok(false),
        _ => Err(config_err(line, format!("aggregation must be max or mean, got `{value}`"))),
    }
}

impl PipelineConfig {
    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = PipelineConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        let path = |v: &str| base.join(v);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_err(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(config_err(line, format!("`{key}` has no value")));
            }
            if key != "image" && !seen.insert(key.to_string()) {
                return Err(config_err(line, format!("duplicate key `{key}`")));
            }
            match key {
                "rays" => c.rays = path(value),
                "solid" => c.solid = path(value),
                "points" => c.points = Some(path(value)),
                "image" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(config_err(line, "image needs `<face id> <image> <correspondences>`"));
                    }
                    c.images.push(ImageInput {
                        face_id: parts[0].to_string(),
                        image: path(parts[1]),
                        correspondences: path(parts[2]),
                    });
                }
                "templates" => c.templates = Some(path(value)),
                "cpt" => c.cpt = Some(path(value)),
                "out_dir" => c.out_dir = path(value),
                "gt_instances" => c.gt_instances = Some(path(value)),
                "gt_model" => c.gt_model = Some(path(value)),
                "vs" => c.occupancy.voxel_size = num(value, line)?,
                "prior" => c.occupancy.prior = num(value, line)?,
                "l_min" => c.occupancy.l_min = num(value, line)?,
                "l_max" => c.occupancy.l_max = num(value, line)?,
                "l_hit" => c.occupancy.l_hit = num(value, line)?,
                "l_miss" => c.occupancy.l_miss = num(value, line)?,
                "occ_threshold" => c.occupancy.occ_threshold = num(value, line)?,
                "max_range" => c.occupancy.max_range = num(value, line)?,
                "mu_model" => c.uncertainty.mu_model = num(value, line)?,
                "sigma_model" => c.uncertainty.sigma_model = num(value, line)?,
                "mu_cloud" => c.uncertainty.mu_cloud = num(value, line)?,
                "sigma_cloud" => c.uncertainty.sigma_cloud = num(value, line)?,
                "sigma_units" => {
                    c.uncertainty.absolute = match value {
                        "voxels" => false,
                        "meters" => true,
                        _ => return Err(config_err(line, "sigma_units must be voxels or meters")),
                    }
                }
                "conflict_aggregation" => {
                    c.conflict_aggregation = if aggregation(value, line)? {
                        PixelAggregation::MaxConflicted
                    } else {
                        PixelAggregation::Mean
                    }
                }
                "point_aggregation" => {
                    c.point_projection.aggregation = if aggregation(value, line)? {
                        ChannelAggregation::Max
                    } else {
                        ChannelAggregation::Mean
                    }
                }
                "band_dist" => c.point_projection.band_dist = Some(num(value, line)?),
                "resampling" => {
                    c.resampling = match value {
                        "nearest" => Resampling::Nearest,
                        "bilinear" => Resampling::Bilinear,
                        _ => return Err(config_err(line, "resampling must be nearest or bilinear")),
                    }
                }
                "p_high" => c.extraction.p_high = num(value, line)?,
                "kernel" => c.extraction.kernel = count(value, line)?,
                "pe_up" => c.extraction.pe_up = num(value, line)?,
                "pe_lo" => c.extraction.pe_lo = num(value, line)?,
                "min_pixels" => c.extraction.min_pixels = count(value, line)?,
                "depth" => c.depth = num(value, line)?,
                "template_selection" => {
                    c.template_selection = match value {
                        "first" => TemplateSelection::First,
                        "nearest-aspect" => TemplateSelection::NearestAspect,
                        _ => return Err(config_err(line, "template_selection must be first or nearest-aspect")),
                    }
                }
                "iou_min" => c.iou_min = num(value, line)?,
                "sample_spacing" => c.sample_spacing = num(value, line)?,
                _ => return Err(config_err(line, format!("unknown key `{key}`"))),
            }
        }
        Ok(c)
    }

    /// Reads a config file and applies the `LOD3_OUT_DIR` override.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = textio::read_to_string(path).map_err(|e| Error::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut c = Self::parse(&text, base)?;
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
            c.out_dir = PathBuf::from(dir);
        }
        Ok(c)
    }

    pub fn cut_config(&self) -> CutConfig {
        CutConfig {
            depth: self.depth,
            cell: self.occupancy.voxel_size,
            selection: self.template_selection,
        }
    }

    /// Checks every numeric field. Files are not touched here; a missing
    /// input surfaces in the stage that reads it.
    pub fn validate(&self) -> Result<()> {
        if self.rays.as_os_str().is_empty() {
            return Err(Error::Config("`rays` is required".into()));
        }
        if self.solid.as_os_str().is_empty() {
            return Err(Error::Config("`solid` is required".into()));
        }
        self.occupancy.validate()?;
        self.uncertainty.validate()?;
        self.extraction.validate()?;
        self.cut_config().validate()?;
        if let Some(b) = self.point_projection.band_dist {
            if !(b > 0.0) {
                return Err(Error::Config(format!("band_dist {b} must be positive")));
            }
        }
        if !(self.iou_min > 0.0 && self.iou_min <= 1.0) {
            return Err(Error::Config(format!("iou_min {} must lie in (0, 1]", self.iou_min)));
        }
        if !(self.sample_spacing > 0.0) {
            return Err(Error::Config(format!("sample_spacing {} must be positive", self.sample_spacing)));
        }
        Ok(())
    }

    /// Config text with every key spelled out; paths are written as given.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let p = |p: &Path| p.display().to_string();
        let _ = writeln!(out, "rays = {}", p(&self.rays));
        let _ = writeln!(out, "solid = {}", p(&self.solid));
        if let Some(x) = &self.points {
            let _ = writeln!(out, "points = {}", p(x));
        }
        for im in &self.images {
            let _ = writeln!(out, "image = {} {} {}", im.face_id, p(&im.image), p(&im.correspondences));
        }
        for (k, v) in [
            ("templates", &self.templates),
            ("cpt", &self.cpt),
            ("gt_instances", &self.gt_instances),
            ("gt_model", &self.gt_model),
        ] {
            if let Some(x) = v {
                let _ = writeln!(out, "{k} = {}", p(x));
            }
        }
        let _ = writeln!(out, "out_dir = {}", p(&self.out_dir));
        let o = &self.occupancy;
        let u = &self.uncertainty;
        let e = &self.extraction;
        for (k, v) in [
            ("vs", o.voxel_size),
            ("prior", o.prior),
            ("l_min", o.l_min),
            ("l_max", o.l_max),
            ("l_hit", o.l_hit),
            ("l_miss", o.l_miss),
            ("occ_threshold", o.occ_threshold),
            ("max_range", o.max_range),
            ("mu_model", u.mu_model),
            ("sigma_model", u.sigma_model),
            ("mu_cloud", u.mu_cloud),
            ("sigma_cloud", u.sigma_cloud),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "sigma_units = {}", if u.absolute { "meters" } else { "voxels" });
        let agg = |max: bool| if max { "max" } else { "mean" };
        let _ = writeln!(
            out,
            "conflict_aggregation = {}",
            agg(self.conflict_aggregation == PixelAggregation::MaxConflicted)
        );
        let _ = writeln!(
            out,
            "point_aggregation = {}",
            agg(self.point_projection.aggregation == ChannelAggregation::Max)
        );
        if let Some(b) = self.point_projection.band_dist {
            let _ = writeln!(out, "band_dist = {b}");
        }
        let _ = writeln!(
            out,
            "resampling = {}",
            match self.resampling {
                Resampling::Nearest => "nearest",
                Resampling::Bilinear => "bilinear",
            }
        );
        let _ = writeln!(out, "p_high = {}\nkernel = {}", e.p_high, e.kernel);
        let _ = writeln!(out, "pe_up = {}\npe_lo = {}\nmin_pixels = {}", e.pe_up, e.pe_lo, e.min_pixels);
        let _ = writeln!(out, "depth = {}", self.depth);
        let _ = writeln!(
            out,
            "template_selection = {}",
            match self.template_selection {
                TemplateSelection::First => "first",
                TemplateSelection::NearestAspect => "nearest-aspect",
            }
        );
        let _ = writeln!(out, "iou_min = {}\nsample_spacing = {}", self.iou_min, self.sample_spacing);
        out
    }
}

fn count(value: &str, line: usize) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| config_err(line, format!("`{value}` is not a non-negative integer")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let c = PipelineConfig::parse(
            "# scene\nrays = r.txt\nsolid = /abs/s.txt\nvs = 0.2  # coarse\nimage = f im.txt c.txt\np_high = 0.8\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(c.rays, PathBuf::from("/base/r.txt"));
        assert_eq!(c.solid, PathBuf::from("/abs/s.txt"));
        assert_eq!(c.occupancy.voxel_size, 0.2);
        assert_eq!(c.images[0].face_id, "f");
        assert_eq!(c.extraction.p_high, 0.8);
        assert_eq!(c.cut_config().cell, 0.2);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        for text in ["vs 0.1", "bogus = 1", "vs = abc", "vs = 0.1\nvs = 0.2", "kernel = -1", "rays ="] {
            assert!(matches!(PipelineConfig::parse(text, base), Err(Error::Config(_))), "{text}");
        }
        let c = PipelineConfig::parse("rays = r\nsolid = s\nvs = 0", base).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = PipelineConfig::parse("rays = r\nsolid = s\niou_min = 1.5", base).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = PipelineConfig::parse("rays = r\nsolid = s\npoints = p\nimage = f i c", Path::new("/d")).unwrap();
        c.out_dir = PathBuf::from("/d/out");
        c.template_selection = TemplateSelection::NearestAspect;
        c.point_projection.band_dist = Some(0.25);
        c.resampling = Resampling::Bilinear;
        let back = PipelineConfig::parse(&c.render(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, c);
    }
}
