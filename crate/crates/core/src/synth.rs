//! Synthetic test scenes: a box building whose front wall is scanned by
//! perpendicular rays, with rectangular openings the rays pass through and
//! matching point and image evidence.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ImageInput, PipelineConfig};
use crate::error::{Error, Result};
use crate::extraction::{write_instances, OpeningInstance};
use crate::geom::{Point2d, Point3, UvRect};
use crate::model::{box_solid, write_solid, write_template_library, BuildingSolid, OpeningLabel, OpeningTemplate};
use crate::occupancy::{write_rays, Ray};
use crate::raster::{
    render_correspondences, write_labeled_points, write_raster, Correspondence, FacadeFrame, FacadeRaster, LabeledPoint,
    POINT_LABELS,
};
use crate::reconstruct::{default_library, reconstruct, write_citygml, CutConfig, Lod3Model};
use crate::textio;

pub const BUILDING_ID: &str = "building";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOpening {
    /// Meters in the front wall's façade frame.
    pub rect: UvRect,
    pub label: OpeningLabel,
    /// Closed blind: rays reflect at the wall plane instead of passing.
    pub blind: bool,
    /// Probability of the opening's label in the point evidence.
    pub point_prob: f64,
    /// Probability of the opening's label in the image evidence.
    pub image_prob: f64,
}

impl SynthOpening {
    pub fn new(rect: UvRect, label: OpeningLabel) -> Self {
        SynthOpening {
            rect,
            label,
            blind: false,
            point_prob: 0.9,
            image_prob: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub wall_width: f64,
    pub wall_height: f64,
    pub building_depth: f64,
    pub openings: Vec<SynthOpening>,
    /// Rays per square meter of wall.
    pub ray_density: f64,
    /// Isotropic Gaussian noise on ray endpoints, meters.
    pub noise_sigma: f64,
    pub seed: u64,
    pub sensor_distance: f64,
    /// Depth behind the wall where rays through an opening reflect.
    pub backplane: f64,
    pub point_spacing: f64,
    /// Image pixel size on the wall, meters.
    pub image_resolution: f64,
    pub voxel_size: f64,
    pub cut_depth: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            wall_width: 10.0,
            wall_height: 4.0,
            building_depth: 8.0,
            openings: Vec::new(),
            ray_density: 400.0,
            noise_sigma: 0.02,
            seed: 7,
            sensor_distance: 8.0,
            backplane: 2.0,
            point_spacing: 0.05,
            image_resolution: 0.05,
            voxel_size: 0.1,
            cut_depth: 0.1,
        }
    }
}

impl SceneSpec {
    /// A 10 m × 4 m wall with two windows and a door.
    pub fn reference() -> Self {
        SceneSpec {
            openings: vec![
                SynthOpening::new(UvRect::new(1.5, 2.0, 2.7, 3.4), OpeningLabel::Window),
                SynthOpening::new(UvRect::new(4.5, 0.3, 5.5, 2.4), OpeningLabel::Door),
                SynthOpening::new(UvRect::new(7.2, 2.0, 8.4, 3.4), OpeningLabel::Window),
            ],
            ..SceneSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        for (name, v) in [
            ("wall_width", self.wall_width),
            ("wall_height", self.wall_height),
            ("building_depth", self.building_depth),
            ("ray_density", self.ray_density),
            ("sensor_distance", self.sensor_distance),
            ("backplane", self.backplane),
            ("point_spacing", self.point_spacing),
            ("image_resolution", self.image_resolution),
            ("voxel_size", self.voxel_size),
            ("cut_depth", self.cut_depth),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma must be non-negative, got {}", self.noise_sigma));
        }
        for (i, o) in self.openings.iter().enumerate() {
            let r = &o.rect;
            if !r.is_valid() || r.u_min <= 0.0 || r.v_min <= 0.0 || r.u_max >= self.wall_width || r.v_max >= self.wall_height {
                return bad(format!("opening {i} lies outside the wall"));
            }
            for (name, p) in [("point", o.point_prob), ("image", o.image_prob)] {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("opening {i}: {name} probability {p} outside [0, 1]"));
                }
            }
            for (j, other) in self.openings.iter().enumerate().skip(i + 1) {
                if r.intersection_area(&other.rect) > 0.0 {
                    return bad(format!("openings {i} and {j} overlap"));
                }
            }
        }
        Ok(())
    }

    fn opening_at(&self, u: f64, v: f64) -> Option<&SynthOpening> {
        self.openings
            .iter()
            .find(|o| u > o.rect.u_min && u < o.rect.u_max && v > o.rect.v_min && v < o.rect.v_max)
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub solid: BuildingSolid,
    /// Id of the scanned wall.
    pub face_id: String,
    pub frame: FacadeFrame,
    pub rays: Vec<Ray>,
    pub points: Vec<LabeledPoint>,
    /// Probability image with `window` and `door` channels, row 0 at the top.
    pub image: FacadeRaster,
    pub correspondences: Vec<Correspondence>,
    pub gt_instances: Vec<OpeningInstance>,
    pub gt_model: Lod3Model,
    pub templates: Vec<OpeningTemplate>,
}

/// Samples per axis so the spacing does not exceed `step`.
fn divisions(extent: f64, step: f64) -> usize {
    ((extent / step - 1e-9).ceil() as usize).max(1)
}

pub fn synth_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.wall_width, spec.wall_height);
    let solid = box_solid(
        BUILDING_ID,
        Point3::origin(),
        Point3::new(spec.building_depth, w, h),
    );
    let face_id = format!("{BUILDING_ID}_wall_xmin");
    let face = solid.face(&face_id).expect("box has a front wall");
    let frame = FacadeFrame::for_face(face, spec.voxel_size)?;
    let n = frame.normal();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Spec(e.to_string()))?;
    let step = spec.ray_density.sqrt().recip();
    let (nu, nv) = (divisions(w, step), divisions(h, step));
    let mut rays = Vec::with_capacity(nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            let u = (i as f64 + 0.5) * w / nu as f64;
            let v = (j as f64 + 0.5) * h / nv as f64;
            let on_wall = frame.point_at(u, v);
            let target = match spec.opening_at(u, v) {
                Some(o) if !o.blind => on_wall - n * spec.backplane,
                _ => on_wall,
            };
            let mut jitter = || if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let endpoint = target + crate::geom::Vector3::new(jitter(), jitter(), jitter());
            rays.push(Ray::new(on_wall + n * spec.sensor_distance, endpoint));
        }
    }

    let label_channel = |label: OpeningLabel| {
        POINT_LABELS
            .iter()
            .position(|l| *l == label.as_str())
            .expect("label among point labels")
    };
    let wall = label_channel_named("wall");
    let other = label_channel_named("other");
    let (pu, pv) = (divisions(w, spec.point_spacing), divisions(h, spec.point_spacing));
    let mut points = Vec::with_capacity(pu * pv);
    for j in 0..pv {
        for i in 0..pu {
            let u = (i as f64 + 0.5) * w / pu as f64;
            let v = (j as f64 + 0.5) * h / pv as f64;
            let mut prob = [0.0; 8];
            match spec.opening_at(u, v) {
                Some(o) => {
                    prob[label_channel(o.label)] = o.point_prob;
                    prob[wall] = 1.0 - o.point_prob;
                }
                None => {
                    prob[wall] = 0.9;
                    prob[other] = 0.1;
                }
            }
            points.push(LabeledPoint {
                position: frame.point_at(u, v),
                prob,
            });
        }
    }

    let res = spec.image_resolution;
    let (cols, rows) = (divisions(w, res), divisions(h, res));
    let (px_w, px_h) = (w / cols as f64, h / rows as f64);
    let mut image = FacadeRaster::new(FacadeFrame::image(rows, cols), vec!["window".into(), "door".into()]);
    for r in 0..rows {
        for c in 0..cols {
            let u = (c as f64 + 0.5) * px_w;
            let v = h - (r as f64 + 0.5) * px_h;
            if let Some(o) = spec.opening_at(u, v) {
                let ch = if o.label == OpeningLabel::Door { 1 } else { 0 };
                image.set(r, c, ch, o.image_prob);
            }
        }
    }
    let (cw, rh) = (cols as f64, rows as f64);
    let correspondences = [(0.0, 0.0, 0.0, h), (cw, 0.0, w, h), (cw, rh, w, 0.0), (0.0, rh, 0.0, 0.0)]
        .into_iter()
        .map(|(x, y, u, v)| Correspondence {
            image: Point2d::new(x, y),
            uv: Point2d::new(u, v),
        })
        .collect();

    let gt_instances: Vec<OpeningInstance> = spec
        .openings
        .iter()
        .map(|o| OpeningInstance {
            face_id: face_id.clone(),
            rect: o.rect,
            label: o.label,
            confidence: 1.0,
            pixels: Vec::new(),
        })
        .collect();
    let templates = default_library();
    let cut = CutConfig {
        depth: spec.cut_depth,
        cell: spec.voxel_size,
        ..CutConfig::default()
    };
    let gt_model = reconstruct(&solid, &gt_instances, &templates, &cut)?;

    Ok(Scene {
        spec: spec.clone(),
        solid,
        face_id,
        frame,
        rays,
        points,
        image,
        correspondences,
        gt_instances,
        gt_model,
        templates,
    })
}

fn label_channel_named(name: &str) -> usize {
    POINT_LABELS.iter().position(|l| *l == name).expect("known point label")
}

/// File names written by [`write_scene`], relative to the scene directory.
pub mod files {
    pub const RAYS: &str = "rays.txt";
    pub const SOLID: &str = "solid.txt";
    pub const POINTS: &str = "points.txt";
    pub const IMAGE: &str = "image.txt";
    pub const CORRESPONDENCES: &str = "correspondences.txt";
    pub const GT_INSTANCES: &str = "gt_instances.txt";
    pub const GT_MODEL: &str = "gt_model.gml";
    pub const TEMPLATES: &str = "templates.txt";
    pub const CONFIG: &str = "scene.cfg";
}

/// Writes every scene file plus a pipeline config referencing them, and
/// returns the config path. The config's output directory is `out` inside
/// `dir`.
pub fn write_scene(scene: &Scene, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rays(&scene.rays, dir.join(files::RAYS))?;
    write_solid(&scene.solid, dir.join(files::SOLID))?;
    write_labeled_points(&scene.points, dir.join(files::POINTS))?;
    write_raster(&scene.image, dir.join(files::IMAGE))?;
    textio::write_string(
        &dir.join(files::CORRESPONDENCES),
        &render_correspondences(&scene.correspondences),
    )?;
    write_instances(&scene.gt_instances, dir.join(files::GT_INSTANCES))?;
    write_citygml(&scene.gt_model, dir.join(files::GT_MODEL))?;
    write_template_library(&scene.templates, dir.join(files::TEMPLATES))?;
    let config = scene_config(scene);
    let path = dir.join(files::CONFIG);
    textio::write_string(&path, &config.render())?;
    Ok(path)
}

/// Pipeline config for a scene written with [`write_scene`], with paths
/// relative to the scene directory.
pub fn scene_config(scene: &Scene) -> PipelineConfig {
    let mut c = PipelineConfig {
        rays: files::RAYS.into(),
        solid: files::SOLID.into(),
        points: Some(files::POINTS.into()),
        images: vec![ImageInput {
            face_id: scene.face_id.clone(),
            image: files::IMAGE.into(),
            correspondences: files::CORRESPONDENCES.into(),
        }],
        templates: Some(files::TEMPLATES.into()),
        out_dir: "out".into(),
        gt_instances: Some(files::GT_INSTANCES.into()),
        gt_model: Some(files::GT_MODEL.into()),
        depth: scene.spec.cut_depth,
        ..PipelineConfig::default()
    };
    c.occupancy.voxel_size = scene.spec.voxel_size;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scene_shape() {
        let s = synth_scene(&SceneSpec::reference()).unwrap();
        assert_eq!(s.rays.len(), 200 * 80);
        assert_eq!(s.points.len(), 200 * 80);
        assert_eq!((s.image.rows(), s.image.cols()), (80, 200));
        assert_eq!((s.frame.rows, s.frame.cols), (40, 100));
        assert_eq!(s.gt_instances.len(), 3);
        assert!(s.gt_model.is_watertight());
        assert!(s.points.iter().all(|p| p.is_valid()));
        // the front wall's frame spans the whole wall
        let corner = s.frame.point_at(10.0, 4.0);
        assert!((corner - Point3::new(0.0, 0.0, 4.0)).norm() < 1e-12);
    }

    #[test]
    fn rays_pass_only_through_openings() {
        let mut spec = SceneSpec::reference();
        spec.noise_sigma = 0.0;
        let s = synth_scene(&spec).unwrap();
        for r in &s.rays {
            let (u, v) = s.frame.uv_of(&r.endpoint);
            let inside = spec.opening_at(u, v).is_some();
            let depth = r.endpoint.x;
            assert_eq!(depth.abs() < 1e-12, !inside);
            if inside {
                assert!((depth - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SceneSpec::reference();
        spec.openings.push(SynthOpening::new(UvRect::new(2.0, 2.5, 3.0, 3.0), OpeningLabel::Window));
        assert!(matches!(synth_scene(&spec), Err(Error::Spec(_))));
        let mut spec = SceneSpec::default();
        spec.openings.push(SynthOpening::new(UvRect::new(9.5, 1.0, 10.5, 2.0), OpeningLabel::Window));
        assert!(matches!(synth_scene(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn same_seed_same_files() {
        let spec = SceneSpec::reference();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_scene(&synth_scene(&spec).unwrap(), a.path()).unwrap();
        write_scene(&synth_scene(&spec).unwrap(), b.path()).unwrap();
        for f in [files::RAYS, files::POINTS, files::IMAGE, files::GT_MODEL, files::CONFIG] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}
