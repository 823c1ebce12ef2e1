//! Runs every stage in order and writes each intermediate to the output
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluate::{evaluate, EvaluationReport};
use crate::extraction::{extract_instances, read_instances, write_instances, OpeningInstance};
use crate::fusion::{fuse_maps, read_cpt, Cpt};
use crate::model::{read_solid, read_template_library, validate_solid, SurfaceLabel};
use crate::occupancy::{integrate_all, read_rays, write_occupancy};
use crate::raster::{
    project_image_probabilities, project_point_probabilities, read_correspondences, read_labeled_points, read_raster,
    write_raster, FacadeFrame, FacadeRaster,
};
use crate::reconstruct::{clamp_to_faces, default_library, read_citygml, reconstruct, write_citygml, Lod3Model};
use crate::textio;
use crate::visibility::{classify_face_voxels, project_conflict_map};

pub mod artifacts {
    pub const OCCUPANCY: &str = "occupancy.txt";
    pub const INSTANCES: &str = "instances.txt";
    pub const MODEL: &str = "model.gml";
    pub const METRICS: &str = "metrics.kv";
    pub const REPORT: &str = "report.txt";
    pub const CONFIG: &str = "config.used";

    pub fn conflict(face: &str) -> String {
        format!("conflict_{face}.txt")
    }

    pub fn points(face: &str) -> String {
        format!("points_{face}.txt")
    }

    pub fn image(face: &str) -> String {
        format!("image_{face}.txt")
    }

    pub fn fused(face: &str) -> String {
        format!("fused_{face}.txt")
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub conflict_maps: BTreeMap<String, FacadeRaster>,
    pub fused: BTreeMap<String, FacadeRaster>,
    pub instances: Vec<OpeningInstance>,
    pub model: Lod3Model,
    pub report: EvaluationReport,
    pub artifacts: Vec<PathBuf>,
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    info!("stage {name}");
    f().map_err(|e| e.in_stage(name))
}

/// Ground-truth openings the laser observed: at least half of the conflict
/// map pixels inside the rectangle are measured (not unknown).
pub fn measured_openings(gt: &[OpeningInstance], conflict_maps: &BTreeMap<String, FacadeRaster>) -> u32 {
    gt.iter()
        .filter(|inst| {
            let Some(map) = conflict_maps.get(&inst.face_id) else {
                return false;
            };
            let Some(unknown) = map.channel_index("unknown") else {
                return false;
            };
            let (mut inside, mut measured) = (0usize, 0usize);
            for row in 0..map.rows() {
                for col in 0..map.cols() {
                    let (u, v) = map.frame().pixel_center_uv(row, col);
                    if u > inst.rect.u_min && u < inst.rect.u_max && v > inst.rect.v_min && v < inst.rect.v_max {
                        inside += 1;
                        if map.get(row, col, unknown) < 0.5 {
                            measured += 1;
                        }
                    }
                }
            }
            inside > 0 && 2 * measured >= inside
        })
        .count() as u32
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    stage("config", || config.validate())?;
    let out = config.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e).in_stage("config"))?;
    let mut written = Vec::new();
    let mut emit = |name: &str| {
        let p = out.join(name);
        written.push(p.clone());
        p
    };
    textio::write_string(&emit(artifacts::CONFIG), &config.render())?;
    let vs = config.occupancy.voxel_size;

    let tree = stage("occupancy", || {
        let rays = read_rays(&config.rays)?;
        let tree = integrate_all(&rays, config.occupancy)?;
        write_occupancy(&tree, emit(artifacts::OCCUPANCY))?;
        Ok(tree)
    })?;

    let solid = stage("model-io", || {
        let solid = read_solid(&config.solid)?;
        let violations = validate_solid(&solid);
        if violations.is_empty() {
            Ok(solid)
        } else {
            Err(Error::Validation(violations))
        }
    })?;
    for im in &config.images {
        if solid.face(&im.face_id).is_none() {
            return Err(Error::UnknownFace(im.face_id.clone()).in_stage("rasters"));
        }
    }
    let faces: Vec<_> = solid
        .faces
        .iter()
        .filter(|f| f.label == SurfaceLabel::Wall || config.images.iter().any(|i| i.face_id == f.id))
        .collect();
    let frames: Vec<FacadeFrame> = faces
        .iter()
        .map(|f| FacadeFrame::for_face(f, vs))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("visibility"))?;

    let conflict_maps = stage("visibility", || {
        let mut maps = BTreeMap::new();
        for (face, frame) in faces.iter().zip(&frames) {
            let classes = classify_face_voxels(&tree, face, &config.uncertainty)?;
            let map = project_conflict_map(&classes, frame, &tree.grid_origin(), vs, config.conflict_aggregation)
                .quantized();
            write_raster(&map, emit(&artifacts::conflict(&face.id)))?;
            maps.insert(face.id.clone(), map);
        }
        Ok(maps)
    })?;
    drop(tree);

    let (point_maps, image_maps) = stage("rasters", || {
        let mut points = BTreeMap::new();
        if let Some(path) = &config.points {
            let cloud = read_labeled_points(path)?;
            for frame in &frames {
                let r = project_point_probabilities(&cloud, frame, &config.point_projection).quantized();
                write_raster(&r, emit(&artifacts::points(&frame.face_id)))?;
                points.insert(frame.face_id.clone(), r);
            }
        }
        let mut images = BTreeMap::new();
        for im in &config.images {
            let frame = frames
                .iter()
                .find(|f| f.face_id == im.face_id)
                .expect("image faces are processed");
            let image = read_raster(&im.image)?;
            let corr = read_correspondences(&im.correspondences)?;
            let r = project_image_probabilities(&image, &corr, frame, config.resampling)?.quantized();
            write_raster(&r, emit(&artifacts::image(&im.face_id)))?;
            images.insert(im.face_id.clone(), r);
        }
        Ok((points, images))
    })?;

    let fused = stage("fusion", || {
        let cpt = match &config.cpt {
            Some(p) => read_cpt(p)?,
            None => Cpt::default(),
        };
        let mut fused = BTreeMap::new();
        for frame in &frames {
            let id = &frame.face_id;
            let r = fuse_maps(conflict_maps.get(id), point_maps.get(id), image_maps.get(id), &cpt)?.quantized();
            write_raster(&r, emit(&artifacts::fused(id)))?;
            fused.insert(id.clone(), r);
        }
        Ok(fused)
    })?;

    let instances = stage("extraction", || {
        let mut all = Vec::new();
        for r in fused.values() {
            all.extend(extract_instances(r, &config.extraction)?);
        }
        write_instances(&all, emit(artifacts::INSTANCES))?;
        Ok(all)
    })?;

    let model = stage("reconstruct", || {
        let library = match &config.templates {
            Some(p) => read_template_library(p)?,
            None => default_library(),
        };
        let placed = clamp_to_faces(&solid, &instances, vs);
        let model = reconstruct(&solid, &placed, &library, &config.cut_config())?;
        write_citygml(&model, emit(artifacts::MODEL))?;
        Ok(model)
    })?;

    let report = stage("evaluate", || {
        let gt = match &config.gt_instances {
            Some(p) => read_instances(p)?,
            None => Vec::new(),
        };
        let reference = match &config.gt_model {
            Some(p) => Some(read_citygml(p)?.triangles()),
            None => None,
        };
        let measured = measured_openings(&gt, &conflict_maps);
        let report = evaluate(
            &instances,
            &gt,
            Some(measured),
            config.iou_min,
            &model.triangles(),
            reference.as_deref(),
            config.sample_spacing,
        )?;
        report.write_kv(emit(artifacts::METRICS))?;
        textio::write_string(&emit(artifacts::REPORT), &report.render_text())?;
        Ok(report)
    })?;

    Ok(PipelineOutput {
        conflict_maps,
        fused,
        instances,
        model,
        report,
        artifacts: written,
    })
}

/// Loads a config file and runs it.
pub fn run_pipeline_file(path: impl AsRef<Path>) -> Result<PipelineOutput> {
    let config = PipelineConfig::load(path).map_err(|e| e.in_stage("config"))?;
    run_pipeline(&config)
}
