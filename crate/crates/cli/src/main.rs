//! `lod3`: run the façade opening pipeline end to end or one stage at a time.
//!
//! Exit codes: 0 success, 1 pipeline failure, 2 input or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use lod3_core::config::PipelineConfig;
use lod3_core::evaluate::evaluate;
use lod3_core::extraction::{extract_instances, read_instances, write_instances, ExtractionConfig};
use lod3_core::fusion::{fuse_maps, read_cpt, Cpt};
use lod3_core::model::{read_solid, read_template_library};
use lod3_core::occupancy::{build_occupancy, read_occupancy, write_occupancy};
use lod3_core::pipeline::{artifacts, run_pipeline};
use lod3_core::raster::{
    project_image_probabilities, project_point_probabilities, read_correspondences, read_labeled_points, read_raster,
    write_raster, FacadeFrame, PointProjection, Resampling,
};
use lod3_core::reconstruct::{
    clamp_to_faces, default_library, read_citygml, reconstruct, write_citygml, CutConfig, TemplateSelection,
};
use lod3_core::synth::{synth_scene, write_scene, SceneSpec};
use lod3_core::visibility::{classify_face_voxels, project_conflict_map, PixelAggregation, UncertaintyConfig};
use lod3_core::{BuildingSolid, Error, OccupancyConfig, SurfaceLabel};

#[derive(Parser)]
#[command(name = "lod3", version, about = "Façade opening detection and LoD3 reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a ray file into an occupancy grid.
    Raycast(RaycastArgs),
    /// Classify model-surface voxels and write one conflict map per wall.
    Conflicts(ConflictsArgs),
    /// Project labeled points onto a façade raster.
    ProjectPoints(ProjectPointsArgs),
    /// Warp a probability image onto a façade raster.
    ProjectImage(ProjectImageArgs),
    /// Fuse conflict, point and image rasters of one façade.
    Fuse(FuseArgs),
    /// Extract opening instances from fused rasters.
    Extract(ExtractArgs),
    /// Cut instances into the solid and write a CityGML LoD3 model.
    Reconstruct(ReconstructArgs),
    /// Score instances and models against ground truth.
    Evaluate(EvaluateArgs),
    /// Run every stage from a config file.
    Pipeline(PipelineArgs),
    /// Generate a synthetic scene and a config that runs it.
    Synth(SynthArgs),
}

#[derive(Args)]
struct OccupancyArgs {
    /// Voxel size in meters.
    #[arg(long)]
    vs: Option<f64>,
    /// Log-odds increment for a hit.
    #[arg(long)]
    l_hit: Option<f64>,
    /// Log-odds increment for a pass-through.
    #[arg(long)]
    l_miss: Option<f64>,
    #[arg(long)]
    l_min: Option<f64>,
    #[arg(long)]
    l_max: Option<f64>,
    /// Occupied at or above this probability.
    #[arg(long)]
    occ_threshold: Option<f64>,
    /// Rays longer than this only clear space.
    #[arg(long)]
    max_range: Option<f64>,
}

impl OccupancyArgs {
    fn apply(&self, c: &mut OccupancyConfig) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.voxel_size, self.vs);
        set(&mut c.l_hit, self.l_hit);
        set(&mut c.l_miss, self.l_miss);
        set(&mut c.l_min, self.l_min);
        set(&mut c.l_max, self.l_max);
        set(&mut c.occ_threshold, self.occ_threshold);
        set(&mut c.max_range, self.max_range);
    }
}

#[derive(Args)]
struct RaycastArgs {
    /// Ray file: `ox oy oz ex ey ez` per line.
    #[arg(long)]
    rays: PathBuf,
    /// Occupancy dump to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    occupancy: OccupancyArgs,
}

#[derive(Args)]
struct UncertaintyArgs {
    /// Model positioning deviation (voxels, or meters with --sigma-meters).
    #[arg(long)]
    sigma_model: Option<f64>,
    /// Laser point positioning deviation.
    #[arg(long)]
    sigma_cloud: Option<f64>,
    #[arg(long)]
    mu_model: Option<f64>,
    #[arg(long)]
    mu_cloud: Option<f64>,
    /// Read sigmas and means as meters instead of voxel multiples.
    #[arg(long)]
    sigma_meters: bool,
}

impl UncertaintyArgs {
    fn config(&self) -> UncertaintyConfig {
        let d = UncertaintyConfig::default();
        UncertaintyConfig {
            mu_model: self.mu_model.unwrap_or(d.mu_model),
            sigma_model: self.sigma_model.unwrap_or(d.sigma_model),
            mu_cloud: self.mu_cloud.unwrap_or(d.mu_cloud),
            sigma_cloud: self.sigma_cloud.unwrap_or(d.sigma_cloud),
            absolute: self.sigma_meters,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Aggregation {
    Max,
    Mean,
}

#[derive(Args)]
struct ConflictsArgs {
    /// Occupancy dump from `raycast`.
    #[arg(long)]
    occupancy: PathBuf,
    /// Prior building solid.
    #[arg(long)]
    solid: PathBuf,
    /// Only this face; default every wall.
    #[arg(long)]
    face: Option<String>,
    /// Directory for `conflict_<face>.txt`.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "max")]
    aggregation: Aggregation,
    #[command(flatten)]
    uncertainty: UncertaintyArgs,
}

#[derive(Args)]
struct FrameArgs {
    /// Prior building solid.
    #[arg(long)]
    solid: PathBuf,
    /// Target face id.
    #[arg(long)]
    face: String,
    /// Raster cell size in meters.
    #[arg(long, default_value_t = 0.1)]
    vs: f64,
}

impl FrameArgs {
    fn frame(&self) -> anyhow::Result<FacadeFrame> {
        let solid = read_solid(&self.solid)?;
        let face = solid
            .face(&self.face)
            .ok_or_else(|| Error::UnknownFace(self.face.clone()))?;
        Ok(FacadeFrame::for_face(face, self.vs)?)
    }
}

#[derive(Args)]
struct ProjectPointsArgs {
    /// Point file: `x y z` and eight label probabilities per line.
    #[arg(long)]
    points: PathBuf,
    #[command(flatten)]
    frame: FrameArgs,
    /// Maximum distance from the façade plane, meters; default three cells.
    #[arg(long)]
    band_dist: Option<f64>,
    #[arg(long, value_enum, default_value = "max")]
    aggregation: Aggregation,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResamplingArg {
    Nearest,
    Bilinear,
}

#[derive(Args)]
struct ProjectImageArgs {
    /// Probability image raster (face `-`).
    #[arg(long)]
    image: PathBuf,
    /// Four `corr x y u v` lines.
    #[arg(long)]
    correspondences: PathBuf,
    #[command(flatten)]
    frame: FrameArgs,
    #[arg(long, value_enum, default_value = "nearest")]
    resampling: ResamplingArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Conflict raster.
    #[arg(long)]
    conflict: Option<PathBuf>,
    /// Point-evidence raster.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Image-evidence raster.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Conditional probability table; default built in.
    #[arg(long)]
    cpt: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractionArgs {
    /// Posterior threshold.
    #[arg(long)]
    p_high: Option<f64>,
    /// Upper rectangularity percentile.
    #[arg(long)]
    pe_up: Option<f64>,
    /// Lower rectangularity percentile.
    #[arg(long)]
    pe_lo: Option<f64>,
    /// Side of the square structuring element, odd.
    #[arg(long)]
    kernel: Option<usize>,
    /// Smallest cluster kept, pixels.
    #[arg(long)]
    min_pixels: Option<usize>,
}

impl ExtractionArgs {
    fn apply(&self, c: &mut ExtractionConfig) {
        if let Some(v) = self.p_high {
            c.p_high = v;
        }
        if let Some(v) = self.pe_up {
            c.pe_up = v;
        }
        if let Some(v) = self.pe_lo {
            c.pe_lo = v;
        }
        if let Some(v) = self.kernel {
            c.kernel = v;
        }
        if let Some(v) = self.min_pixels {
            c.min_pixels = v;
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Fused rasters, one per façade.
    #[arg(long = "fused", required = true)]
    fused: Vec<PathBuf>,
    #[command(flatten)]
    extraction: ExtractionArgs,
    /// Instance file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Selection {
    First,
    NearestAspect,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    solid: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    /// Template library; default built in.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Recess depth in meters.
    #[arg(long, default_value_t = 0.1)]
    depth: f64,
    /// Cell size: minimum clearance to the face boundary.
    #[arg(long, default_value_t = 0.1)]
    vs: f64,
    #[arg(long, value_enum, default_value = "first")]
    selection: Selection,
    /// CityGML file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted instances.
    #[arg(long)]
    instances: PathBuf,
    /// Ground-truth instances.
    #[arg(long)]
    gt_instances: PathBuf,
    /// Laser-measured openings (MO); default all ground truth.
    #[arg(long)]
    measured: Option<u32>,
    /// Reconstructed CityGML model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Reference CityGML model for mesh deviation.
    #[arg(long)]
    gt_model: Option<PathBuf>,
    /// Minimum IoU of a true positive.
    #[arg(long, default_value_t = 0.5)]
    iou_min: f64,
    /// Surface sampling step for mesh deviation, meters.
    #[arg(long, default_value_t = 0.05)]
    sample_spacing: f64,
    /// Key-value metrics file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline config (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Voxel and cell size, meters.
    #[arg(long)]
    vs: Option<f64>,
    #[arg(long)]
    p_high: Option<f64>,
    #[arg(long)]
    pe_up: Option<f64>,
    #[arg(long)]
    pe_lo: Option<f64>,
    /// Conditional probability table.
    #[arg(long)]
    cpt: Option<PathBuf>,
    /// Recess depth, meters.
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    iou_min: Option<f64>,
    /// Output directory; beats the config and LOD3_OUT_DIR.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for the scene files and `scene.cfg`.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Rays per square meter of wall.
    #[arg(long, default_value_t = 400.0)]
    density: f64,
    /// Endpoint noise sigma, meters.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value_t = 0.1)]
    vs: f64,
    /// Scene without openings.
    #[arg(long)]
    no_openings: bool,
    /// Close the blind of this opening (0-based); repeatable.
    #[arg(long)]
    blind: Vec<usize>,
}

fn walls(solid: &BuildingSolid, only: Option<&str>) -> anyhow::Result<Vec<usize>> {
    if let Some(id) = only {
        let i = solid
            .faces
            .iter()
            .position(|f| f.id == id)
            .ok_or_else(|| Error::UnknownFace(id.to_string()))?;
        return Ok(vec![i]);
    }
    Ok((0..solid.faces.len())
        .filter(|&i| solid.faces[i].label == SurfaceLabel::Wall)
        .collect())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Raycast(a) => {
            let mut cfg = OccupancyConfig::default();
            a.occupancy.apply(&mut cfg);
            cfg.validate()?;
            let tree = build_occupancy(&a.rays, cfg)?;
            info!("{} voxels", tree.len());
            write_occupancy(&tree, &a.out)?;
        }
        Command::Conflicts(a) => {
            let tree = read_occupancy(&a.occupancy)?;
            let solid = read_solid(&a.solid)?;
            let uncertainty = a.uncertainty.config();
            uncertainty.validate()?;
            let aggregation = match a.aggregation {
                Aggregation::Max => PixelAggregation::MaxConflicted,
                Aggregation::Mean => PixelAggregation::Mean,
            };
            create_dir(&a.out_dir)?;
            for i in walls(&solid, a.face.as_deref())? {
                let face = &solid.faces[i];
                let frame = FacadeFrame::for_face(face, tree.voxel_size())?;
                let classes = classify_face_voxels(&tree, face, &uncertainty)?;
                let map = project_conflict_map(&classes, &frame, &tree.grid_origin(), tree.voxel_size(), aggregation);
                write_raster(&map, a.out_dir.join(artifacts::conflict(&face.id)))?;
            }
        }
        Command::ProjectPoints(a) => {
            let frame = a.frame.frame()?;
            let points = read_labeled_points(&a.points)?;
            let opts = PointProjection {
                band_dist: a.band_dist,
                aggregation: match a.aggregation {
                    Aggregation::Max => lod3_core::raster::ChannelAggregation::Max,
                    Aggregation::Mean => lod3_core::raster::ChannelAggregation::Mean,
                },
            };
            write_raster(&project_point_probabilities(&points, &frame, &opts), &a.out)?;
        }
        Command::ProjectImage(a) => {
            let frame = a.frame.frame()?;
            let image = read_raster(&a.image)?;
            let corr = read_correspondences(&a.correspondences)?;
            let resampling = match a.resampling {
                ResamplingArg::Nearest => Resampling::Nearest,
                ResamplingArg::Bilinear => Resampling::Bilinear,
            };
            write_raster(&project_image_probabilities(&image, &corr, &frame, resampling)?, &a.out)?;
        }
        Command::Fuse(a) => {
            let load = |p: &Option<PathBuf>| p.as_ref().map(read_raster).transpose();
            let (c, p, t) = (load(&a.conflict)?, load(&a.points)?, load(&a.image)?);
            if c.is_none() && p.is_none() && t.is_none() {
                return Err(Error::Config("fuse needs at least one of --conflict, --points, --image".into()).into());
            }
            let cpt = match &a.cpt {
                Some(path) => read_cpt(path)?,
                None => Cpt::default(),
            };
            write_raster(&fuse_maps(c.as_ref(), p.as_ref(), t.as_ref(), &cpt)?, &a.out)?;
        }
        Command::Extract(a) => {
            let mut cfg = ExtractionConfig::default();
            a.extraction.apply(&mut cfg);
            cfg.validate()?;
            let mut all = Vec::new();
            for path in &a.fused {
                all.extend(extract_instances(&read_raster(path)?, &cfg)?);
            }
            info!("{} instances", all.len());
            write_instances(&all, &a.out)?;
        }
        Command::Reconstruct(a) => {
            let solid = read_solid(&a.solid)?;
            let instances = read_instances(&a.instances)?;
            let library = match &a.templates {
                Some(p) => read_template_library(p)?,
                None => default_library(),
            };
            let cut = CutConfig {
                depth: a.depth,
                cell: a.vs,
                selection: match a.selection {
                    Selection::First => TemplateSelection::First,
                    Selection::NearestAspect => TemplateSelection::NearestAspect,
                },
            };
            cut.validate()?;
            let placed = clamp_to_faces(&solid, &instances, a.vs);
            write_citygml(&reconstruct(&solid, &placed, &library, &cut)?, &a.out)?;
        }
        Command::Evaluate(a) => {
            if !(a.iou_min > 0.0 && a.iou_min <= 1.0) {
                return Err(Error::Config(format!("iou_min {} must lie in (0, 1]", a.iou_min)).into());
            }
            let pred = read_instances(&a.instances)?;
            let gt = read_instances(&a.gt_instances)?;
            let mesh = match &a.model {
                Some(p) => read_citygml(p)?.triangles(),
                None => Vec::new(),
            };
            let reference = match &a.gt_model {
                Some(p) => Some(read_citygml(p)?.triangles()),
                None => None,
            };
            let report = evaluate(&pred, &gt, a.measured, a.iou_min, &mesh, reference.as_deref(), a.sample_spacing)?;
            print!("{}", report.render_text());
            if let Some(out) = &a.out {
                report.write_kv(out)?;
            }
        }
        Command::Pipeline(a) => {
            let mut cfg = PipelineConfig::load(&a.config).map_err(|e| e.in_stage("config"))?;
            if let Some(v) = a.vs {
                cfg.occupancy.voxel_size = v;
            }
            if let Some(v) = a.p_high {
                cfg.extraction.p_high = v;
            }
            if let Some(v) = a.pe_up {
                cfg.extraction.pe_up = v;
            }
            if let Some(v) = a.pe_lo {
                cfg.extraction.pe_lo = v;
            }
            if let Some(v) = a.cpt {
                cfg.cpt = Some(v);
            }
            if let Some(v) = a.depth {
                cfg.depth = v;
            }
            if let Some(v) = a.iou_min {
                cfg.iou_min = v;
            }
            if let Some(v) = a.out_dir {
                cfg.out_dir = v;
            }
            let out = run_pipeline(&cfg)?;
            print!("{}", out.report.render_text());
            println!("artifacts in {}", cfg.out_dir.display());
        }
        Command::Synth(a) => {
            let mut spec = if a.no_openings {
                SceneSpec::default()
            } else {
                SceneSpec::reference()
            };
            spec.seed = a.seed;
            spec.ray_density = a.density;
            spec.noise_sigma = a.noise;
            spec.voxel_size = a.vs;
            for &i in &a.blind {
                spec.openings
                    .get_mut(i)
                    .ok_or_else(|| Error::Spec(format!("no opening {i} to close")))?
                    .blind = true;
            }
            let cfg = write_scene(&synth_scene(&spec)?, &a.out_dir)?;
            println!("{}", cfg.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_input_error() => 2,
        Some(_) => 1,
        // anything else comes from argument handling or the file system
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
