//! Façade opening detection and LoD3 reconstruction.
//!
//! Laser rays are integrated into an occupancy octree and intersected with a
//! prior building solid to find confirmed and conflicted surface voxels.
//! Conflicts are projected to façade rasters together with per-point and
//! per-pixel semantic probabilities, fused per pixel with a small Bayesian
//! network, clustered into rectangular openings, and finally cut into the
//! solid and closed with library objects.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod extraction;
pub mod fusion;
pub mod geom;
pub mod mesh;
pub mod model;
pub mod occupancy;
pub mod pipeline;
pub mod raster;
pub mod reconstruct;
pub mod synth;
mod textio;
pub mod visibility;

pub use error::{Error, Result};
pub use geom::{Plane, Point3, Triangle, UvRect, Vector3};
pub use model::{BuildingSolid, Face, OpeningLabel, OpeningTemplate, Ring, SurfaceLabel};
pub use occupancy::{OccupancyConfig, OccupancyTree, Ray, VoxelKey, VoxelState};
pub use config::PipelineConfig;
pub use evaluate::EvaluationReport;
pub use extraction::{ExtractionConfig, OpeningInstance};
pub use fusion::Cpt;
pub use pipeline::{run_pipeline, run_pipeline_file, PipelineOutput};
pub use raster::{FacadeFrame, FacadeRaster};
