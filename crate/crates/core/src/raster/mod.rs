//! Façade-plane rasters: the shared frame, multi-channel probability grids,
//! and projection of point and image evidence onto them.

mod homography;
mod io;
mod points;

pub use homography::{
    parse_correspondences, project_image_probabilities, read_correspondences, render_correspondences, Correspondence,
    Homography, Resampling,
};
pub use io::{parse_raster, read_raster, render_raster, write_raster};
pub use points::{
    parse_labeled_points, project_point_probabilities, read_labeled_points, write_labeled_points, ChannelAggregation,
    LabeledPoint, PointProjection, POINT_LABELS,
};

use crate::error::{Error, Result};
use crate::geom::{Point3, Vector3};
use crate::model::Face;

/// Face id used by rasters that are not attached to a façade (raw
/// probability images).
pub const NULL_FACE: &str = "-";

/// Pixel grid in a façade plane. Pixel `(row, col)` covers
/// `[col·cell, (col+1)·cell) × [row·cell, (row+1)·cell)` in `(u, v)` from
/// `origin`; rows grow upward along `v_axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct FacadeFrame {
    pub face_id: String,
    pub origin: Point3,
    pub u_axis: Vector3,
    pub v_axis: Vector3,
    pub cell: f64,
    pub rows: usize,
    pub cols: usize,
}

impl FacadeFrame {
    /// Frame covering the bounding rectangle of a face, origin at its
    /// lower-left `(u, v)` corner.
    pub fn for_face(face: &Face, cell: f64) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(Error::Config(format!("cell size {cell} must be positive")));
        }
        let plane = face
            .plane()
            .ok_or_else(|| Error::Domain(format!("face {} has no plane", face.id)))?;
        let (u, v) = plane.basis();
        let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &face.outer.vertices {
            let (pu, pv) = (u.dot(&p.coords), v.dot(&p.coords));
            u0 = u0.min(pu);
            v0 = v0.min(pv);
            u1 = u1.max(pu);
            v1 = v1.max(pv);
        }
        let origin = Point3::from(plane.normal * plane.offset + u * u0 + v * v0);
        let count = |extent: f64| ((extent / cell - 1e-9).ceil() as usize).max(1);
        Ok(FacadeFrame {
            face_id: face.id.clone(),
            origin,
            u_axis: u,
            v_axis: v,
            cell,
            rows: count(v1 - v0),
            cols: count(u1 - u0),
        })
    }

    /// Frame of a raw image: unit pixels, no world placement.
    pub fn image(rows: usize, cols: usize) -> Self {
        FacadeFrame {
            face_id: NULL_FACE.to_string(),
            origin: Point3::origin(),
            u_axis: Vector3::x(),
            v_axis: Vector3::y(),
            cell: 1.0,
            rows,
            cols,
        }
    }

    pub fn is_null(&self) -> bool {
        self.face_id == NULL_FACE
    }

    pub fn normal(&self) -> Vector3 {
        self.u_axis.cross(&self.v_axis)
    }

    /// `(u, v)` of a world point in meters from the frame origin.
    pub fn uv_of(&self, p: &Point3) -> (f64, f64) {
        let d = p - self.origin;
        (d.dot(&self.u_axis), d.dot(&self.v_axis))
    }

    pub fn point_at(&self, u: f64, v: f64) -> Point3 {
        self.origin + self.u_axis * u + self.v_axis * v
    }

    pub fn pixel_of_uv(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let col = (u / self.cell).floor();
        let row = (v / self.cell).floor();
        if col < 0.0 || row < 0.0 || col >= self.cols as f64 || row >= self.rows as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    /// Pixel of a point's orthogonal projection, ignoring its distance from
    /// the plane.
    pub fn pixel_of_projected(&self, p: &Point3) -> Option<(usize, usize)> {
        let (u, v) = self.uv_of(p);
        self.pixel_of_uv(u, v)
    }

    /// Center of a pixel in frame `(u, v)` meters.
    pub fn pixel_center_uv(&self, row: usize, col: usize) -> (f64, f64) {
        ((col as f64 + 0.5) * self.cell, (row as f64 + 0.5) * self.cell)
    }
}

/// Default distance from the plane beyond which points do not vote.
pub fn default_band_dist(cell: f64) -> f64 {
    3.0 * cell
}

/// `(row, col)` of a point, or `None` when it is out of bounds or farther
/// than `band_dist` from the plane.
pub fn world_to_pixel(frame: &FacadeFrame, p: &Point3, band_dist: f64) -> Option<(usize, usize)> {
    if (p - frame.origin).dot(&frame.normal()).abs() > band_dist {
        return None;
    }
    frame.pixel_of_projected(p)
}

/// Multi-channel probability grid, row-major with channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FacadeRaster {
    frame: FacadeFrame,
    channels: Vec<String>,
    data: Vec<f64>,
}

impl FacadeRaster {
    /// All-zero raster. Panics on duplicate channel names.
    pub fn new(frame: FacadeFrame, channels: Vec<String>) -> Self {
        assert!(unique(&channels), "duplicate raster channel names");
        let n = frame.rows * frame.cols * channels.len();
        FacadeRaster {
            frame,
            channels,
            data: vec![0.0; n],
        }
    }

    pub fn from_data(frame: FacadeFrame, channels: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if !unique(&channels) {
            return Err(Error::Domain("duplicate raster channel names".into()));
        }
        if data.len() != frame.rows * frame.cols * channels.len() {
            return Err(Error::Domain(format!(
                "raster data has {} values, expected {}",
                data.len(),
                frame.rows * frame.cols * channels.len()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("raster value {bad} outside [0, 1]")));
        }
        Ok(FacadeRaster { frame, channels, data })
    }

    pub fn frame(&self) -> &FacadeFrame {
        &self.frame
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn rows(&self) -> usize {
        self.frame.rows
    }

    pub fn cols(&self) -> usize {
        self.frame.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rounds every value to float32, the precision the text format stores.
    /// A raster passed through this equals its own written-and-read copy.
    pub fn quantized(mut self) -> Self {
        for x in &mut self.data {
            *x = *x as f32 as f64;
        }
        self
    }

    fn offset(&self, row: usize, col: usize) -> usize {
        assert!(row < self.frame.rows && col < self.frame.cols, "pixel out of bounds");
        (row * self.frame.cols + col) * self.channels.len()
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let o = self.offset(row, col);
        &self.data[o..o + self.channels.len()]
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixel(row, col)[channel]
    }

    /// Value of a named channel, `None` if the raster lacks it.
    pub fn value(&self, row: usize, col: usize, channel: &str) -> Option<f64> {
        self.channel_index(channel).map(|c| self.get(row, col, c))
    }

    /// Values are clamped to `[0, 1]`.
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        assert!(channel < self.channels.len());
        let o = self.offset(row, col);
        self.data[o + channel] = value.clamp(0.0, 1.0);
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, values: &[f64]) {
        assert_eq!(values.len(), self.channels.len());
        let o = self.offset(row, col);
        for (dst, v) in self.data[o..o + values.len()].iter_mut().zip(values) {
            *dst = v.clamp(0.0, 1.0);
        }
    }

    /// Errors unless both rasters share the exact same frame.
    pub fn check_frame(&self, other: &FacadeRaster) -> Result<()> {
        if self.frame != other.frame {
            return Err(Error::FrameMismatch(format!(
                "face {} ({}x{}) vs face {} ({}x{})",
                self.frame.face_id,
                self.frame.rows,
                self.frame.cols,
                other.frame.face_id,
                other.frame.rows,
                other.frame.cols
            )));
        }
        Ok(())
    }
}

fn unique(names: &[String]) -> bool {
    names.iter().enumerate().all(|(i, a)| names[..i].iter().all(|b| a != b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_solid, SurfaceLabel};

    fn flat_frame() -> FacadeFrame {
        FacadeFrame {
            face_id: "f".into(),
            origin: Point3::new(1.0, 2.0, 3.0),
            u_axis: Vector3::x(),
            v_axis: Vector3::z(),
            cell: 0.1,
            rows: 10,
            cols: 10,
        }
    }

    #[test]
    fn world_to_pixel_examples() {
        let f = flat_frame();
        assert_eq!(world_to_pixel(&f, &f.origin, 0.3), Some((0, 0)));
        let p = f.origin + f.u_axis * 0.25 + f.v_axis * 0.05;
        assert_eq!(world_to_pixel(&f, &p, 0.3), Some((0, 2)));
        let off = f.origin + f.normal() * 1.0;
        assert_eq!(world_to_pixel(&f, &off, 0.5), None);
        assert_eq!(world_to_pixel(&f, &(f.origin - f.u_axis * 0.01), 0.5), None);
    }

    #[test]
    fn wall_frame_covers_the_face() {
        let solid = box_solid("b", Point3::new(0.0, 0.0, 0.0), Point3::new(6.0, 10.0, 4.0));
        let wall = solid.face("b_wall_xmin").unwrap();
        assert_eq!(wall.label, SurfaceLabel::Wall);
        let f = FacadeFrame::for_face(wall, 0.1).unwrap();
        assert_eq!((f.rows, f.cols), (40, 100));
        assert!((f.v_axis - Vector3::z()).norm() < 1e-12);
        assert!((f.normal() - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        // every face vertex lies within the covered rectangle
        for p in &wall.outer.vertices {
            let (u, v) = f.uv_of(p);
            assert!(u > -1e-9 && u < f.cols as f64 * f.cell + 1e-9);
            assert!(v > -1e-9 && v < f.rows as f64 * f.cell + 1e-9);
        }
    }

    #[test]
    fn set_clamps_and_frames_are_compared_exactly() {
        let mut r = FacadeRaster::new(flat_frame(), vec!["a".into(), "b".into()]);
        r.set_pixel(3, 4, &[1.5, -0.2]);
        assert_eq!(r.pixel(3, 4), &[1.0, 0.0]);
        let mut other = flat_frame();
        other.origin.x += 1e-12;
        let o = FacadeRaster::new(other, vec!["a".into()]);
        assert!(matches!(r.check_frame(&o), Err(Error::FrameMismatch(_))));
        assert!(FacadeRaster::from_data(flat_frame(), vec!["a".into()], vec![0.5; 99]).is_err());
    }
}
