//! Semantic building solids and the opening-template library.

mod format;
mod template;
mod validate;

use std::fmt;
use std::str::FromStr;

pub use format::{parse_solid, read_solid, render_solid, write_solid};
pub use template::{
    parse_template_library, read_template_library, render_template_library,
    validate_template, write_template_library, OpeningTemplate,
};
pub(crate) use validate::edge_violations;
#[cfg(test)]
pub(crate) use validate::validate_face;
pub use validate::{validate_solid, Violation};

use crate::geom::{Plane, Point3, Triangle};
use crate::mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SurfaceLabel {
    Wall,
    Roof,
    Ground,
    Closure,
}

impl SurfaceLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SurfaceLabel::Wall => "Wall",
            SurfaceLabel::Roof => "Roof",
            SurfaceLabel::Ground => "Ground",
            SurfaceLabel::Closure => "Closure",
        }
    }
}

impl FromStr for SurfaceLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Wall" => Ok(SurfaceLabel::Wall),
            "Roof" => Ok(SurfaceLabel::Roof),
            "Ground" => Ok(SurfaceLabel::Ground),
            "Closure" => Ok(SurfaceLabel::Closure),
            other => Err(format!("unknown surface label `{other}`")),
        }
    }
}

impl fmt::Display for SurfaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpeningLabel {
    Window,
    Door,
}

impl OpeningLabel {
    /// Capitalised form used in solid/template files and CityGML.
    pub fn class_name(&self) -> &'static str {
        match self {
            OpeningLabel::Window => "Window",
            OpeningLabel::Door => "Door",
        }
    }

    /// Lower-case form used in instance files.
    pub fn as_str(&self) -> &'static str {
        match self {
            OpeningLabel::Window => "window",
            OpeningLabel::Door => "door",
        }
    }
}

impl FromStr for OpeningLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Window" | "window" => Ok(OpeningLabel::Window),
            "Door" | "door" => Ok(OpeningLabel::Door),
            other => Err(format!("unknown opening label `{other}`")),
        }
    }
}

impl fmt::Display for OpeningLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Closed polygon ring; the first vertex is not repeated at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    pub vertices: Vec<Point3>,
}

impl Ring {
    pub fn new(vertices: Vec<Point3>) -> Self {
        Ring { vertices }
    }

    pub fn reversed(&self) -> Ring {
        let mut v = self.vertices.clone();
        v.reverse();
        Ring { vertices: v }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub id: String,
    pub label: SurfaceLabel,
    pub outer: Ring,
    pub inner: Vec<Ring>,
}

impl Face {
    pub fn new(id: impl Into<String>, label: SurfaceLabel, outer: Vec<Point3>) -> Self {
        Face {
            id: id.into(),
            label,
            outer: Ring::new(outer),
            inner: Vec::new(),
        }
    }

    /// Plane of the outer ring, normal following the ring orientation.
    pub fn plane(&self) -> Option<Plane> {
        Plane::fit(&self.outer.vertices)
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point3]> {
        std::iter::once(self.outer.vertices.as_slice())
            .chain(self.inner.iter().map(|r| r.vertices.as_slice()))
    }

    pub fn triangulate(&self) -> Vec<Triangle> {
        let holes: Vec<Vec<Point3>> = self.inner.iter().map(|r| r.vertices.clone()).collect();
        mesh::triangulate_polygon(&self.outer.vertices, &holes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingSolid {
    pub id: String,
    pub lod: u32,
    pub faces: Vec<Face>,
}

impl BuildingSolid {
    pub fn face(&self, id: &str) -> Option<&Face> {
        self.faces.iter().find(|f| f.id == id)
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point3]> {
        self.faces.iter().flat_map(|f| f.rings())
    }

    pub fn signed_volume(&self) -> f64 {
        mesh::signed_volume(self.rings())
    }

    pub fn triangulate(&self) -> Vec<Triangle> {
        self.faces.iter().flat_map(|f| f.triangulate()).collect()
    }
}

/// Axis-aligned box solid with outward-oriented faces labelled as a simple
/// building: ground at `min.z`, roof at `max.z`, walls elsewhere.
pub fn box_solid(id: &str, min: Point3, max: Point3) -> BuildingSolid {
    let p = Point3::new;
    let (x0, y0, z0, x1, y1, z1) = (min.x, min.y, min.z, max.x, max.y, max.z);
    let faces = vec![
        Face::new(
            format!("{id}_ground"),
            SurfaceLabel::Ground,
            vec![p(x0, y0, z0), p(x0, y1, z0), p(x1, y1, z0), p(x1, y0, z0)],
        ),
        Face::new(
            format!("{id}_roof"),
            SurfaceLabel::Roof,
            vec![p(x0, y0, z1), p(x1, y0, z1), p(x1, y1, z1), p(x0, y1, z1)],
        ),
        Face::new(
            format!("{id}_wall_xmin"),
            SurfaceLabel::Wall,
            vec![p(x0, y1, z0), p(x0, y0, z0), p(x0, y0, z1), p(x0, y1, z1)],
        ),
        Face::new(
            format!("{id}_wall_xmax"),
            SurfaceLabel::Wall,
            vec![p(x1, y0, z0), p(x1, y1, z0), p(x1, y1, z1), p(x1, y0, z1)],
        ),
        Face::new(
            format!("{id}_wall_ymin"),
            SurfaceLabel::Wall,
            vec![p(x0, y0, z0), p(x1, y0, z0), p(x1, y0, z1), p(x0, y0, z1)],
        ),
        Face::new(
            format!("{id}_wall_ymax"),
            SurfaceLabel::Wall,
            vec![p(x1, y1, z0), p(x0, y1, z0), p(x0, y1, z1), p(x1, y1, z1)],
        ),
    ];
    BuildingSolid {
        id: id.to_string(),
        lod: 2,
        faces,
    }
}
