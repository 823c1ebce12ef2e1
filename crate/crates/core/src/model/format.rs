//! Line-oriented solid format:
//!
//! ```text
//! solid <id> lod=<n>
//! face <id> label=<Wall|Roof|Ground|Closure>
//! outer x1 y1 z1 x2 y2 z2 ...
//! inner x1 y1 z1 ...
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::textio::{self, keyed, parse_coords, Line};

use super::{validate_solid, BuildingSolid, Face, Ring, SurfaceLabel};

pub fn read_solid(path: impl AsRef<Path>) -> Result<BuildingSolid> {
    let text = textio::read_to_string(path.as_ref())?;
    let solid = parse_solid(&text)?;
    let violations = validate_solid(&solid);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(solid)
}

/// Parses the solid format without running validation.
pub fn parse_solid(text: &str) -> Result<BuildingSolid> {
    let mut solid: Option<BuildingSolid> = None;
    let mut ended = false;
    for Line { number, tokens } in textio::lines(text) {
        if ended {
            return Err(Error::parse(number, "content after `end`"));
        }
        match tokens[0] {
            "solid" => {
                if solid.is_some() {
                    return Err(Error::parse(number, "more than one `solid` statement"));
                }
                if tokens.len() != 3 {
                    return Err(Error::parse(number, "expected `solid <id> lod=<n>`"));
                }
                let lod = keyed(tokens[2], "lod", number)?
                    .parse::<u32>()
                    .map_err(|e| Error::parse(number, format!("bad lod: {e}")))?;
                solid = Some(BuildingSolid {
                    id: tokens[1].to_string(),
                    lod,
                    faces: Vec::new(),
                });
            }
            "face" => {
                let s = solid
                    .as_mut()
                    .ok_or_else(|| Error::parse(number, "`face` before `solid`"))?;
                if tokens.len() != 3 {
                    return Err(Error::parse(number, "expected `face <id> label=<label>`"));
                }
                let label: SurfaceLabel = keyed(tokens[2], "label", number)?
                    .parse()
                    .map_err(|e: String| Error::parse(number, e))?;
                s.faces.push(Face {
                    id: tokens[1].to_string(),
                    label,
                    outer: Ring::new(Vec::new()),
                    inner: Vec::new(),
                });
            }
            kind @ ("outer" | "inner") => {
                let face = solid
                    .as_mut()
                    .and_then(|s| s.faces.last_mut())
                    .ok_or_else(|| Error::parse(number, format!("`{kind}` outside a face")))?;
                let pts = parse_coords(&tokens[1..], number)?;
                if kind == "outer" {
                    if !face.outer.vertices.is_empty() {
                        return Err(Error::parse(number, "face has two outer rings"));
                    }
                    face.outer = Ring::new(pts);
                } else {
                    face.inner.push(Ring::new(pts));
                }
            }
            "end" => {
                if solid.is_none() {
                    return Err(Error::parse(number, "`end` before `solid`"));
                }
                ended = true;
            }
            other => return Err(Error::parse(number, format!("unknown statement `{other}`"))),
        }
    }
    let solid = solid.ok_or_else(|| Error::parse(0, "no `solid` statement"))?;
    if !ended {
        return Err(Error::parse(0, "missing `end`"));
    }
    if let Some(f) = solid.faces.iter().find(|f| f.outer.vertices.is_empty()) {
        return Err(Error::parse(0, format!("face {} has no outer ring", f.id)));
    }
    Ok(solid)
}

pub(crate) fn push_ring(out: &mut String, keyword: &str, pts: &[Point3]) {
    out.push_str(keyword);
    for p in pts {
        let _ = write!(out, " {} {} {}", p.x, p.y, p.z);
    }
    out.push('\n');
}

pub fn render_solid(solid: &BuildingSolid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "solid {} lod={}", solid.id, solid.lod);
    for face in &solid.faces {
        let _ = writeln!(out, "face {} label={}", face.id, face.label);
        push_ring(&mut out, "outer", &face.outer.vertices);
        for r in &face.inner {
            push_ring(&mut out, "inner", &r.vertices);
        }
    }
    out.push_str("end\n");
    out
}

pub fn write_solid(solid: &BuildingSolid, path: impl AsRef<Path>) -> Result<()> {
    textio::write_string(path.as_ref(), &render_solid(solid))
}
