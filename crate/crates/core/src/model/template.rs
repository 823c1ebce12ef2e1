//! Library of opening objects. Each template lives in a canonical frame:
//! `x` and `y` span the unit anchor rectangle, `z` is depth toward the
//! building exterior, in `[0, depth]`. The mesh together with the reversed
//! anchor rectangle must form a closed shell.
//!
//! ```text
//! template <name> label=<Window|Door> depth=<d_t> [aspect=<w/h>]
//! tri x1 y1 z1 x2 y2 z2 x3 y3 z3
//! anchor 0 0 0 1 0 0 1 1 0 0 1 0
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Point3, Triangle};
use crate::mesh;
use crate::textio::{self, keyed, parse_coords, parse_f64, Line};

use super::format::push_ring;
use super::validate::edge_violations;
use super::{OpeningLabel, Violation};

#[derive(Debug, Clone, PartialEq)]
pub struct OpeningTemplate {
    pub name: String,
    pub label: OpeningLabel,
    pub depth: f64,
    /// Nominal width over height of the modelled object; only used to pick
    /// among templates of the same label.
    pub aspect: f64,
    pub mesh: Vec<Triangle>,
    /// Counter-clockwise seen from +z: `(0,0,0) (1,0,0) (1,1,0) (0,1,0)`.
    pub anchor: [Point3; 4],
}

impl OpeningTemplate {
    pub fn unit_anchor() -> [Point3; 4] {
        [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ]
    }

    /// Two triangles covering the anchor, facing the exterior.
    pub fn flat_panel(name: &str, label: OpeningLabel, depth: f64) -> Self {
        let a = Self::unit_anchor();
        OpeningTemplate {
            name: name.to_string(),
            label,
            depth,
            aspect: 1.0,
            mesh: vec![[a[0], a[1], a[2]], [a[0], a[2], a[3]]],
            anchor: a,
        }
    }

    /// A pane with a raised frame. The frame occupies the band between
    /// `frame / 2` and `frame` (fractions of the unit square) from the
    /// anchor border and rises to full depth; the outer band and the pane
    /// stay at depth zero, so nothing touches the walls of the cut.
    pub fn framed(name: &str, label: OpeningLabel, depth: f64, frame: f64) -> Self {
        let a = Self::unit_anchor();
        let p = Point3::new;
        let inset = |f: f64, z: f64| [p(f, f, z), p(1. - f, f, z), p(1. - f, 1. - f, z), p(f, 1. - f, z)];
        let foot = inset(frame / 2.0, 0.0);
        let outer_top = inset(frame / 2.0, depth);
        let inner_top = inset(frame, depth);
        let pane = inset(frame, 0.0);
        let mut mesh = Vec::new();
        let mut quad = |q: [Point3; 4]| {
            mesh.push([q[0], q[1], q[2]]);
            mesh.push([q[0], q[2], q[3]]);
        };
        for i in 0..4 {
            let j = (i + 1) % 4;
            quad([a[i], a[j], foot[j], foot[i]]);
            // outer side of the frame, facing away from the opening centre
            quad([foot[i], foot[j], outer_top[j], outer_top[i]]);
            quad([outer_top[i], outer_top[j], inner_top[j], inner_top[i]]);
            // inner side of the frame, down to the pane
            quad([inner_top[i], inner_top[j], pane[j], pane[i]]);
        }
        quad(pane);
        OpeningTemplate {
            name: name.to_string(),
            label,
            depth,
            aspect: 1.0,
            mesh,
            anchor: a,
        }
    }
}

/// Checks the anchor and the closure of mesh + reversed anchor.
pub fn validate_template(t: &OpeningTemplate) -> Vec<Violation> {
    let mut out = Vec::new();
    let unit = OpeningTemplate::unit_anchor();
    let anchor_ok = t
        .anchor
        .iter()
        .zip(unit.iter())
        .all(|(a, b)| (a - b).norm() < 1e-9);
    if !anchor_ok || !(t.depth > 0.0) || !(t.aspect > 0.0) || t.name.is_empty() {
        out.push(Violation::BadAnchor {
            template: t.name.clone(),
        });
        return out;
    }
    let mut cap = t.anchor;
    cap.reverse();
    let rings = t
        .mesh
        .iter()
        .map(|tri| &tri[..])
        .chain(std::iter::once(&cap[..]));
    let edges = edge_violations(mesh::edge_defects(rings));
    let outside = t
        .mesh
        .iter()
        .flatten()
        .any(|p| p.z < -1e-9 || p.z > t.depth + 1e-9);
    if !edges.is_empty() || outside || t.mesh.is_empty() {
        out.push(Violation::OpenTemplate {
            template: t.name.clone(),
        });
    }
    out
}

pub fn parse_template_library(text: &str) -> Result<Vec<OpeningTemplate>> {
    let mut out = Vec::new();
    let mut current: Option<(OpeningTemplate, Option<usize>)> = None;
    for Line { number, tokens } in textio::lines(text) {
        match tokens[0] {
            "template" => {
                if current.is_some() {
                    return Err(Error::parse(number, "nested `template` (missing `end`)"));
                }
                if tokens.len() != 4 && tokens.len() != 5 {
                    return Err(Error::parse(
                        number,
                        "expected `template <name> label=<Window|Door> depth=<d> [aspect=<r>]`",
                    ));
                }
                let aspect = match tokens.get(4) {
                    Some(t) => parse_f64(keyed(t, "aspect", number)?, number)?,
                    None => 1.0,
                };
                let label: OpeningLabel = keyed(tokens[2], "label", number)?
                    .parse()
                    .map_err(|e: String| Error::parse(number, e))?;
                let depth = parse_f64(keyed(tokens[3], "depth", number)?, number)?;
                current = Some((
                    OpeningTemplate {
                        name: tokens[1].to_string(),
                        label,
                        depth,
                        aspect,
                        mesh: Vec::new(),
                        anchor: OpeningTemplate::unit_anchor(),
                    },
                    None,
                ));
            }
            "tri" => {
                let (t, _) = current
                    .as_mut()
                    .ok_or_else(|| Error::parse(number, "`tri` outside a template"))?;
                let pts = parse_coords(&tokens[1..], number)?;
                if pts.len() != 3 {
                    return Err(Error::parse(number, "`tri` needs exactly 9 coordinates"));
                }
                t.mesh.push([pts[0], pts[1], pts[2]]);
            }
            "anchor" => {
                let (t, seen) = current
                    .as_mut()
                    .ok_or_else(|| Error::parse(number, "`anchor` outside a template"))?;
                if seen.is_some() {
                    return Err(Error::parse(number, "template has two anchors"));
                }
                let pts = parse_coords(&tokens[1..], number)?;
                if pts.len() != 4 {
                    return Err(Error::parse(number, "`anchor` needs exactly 12 coordinates"));
                }
                t.anchor = [pts[0], pts[1], pts[2], pts[3]];
                *seen = Some(number);
            }
            "end" => {
                let (t, seen) = current
                    .take()
                    .ok_or_else(|| Error::parse(number, "`end` outside a template"))?;
                if seen.is_none() {
                    return Err(Error::parse(number, format!("template {} has no anchor", t.name)));
                }
                out.push(t);
            }
            other => return Err(Error::parse(number, format!("unknown statement `{other}`"))),
        }
    }
    if current.is_some() {
        return Err(Error::parse(0, "unterminated template"));
    }
    Ok(out)
}

/// Reads and validates a template library.
pub fn read_template_library(path: impl AsRef<Path>) -> Result<Vec<OpeningTemplate>> {
    let text = textio::read_to_string(path.as_ref())?;
    let lib = parse_template_library(&text)?;
    let violations: Vec<Violation> = lib.iter().flat_map(validate_template).collect();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(lib)
}

pub fn render_template_library(lib: &[OpeningTemplate]) -> String {
    let mut out = String::new();
    for t in lib {
        let _ = writeln!(
            out,
            "template {} label={} depth={} aspect={}",
            t.name,
            t.label.class_name(),
            t.depth,
            t.aspect
        );
        for tri in &t.mesh {
            push_ring(&mut out, "tri", tri);
        }
        push_ring(&mut out, "anchor", &t.anchor);
        out.push_str("end\n");
    }
    out
}

pub fn write_template_library(lib: &[OpeningTemplate], path: impl AsRef<Path>) -> Result<()> {
    textio::write_string(path.as_ref(), &render_template_library(lib))
}
