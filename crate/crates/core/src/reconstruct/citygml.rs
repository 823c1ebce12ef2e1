//! Minimal CityGML 2.0 writer and reader for LoD3 models.
//!
//! Written elements: `core:CityModel` / `core:cityObjectMember` /
//! `bldg:Building` with a `bldg:lod3Solid` (a `gml:CompositeSurface` of
//! `xlink:href` references) and one `bldg:boundedBy` per face holding a
//! `bldg:WallSurface`, `RoofSurface`, `GroundSurface` or `ClosureSurface`.
//! Each surface carries a `bldg:lod3MultiSurface` polygon with
//! `gml:exterior`/`gml:interior` rings, and its openings as
//! `bldg:opening` / `bldg:Window` or `bldg:Door` with `gen:doubleAttribute
//! name="confidence"`, `gen:stringAttribute name="template"` and one
//! triangle polygon per mesh triangle. Coordinates are written with three
//! decimals; the closing vertex of each ring is repeated as GML requires.

use std::fmt::Write as _;
use std::path::Path;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::extraction::OpeningInstance;
use crate::geom::{Point3, Triangle, UvRect};
use crate::model::{BuildingSolid, Face, OpeningLabel, Ring, SurfaceLabel};
use crate::raster::FacadeFrame;
use crate::textio;

use super::{Lod3Model, PlacedOpening};

const HEADER: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<core:CityModel xmlns:core="http://www.opengis.net/citygml/2.0" xmlns:bldg="http://www.opengis.net/citygml/building/2.0" xmlns:gen="http://www.opengis.net/citygml/generics/2.0" xmlns:gml="http://www.opengis.net/gml" xmlns:xlink="http://www.w3.org/1999/xlink">
"#;

fn coord(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn pos_list(ring: &[Point3]) -> String {
    let mut parts = Vec::with_capacity(ring.len() * 3 + 3);
    for p in ring.iter().chain(ring.first()) {
        parts.push(coord(p.x));
        parts.push(coord(p.y));
        parts.push(coord(p.z));
    }
    parts.join(" ")
}

fn surface_element(label: SurfaceLabel) -> &'static str {
    match label {
        SurfaceLabel::Wall => "WallSurface",
        SurfaceLabel::Roof => "RoofSurface",
        SurfaceLabel::Ground => "GroundSurface",
        SurfaceLabel::Closure => "ClosureSurface",
    }
}

fn write_polygon(out: &mut String, indent: &str, id: &str, outer: &[Point3], inner: &[&[Point3]]) {
    let _ = writeln!(out, "{indent}<gml:surfaceMember>");
    let _ = writeln!(out, "{indent}  <gml:Polygon gml:id=\"{}\">", escape(id));
    let _ = writeln!(
        out,
        "{indent}    <gml:exterior><gml:LinearRing><gml:posList>{}</gml:posList></gml:LinearRing></gml:exterior>",
        pos_list(outer)
    );
    for r in inner {
        let _ = writeln!(
            out,
            "{indent}    <gml:interior><gml:LinearRing><gml:posList>{}</gml:posList></gml:LinearRing></gml:interior>",
            pos_list(r)
        );
    }
    let _ = writeln!(out, "{indent}  </gml:Polygon>");
    let _ = writeln!(out, "{indent}</gml:surfaceMember>");
}

fn face_polygon_id(face: &Face) -> String {
    format!("{}_poly", face.id)
}

fn triangle_id(opening: &PlacedOpening, k: usize) -> String {
    format!("{}_tri{}", opening.id, k + 1)
}

pub fn render_citygml(model: &Lod3Model) -> Result<String> {
    if model.solid.id.is_empty() {
        return Err(Error::parse(0, "model id must not be empty"));
    }
    let mut out = String::from(HEADER);
    out.push_str("  <core:cityObjectMember>\n");
    let _ = writeln!(out, "    <bldg:Building gml:id=\"{}\">", escape(&model.solid.id));
    out.push_str("      <bldg:lod3Solid>\n        <gml:Solid>\n          <gml:exterior>\n            <gml:CompositeSurface>\n");
    let mut refs: Vec<String> = model.solid.faces.iter().map(face_polygon_id).collect();
    for o in &model.openings {
        refs.extend((0..o.mesh.len()).map(|k| triangle_id(o, k)));
    }
    for r in refs {
        let _ = writeln!(out, "              <gml:surfaceMember xlink:href=\"#{}\"/>", escape(&r));
    }
    out.push_str("            </gml:CompositeSurface>\n          </gml:exterior>\n        </gml:Solid>\n      </bldg:lod3Solid>\n");
    for face in &model.solid.faces {
        let el = surface_element(face.label);
        out.push_str("      <bldg:boundedBy>\n");
        let _ = writeln!(out, "        <bldg:{el} gml:id=\"{}\">", escape(&face.id));
        out.push_str("          <bldg:lod3MultiSurface>\n            <gml:MultiSurface>\n");
        let inner: Vec<&[Point3]> = face.inner.iter().map(|r| r.vertices.as_slice()).collect();
        write_polygon(&mut out, "              ", &face_polygon_id(face), &face.outer.vertices, &inner);
        out.push_str("            </gml:MultiSurface>\n          </bldg:lod3MultiSurface>\n");
        for o in model.openings.iter().filter(|o| o.face_id == face.id) {
            let cls = o.label().class_name();
            out.push_str("          <bldg:opening>\n");
            let _ = writeln!(out, "            <bldg:{cls} gml:id=\"{}\">", escape(&o.id));
            let _ = writeln!(
                out,
                "              <gen:doubleAttribute name=\"confidence\"><gen:value>{}</gen:value></gen:doubleAttribute>",
                o.confidence()
            );
            let _ = writeln!(
                out,
                "              <gen:stringAttribute name=\"template\"><gen:value>{}</gen:value></gen:stringAttribute>",
                escape(&o.template)
            );
            out.push_str("              <bldg:lod3MultiSurface>\n                <gml:MultiSurface>\n");
            for (k, t) in o.mesh.iter().enumerate() {
                write_polygon(&mut out, "                  ", &triangle_id(o, k), t, &[]);
            }
            out.push_str("                </gml:MultiSurface>\n              </bldg:lod3MultiSurface>\n");
            let _ = writeln!(out, "            </bldg:{cls}>");
            out.push_str("          </bldg:opening>\n");
        }
        let _ = writeln!(out, "        </bldg:{el}>");
        out.push_str("      </bldg:boundedBy>\n");
    }
    out.push_str("    </bldg:Building>\n  </core:cityObjectMember>\n</core:CityModel>\n");
    Ok(out)
}

pub fn write_citygml(model: &Lod3Model, path: impl AsRef<Path>) -> Result<()> {
    let text = render_citygml(model)?;
    textio::write_string(path.as_ref(), &text)
}

fn xml_err(reader: &Reader<&[u8]>, e: impl std::fmt::Display) -> Error {
    // quick-xml reports byte offsets; map to a line number for the message
    let pos = reader.buffer_position() as usize;
    let line = reader.get_ref()[..pos.min(reader.get_ref().len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1;
    Error::parse(line, e.to_string())
}

fn attr(reader: &Reader<&[u8]>, e: &BytesStart, name: &str) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|x| xml_err(reader, x))?;
        if a.key.local_name().as_ref() == name.as_bytes() {
            return Ok(Some(a.unescape_value().map_err(|x| xml_err(reader, x))?.into_owned()));
        }
    }
    Ok(None)
}

fn parse_pos_list(text: &str, line: usize) -> Result<Vec<Point3>> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let mut pts = textio::parse_coords(&toks, line)?;
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Ok(pts)
}

struct OpeningDraft {
    id: String,
    face_id: String,
    label: OpeningLabel,
    confidence: Option<f64>,
    template: String,
    mesh: Vec<Triangle>,
}

pub fn parse_citygml(text: &str) -> Result<Lod3Model> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<String> = Vec::new();
    let mut building: Option<String> = None;
    let mut faces: Vec<Face> = Vec::new();
    let mut openings: Vec<OpeningDraft> = Vec::new();
    let mut in_opening = false;
    let mut attribute: Option<String> = None;
    loop {
        let ev = reader.read_event().map_err(|e| xml_err(&reader, e))?;
        match ev {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                match name.as_str() {
                    "Building" => building = attr(&reader, &e, "id")?,
                    "WallSurface" | "RoofSurface" | "GroundSurface" | "ClosureSurface" if !in_opening => {
                        let label = match name.as_str() {
                            "WallSurface" => SurfaceLabel::Wall,
                            "RoofSurface" => SurfaceLabel::Roof,
                            "GroundSurface" => SurfaceLabel::Ground,
                            _ => SurfaceLabel::Closure,
                        };
                        let id = attr(&reader, &e, "id")?.unwrap_or_default();
                        faces.push(Face::new(id, label, Vec::new()));
                    }
                    "Window" | "Door" => {
                        let face_id = faces
                            .last()
                            .map(|f| f.id.clone())
                            .ok_or_else(|| xml_err(&reader, "opening outside a surface"))?;
                        in_opening = true;
                        openings.push(OpeningDraft {
                            id: attr(&reader, &e, "id")?.unwrap_or_default(),
                            face_id,
                            label: if name == "Door" { OpeningLabel::Door } else { OpeningLabel::Window },
                            confidence: None,
                            template: String::new(),
                            mesh: Vec::new(),
                        });
                    }
                    "doubleAttribute" | "stringAttribute" => attribute = attr(&reader, &e, "name")?,
                    _ => {}
                }
                stack.push(name);
            }
            Event::End(_) => {
                let name = stack.pop().unwrap_or_default();
                if name == "Window" || name == "Door" {
                    in_opening = false;
                }
                if name == "doubleAttribute" || name == "stringAttribute" {
                    attribute = None;
                }
            }
            Event::Text(t) => {
                let value = t.unescape().map_err(|e| xml_err(&reader, e))?.into_owned();
                let top = stack.last().map(String::as_str).unwrap_or("");
                let line = text[..reader.buffer_position() as usize].matches('\n').count() + 1;
                if top == "posList" {
                    let pts = parse_pos_list(&value, line)?;
                    let exterior = stack.iter().any(|s| s == "exterior");
                    if stack.iter().any(|s| s == "lod3Solid") {
                        continue;
                    }
                    if in_opening {
                        let o = openings.last_mut().expect("inside opening");
                        if pts.len() != 3 {
                            return Err(Error::parse(line, "opening polygons must be triangles"));
                        }
                        o.mesh.push([pts[0], pts[1], pts[2]]);
                    } else if let Some(face) = faces.last_mut() {
                        if exterior {
                            face.outer = Ring::new(pts);
                        } else {
                            face.inner.push(Ring::new(pts));
                        }
                    }
                } else if top == "value" && in_opening {
                    let o = openings.last_mut().expect("inside opening");
                    match attribute.as_deref() {
                        Some("confidence") => o.confidence = Some(textio::parse_f64(value.trim(), line)?),
                        Some("template") => o.template = value,
                        _ => {}
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    let id = building.ok_or_else(|| Error::parse(0, "no Building element"))?;
    let solid = BuildingSolid { id, lod: 3, faces };
    let mut placed = Vec::with_capacity(openings.len());
    for o in openings {
        let face = solid.face(&o.face_id).ok_or_else(|| Error::UnknownFace(o.face_id.clone()))?;
        let frame = FacadeFrame::for_face(face, 1.0)?;
        let mut rect = UvRect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in o.mesh.iter().flatten() {
            let (u, v) = frame.uv_of(p);
            rect = rect.union_bbox(&UvRect::new(u, v, u, v));
        }
        placed.push(PlacedOpening {
            id: o.id,
            face_id: o.face_id.clone(),
            instance: OpeningInstance {
                face_id: o.face_id,
                rect,
                label: o.label,
                confidence: o.confidence.unwrap_or(0.0),
                pixels: Vec::new(),
            },
            template: o.template,
            mesh: o.mesh,
        });
    }
    Ok(Lod3Model { solid, openings: placed })
}

pub fn read_citygml(path: impl AsRef<Path>) -> Result<Lod3Model> {
    parse_citygml(&textio::read_to_string(path.as_ref())?)
}
