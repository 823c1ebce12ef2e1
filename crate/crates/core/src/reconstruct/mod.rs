//! Cutting detected openings into the prior solid and closing the cuts with
//! library objects.
//!
//! Each opening becomes a rectangular recess: the host face gains an inner
//! ring, four side walls run inward along the face normal, and the template
//! mesh, mapped onto the recess bottom, closes the shell.

mod citygml;

pub use citygml::{parse_citygml, read_citygml, render_citygml, write_citygml};

use crate::error::{Error, Result};
use crate::extraction::OpeningInstance;
use crate::geom::{point_in_polygon, segments_intersect, Point2d, Point3, Triangle, UvRect, Vector3};
use crate::mesh;
use crate::model::{edge_violations, BuildingSolid, Face, OpeningLabel, OpeningTemplate, Ring, Violation};
use crate::raster::FacadeFrame;

/// Rects closer than this are treated as overlapping when merging.
const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TemplateSelection {
    /// First template in library order with the instance's label.
    #[default]
    First,
    /// Template of that label whose nominal aspect ratio is closest to the
    /// cut's, compared on a log scale.
    NearestAspect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutConfig {
    /// Recess depth, meters.
    pub depth: f64,
    /// Required clearance between a cut and the face boundary, meters.
    pub cell: f64,
    pub selection: TemplateSelection,
}

impl Default for CutConfig {
    fn default() -> Self {
        CutConfig {
            depth: 0.1,
            cell: 0.1,
            selection: TemplateSelection::First,
        }
    }
}

impl CutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(Error::Config(format!("cut depth {} must be positive", self.depth)));
        }
        if !(self.cell > 0.0 && self.cell.is_finite()) {
            return Err(Error::Config(format!("cell {} must be positive", self.cell)));
        }
        Ok(())
    }
}

/// An opening placed in the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedOpening {
    pub id: String,
    pub face_id: String,
    pub instance: OpeningInstance,
    pub template: String,
    pub mesh: Vec<Triangle>,
}

impl PlacedOpening {
    pub fn label(&self) -> OpeningLabel {
        self.instance.label
    }

    pub fn confidence(&self) -> f64 {
        self.instance.confidence
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lod3Model {
    pub solid: BuildingSolid,
    pub openings: Vec<PlacedOpening>,
}

impl Lod3Model {
    /// Rings of the solid followed by the opening triangles: the closed
    /// shell of the whole model.
    pub fn shell(&self) -> impl Iterator<Item = &[Point3]> {
        self.solid
            .rings()
            .chain(self.openings.iter().flat_map(|o| o.mesh.iter().map(|t| &t[..])))
    }

    pub fn volume(&self) -> f64 {
        mesh::signed_volume(self.shell())
    }

    pub fn shell_violations(&self) -> Vec<Violation> {
        edge_violations(mesh::edge_defects(self.shell()))
    }

    pub fn is_watertight(&self) -> bool {
        self.shell_violations().is_empty()
    }

    /// Triangulated shell.
    pub fn triangles(&self) -> Vec<Triangle> {
        let mut t = self.solid.triangulate();
        for o in &self.openings {
            t.extend(o.mesh.iter().copied());
        }
        t
    }
}

/// Unions overlapping (or touching) rectangles on the same face until none
/// overlap. The merged label comes from the larger part, the confidence is
/// the area-weighted mean.
pub fn merge_overlapping(instances: &[OpeningInstance]) -> Vec<OpeningInstance> {
    let mut out: Vec<OpeningInstance> = instances.to_vec();
    loop {
        let mut merged = false;
        'outer: for i in 0..out.len() {
            for j in i + 1..out.len() {
                if out[i].face_id == out[j].face_id && out[i].rect.expand(MERGE_TOL).overlaps(&out[j].rect) {
                    let b = out.remove(j);
                    let a = &mut out[i];
                    let (wa, wb) = (a.rect.area(), b.rect.area());
                    if wb > wa {
                        a.label = b.label;
                    }
                    a.confidence = (a.confidence * wa + b.confidence * wb) / (wa + wb);
                    a.rect = a.rect.union_bbox(&b.rect);
                    a.pixels.extend(b.pixels);
                    a.pixels.sort_unstable();
                    a.pixels.dedup();
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            return out;
        }
    }
}

fn face_outline_uv(face: &Face, frame: &FacadeFrame) -> (Vec<Point2d>, Vec<Vec<Point2d>>) {
    let uv = |p: &Point3| {
        let (u, v) = frame.uv_of(p);
        Point2d::new(u, v)
    };
    (
        face.outer.vertices.iter().map(uv).collect(),
        face.inner.iter().map(|r| r.vertices.iter().map(uv).collect()).collect(),
    )
}

/// True iff the rectangle lies strictly inside the polygon.
fn rect_inside(rect: &UvRect, poly: &[Point2d]) -> bool {
    let corners = rect.corners();
    if !corners.iter().all(|c| point_in_polygon(c, poly)) {
        return false;
    }
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        for k in 0..poly.len() {
            if segments_intersect(&a, &b, &poly[k], &poly[(k + 1) % poly.len()], 1e-12) {
                return false;
            }
        }
    }
    true
}

/// True iff the rectangle and the polygon share any point.
fn rect_meets(rect: &UvRect, poly: &[Point2d]) -> bool {
    let corners = rect.corners();
    if poly.iter().any(|p| p.x >= rect.u_min && p.x <= rect.u_max && p.y >= rect.v_min && p.y <= rect.v_max) {
        return true;
    }
    if corners.iter().any(|c| point_in_polygon(c, poly)) {
        return true;
    }
    (0..4).any(|i| {
        (0..poly.len()).any(|k| {
            segments_intersect(&corners[i], &corners[(i + 1) % 4], &poly[k], &poly[(k + 1) % poly.len()], 1e-12)
        })
    })
}

/// Checks that a rect can be cut into the face with the required clearance.
fn check_placement(face: &Face, frame: &FacadeFrame, rect: &UvRect, clearance: f64) -> Result<()> {
    let (outer, holes) = face_outline_uv(face, frame);
    if !rect.is_valid() || !rect_inside(rect, &outer) || holes.iter().any(|h| rect_meets(rect, h)) {
        return Err(Error::OpeningOutsideFace { face: face.id.clone() });
    }
    // clearance shrunk by a hair so a rect exactly one cell in is accepted
    let grown = rect.expand(clearance * (1.0 - 1e-9));
    if !rect_inside(&grown, &outer) || holes.iter().any(|h| rect_meets(&grown, h)) {
        return Err(Error::OpeningTouchesBoundary { face: face.id.clone() });
    }
    Ok(())
}

/// Corners of the cut at the face plane and at the recess bottom, both
/// counter-clockwise seen from outside.
fn recess_corners(frame: &FacadeFrame, rect: &UvRect, depth: f64) -> ([Point3; 4], [Point3; 4]) {
    let inward = -frame.normal() * depth;
    let top = rect.corners().map(|c| frame.point_at(c.x, c.y));
    let bottom = top.map(|p| p + inward);
    (top, bottom)
}

/// Cuts one rectangular recess per instance. Instances must already be
/// merged so they do not overlap.
pub fn cut_openings(solid: &BuildingSolid, instances: &[OpeningInstance], config: &CutConfig) -> Result<BuildingSolid> {
    config.validate()?;
    let mut out = solid.clone();
    let mut walls: Vec<Face> = Vec::new();
    let mut counters = std::collections::HashMap::<String, usize>::new();
    for inst in instances {
        let idx = out
            .faces
            .iter()
            .position(|f| f.id == inst.face_id)
            .ok_or_else(|| Error::UnknownFace(inst.face_id.clone()))?;
        let face = &out.faces[idx];
        let frame = FacadeFrame::for_face(face, config.cell)?;
        check_placement(face, &frame, &inst.rect, config.cell)?;
        let (top, bottom) = recess_corners(&frame, &inst.rect, config.depth);
        let k = counters.entry(face.id.clone()).or_insert(0);
        *k += 1;
        let label = face.label;
        let base = format!("{}_cut{}", face.id, k);
        // the hole runs opposite to the outer ring
        let hole = vec![top[0], top[3], top[2], top[1]];
        for i in 0..4 {
            // hole edge a -> b gives the wall [b, a, a', b']
            let (a, b) = (hole[i], hole[(i + 1) % 4]);
            let (ai, bi) = ([0, 3, 2, 1][i], [0, 3, 2, 1][(i + 1) % 4]);
            walls.push(Face::new(
                format!("{base}_side{}", i + 1),
                label,
                vec![b, a, bottom[ai], bottom[bi]],
            ));
        }
        out.faces[idx].inner.push(Ring::new(hole));
    }
    out.faces.extend(walls);
    Ok(out)
}

/// Maps the template's unit anchor onto the recess bottom of `rect` and its
/// depth onto the cut depth.
pub fn fit_template(template: &OpeningTemplate, rect: &UvRect, frame: &FacadeFrame, depth: f64) -> Vec<Triangle> {
    let (_, bottom) = recess_corners(frame, rect, depth);
    let o = bottom[0];
    let eu = bottom[1] - bottom[0];
    let ev = bottom[3] - bottom[0];
    let en: Vector3 = frame.normal() * (depth / template.depth);
    let anchor = OpeningTemplate::unit_anchor();
    let map = |p: &Point3| -> Point3 {
        // snap anchor corners so they coincide exactly with the cut
        if p.z == 0.0 {
            for (k, a) in anchor.iter().enumerate() {
                if p.x == a.x && p.y == a.y {
                    return bottom[k];
                }
            }
        }
        o + eu * p.x + ev * p.y + en * p.z
    };
    template.mesh.iter().map(|t| t.map(|p| map(&p))).collect()
}

pub fn select_template<'a>(
    library: &'a [OpeningTemplate],
    label: OpeningLabel,
    rect: &UvRect,
    selection: TemplateSelection,
) -> Option<&'a OpeningTemplate> {
    let mut matching = library.iter().filter(|t| t.label == label);
    match selection {
        TemplateSelection::First => matching.next(),
        TemplateSelection::NearestAspect => {
            let aspect = (rect.width() / rect.height()).ln();
            matching.min_by(|a, b| {
                let da = (a.aspect.ln() - aspect).abs();
                let db = (b.aspect.ln() - aspect).abs();
                da.total_cmp(&db)
            })
        }
    }
}

/// Gives each placement an id, upgrades the level of detail and checks
/// that the whole shell is closed.
pub fn assemble_lod3(cut: BuildingSolid, placements: Vec<(OpeningInstance, String, Vec<Triangle>)>) -> Result<Lod3Model> {
    let mut solid = cut;
    solid.lod = 3;
    let mut openings = Vec::with_capacity(placements.len());
    for (k, (instance, template, mesh)) in placements.into_iter().enumerate() {
        if solid.face(&instance.face_id).is_none() {
            return Err(Error::UnknownFace(instance.face_id.clone()));
        }
        openings.push(PlacedOpening {
            id: format!("{}_{}{}", solid.id, instance.label.as_str(), k + 1),
            face_id: instance.face_id.clone(),
            instance,
            template,
            mesh,
        });
    }
    let model = Lod3Model { solid, openings };
    let violations = model.shell_violations();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(model)
}

/// Built-in library: a framed window and a flat door panel.
pub fn default_library() -> Vec<OpeningTemplate> {
    let mut window = OpeningTemplate::framed("window_framed", OpeningLabel::Window, 0.1, 0.08);
    window.aspect = 0.85;
    let mut door = OpeningTemplate::flat_panel("door_panel", OpeningLabel::Door, 0.1);
    door.aspect = 0.5;
    vec![window, door]
}

/// Merge, cut, fit and assemble.
pub fn reconstruct(
    solid: &BuildingSolid,
    instances: &[OpeningInstance],
    library: &[OpeningTemplate],
    config: &CutConfig,
) -> Result<Lod3Model> {
    let merged = merge_overlapping(instances);
    let cut = cut_openings(solid, &merged, config)?;
    let mut placements = Vec::with_capacity(merged.len());
    for inst in merged {
        let face = solid
            .face(&inst.face_id)
            .ok_or_else(|| Error::UnknownFace(inst.face_id.clone()))?;
        let frame = FacadeFrame::for_face(face, config.cell)?;
        let template = select_template(library, inst.label, &inst.rect, config.selection).ok_or_else(|| {
            Error::Config(format!("template library has no {} template", inst.label.class_name()))
        })?;
        let mesh = fit_template(template, &inst.rect, &frame, config.depth);
        placements.push((inst, template.name.clone(), mesh));
    }
    assemble_lod3(cut, placements)
}

/// Shrinks each rect to keep `clearance` from its host face's bounding
/// rectangle; rects that vanish are dropped.
pub fn clamp_to_faces(solid: &BuildingSolid, instances: &[OpeningInstance], clearance: f64) -> Vec<OpeningInstance> {
    instances
        .iter()
        .filter_map(|inst| {
            let face = solid.face(&inst.face_id)?;
            let frame = FacadeFrame::for_face(face, clearance).ok()?;
            let (outer, _) = face_outline_uv(face, &frame);
            let (mut u1, mut v1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            let (mut u0, mut v0) = (f64::INFINITY, f64::INFINITY);
            for p in &outer {
                u0 = u0.min(p.x);
                v0 = v0.min(p.y);
                u1 = u1.max(p.x);
                v1 = v1.max(p.y);
            }
            let r = inst.rect;
            let rect = UvRect::new(
                r.u_min.max(u0 + clearance),
                r.v_min.max(v0 + clearance),
                r.u_max.min(u1 - clearance),
                r.v_max.min(v1 - clearance),
            );
            rect.is_valid().then(|| OpeningInstance { rect, ..inst.clone() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_solid, validate_template};

    fn cube() -> BuildingSolid {
        box_solid("c", Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0))
    }

    fn instance(face: &str, rect: UvRect) -> OpeningInstance {
        OpeningInstance {
            face_id: face.into(),
            rect,
            label: OpeningLabel::Window,
            confidence: 0.8765,
            pixels: Vec::new(),
        }
    }

    fn panel() -> Vec<OpeningTemplate> {
        vec![OpeningTemplate::flat_panel("panel", OpeningLabel::Window, 0.1)]
    }

    #[test]
    fn centered_cut_removes_its_volume() {
        let inst = instance("c_wall_xmax", UvRect::new(0.4, 0.4, 0.6, 0.6));
        let model = reconstruct(&cube(), &[inst], &panel(), &CutConfig::default()).unwrap();
        assert!((model.volume() - 0.996).abs() < 1e-9);
        assert!(model.is_watertight());
        let face = model.solid.face("c_wall_xmax").unwrap();
        assert_eq!(face.inner.len(), 1);
        assert_eq!(model.solid.lod, 3);
        assert_eq!(model.openings.len(), 1);
        assert_eq!(model.openings[0].confidence(), 0.8765);
        // the cut solid keeps valid faces
        let mut v = Vec::new();
        for f in &model.solid.faces {
            crate::model::validate_face(f, &mut v);
        }
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn framed_template_also_closes_the_cut() {
        let lib = vec![OpeningTemplate::framed("framed", OpeningLabel::Window, 0.2, 0.1)];
        assert!(validate_template(&lib[0]).is_empty());
        let inst = instance("c_wall_ymin", UvRect::new(0.3, 0.2, 0.7, 0.8));
        let model = reconstruct(&cube(), &[inst], &lib, &CutConfig::default()).unwrap();
        assert!(model.is_watertight());
        assert!(model.volume() < 1.0 && model.volume() > 1.0 - 0.4 * 0.6 * 0.1);
    }

    #[test]
    fn rect_crossing_the_edge_is_rejected() {
        let inst = instance("c_wall_xmax", UvRect::new(0.8, 0.4, 1.2, 0.6));
        assert!(matches!(
            cut_openings(&cube(), &[inst], &CutConfig::default()),
            Err(Error::OpeningOutsideFace { .. })
        ));
        let close = instance("c_wall_xmax", UvRect::new(0.05, 0.4, 0.5, 0.6));
        assert!(matches!(
            cut_openings(&cube(), &[close], &CutConfig::default()),
            Err(Error::OpeningTouchesBoundary { .. })
        ));
        let exact = instance("c_wall_xmax", UvRect::new(0.1, 0.1, 0.9, 0.9));
        assert!(cut_openings(&cube(), &[exact], &CutConfig::default()).is_ok());
    }

    #[test]
    fn overlapping_rects_merge_into_one_cut() {
        let a = instance("c_wall_xmax", UvRect::new(0.2, 0.2, 0.5, 0.5));
        let b = instance("c_wall_xmax", UvRect::new(0.4, 0.4, 0.7, 0.6));
        let merged = merge_overlapping(&[a, b]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].rect, UvRect::new(0.2, 0.2, 0.7, 0.6));
        let model = reconstruct(&cube(), &merged, &panel(), &CutConfig::default()).unwrap();
        assert_eq!(model.solid.face("c_wall_xmax").unwrap().inner.len(), 1);
        assert!(model.is_watertight());
    }

    #[test]
    fn fitted_anchor_lands_on_the_recess_bottom() {
        let solid = cube();
        let face = solid.face("c_wall_ymin").unwrap();
        let frame = FacadeFrame::for_face(face, 0.1).unwrap();
        let rect = UvRect::new(0.2, 0.0, 0.7, 1.0);
        let lib = panel();
        let mesh = fit_template(&lib[0], &rect, &frame, 0.1);
        let (_, bottom) = recess_corners(&frame, &rect, 0.1);
        for corner in bottom {
            assert!(mesh.iter().flatten().any(|p| (p - corner).norm() < 1e-9));
        }
        let area: f64 = mesh.iter().map(mesh::triangle_area).sum();
        assert!((area - 0.5).abs() < 1e-12);
        // depth scales with the cut: a 0.2-deep template into a 0.1 cut
        let framed = OpeningTemplate::framed("f", OpeningLabel::Window, 0.2, 0.1);
        let mesh = fit_template(&framed, &rect, &frame, 0.1);
        let reach = mesh
            .iter()
            .flatten()
            .map(|p| frame.normal().dot(&(p - bottom[0])))
            .fold(0.0, f64::max);
        assert!((reach - 0.1).abs() < 1e-12);
    }

    #[test]
    fn no_instances_only_upgrades_lod() {
        let model = reconstruct(&cube(), &[], &panel(), &CutConfig::default()).unwrap();
        assert_eq!(model.solid.lod, 3);
        assert_eq!(model.solid.faces, cube().faces);
    }

    #[test]
    fn broken_template_fails_the_shell_check() {
        let mut lib = panel();
        lib[0].mesh.pop();
        let inst = instance("c_wall_xmax", UvRect::new(0.4, 0.4, 0.6, 0.6));
        assert!(matches!(
            reconstruct(&cube(), &[inst], &lib, &CutConfig::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn aspect_selection_prefers_the_closest_shape() {
        let mut tall = OpeningTemplate::flat_panel("tall", OpeningLabel::Door, 0.1);
        tall.aspect = 0.5;
        let mut wide = OpeningTemplate::flat_panel("wide", OpeningLabel::Door, 0.1);
        wide.aspect = 2.0;
        let lib = vec![wide, tall];
        let rect = UvRect::new(0.0, 0.0, 1.0, 2.2);
        assert_eq!(select_template(&lib, OpeningLabel::Door, &rect, TemplateSelection::First).unwrap().name, "wide");
        assert_eq!(
            select_template(&lib, OpeningLabel::Door, &rect, TemplateSelection::NearestAspect).unwrap().name,
            "tall"
        );
        assert!(select_template(&lib, OpeningLabel::Window, &rect, TemplateSelection::First).is_none());
    }
}
