//! Per-pixel Bayesian fusion of the conflict map with point-cloud and image
//! evidence. The network is a single target node ("opening") with three
//! parents; its conditional table has one entry per parent combination.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::OpeningLabel;
use crate::raster::FacadeRaster;
use crate::textio::{self, parse_f64, Line};

/// Channels of a fused raster: the opening posterior and the two label
/// scores `(pc + tex) / 2` used to pick window or door.
pub const FUSED_CHANNELS: [&str; 3] = ["opening", "window", "door"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConflictState {
    Conflicted,
    Confirmed,
    Unknown,
}

impl ConflictState {
    pub const ALL: [ConflictState; 3] = [ConflictState::Conflicted, ConflictState::Confirmed, ConflictState::Unknown];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConflictState::Conflicted => "conflicted",
            ConflictState::Confirmed => "confirmed",
            ConflictState::Unknown => "unknown",
        }
    }
}

/// State of a binary evidence node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cue {
    Opening,
    Other,
}

impl Cue {
    pub const ALL: [Cue; 2] = [Cue::Opening, Cue::Other];

    pub fn as_str(&self) -> &'static str {
        match self {
            Cue::Opening => "opening",
            Cue::Other => "other",
        }
    }
}

impl FromStr for ConflictState {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ConflictState::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown conflict state `{s}`"))
    }
}

impl FromStr for Cue {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "opening" | "op" => Ok(Cue::Opening),
            "other" => Ok(Cue::Other),
            _ => Err(format!("unknown evidence state `{s}`")),
        }
    }
}

/// `P(opening | conflict, point cloud, texture)` for the 12 parent
/// combinations. Entries may be missing while a table is being read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cpt {
    table: [[[Option<f64>; 2]; 2]; 3],
}

fn idx_c(c: ConflictState) -> usize {
    c as usize
}

fn idx_b(b: Cue) -> usize {
    b as usize
}

impl Default for Cpt {
    /// Conflicts are the strongest cue; two co-occurring strong cues make an
    /// opening likely, a single one does not.
    fn default() -> Self {
        use ConflictState::*;
        use Cue::*;
        let mut t = Cpt::empty();
        for (c, p, x, v) in [
            (Conflicted, Opening, Opening, 0.95),
            (Conflicted, Opening, Other, 0.80),
            (Conflicted, Other, Opening, 0.80),
            (Conflicted, Other, Other, 0.30),
            (Confirmed, Opening, Opening, 0.85),
            (Confirmed, Opening, Other, 0.25),
            (Confirmed, Other, Opening, 0.25),
            (Confirmed, Other, Other, 0.02),
            (Unknown, Opening, Opening, 0.85),
            (Unknown, Opening, Other, 0.45),
            (Unknown, Other, Opening, 0.45),
            (Unknown, Other, Other, 0.10),
        ] {
            t.set(c, p, x, v);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CptViolation {
    OutOfRange {
        conflict: ConflictState,
        pc: Cue,
        tex: Cue,
        value: f64,
    },
    MissingCombination {
        conflict: ConflictState,
        pc: Cue,
        tex: Cue,
    },
}

impl fmt::Display for CptViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CptViolation::OutOfRange { conflict, pc, tex, value } => write!(
                f,
                "entry ({}, {}, {}) = {value} outside [0, 1]",
                conflict.as_str(),
                pc.as_str(),
                tex.as_str()
            ),
            CptViolation::MissingCombination { conflict, pc, tex } => {
                write!(f, "missing entry ({}, {}, {})", conflict.as_str(), pc.as_str(), tex.as_str())
            }
        }
    }
}

impl Cpt {
    pub fn empty() -> Self {
        Cpt {
            table: [[[None; 2]; 2]; 3],
        }
    }

    /// Every entry equal to `p`.
    pub fn uniform(p: f64) -> Self {
        Cpt {
            table: [[[Some(p); 2]; 2]; 3],
        }
    }

    pub fn set(&mut self, c: ConflictState, pc: Cue, tex: Cue, p: f64) {
        self.table[idx_c(c)][idx_b(pc)][idx_b(tex)] = Some(p);
    }

    pub fn unset(&mut self, c: ConflictState, pc: Cue, tex: Cue) {
        self.table[idx_c(c)][idx_b(pc)][idx_b(tex)] = None;
    }

    pub fn entry(&self, c: ConflictState, pc: Cue, tex: Cue) -> Option<f64> {
        self.table[idx_c(c)][idx_b(pc)][idx_b(tex)]
    }

    fn combos() -> impl Iterator<Item = (ConflictState, Cue, Cue)> {
        ConflictState::ALL
            .into_iter()
            .flat_map(|c| Cue::ALL.into_iter().flat_map(move |p| Cue::ALL.into_iter().map(move |t| (c, p, t))))
    }
}

pub fn validate_cpt(cpt: &Cpt) -> Vec<CptViolation> {
    let mut out = Vec::new();
    for (conflict, pc, tex) in Cpt::combos() {
        match cpt.entry(conflict, pc, tex) {
            None => out.push(CptViolation::MissingCombination { conflict, pc, tex }),
            Some(value) if !(0.0..=1.0).contains(&value) => out.push(CptViolation::OutOfRange {
                conflict,
                pc,
                tex,
                value,
            }),
            Some(_) => {}
        }
    }
    out
}

fn checked(cpt: &Cpt) -> Result<()> {
    let v = validate_cpt(cpt);
    if v.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        Err(Error::InvalidCpt(msgs.join("; ")))
    }
}

/// Lines `cpt <conflicted|confirmed|unknown> <opening|other> <opening|other> <p>`,
/// all 12 combinations exactly once.
pub fn parse_cpt(text: &str) -> Result<Cpt> {
    let mut cpt = Cpt::empty();
    for Line { number, tokens } in textio::lines(text) {
        if tokens.len() != 5 || tokens[0] != "cpt" {
            return Err(Error::parse(number, "expected `cpt <conflict> <pc> <tex> <p>`"));
        }
        let c: ConflictState = tokens[1].parse().map_err(|e: String| Error::parse(number, e))?;
        let pc: Cue = tokens[2].parse().map_err(|e: String| Error::parse(number, e))?;
        let tex: Cue = tokens[3].parse().map_err(|e: String| Error::parse(number, e))?;
        if cpt.entry(c, pc, tex).is_some() {
            return Err(Error::parse(number, "duplicate CPT combination"));
        }
        cpt.set(c, pc, tex, parse_f64(tokens[4], number)?);
    }
    checked(&cpt)?;
    Ok(cpt)
}

pub fn read_cpt(path: impl AsRef<Path>) -> Result<Cpt> {
    parse_cpt(&textio::read_to_string(path.as_ref())?)
}

pub fn render_cpt(cpt: &Cpt) -> String {
    let mut out = String::from("# conflict pointcloud texture P(opening)\n");
    for (c, p, t) in Cpt::combos() {
        if let Some(v) = cpt.entry(c, p, t) {
            let _ = writeln!(out, "cpt {} {} {} {v}", c.as_str(), p.as_str(), t.as_str());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelEvidence {
    /// Distribution over (conflicted, confirmed, unknown).
    pub conflict: [f64; 3],
    pub pc_opening: f64,
    pub tex_opening: f64,
}

impl PixelEvidence {
    /// No evidence at all: unknown conflict state, neutral cues.
    pub fn neutral() -> Self {
        PixelEvidence {
            conflict: [0.0, 0.0, 1.0],
            pc_opening: 0.5,
            tex_opening: 0.5,
        }
    }
}

/// Marginal `P(opening)` given soft evidence on the three parents. The CPT
/// must be complete (see [`validate_cpt`]).
pub fn pixel_posterior(ev: &PixelEvidence, cpt: &Cpt) -> f64 {
    let cue = |p: f64, b: Cue| if b == Cue::Opening { p } else { 1.0 - p };
    let mut total = 0.0;
    for (c, pc, tex) in Cpt::combos() {
        let entry = cpt.entry(c, pc, tex).expect("complete CPT");
        total += entry * ev.conflict[idx_c(c)] * cue(ev.pc_opening, pc) * cue(ev.tex_opening, tex);
    }
    total.clamp(0.0, 1.0)
}

/// `min(1, window + door)`, or `None` if the raster lacks both channels.
fn opening_mass(r: &FacadeRaster, row: usize, col: usize) -> Option<f64> {
    let w = r.value(row, col, "window");
    let d = r.value(row, col, "door");
    if w.is_none() && d.is_none() {
        return None;
    }
    Some((w.unwrap_or(0.0) + d.unwrap_or(0.0)).min(1.0))
}

fn conflict_distribution(r: &FacadeRaster, row: usize, col: usize) -> [f64; 3] {
    let get = |name| r.value(row, col, name).unwrap_or(0.0);
    let d = [get("conflicted"), get("confirmed"), get("unknown")];
    let s: f64 = d.iter().sum();
    if s > 0.0 {
        d.map(|x| x / s)
    } else {
        [0.0, 0.0, 1.0]
    }
}

/// Evidence at one pixel; absent rasters contribute neutral evidence.
pub fn pixel_evidence(
    conflict: Option<&FacadeRaster>,
    pointcloud: Option<&FacadeRaster>,
    texture: Option<&FacadeRaster>,
    row: usize,
    col: usize,
) -> PixelEvidence {
    PixelEvidence {
        conflict: conflict.map_or([0.0, 0.0, 1.0], |r| conflict_distribution(r, row, col)),
        pc_opening: pointcloud.and_then(|r| opening_mass(r, row, col)).unwrap_or(0.5),
        tex_opening: texture.and_then(|r| opening_mass(r, row, col)).unwrap_or(0.5),
    }
}

/// Window unless the door score is strictly larger.
pub fn disambiguate_label(
    pointcloud: Option<&FacadeRaster>,
    texture: Option<&FacadeRaster>,
    row: usize,
    col: usize,
) -> OpeningLabel {
    let (w, d) = label_scores(pointcloud, texture, row, col);
    if d > w {
        OpeningLabel::Door
    } else {
        OpeningLabel::Window
    }
}

fn label_scores(pointcloud: Option<&FacadeRaster>, texture: Option<&FacadeRaster>, row: usize, col: usize) -> (f64, f64) {
    let ch = |r: Option<&FacadeRaster>, name| r.and_then(|r| r.value(row, col, name)).unwrap_or(0.0);
    (
        ch(pointcloud, "window") + ch(texture, "window"),
        ch(pointcloud, "door") + ch(texture, "door"),
    )
}

/// Applies [`pixel_posterior`] to every pixel. Present rasters must share
/// one frame; at least one must be given.
pub fn fuse_maps(
    conflict: Option<&FacadeRaster>,
    pointcloud: Option<&FacadeRaster>,
    texture: Option<&FacadeRaster>,
    cpt: &Cpt,
) -> Result<FacadeRaster> {
    checked(cpt)?;
    let present: Vec<&FacadeRaster> = [conflict, pointcloud, texture].into_iter().flatten().collect();
    let first = *present
        .first()
        .ok_or_else(|| Error::Domain("fusion needs at least one evidence raster".into()))?;
    for r in &present[1..] {
        first.check_frame(r)?;
    }
    let frame = first.frame().clone();
    let mut out = FacadeRaster::new(frame.clone(), FUSED_CHANNELS.iter().map(|s| s.to_string()).collect());
    for row in 0..frame.rows {
        for col in 0..frame.cols {
            let ev = pixel_evidence(conflict, pointcloud, texture, row, col);
            let (w, d) = label_scores(pointcloud, texture, row, col);
            out.set_pixel(row, col, &[pixel_posterior(&ev, cpt), w / 2.0, d / 2.0]);
        }
    }
    Ok(out)
}

/// Label of a fused-raster pixel from its stored scores.
pub fn fused_label(fused: &FacadeRaster, row: usize, col: usize) -> OpeningLabel {
    let w = fused.value(row, col, "window").unwrap_or(0.0);
    let d = fused.value(row, col, "door").unwrap_or(0.0);
    if d > w {
        OpeningLabel::Door
    } else {
        OpeningLabel::Window
    }
}
