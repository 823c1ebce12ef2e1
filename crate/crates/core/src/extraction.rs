//! From a fused posterior raster to rectangular opening instances:
//! threshold, morphological opening, 8-connected clustering, rectangularity
//! filtering and per-instance confidence.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::fused_label;
use crate::geom::UvRect;
use crate::model::OpeningLabel;
use crate::raster::{FacadeFrame, FacadeRaster};
use crate::textio::{self, header_fields, parse_f64, Line};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    pub p_high: f64,
    /// Side of the square structuring element, odd.
    pub kernel: usize,
    pub pe_up: f64,
    pub pe_lo: f64,
    pub min_pixels: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            p_high: 0.7,
            kernel: 3,
            pe_up: 95.0,
            pe_lo: 5.0,
            min_pixels: 4,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_high > 0.0 && self.p_high < 1.0) {
            return Err(Error::Config(format!("p_high {} must lie in (0, 1)", self.p_high)));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel {} must be odd", self.kernel)));
        }
        if !(0.0 <= self.pe_lo && self.pe_lo < self.pe_up && self.pe_up <= 100.0) {
            return Err(Error::Config(format!(
                "percentiles must satisfy 0 <= pe_lo < pe_up <= 100, got {} and {}",
                self.pe_lo, self.pe_up
            )));
        }
        Ok(())
    }
}

/// Binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.cols + col] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    fn at(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols && self.get(row as usize, col as usize)
    }
}

/// Pixels with a value strictly above `p_high` in the first channel.
pub fn threshold_mask(posterior: &FacadeRaster, p_high: f64) -> Mask {
    let mut m = Mask::new(posterior.rows(), posterior.cols());
    for r in 0..m.rows {
        for c in 0..m.cols {
            m.set(r, c, posterior.get(r, c, 0) > p_high);
        }
    }
    m
}

/// Square-window min (`erode`) or max filter, computed separably. Pixels
/// outside the mask count as background.
fn square_filter(mask: &Mask, kernel: usize, erode: bool) -> Mask {
    let h = (kernel / 2) as isize;
    let pass = |src: &Mask, horizontal: bool| {
        let mut out = Mask::new(src.rows, src.cols);
        for r in 0..src.rows as isize {
            for c in 0..src.cols as isize {
                let mut acc = erode;
                for k in -h..=h {
                    let v = if horizontal { src.at(r, c + k) } else { src.at(r + k, c) };
                    if erode {
                        acc &= v;
                    } else {
                        acc |= v;
                    }
                }
                out.set(r as usize, c as usize, acc);
            }
        }
        out
    };
    pass(&pass(mask, true), false)
}

pub fn erode(mask: &Mask, kernel: usize) -> Mask {
    square_filter(mask, kernel, true)
}

pub fn dilate(mask: &Mask, kernel: usize) -> Mask {
    square_filter(mask, kernel, false)
}

/// Erosion followed by dilation with a `kernel × kernel` square.
pub fn morphological_opening(mask: &Mask, kernel: usize) -> Mask {
    assert!(kernel % 2 == 1, "kernel must be odd");
    dilate(&erode(mask, kernel), kernel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Connected pixel set; pixels sorted row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub pixels: Vec<(usize, usize)>,
}

impl Cluster {
    /// `(min row, min col, max row, max col)`, inclusive.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        let mut b = (usize::MAX, usize::MAX, 0, 0);
        for &(r, c) in &self.pixels {
            b.0 = b.0.min(r);
            b.1 = b.1.min(c);
            b.2 = b.2.max(r);
            b.3 = b.3.max(c);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Connected components ordered by `(min row, min col)`.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Vec<Cluster> {
    const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    const N8: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    let nbrs: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &N4,
        Connectivity::Eight => &N8,
    };
    let mut seen = vec![false; mask.data.len()];
    let mut out = Vec::new();
    for start in 0..mask.data.len() {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / mask.cols) as isize, (i % mask.cols) as isize);
            pixels.push((r as usize, c as usize));
            for (dr, dc) in nbrs {
                let (nr, nc) = (r + dr, c + dc);
                if mask.at(nr, nc) {
                    let j = nr as usize * mask.cols + nc as usize;
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        out.push(Cluster { pixels });
    }
    out.sort_by_key(|c| {
        let b = c.bbox();
        (b.0, b.1)
    });
    out
}

/// 8-connected clusters of pixels above `p_high`.
pub fn threshold_clusters(posterior: &FacadeRaster, p_high: f64) -> Vec<Cluster> {
    connected_components(&threshold_mask(posterior, p_high), Connectivity::Eight)
}

/// Pixel count over bounding-box area.
pub fn rectangularity(cluster: &Cluster) -> f64 {
    assert!(!cluster.is_empty());
    let (r0, c0, r1, c1) = cluster.bbox();
    cluster.len() as f64 / ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64
}

/// Percentile `p` in `[0, 100]` with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Drops small clusters, then keeps those whose rectangularity lies within
/// the `[pe_lo, pe_up]` percentile band of the remaining ones.
pub fn filter_instances(clusters: Vec<Cluster>, config: &ExtractionConfig) -> Vec<Cluster> {
    let big: Vec<Cluster> = clusters.into_iter().filter(|c| c.len() >= config.min_pixels).collect();
    if big.len() <= 2 {
        return big;
    }
    let idx: Vec<f64> = big.iter().map(rectangularity).collect();
    let lo = percentile(&idx, config.pe_lo);
    let hi = percentile(&idx, config.pe_up);
    big.into_iter()
        .zip(idx)
        .filter(|(_, i)| *i >= lo && *i <= hi)
        .map(|(c, _)| c)
        .collect()
}

/// Mean of the first channel over the cluster.
pub fn instance_confidence(cluster: &Cluster, posterior: &FacadeRaster) -> f64 {
    let s: f64 = cluster.pixels.iter().map(|&(r, c)| posterior.get(r, c, 0)).sum();
    s / cluster.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpeningInstance {
    pub face_id: String,
    /// Meters from the façade frame origin.
    pub rect: UvRect,
    pub label: OpeningLabel,
    pub confidence: f64,
    /// Member pixels; empty for instances read from text.
    pub pixels: Vec<(usize, usize)>,
}

/// Bounding rectangle of the cluster in meters; label by majority of
/// per-pixel labels, ties to window.
pub fn cluster_to_opening(
    cluster: &Cluster,
    frame: &FacadeFrame,
    labels: impl Fn(usize, usize) -> OpeningLabel,
    confidence: f64,
) -> OpeningInstance {
    let (r0, c0, r1, c1) = cluster.bbox();
    let cell = frame.cell;
    let doors = cluster.pixels.iter().filter(|&&(r, c)| labels(r, c) == OpeningLabel::Door).count();
    let label = if 2 * doors > cluster.len() {
        OpeningLabel::Door
    } else {
        OpeningLabel::Window
    };
    OpeningInstance {
        face_id: frame.face_id.clone(),
        rect: UvRect::new(
            c0 as f64 * cell,
            r0 as f64 * cell,
            (c1 + 1) as f64 * cell,
            (r1 + 1) as f64 * cell,
        ),
        label,
        confidence,
        pixels: cluster.pixels.clone(),
    }
}

/// Full extraction on one façade's fused raster.
pub fn extract_instances(fused: &FacadeRaster, config: &ExtractionConfig) -> Result<Vec<OpeningInstance>> {
    config.validate()?;
    let thresholded = threshold_mask(fused, config.p_high);
    let opened = morphological_opening(&thresholded, config.kernel);
    // dilation may only restore pixels that passed the threshold
    let mut mask = opened;
    for (m, t) in mask.data.iter_mut().zip(&thresholded.data) {
        *m &= *t;
    }
    let clusters = filter_instances(connected_components(&mask, Connectivity::Eight), config);
    Ok(clusters
        .iter()
        .map(|c| {
            let conf = instance_confidence(c, fused);
            cluster_to_opening(c, fused.frame(), |r, col| fused_label(fused, r, col), conf)
        })
        .collect())
}

pub fn render_instances(instances: &[OpeningInstance]) -> String {
    let mut out = String::new();
    for i in instances {
        let r = &i.rect;
        let _ = writeln!(
            out,
            "opening face={} label={} conf={} rect={} {} {} {}",
            i.face_id,
            i.label.as_str(),
            i.confidence,
            r.u_min,
            r.v_min,
            r.u_max,
            r.v_max
        );
    }
    out
}

pub fn write_instances(instances: &[OpeningInstance], path: impl AsRef<Path>) -> Result<()> {
    textio::write_string(path.as_ref(), &render_instances(instances))
}

pub fn parse_instances(text: &str) -> Result<Vec<OpeningInstance>> {
    let mut out = Vec::new();
    for Line { number, tokens } in textio::lines(text) {
        if tokens[0] != "opening" {
            return Err(Error::parse(number, format!("unknown statement `{}`", tokens[0])));
        }
        let (mut face, mut label, mut conf, mut rect) = (None, None, None, None);
        for (key, vals) in header_fields(&tokens[1..]) {
            match (key, vals.as_slice()) {
                ("face", [f]) => face = Some(f.to_string()),
                ("label", [l]) => {
                    label = Some(l.parse::<OpeningLabel>().map_err(|e| Error::parse(number, e.to_string()))?)
                }
                ("conf", [c]) => conf = Some(parse_f64(c, number)?),
                ("rect", [a, b, c, d]) => {
                    rect = Some(UvRect::new(
                        parse_f64(a, number)?,
                        parse_f64(b, number)?,
                        parse_f64(c, number)?,
                        parse_f64(d, number)?,
                    ))
                }
                _ => return Err(Error::parse(number, format!("bad field `{key}`"))),
            }
        }
        let missing = |k: &str| Error::parse(number, format!("missing `{k}`"));
        let rect = rect.ok_or_else(|| missing("rect"))?;
        let confidence = conf.ok_or_else(|| missing("conf"))?;
        if !rect.is_valid() {
            return Err(Error::parse(number, "rect must have u_min < u_max and v_min < v_max"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::parse(number, "confidence outside [0, 1]"));
        }
        out.push(OpeningInstance {
            face_id: face.ok_or_else(|| missing("face"))?,
            rect,
            label: label.ok_or_else(|| missing("label"))?,
            confidence,
            pixels: Vec::new(),
        });
    }
    Ok(out)
}

pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<OpeningInstance>> {
    parse_instances(&textio::read_to_string(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point3, Vector3};

    fn mask_from(rows: &[&str]) -> Mask {
        let mut m = Mask::new(rows.len(), rows[0].len());
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                m.set(r, c, ch == '#');
            }
        }
        m
    }

    fn rect_cluster(r0: usize, c0: usize, h: usize, w: usize) -> Cluster {
        let mut pixels = Vec::new();
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                pixels.push((r, c));
            }
        }
        Cluster { pixels }
    }

    #[test]
    fn diagonal_pixels_join_only_under_eight_connectivity() {
        let m = mask_from(&["#.", ".#"]);
        assert_eq!(connected_components(&m, Connectivity::Eight).len(), 1);
        assert_eq!(connected_components(&m, Connectivity::Four).len(), 2);
        assert!(connected_components(&Mask::new(3, 3), Connectivity::Eight).is_empty());
    }

    #[test]
    fn opening_removes_specks_and_bridges() {
        let square = mask_from(&[".......", ".#####.", ".#####.", ".#####.", ".#####.", ".#####.", "......."]);
        assert_eq!(morphological_opening(&square, 3), square);
        let speck = mask_from(&["...", ".#.", "..."]);
        assert_eq!(morphological_opening(&speck, 3).count(), 0);
        let bridged = mask_from(&["#####.#####", "#####.#####", "###########", "#####.#####", "#####.#####"]);
        let opened = morphological_opening(&bridged, 3);
        assert!(!opened.get(2, 5));
        assert_eq!(opened.count(), 50);
        assert_eq!(connected_components(&opened, Connectivity::Eight).len(), 2);
    }

    #[test]
    fn rectangularity_examples() {
        assert_eq!(rectangularity(&rect_cluster(2, 3, 4, 5)), 1.0);
        let l = mask_from(&["#.", "##"]);
        let c = &connected_components(&l, Connectivity::Eight)[0];
        assert_eq!(rectangularity(c), 0.75);
        let l = mask_from(&["#...", "#...", "####", "####"]);
        let c = &connected_components(&l, Connectivity::Eight)[0];
        assert_eq!(rectangularity(c), 10.0 / 16.0);
        assert_eq!(rectangularity(&rect_cluster(0, 0, 1, 20)), 1.0);
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert!((percentile(&v, 50.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn small_populations_and_small_clusters() {
        let cfg = ExtractionConfig::default();
        let kept = filter_instances(vec![rect_cluster(0, 0, 3, 3)], &cfg);
        assert_eq!(kept.len(), 1);
        let kept = filter_instances(vec![rect_cluster(0, 0, 1, 2), rect_cluster(5, 5, 3, 3)], &cfg);
        assert_eq!(kept, vec![rect_cluster(5, 5, 3, 3)]);
    }

    fn frame() -> FacadeFrame {
        FacadeFrame {
            face_id: "w".into(),
            origin: Point3::origin(),
            u_axis: Vector3::x(),
            v_axis: Vector3::z(),
            cell: 0.1,
            rows: 40,
            cols: 40,
        }
    }

    #[test]
    fn cluster_rect_and_label_vote() {
        let c = rect_cluster(5, 5, 20, 10);
        let inst = cluster_to_opening(&c, &frame(), |_, _| OpeningLabel::Door, 0.9);
        let r = inst.rect;
        for (a, b) in [(r.u_min, 0.5), (r.v_min, 0.5), (r.u_max, 1.5), (r.v_max, 2.5)] {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(inst.label, OpeningLabel::Door);
        let half = cluster_to_opening(&c, &frame(), |r, _| if r < 15 { OpeningLabel::Door } else { OpeningLabel::Window }, 0.9);
        assert_eq!(half.label, OpeningLabel::Window);
    }

    #[test]
    fn confidence_is_the_mean_posterior() {
        let mut r = FacadeRaster::new(frame(), vec!["opening".into()]);
        r.set(0, 0, 0, 0.7);
        r.set(0, 1, 0, 0.9);
        let c = Cluster {
            pixels: vec![(0, 0), (0, 1)],
        };
        assert!((instance_confidence(&c, &r) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn extraction_finds_a_planted_rectangle() {
        let mut r = FacadeRaster::new(frame(), vec!["opening".into(), "window".into(), "door".into()]);
        for row in 10..22 {
            for col in 4..16 {
                r.set_pixel(row, col, &[0.9, 0.9, 0.0]);
            }
        }
        r.set_pixel(30, 30, &[0.95, 0.0, 0.9]);
        let inst = extract_instances(&r, &ExtractionConfig::default()).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].label, OpeningLabel::Window);
        assert!((inst[0].confidence - 0.9).abs() < 1e-12);
        assert!((inst[0].rect.u_min - 0.4).abs() < 1e-12 && (inst[0].rect.v_max - 2.2).abs() < 1e-12);
        let text = render_instances(&inst);
        let back = parse_instances(&text).unwrap();
        assert_eq!(back[0].rect, inst[0].rect);
        assert_eq!(render_instances(&back), text);
    }
}
