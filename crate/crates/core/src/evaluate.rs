//! Evaluation arithmetic: instance matching, detection rates, median IoU,
//! point-to-mesh deviation and watertightness.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::extraction::OpeningInstance;
use crate::geom::{Point3, Triangle, UvRect, Vector3};
use crate::mesh;
use crate::textio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionCounts {
    /// All openings.
    pub ao: u32,
    /// Openings measured by the laser.
    pub mo: u32,
    /// Detections, `tp + fp`.
    pub d: u32,
    pub tp: u32,
    pub fp: u32,
    pub fn_: u32,
}

/// Percentages rounded to the nearest integer, halves away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionRates {
    pub da: i64,
    pub fa: i64,
    pub dm: i64,
}

pub fn detection_rates(c: &DetectionCounts) -> Result<DetectionRates> {
    if c.ao == 0 {
        return Err(Error::Domain("detection rate needs AO > 0".into()));
    }
    if c.mo == 0 {
        return Err(Error::Domain("detection rate needs MO > 0".into()));
    }
    let pct = |num: u32, den: u32| (100.0 * num as f64 / den as f64).round() as i64;
    Ok(DetectionRates {
        da: pct(c.tp, c.ao),
        fa: if c.d == 0 { 0 } else { pct(c.fp, c.d) },
        dm: pct(c.tp, c.mo),
    })
}

pub fn rect_iou(a: &UvRect, b: &UvRect) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub tp: u32,
    pub fp: u32,
    pub fn_: u32,
    /// `(prediction index, ground-truth index, IoU)`.
    pub matches: Vec<(usize, usize, f64)>,
}

/// Greedy one-to-one matching by descending IoU, restricted to instances on
/// the same face. Pairs below `iou_min` never match.
pub fn match_instances(pred: &[OpeningInstance], gt: &[OpeningInstance], iou_min: f64) -> Matching {
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            if p.face_id != g.face_id {
                continue;
            }
            let iou = rect_iou(&p.rect, &g.rect);
            if iou > 0.0 && iou >= iou_min {
                pairs.push((i, j, iou));
            }
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let (mut used_p, mut used_g) = (vec![false; pred.len()], vec![false; gt.len()]);
    let mut matches = Vec::new();
    for (i, j, iou) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            matches.push((i, j, iou));
        }
    }
    let tp = matches.len() as u32;
    Matching {
        tp,
        fp: pred.len() as u32 - tp,
        fn_: gt.len() as u32 - tp,
        matches,
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Median IoU ×100 over every ground-truth instance, unmatched ones
/// counting as zero. `None` without ground truth.
pub fn median_instance_iou(gt_count: usize, matching: &Matching) -> Option<f64> {
    let mut per_gt = vec![0.0; gt_count];
    for &(_, j, iou) in &matching.matches {
        per_gt[j] = iou;
    }
    median(per_gt).map(|m| 100.0 * m)
}

/// Median IoU ×100 over matched pairs only.
pub fn median_matched_iou(matching: &Matching) -> Option<f64> {
    median(matching.matches.iter().map(|m| m.2).collect()).map(|m| 100.0 * m)
}

/// Closest point on a triangle (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Point3, t: &Triangle) -> Point3 {
    let (a, b, c) = (t[0], t[1], t[2]);
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

struct Bounded {
    tri: Triangle,
    lo: Vector3,
    hi: Vector3,
}

fn box_distance2(p: &Point3, lo: &Vector3, hi: &Vector3) -> f64 {
    let mut d = 0.0;
    for k in 0..3 {
        let x = p[k];
        let e = if x < lo[k] {
            lo[k] - x
        } else if x > hi[k] {
            x - hi[k]
        } else {
            0.0
        };
        d += e * e;
    }
    d
}

/// Unsigned distance from each sample to the nearest triangle, summarized
/// as `(mean, rms)`.
pub fn mesh_deviation(samples: &[Point3], triangles: &[Triangle]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Domain("mesh deviation needs at least one sample".into()));
    }
    if triangles.is_empty() {
        return Err(Error::Domain("mesh deviation needs a non-empty mesh".into()));
    }
    let boxes: Vec<Bounded> = triangles
        .iter()
        .map(|t| Bounded {
            tri: *t,
            lo: t[0].coords.inf(&t[1].coords).inf(&t[2].coords),
            hi: t[0].coords.sup(&t[1].coords).sup(&t[2].coords),
        })
        .collect();
    let (mut sum, mut sum2) = (0.0, 0.0);
    for p in samples {
        let mut best = f64::INFINITY;
        for b in &boxes {
            if box_distance2(p, &b.lo, &b.hi) >= best {
                continue;
            }
            let d2 = (closest_point_on_triangle(p, &b.tri) - p).norm_squared();
            if d2 < best {
                best = d2;
            }
        }
        sum += best.sqrt();
        sum2 += best;
    }
    let n = samples.len() as f64;
    Ok((sum / n, (sum2 / n).sqrt()))
}

/// Points on a barycentric grid over every triangle, about `spacing` apart.
pub fn sample_surface(triangles: &[Triangle], spacing: f64) -> Vec<Point3> {
    let mut out = Vec::new();
    for t in triangles {
        let longest = (t[1] - t[0]).norm().max((t[2] - t[1]).norm()).max((t[0] - t[2]).norm());
        let n = ((longest / spacing).ceil() as usize).max(1);
        for i in 0..n {
            for j in 0..n - i {
                // interior centroids of the sub-triangles keep off the edges
                let (a, b) = ((i as f64 + 1.0 / 3.0) / n as f64, (j as f64 + 1.0 / 3.0) / n as f64);
                out.push(t[0] + (t[1] - t[0]) * a + (t[2] - t[0]) * b);
            }
        }
    }
    out
}

pub fn watertight(triangles: &[Triangle]) -> bool {
    mesh::is_watertight(triangles)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub counts: DetectionCounts,
    pub rates: Option<DetectionRates>,
    pub median_iou_all: Option<f64>,
    pub median_iou_matched: Option<f64>,
    pub deviation: Option<(f64, f64)>,
    pub watertight: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map_or("nan".to_string(), |x| format!("{x:.4}"))
}

impl EvaluationReport {
    /// Machine-readable `key=value` lines.
    pub fn render_kv(&self) -> String {
        let c = &self.counts;
        let mut out = String::new();
        for (k, v) in [("AO", c.ao), ("MO", c.mo), ("D", c.d), ("TP", c.tp), ("FP", c.fp), ("FN", c.fn_)] {
            let _ = writeln!(out, "{k}={v}");
        }
        if let Some(r) = self.rates {
            let _ = writeln!(out, "DA={}\nFA={}\nDM={}", r.da, r.fa, r.dm);
        }
        let _ = writeln!(out, "median_iou_all={}", opt(self.median_iou_all));
        let _ = writeln!(out, "median_iou_matched={}", opt(self.median_iou_matched));
        let _ = writeln!(out, "deviation_mean={}", opt(self.deviation.map(|d| d.0)));
        let _ = writeln!(out, "deviation_rms={}", opt(self.deviation.map(|d| d.1)));
        let _ = writeln!(out, "watertight={}", self.watertight);
        out
    }

    pub fn render_text(&self) -> String {
        let c = &self.counts;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "openings: AO={} MO={} D={} TP={} FP={} FN={}",
            c.ao, c.mo, c.d, c.tp, c.fp, c.fn_
        );
        match self.rates {
            Some(r) => {
                let _ = writeln!(out, "detection: DA={}% FA={}% DM={}%", r.da, r.fa, r.dm);
            }
            None => out.push_str("detection: undefined (no ground truth)\n"),
        }
        let _ = writeln!(
            out,
            "median IoU: {} (all ground truth), {} (matched only)",
            opt(self.median_iou_all),
            opt(self.median_iou_matched)
        );
        match self.deviation {
            Some((m, r)) => {
                let _ = writeln!(out, "deviation: mean {m:.4} m, RMS {r:.4} m");
            }
            None => out.push_str("deviation: not computed\n"),
        }
        let _ = writeln!(out, "watertight: {}", self.watertight);
        out
    }

    pub fn write_kv(&self, path: impl AsRef<Path>) -> Result<()> {
        textio::write_string(path.as_ref(), &self.render_kv())
    }
}

/// Evaluates predicted against ground-truth instances and, when a
/// reference mesh is given, the reconstructed mesh against it.
pub fn evaluate(
    pred: &[OpeningInstance],
    gt: &[OpeningInstance],
    measured: Option<u32>,
    iou_min: f64,
    model_mesh: &[Triangle],
    reference: Option<&[Triangle]>,
    sample_spacing: f64,
) -> Result<EvaluationReport> {
    let m = match_instances(pred, gt, iou_min);
    let counts = DetectionCounts {
        ao: gt.len() as u32,
        mo: measured.unwrap_or(gt.len() as u32),
        d: pred.len() as u32,
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
    };
    let rates = if counts.ao > 0 && counts.mo > 0 {
        Some(detection_rates(&counts)?)
    } else {
        None
    };
    let deviation = match reference {
        Some(r) if !model_mesh.is_empty() => Some(mesh_deviation(&sample_surface(model_mesh, sample_spacing), r)?),
        _ => None,
    };
    Ok(EvaluationReport {
        counts,
        rates,
        median_iou_all: median_instance_iou(gt.len(), &m),
        median_iou_matched: median_matched_iou(&m),
        deviation,
        watertight: watertight(model_mesh),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_solid, OpeningLabel};

    fn inst(rect: UvRect) -> OpeningInstance {
        OpeningInstance {
            face_id: "f".into(),
            rect,
            label: OpeningLabel::Window,
            confidence: 1.0,
            pixels: Vec::new(),
        }
    }

    #[test]
    fn published_examples() {
        let r = detection_rates(&DetectionCounts {
            ao: 66,
            mo: 60,
            d: 60,
            tp: 60,
            fp: 0,
            fn_: 6,
        })
        .unwrap();
        assert_eq!((r.da, r.fa, r.dm), (91, 0, 100));
        let r = detection_rates(&DetectionCounts {
            ao: 103,
            mo: 87,
            d: 79,
            tp: 76,
            fp: 3,
            fn_: 27,
        })
        .unwrap();
        assert_eq!((r.da, r.fa, r.dm), (74, 4, 87));
    }

    #[test]
    fn empty_detection_and_domain_errors() {
        let c = DetectionCounts {
            ao: 5,
            mo: 5,
            ..Default::default()
        };
        let r = detection_rates(&c).unwrap();
        assert_eq!((r.da, r.fa, r.dm), (0, 0, 0));
        assert!(detection_rates(&DetectionCounts::default()).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = UvRect::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(rect_iou(&a, &a), 1.0);
        let b = UvRect::new(0.5, 0.0, 1.5, 1.0);
        assert!((rect_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rect_iou(&a, &b), rect_iou(&b, &a));
    }

    #[test]
    fn greedy_matching() {
        let gt = vec![inst(UvRect::new(0.0, 0.0, 1.0, 1.0))];
        // IoU 0.8 and 0.6 against the same ground truth
        let p = vec![inst(UvRect::new(0.0, 0.0, 0.6, 1.0)), inst(UvRect::new(0.0, 0.0, 0.8, 1.0))];
        let m = match_instances(&p, &gt, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
        assert_eq!(m.matches[0].0, 1);
        // IoU 0.4
        let weak = vec![inst(UvRect::new(0.0, 0.0, 0.4, 1.0))];
        let m = match_instances(&weak, &gt, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
    }

    #[test]
    fn median_counts_unmatched_as_zero() {
        let m = Matching {
            tp: 2,
            fp: 0,
            fn_: 1,
            matches: vec![(0, 1, 0.6), (1, 2, 0.8)],
        };
        assert!((median_instance_iou(3, &m).unwrap() - 60.0).abs() < 1e-12);
        assert!((median_matched_iou(&m).unwrap() - 70.0).abs() < 1e-12);
    }

    #[test]
    fn deviation_closed_forms() {
        let tri = [[Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 0.0, 0.0), Point3::new(0.0, 10.0, 0.0)]];
        let on = [Point3::new(1.0, 1.0, 0.0), Point3::new(2.0, 3.0, 0.0)];
        assert_eq!(mesh_deviation(&on, &tri).unwrap(), (0.0, 0.0));
        let off = [Point3::new(1.0, 1.0, 1.0), Point3::new(2.0, 3.0, -3.0)];
        let (m, r) = mesh_deviation(&off, &tri).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && (r - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn samples_lie_on_the_mesh() {
        let tris = box_solid("b", Point3::origin(), Point3::new(2.0, 1.0, 1.0)).triangulate();
        let s = sample_surface(&tris, 0.25);
        assert!(s.len() > 50);
        let (m, _) = mesh_deviation(&s, &tris).unwrap();
        assert!(m < 1e-12);
        assert!(watertight(&tris));
        assert!(!watertight(&tris[2..]));
    }
}
