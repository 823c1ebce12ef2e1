//! Planar projective transform from image pixel coordinates to façade UV,
//! estimated from four point correspondences, and the resampling of
//! probability images onto a façade frame.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, SMatrix, Vector3 as V3};

use crate::error::{Error, Result};
use crate::geom::Point2d;
use crate::textio::{self, parse_f64, Line};

use super::{FacadeFrame, FacadeRaster};

/// One image ↔ façade pair. Image coordinates are in pixels (`x` along
/// columns, `y` along rows, pixel `(r, c)` covering `[c, c+1) × [r, r+1)`);
/// `uv` is in meters from the frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub image: Point2d,
    pub uv: Point2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    #[default]
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

fn collinear(a: &Point2d, b: &Point2d, c: &Point2d) -> bool {
    let (ab, ac) = (b - a, c - a);
    let cross = ab.x * ac.y - ab.y * ac.x;
    let scale = ab.norm_squared().max(ac.norm_squared());
    scale == 0.0 || cross.abs() <= 1e-9 * scale
}

fn check_general_position(pts: &[Point2d]) -> Result<()> {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if collinear(&pts[i], &pts[j], &pts[k]) {
                    return Err(Error::DegenerateCorrespondence(format!(
                        "points {i}, {j} and {k} are collinear"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(pts: &[Point2d]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Point2d::origin(), |acc, p| acc + p.coords / n);
    let mean = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn apply(m: &Matrix3<f64>, p: &Point2d) -> Option<Point2d> {
    let q = m * V3::new(p.x, p.y, 1.0);
    (q.z.abs() > 1e-12).then(|| Point2d::new(q.x / q.z, q.y / q.z))
}

impl Homography {
    /// Direct linear estimate from exactly four correspondences in general
    /// position, mapping image to UV.
    pub fn estimate(corr: &[Correspondence]) -> Result<Self> {
        if corr.len() != 4 {
            return Err(Error::DegenerateCorrespondence(format!(
                "need 4 correspondences, got {}",
                corr.len()
            )));
        }
        let src: Vec<Point2d> = corr.iter().map(|c| c.image).collect();
        let dst: Vec<Point2d> = corr.iter().map(|c| c.uv).collect();
        check_general_position(&src)?;
        check_general_position(&dst)?;
        let (ts, td) = (normalizer(&src), normalizer(&dst));
        // 8 equations padded with a zero row so the SVD yields a full V
        let mut a = SMatrix::<f64, 9, 9>::zeros();
        for (i, (s, d)) in src.iter().zip(&dst).enumerate() {
            let s = apply(&ts, s).expect("affine normalizer");
            let d = apply(&td, d).expect("affine normalizer");
            let r0 = [-s.x, -s.y, -1.0, 0.0, 0.0, 0.0, d.x * s.x, d.x * s.y, d.x];
            let r1 = [0.0, 0.0, 0.0, -s.x, -s.y, -1.0, d.y * s.x, d.y * s.y, d.y];
            for k in 0..9 {
                a[(2 * i, k)] = r0[k];
                a[(2 * i + 1, k)] = r1[k];
            }
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let mut order: Vec<usize> = (0..9).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let largest = svd.singular_values[order[8]];
        if !(largest > 0.0) || svd.singular_values[order[1]] <= 1e-10 * largest {
            return Err(Error::DegenerateCorrespondence("linear system is rank-deficient".into()));
        }
        let h = v_t.row(order[0]);
        let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
        let td_inv = td
            .try_inverse()
            .ok_or_else(|| Error::DegenerateCorrespondence("singular normalization".into()))?;
        let mut m = td_inv * hn * ts;
        if m[(2, 2)].abs() > 1e-15 {
            m /= m[(2, 2)];
        }
        if m.determinant().abs() < 1e-15 {
            return Err(Error::DegenerateCorrespondence("singular transform".into()));
        }
        Ok(Homography(m))
    }

    pub fn apply(&self, p: &Point2d) -> Option<Point2d> {
        apply(&self.0, p)
    }

    pub fn inverse(&self) -> Option<Homography> {
        self.0.try_inverse().map(Homography)
    }
}

fn sample_nearest(image: &FacadeRaster, p: &Point2d, out: &mut [f64]) {
    let (c, r) = (p.x.floor(), p.y.floor());
    if c < 0.0 || r < 0.0 || c >= image.cols() as f64 || r >= image.rows() as f64 {
        out.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    out.copy_from_slice(image.pixel(r as usize, c as usize));
}

fn sample_bilinear(image: &FacadeRaster, p: &Point2d, out: &mut [f64]) {
    let (w, h) = (image.cols() as f64, image.rows() as f64);
    if p.x < 0.0 || p.y < 0.0 || p.x >= w || p.y >= h {
        out.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    // interpolate between pixel centers, clamping at the border
    let x = (p.x - 0.5).clamp(0.0, w - 1.0);
    let y = (p.y - 0.5).clamp(0.0, h - 1.0);
    let (c0, r0) = (x.floor() as usize, y.floor() as usize);
    let (c1, r1) = ((c0 + 1).min(image.cols() - 1), (r0 + 1).min(image.rows() - 1));
    let (fx, fy) = (x - c0 as f64, y - r0 as f64);
    for (k, o) in out.iter_mut().enumerate() {
        let top = image.get(r0, c0, k) * (1.0 - fx) + image.get(r0, c1, k) * fx;
        let bottom = image.get(r1, c0, k) * (1.0 - fx) + image.get(r1, c1, k) * fx;
        *o = top * (1.0 - fy) + bottom * fy;
    }
}

/// Warps a probability image onto the façade frame: each target pixel
/// center is mapped back into the image and sampled. Pixels landing outside
/// the image get zero.
pub fn project_image_probabilities(
    image: &FacadeRaster,
    corr: &[Correspondence],
    frame: &FacadeFrame,
    resampling: Resampling,
) -> Result<FacadeRaster> {
    let h = Homography::estimate(corr)?;
    let inv = h
        .inverse()
        .ok_or_else(|| Error::DegenerateCorrespondence("transform is not invertible".into()))?;
    let mut out = FacadeRaster::new(frame.clone(), image.channels().to_vec());
    let mut px = vec![0.0; image.channels().len()];
    for row in 0..frame.rows {
        for col in 0..frame.cols {
            let (u, v) = frame.pixel_center_uv(row, col);
            match inv.apply(&Point2d::new(u, v)) {
                Some(p) => match resampling {
                    Resampling::Nearest => sample_nearest(image, &p, &mut px),
                    Resampling::Bilinear => sample_bilinear(image, &p, &mut px),
                },
                None => px.iter_mut().for_each(|x| *x = 0.0),
            }
            out.set_pixel(row, col, &px);
        }
    }
    Ok(out)
}

/// Four lines `corr <image x> <image y> <u> <v>`.
pub fn parse_correspondences(text: &str) -> Result<Vec<Correspondence>> {
    let mut out = Vec::new();
    let mut last = 0;
    for Line { number, tokens } in textio::lines(text) {
        last = number;
        if tokens[0] != "corr" || tokens.len() != 5 {
            return Err(Error::parse(number, "expected `corr <x> <y> <u> <v>`"));
        }
        let v: Vec<f64> = tokens[1..].iter().map(|t| parse_f64(t, number)).collect::<Result<_>>()?;
        out.push(Correspondence {
            image: Point2d::new(v[0], v[1]),
            uv: Point2d::new(v[2], v[3]),
        });
    }
    if out.len() != 4 {
        return Err(Error::parse(last, format!("expected 4 correspondences, found {}", out.len())));
    }
    Ok(out)
}

pub fn read_correspondences(path: impl AsRef<Path>) -> Result<Vec<Correspondence>> {
    parse_correspondences(&textio::read_to_string(path.as_ref())?)
}

pub fn render_correspondences(corr: &[Correspondence]) -> String {
    let mut out = String::new();
    for c in corr {
        let _ = writeln!(out, "corr {} {} {} {}", c.image.x, c.image.y, c.uv.x, c.uv.y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point3, Vector3};

    fn corr(pairs: [((f64, f64), (f64, f64)); 4]) -> Vec<Correspondence> {
        pairs
            .iter()
            .map(|&((x, y), (u, v))| Correspondence {
                image: Point2d::new(x, y),
                uv: Point2d::new(u, v),
            })
            .collect()
    }

    fn frame(rows: usize, cols: usize, cell: f64) -> FacadeFrame {
        FacadeFrame {
            face_id: "f".into(),
            origin: Point3::origin(),
            u_axis: Vector3::x(),
            v_axis: Vector3::z(),
            cell,
            rows,
            cols,
        }
    }

    fn ramp_image(rows: usize, cols: usize) -> FacadeRaster {
        let mut img = FacadeRaster::new(FacadeFrame::image(rows, cols), vec!["window".into(), "door".into()]);
        for r in 0..rows {
            for c in 0..cols {
                img.set_pixel(r, c, &[(r * cols + c) as f64 / (rows * cols) as f64, (c as f64) / cols as f64]);
            }
        }
        img
    }

    #[test]
    fn recovers_a_known_projective_map() {
        let truth = Matrix3::new(1.2, 0.1, 3.0, -0.2, 0.9, 1.0, 0.001, 0.002, 1.0);
        let img = [(0.0, 0.0), (100.0, 0.0), (100.0, 80.0), (0.0, 80.0)];
        let c: Vec<Correspondence> = img
            .iter()
            .map(|&(x, y)| {
                let p = Point2d::new(x, y);
                Correspondence {
                    image: p,
                    uv: apply(&truth, &p).unwrap(),
                }
            })
            .collect();
        let h = Homography::estimate(&c).unwrap();
        for (x, y) in [(10.0, 20.0), (55.5, 3.25), (99.0, 79.0)] {
            let p = Point2d::new(x, y);
            assert!((h.apply(&p).unwrap() - apply(&truth, &p).unwrap()).norm() < 1e-9);
        }
    }

    #[test]
    fn identity_correspondences_copy_the_image() {
        let c = corr([((0., 0.), (0., 0.)), ((1., 0.), (1., 0.)), ((1., 1.), (1., 1.)), ((0., 1.), (0., 1.))]);
        let img = ramp_image(6, 7);
        let mut f = frame(6, 7, 1.0);
        f.face_id = "x".into();
        let out = project_image_probabilities(&img, &c, &f, Resampling::Nearest).unwrap();
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn doubling_samples_at_halved_coordinates() {
        let c = corr([((0., 0.), (0., 0.)), ((1., 0.), (2., 0.)), ((1., 1.), (2., 2.)), ((0., 1.), (0., 2.))]);
        let img = ramp_image(5, 5);
        let out = project_image_probabilities(&img, &c, &frame(10, 10, 1.0), Resampling::Nearest).unwrap();
        for (r, cc) in [(0, 0), (3, 7), (9, 9), (4, 1), (6, 2)] {
            // center (c + .5, r + .5) maps to ((c + .5)/2, (r + .5)/2)
            let (sr, sc) = (((r as f64 + 0.5) / 2.0).floor() as usize, ((cc as f64 + 0.5) / 2.0).floor() as usize);
            assert_eq!(out.pixel(r, cc), img.pixel(sr, sc));
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let c = corr([((0., 0.), (0., 0.)), ((1., 1.), (1., 1.)), ((2., 2.), (2., 2.)), ((0., 1.), (0., 1.))]);
        assert!(matches!(Homography::estimate(&c), Err(Error::DegenerateCorrespondence(_))));
    }

    #[test]
    fn bilinear_stays_in_range_and_outside_is_zero() {
        let c = corr([((0., 0.), (1., 1.)), ((4., 0.), (2., 1.)), ((4., 4.), (2., 2.)), ((0., 4.), (1., 2.))]);
        let img = ramp_image(4, 4);
        let out = project_image_probabilities(&img, &c, &frame(30, 30, 0.1), Resampling::Bilinear).unwrap();
        assert!(out.data().iter().all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(out.pixel(0, 0), &[0.0, 0.0]);
        assert_eq!(out.pixel(29, 29), &[0.0, 0.0]);
    }

    #[test]
    fn correspondence_file_round_trips() {
        let c = corr([((0., 0.), (0., 0.)), ((1., 0.), (2., 0.)), ((1., 1.), (2., 2.)), ((0., 1.), (0., 2.))]);
        assert_eq!(parse_correspondences(&render_correspondences(&c)).unwrap(), c);
        assert!(parse_correspondences("corr 0 0 0 0\n").is_err());
    }
}
