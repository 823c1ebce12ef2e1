//! Raster text format:
//!
//! ```text
//! raster face=<id> origin=<x y z> u=<x y z> v=<x y z> cell=<m> rows=<r> cols=<c> channels=<a,b,..>
//! <r·c lines of float32 values, row-major, channels interleaved>
//! ```
//!
//! Raw probability images use `face=-`; their geometry fields may be
//! omitted.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Point3, Vector3};
use crate::textio::{self, header_fields, parse_f64};

use super::{FacadeFrame, FacadeRaster};

pub fn render_raster(r: &FacadeRaster) -> String {
    let f = r.frame();
    let mut out = String::with_capacity(r.data().len() * 8 + 256);
    let _ = writeln!(
        out,
        "raster face={} origin={} {} {} u={} {} {} v={} {} {} cell={} rows={} cols={} channels={}",
        f.face_id,
        f.origin.x,
        f.origin.y,
        f.origin.z,
        f.u_axis.x,
        f.u_axis.y,
        f.u_axis.z,
        f.v_axis.x,
        f.v_axis.y,
        f.v_axis.z,
        f.cell,
        f.rows,
        f.cols,
        r.channels().join(",")
    );
    for px in r.data().chunks(r.channels().len().max(1)) {
        let mut first = true;
        for v in px {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{}", *v as f32);
        }
        out.push('\n');
    }
    out
}

pub fn write_raster(r: &FacadeRaster, path: impl AsRef<Path>) -> Result<()> {
    textio::write_string(path.as_ref(), &render_raster(r))
}

pub fn parse_raster(text: &str) -> Result<FacadeRaster> {
    let mut lines = textio::lines(text);
    let head = lines.next().ok_or_else(|| Error::parse(0, "empty raster file"))?;
    let n = head.number;
    if head.tokens[0] != "raster" {
        return Err(Error::parse(n, "expected `raster` header"));
    }
    let (mut face, mut origin, mut u, mut v, mut cell, mut rows, mut cols, mut channels) =
        (None, None, None, None, None, None, None, None);
    let vec3 = |vals: &[&str], key: &str| -> Result<Vector3> {
        if vals.len() != 3 {
            return Err(Error::parse(n, format!("`{key}` needs 3 numbers")));
        }
        Ok(Vector3::new(parse_f64(vals[0], n)?, parse_f64(vals[1], n)?, parse_f64(vals[2], n)?))
    };
    let count = |vals: &[&str], key: &str| -> Result<usize> {
        match vals {
            [x] => x
                .parse::<usize>()
                .map_err(|_| Error::parse(n, format!("bad `{key}` value `{x}`"))),
            _ => Err(Error::parse(n, format!("`{key}` needs one value"))),
        }
    };
    for (key, vals) in header_fields(&head.tokens[1..]) {
        match key {
            "face" if vals.len() == 1 => face = Some(vals[0].to_string()),
            "origin" => origin = Some(Point3::from(vec3(&vals, key)?)),
            "u" => u = Some(vec3(&vals, key)?),
            "v" => v = Some(vec3(&vals, key)?),
            "cell" if vals.len() == 1 => cell = Some(parse_f64(vals[0], n)?),
            "rows" => rows = Some(count(&vals, key)?),
            "cols" => cols = Some(count(&vals, key)?),
            "channels" if vals.len() == 1 => {
                channels = Some(vals[0].split(',').map(str::to_string).collect::<Vec<_>>())
            }
            _ => return Err(Error::parse(n, format!("bad header field `{key}`"))),
        }
    }
    let missing = |k: &str| Error::parse(n, format!("missing header field `{k}`"));
    let face = face.ok_or_else(|| missing("face"))?;
    let rows = rows.ok_or_else(|| missing("rows"))?;
    let cols = cols.ok_or_else(|| missing("cols"))?;
    let channels = channels.ok_or_else(|| missing("channels"))?;
    let frame = if face == super::NULL_FACE && origin.is_none() && u.is_none() && v.is_none() && cell.is_none() {
        FacadeFrame::image(rows, cols)
    } else {
        let frame = FacadeFrame {
            face_id: face,
            origin: origin.ok_or_else(|| missing("origin"))?,
            u_axis: u.ok_or_else(|| missing("u"))?,
            v_axis: v.ok_or_else(|| missing("v"))?,
            cell: cell.ok_or_else(|| missing("cell"))?,
            rows,
            cols,
        };
        if !(frame.cell > 0.0) {
            return Err(Error::parse(n, "cell must be positive"));
        }
        let unit = |a: &Vector3| (a.norm() - 1.0).abs() < 1e-6;
        if !unit(&frame.u_axis) || !unit(&frame.v_axis) || frame.u_axis.dot(&frame.v_axis).abs() > 1e-6 {
            return Err(Error::parse(n, "u and v must be orthonormal"));
        }
        frame
    };
    if channels.iter().any(|c| c.is_empty()) {
        return Err(Error::parse(n, "empty channel name"));
    }
    let nch = channels.len();
    let mut data = Vec::with_capacity(rows * cols * nch);
    let mut pixels = 0;
    for line in lines {
        if line.tokens.len() != nch {
            return Err(Error::parse(
                line.number,
                format!("expected {nch} values, found {}", line.tokens.len()),
            ));
        }
        for t in &line.tokens {
            let x: f32 = t
                .parse()
                .map_err(|_| Error::parse(line.number, format!("invalid number `{t}`")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::parse(line.number, format!("value {x} outside [0, 1]")));
            }
            data.push(x as f64);
        }
        pixels += 1;
    }
    if pixels != rows * cols {
        return Err(Error::parse(n, format!("expected {} pixel lines, found {pixels}", rows * cols)));
    }
    FacadeRaster::from_data(frame, channels, data).map_err(|e| Error::parse(n, e.to_string()))
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<FacadeRaster> {
    parse_raster(&textio::read_to_string(path.as_ref())?)
}
