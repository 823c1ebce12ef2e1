//! Shared helpers for the whitespace-separated text formats.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Point3;

pub(crate) struct Line<'a> {
    pub number: usize,
    pub tokens: Vec<&'a str>,
}

/// Non-blank, non-comment lines split on whitespace, with 1-based numbers.
pub(crate) fn lines(text: &str) -> impl Iterator<Item = Line<'_>> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            None
        } else {
            Some(Line {
                number: i + 1,
                tokens: l.split_whitespace().collect(),
            })
        }
    })
}

pub(crate) fn keyed<'a>(token: &'a str, key: &str, line: usize) -> Result<&'a str> {
    token
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::parse(line, format!("expected `{key}=...`, found `{token}`")))
}

pub(crate) fn parse_f64(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid number `{token}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite number `{token}`")));
    }
    Ok(v)
}

pub(crate) fn parse_coords(tokens: &[&str], line: usize) -> Result<Vec<Point3>> {
    if tokens.is_empty() || tokens.len() % 3 != 0 {
        return Err(Error::parse(
            line,
            format!("expected a multiple of 3 coordinates, found {}", tokens.len()),
        ));
    }
    tokens
        .chunks_exact(3)
        .map(|c| {
            Ok(Point3::new(
                parse_f64(c[0], line)?,
                parse_f64(c[1], line)?,
                parse_f64(c[2], line)?,
            ))
        })
        .collect()
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Splits `key=value` header tokens where a value may span several
/// whitespace-separated tokens (`origin=1 2 3`).
pub(crate) fn header_fields<'a>(tokens: &[&'a str]) -> Vec<(&'a str, Vec<&'a str>)> {
    let mut out: Vec<(&str, Vec<&str>)> = Vec::new();
    for t in tokens {
        match t.split_once('=') {
            Some((k, v)) => {
                let mut vals = Vec::new();
                if !v.is_empty() {
                    vals.push(v);
                }
                out.push((k, vals));
            }
            None => {
                if let Some(last) = out.last_mut() {
                    last.1.push(t);
                }
            }
        }
    }
    out
}
