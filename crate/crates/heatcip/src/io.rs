//! File formats: the CSV container and 8-bit PGM images.
//!
//! A container is plain CSV preceded by `#` header lines:
//!
//! ```text
//! #heatcip-container v1
//! #kind=field
//! #n=2
//! #lo=1,1
//! #hi=2,2
//! #counts=20,20
//! index,x1,x2,value
//! 0,1e0,1e0,0e0
//! ```
//!
//! Floats are written in shortest round-trip exponent form, so reading a
//! file and writing it again reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Domain, FieldStack, ScalarField, SpatialGrid};

pub const MAGIC: &str = "#heatcip-container v1";
pub const SCHEMA_VERSION: u32 = 1;

/// Header metadata plus a numeric table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Container {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::parse(0, format!("missing header key '{key}'")))
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(MAGIC);
        s.push('\n');
        for (k, v) in &self.header {
            let _ = writeln!(s, "#{k}={v}");
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                write_number(&mut s, *v);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut offset = 0usize;
        let mut lines = text.split_inclusive('\n');
        let first = lines.next().ok_or_else(|| Error::parse(0, "empty file"))?;
        if first.trim_end() != MAGIC {
            return Err(Error::parse(0, format!("bad magic line, expected '{MAGIC}'")));
        }
        offset += first.len();
        let mut out = Container::default();
        let mut have_columns = false;
        for line in lines {
            let body = line.trim_end_matches(['\n', '\r']);
            if !have_columns {
                if let Some(kv) = body.strip_prefix('#') {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::parse(offset, "header line without '='"))?;
                    out.header.push((k.to_string(), v.to_string()));
                } else {
                    out.columns = body.split(',').map(str::to_string).collect();
                    have_columns = true;
                }
            } else if !body.is_empty() {
                let mut row = Vec::with_capacity(out.columns.len());
                let mut col_off = offset;
                for tok in body.split(',') {
                    let v = tok
                        .parse::<f64>()
                        .map_err(|_| Error::parse(col_off, format!("not a number: '{tok}'")))?;
                    row.push(v);
                    col_off += tok.len() + 1;
                }
                if row.len() != out.columns.len() {
                    return Err(Error::parse(
                        offset,
                        format!("row has {} fields, header has {}", row.len(), out.columns.len()),
                    ));
                }
                out.rows.push(row);
            }
            offset += line.len();
        }
        if !have_columns {
            return Err(Error::parse(offset, "missing column line"));
        }
        if let Some(v) = out.get("schema") {
            if v != SCHEMA_VERSION.to_string() {
                return Err(Error::parse(0, format!("unsupported schema version {v}")));
            }
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path, self.to_text().as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Container::parse(&text)
    }
}

fn write_number(s: &mut String, v: f64) {
    if v == 0.0 {
        // keep -0 distinct so the round trip stays bit-exact
        s.push_str(if v.is_sign_negative() { "-0" } else { "0" });
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        let _ = write!(s, "{}", v as i64);
    } else {
        let _ = write!(s, "{v:e}");
    }
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let p = path.as_ref();
    if let Some(dir) = p.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(p, bytes).map_err(|e| Error::io(p, e))
}

fn join(values: impl IntoIterator<Item = impl ToString>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| Error::parse(0, format!("bad value '{t}' for '{key}'"))))
        .collect()
}

/// Header entries describing a grid.
pub fn grid_header(grid: &SpatialGrid) -> Vec<(String, String)> {
    let n = grid.dim();
    let d = grid.domain();
    vec![
        ("schema".into(), SCHEMA_VERSION.to_string()),
        ("n".into(), n.to_string()),
        ("lo".into(), join((0..n).map(|a| d.lo(a)))),
        ("hi".into(), join((0..n).map(|a| d.hi(a)))),
        ("counts".into(), join(grid.counts().iter())),
    ]
}

pub fn grid_from_header(c: &Container) -> Result<SpatialGrid> {
    let lo: Vec<f64> = parse_list("lo", c.require("lo")?)?;
    let hi: Vec<f64> = parse_list("hi", c.require("hi")?)?;
    let counts: Vec<usize> = parse_list("counts", c.require("counts")?)?;
    let n: usize = c.require("n")?.parse().map_err(|_| Error::parse(0, "bad 'n'"))?;
    if lo.len() != n {
        return Err(Error::parse(0, format!("header says n={n} but lo has {} entries", lo.len())));
    }
    SpatialGrid::new(Domain::new(&lo, &hi)?, &counts)
}

fn coord_columns(n: usize) -> Vec<String> {
    let mut cols = vec!["index".to_string()];
    cols.extend((1..=n).map(|a| format!("x{a}")));
    cols
}

/// Container for one scalar field, one row per node.
pub fn field_container(field: &ScalarField, extra: &[(&str, String)]) -> Container {
    let grid = field.grid();
    let n = grid.dim();
    let mut c = Container::default();
    c.push("kind", "field");
    c.header.extend(grid_header(grid));
    for (k, v) in extra {
        c.push(k, v);
    }
    c.columns = coord_columns(n);
    c.columns.push("value".into());
    for (i, v) in field.values().iter().enumerate() {
        let p = grid.point(i);
        let mut row = vec![i as f64];
        row.extend_from_slice(&p[..n]);
        row.push(*v);
        c.rows.push(row);
    }
    c
}

pub fn field_from_container(c: &Container) -> Result<ScalarField> {
    if c.get("kind") != Some("field") {
        return Err(Error::parse(0, "container is not a field"));
    }
    let grid = grid_from_header(c)?;
    if c.rows.len() != grid.len() {
        return Err(Error::parse(0, format!("expected {} rows, found {}", grid.len(), c.rows.len())));
    }
    let last = c.columns.len() - 1;
    ScalarField::new(grid, c.rows.iter().map(|r| r[last]).collect())
}

/// Container for a stack of fields, one row per node and one column per layer.
pub fn stack_container(stack: &FieldStack, extra: &[(&str, String)]) -> Container {
    let grid = stack.grid();
    let n = grid.dim();
    let mut c = Container::default();
    c.push("kind", "stack");
    c.header.extend(grid_header(grid));
    c.push("layers", stack.layers());
    for (k, v) in extra {
        c.push(k, v);
    }
    c.columns = coord_columns(n);
    c.columns.extend((0..stack.layers()).map(|i| format!("layer{i}")));
    for i in 0..grid.len() {
        let p = grid.point(i);
        let mut row = vec![i as f64];
        row.extend_from_slice(&p[..n]);
        row.extend((0..stack.layers()).map(|l| stack.get(l, i)));
        c.rows.push(row);
    }
    c
}

pub fn stack_from_container(c: &Container) -> Result<FieldStack> {
    if c.get("kind") != Some("stack") {
        return Err(Error::parse(0, "container is not a stack"));
    }
    let grid = grid_from_header(c)?;
    let layers: usize = c.require("layers")?.parse().map_err(|_| Error::parse(0, "bad 'layers'"))?;
    let first = 1 + grid.dim();
    let data = (0..layers)
        .flat_map(|l| c.rows.iter().map(move |r| r[first + l]))
        .collect::<Vec<_>>();
    FieldStack::from_vec(&grid, layers, data)
}

/// An 8-bit grayscale raster, row 0 at the top.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Binary PGM (`P5`) bytes.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses a binary PGM with an 8-bit maxval. Comments are allowed in the
    /// header. Errors report the byte offset where parsing stopped.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let magic = next_token(bytes, &mut pos)?;
        if magic.1 != b"P5" {
            return Err(Error::parse(magic.0, "expected 'P5' magic"));
        }
        let width = header_number(bytes, &mut pos)?;
        let height = header_number(bytes, &mut pos)?;
        let maxval = header_number(bytes, &mut pos)?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::parse(pos, format!("maxval {maxval} not in 1..=255")));
        }
        if width == 0 || height == 0 {
            return Err(Error::parse(pos, "zero image dimension"));
        }
        // exactly one whitespace byte separates the header from the raster
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(Error::parse(pos, "missing whitespace after maxval"));
        }
        pos += 1;
        let need = width * height;
        if bytes.len() - pos < need {
            return Err(Error::parse(
                bytes.len(),
                format!("raster truncated: need {need} bytes, have {}", bytes.len() - pos),
            ));
        }
        Ok(GrayImage { width, height, maxval: maxval as u16, pixels: bytes[pos..pos + need].to_vec() })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path, &self.to_pgm())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        GrayImage::from_pgm(&bytes)
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<(usize, &'a [u8])> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(start, "unexpected end of header"));
    }
    Ok((start, &bytes[start..*pos]))
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let (at, tok) = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(at, "expected a decimal number"))
}

/// Options for turning a field into pixels.
#[derive(Clone, Copy, Debug, Default)]
pub struct RenderOptions {
    /// Map negative values to zero before scaling.
    pub clip_negative: bool,
}

/// Maps a 2-D slice to gray levels: `[min, max] → [0, 255]`, row 0 at the
/// largest x2, column 0 at the smallest x1. A constant slice renders as 128.
fn render_slice(
    grid: &SpatialGrid,
    values: &[f64],
    slice: usize,
    range: (f64, f64),
    opts: RenderOptions,
) -> GrayImage {
    let (n1, n2) = (grid.count(0), grid.count(1));
    let (lo, hi) = range;
    let mut pixels = vec![0u8; n1 * n2];
    for row in 0..n2 {
        let j = n2 - 1 - row;
        for i in 0..n1 {
            let mut v = values[grid.flat_index([i, j, slice])];
            if opts.clip_negative {
                v = v.max(0.0);
            }
            pixels[row * n1 + i] = if hi > lo {
                (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
            } else {
                128
            };
        }
    }
    GrayImage { width: n1, height: n2, maxval: 255, pixels }
}

/// Renders a field. Two-dimensional fields give one image; three
/// dimensional fields give one image per x3 slice, all on a shared range.
pub fn render_field(field: &ScalarField, opts: RenderOptions) -> Vec<GrayImage> {
    let grid = field.grid();
    let vals: Vec<f64> = field
        .values()
        .iter()
        .map(|&v| if opts.clip_negative { v.max(0.0) } else { v })
        .collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let slices = if grid.dim() == 3 { grid.count(2) } else { 1 };
    (0..slices).map(|s| render_slice(grid, &vals, s, (lo, hi), opts)).collect()
}

/// Index of the slice used as the "mid-slice" image of a 3-D field.
pub fn mid_slice(grid: &SpatialGrid) -> usize {
    if grid.dim() == 3 {
        grid.count(2) / 2
    } else {
        0
    }
}
