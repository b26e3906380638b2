//! File formats.
//!
//! * Points: text, one `x,y` pair per line; `#` lines are comments, and a
//!   comment of the form `# width=W height=H` declares the frame.
//! * Rasters (`CRMP`): little-endian, magic `CRMP`, version `1`, dtype
//!   (`0` f32, `1` u8, `2` f32 probability stack), width u32, height u32,
//!   for dtype 2 a u8 class count, then row-major payload (one plane after
//!   another for stacks).
//! * Label maps can also be written as binary PGM (`P5`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::losses::ProbabilityVolume;
use crate::mapgen::DistanceLabelMap;
use crate::points::{Point, PointSet};
use crate::raster::Raster;

pub const MAGIC: &[u8; 4] = b"CRMP";
pub const VERSION: u8 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_U8: u8 = 1;
const DTYPE_STACK: u8 = 2;

/// Parse a `width=W height=H` header comment.
fn parse_dims(comment: &str) -> Option<(u32, u32)> {
    let mut w = None;
    let mut h = None;
    for tok in comment.split_whitespace() {
        if let Some(v) = tok.strip_prefix("width=") {
            w = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("height=") {
            h = v.parse().ok();
        }
    }
    Some((w?, h?))
}

/// Read points; `dims` overrides (or stands in for) the header.
pub fn read_points_from(reader: impl Read, dims: Option<(u32, u32)>) -> Result<PointSet> {
    let mut header = None;
    let mut pts = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            if header.is_none() {
                header = parse_dims(c);
            }
            continue;
        }
        let mut it = t.split(',').map(str::trim);
        let (Some(xs), Some(ys), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Format(format!("line {}: expected `x,y`", lineno + 1)));
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("line {}: {s:?}: {e}", lineno + 1)))
        };
        pts.push(Point::new(parse(xs)?, parse(ys)?));
    }
    let (w, h) = dims.or(header).ok_or_else(|| {
        Error::invalid("point file has no `# width=W height=H` header; pass the frame size explicitly")
    })?;
    PointSet::new(pts, w, h)
}

pub fn read_points(path: impl AsRef<Path>, dims: Option<(u32, u32)>) -> Result<PointSet> {
    read_points_from(File::open(path)?, dims)
}

/// Write points with the frame header plus any extra comment lines.
pub fn write_points_to(mut w: impl Write, points: &PointSet, comments: &[String]) -> Result<()> {
    writeln!(w, "# width={} height={}", points.width(), points.height())?;
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    for p in points.points() {
        writeln!(w, "{},{}", p.x, p.y)?;
    }
    Ok(())
}

/// Contents of a `CRMP` file.
#[derive(Debug, Clone, PartialEq)]
pub enum RasterFile {
    F32(Raster<f32>),
    U8(Raster<u8>),
    Stack(ProbabilityVolume),
}

impl RasterFile {
    pub fn dims(&self) -> (u32, u32) {
        match self {
            RasterFile::F32(r) => r.dims(),
            RasterFile::U8(r) => r.dims(),
            RasterFile::Stack(v) => (v.width(), v.height()),
        }
    }

    pub fn into_f32(self) -> Result<Raster<f32>> {
        match self {
            RasterFile::F32(r) => Ok(r),
            _ => Err(Error::Format("expected an f32 raster".into())),
        }
    }

    pub fn into_u8(self) -> Result<Raster<u8>> {
        match self {
            RasterFile::U8(r) => Ok(r),
            _ => Err(Error::Format("expected a u8 raster".into())),
        }
    }

    pub fn into_stack(self) -> Result<ProbabilityVolume> {
        match self {
            RasterFile::Stack(v) => Ok(v),
            _ => Err(Error::Format("expected a probability stack".into())),
        }
    }
}

fn write_header(w: &mut impl Write, dtype: u8, width: u32, height: u32) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(VERSION)?;
    w.write_u8(dtype)?;
    w.write_u32::<LittleEndian>(width)?;
    w.write_u32::<LittleEndian>(height)?;
    Ok(())
}

pub fn write_raster_to(mut w: impl Write, file: &RasterFile) -> Result<()> {
    match file {
        RasterFile::F32(r) => {
            write_header(&mut w, DTYPE_F32, r.width(), r.height())?;
            for &v in r.values() {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        RasterFile::U8(r) => {
            write_header(&mut w, DTYPE_U8, r.width(), r.height())?;
            w.write_all(r.values())?;
        }
        RasterFile::Stack(v) => {
            write_header(&mut w, DTYPE_STACK, v.width(), v.height())?;
            w.write_u8(v.n_classes())?;
            for &x in v.data() {
                w.write_f32::<LittleEndian>(x)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_raster(path: impl AsRef<Path>, file: &RasterFile) -> Result<()> {
    write_raster_to(BufWriter::new(File::create(path)?), file)
}

fn format_err(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated raster file".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_raster_from(reader: impl Read) -> Result<RasterFile> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(format_err)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing CRMP magic".into()));
    }
    let version = r.read_u8().map_err(format_err)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported CRMP version {version}")));
    }
    let dtype = r.read_u8().map_err(format_err)?;
    let width = r.read_u32::<LittleEndian>().map_err(format_err)?;
    let height = r.read_u32::<LittleEndian>().map_err(format_err)?;
    let n = width as usize * height as usize;
    let read_f32s = |r: &mut BufReader<_>, count: usize| -> Result<Vec<f32>> {
        let mut v = vec![0f32; count];
        r.read_f32_into::<LittleEndian>(&mut v).map_err(format_err)?;
        Ok(v)
    };
    let file = match dtype {
        DTYPE_F32 => RasterFile::F32(Raster::from_vec(width, height, read_f32s(&mut r, n)?)?),
        DTYPE_U8 => {
            let mut v = vec![0u8; n];
            r.read_exact(&mut v).map_err(format_err)?;
            RasterFile::U8(Raster::from_vec(width, height, v)?)
        }
        DTYPE_STACK => {
            let classes = r.read_u8().map_err(format_err)?;
            let data = read_f32s(&mut r, n * classes as usize)?;
            RasterFile::Stack(ProbabilityVolume::from_planes(classes, width, height, data)?)
        }
        other => return Err(Error::Format(format!("unknown CRMP dtype {other}"))),
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after raster payload".into()));
    }
    Ok(file)
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<RasterFile> {
    read_raster_from(File::open(path)?)
}

/// Binary PGM with gray level `class * floor(255 / (n_classes - 1))`.
pub fn write_label_pgm_to(mut w: impl Write, map: &DistanceLabelMap) -> Result<()> {
    let step = 255 / (map.config.n_classes as u32 - 1);
    write!(w, "P5\n{} {}\n255\n", map.width(), map.height())?;
    let gray: Vec<u8> = map
        .labels
        .values()
        .iter()
        .map(|&c| (c as u32 * step) as u8)
        .collect();
    w.write_all(&gray)?;
    w.flush()?;
    Ok(())
}
