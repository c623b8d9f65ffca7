//! Binary PGM (P5) height maps.

use std::io::Write;

use bovigeom_core::HeightMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PgmError {
    #[error("not a binary PGM (magic {0:?})")]
    Magic(String),
    #[error("header: {0}")]
    Header(String),
    #[error("maxval {0} is not supported (1..=255)")]
    MaxVal(u32),
    #[error("pixel data is {found} bytes, expected {expected}")]
    Truncated { expected: usize, found: usize },
}

/// Decoded PGM plus the metadata carried in its comments.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub gray: Vec<u8>,
    pub mm_per_level: Option<f64>,
    /// Position of the source raster inside a padded canvas.
    pub pad_offset: Option<(usize, usize)>,
}

impl PgmImage {
    /// Falls back to `default_scale` when the file carries no scale comment.
    pub fn into_heightmap(self, default_scale: f64) -> HeightMap {
        HeightMap {
            width: self.width,
            height: self.height,
            gray: self.gray,
            scale_mm_per_level: self.mm_per_level.unwrap_or(default_scale),
        }
    }
}

pub fn encode_pgm(h: &HeightMap, pad_offset: Option<(usize, usize)>) -> Vec<u8> {
    let mut out = Vec::with_capacity(h.gray.len() + 64);
    write_pgm(&mut out, h, pad_offset).expect("writing to a Vec cannot fail");
    out
}

pub fn write_pgm<W: Write>(mut w: W, h: &HeightMap, pad_offset: Option<(usize, usize)>) -> std::io::Result<()> {
    writeln!(w, "P5")?;
    writeln!(w, "# mm_per_level={}", h.scale_mm_per_level)?;
    if let Some((du, dv)) = pad_offset {
        writeln!(w, "# pad_offset={du},{dv}")?;
    }
    writeln!(w, "{} {}", h.width, h.height)?;
    writeln!(w, "255")?;
    w.write_all(&h.gray)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage, PgmError> {
    let mut pos = 0;
    let mut comments = Vec::new();
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
                comments.push(String::from_utf8_lossy(&bytes[pos + 1..end]).trim().to_string());
                pos = end;
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::Header("unexpected end of header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(PgmError::Magic(tokens[0].clone()));
    }
    let num = |i: usize, what: &str| {
        tokens[i].parse::<u32>().map_err(|_| PgmError::Header(format!("bad {what} {:?}", tokens[i])))
    };
    let (width, height, maxval) = (num(1, "width")? as usize, num(2, "height")? as usize, num(3, "maxval")?);
    if width == 0 || height == 0 {
        return Err(PgmError::Header("zero dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::MaxVal(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PgmError::Header("missing separator after maxval".into()));
    }
    let data = &bytes[pos + 1..];
    let expected = width * height;
    if data.len() < expected {
        return Err(PgmError::Truncated { expected, found: data.len() });
    }

    let mut mm_per_level = None;
    let mut pad_offset = None;
    for c in &comments {
        if let Some(v) = c.strip_prefix("mm_per_level=") {
            mm_per_level = Some(v.trim().parse().map_err(|_| PgmError::Header(format!("bad mm_per_level {v:?}")))?);
        } else if let Some(v) = c.strip_prefix("pad_offset=") {
            let bad = || PgmError::Header(format!("bad pad_offset {v:?}"));
            let (a, b) = v.trim().split_once(',').ok_or_else(bad)?;
            pad_offset = Some((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
        }
    }
    Ok(PgmImage { width, height, gray: data[..expected].to_vec(), mm_per_level, pad_offset })
}

/// Body mask from a PGM: nonzero pixels are body.
pub fn decode_mask(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>), PgmError> {
    let img = decode_pgm(bytes)?;
    Ok((img.width, img.height, img.gray.iter().map(|&g| g != 0).collect()))
}
