//! PLY point clouds: ASCII writer, ASCII and binary reader.

use std::io::Write;

use bovigeom_core::PointCloud;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlyError {
    #[error("line {line}: {msg}")]
    Decode { line: usize, msg: String },
    #[error("vertex {index}: {msg}")]
    Binary { index: usize, msg: String },
}

fn at(line: usize, msg: impl Into<String>) -> PlyError {
    PlyError::Decode { line, msg: msg.into() }
}

pub fn write_ply<W: Write>(mut w: W, c: &PointCloud) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        c.len()
    )?;
    for p in &c.points {
        writeln!(w, "{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32)?;
    }
    Ok(())
}

pub fn encode_ply(c: &PointCloud) -> Vec<u8> {
    let mut out = Vec::new();
    write_ply(&mut out, c).expect("writing to a Vec cannot fail");
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn text(self, s: &str) -> Option<f64> {
        match self {
            Scalar::F32 => s.parse::<f32>().ok().map(f64::from),
            Scalar::F64 => s.parse::<f64>().ok(),
            _ => s.parse::<i64>().ok().map(|v| v as f64),
        }
    }

    fn binary(self, b: &[u8], big: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let a: [u8; $n] = b[..$n].try_into().unwrap();
                (if big { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

impl Element {
    fn fixed_size(&self) -> Option<usize> {
        self.props.iter().map(|p| match p {
            Property::Scalar(_, s) => Some(s.size()),
            Property::List => None,
        }).sum()
    }
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    /// Number of header lines, including `end_header`.
    lines: usize,
    /// Byte offset of the body.
    body: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut pos = 0;
    let mut line_no = 0;
    let next_line = |pos: &mut usize| -> Option<String> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| *pos + e);
        let s = String::from_utf8_lossy(&bytes[*pos..end]).trim_end_matches('\r').to_string();
        *pos = (end + 1).min(bytes.len());
        Some(s)
    };
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line_no += 1;
        let Some(line) = next_line(&mut pos) else {
            return Err(at(line_no, "header ended before end_header"));
        };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if tok != ["ply"] {
                return Err(at(1, "missing 'ply' magic"));
            }
            continue;
        }
        match tok.first().copied() {
            Some("format") => {
                format = Some(match tok.get(1..) {
                    Some(["ascii", "1.0"]) => Format::Ascii,
                    Some(["binary_little_endian", "1.0"]) => Format::Little,
                    Some(["binary_big_endian", "1.0"]) => Format::Big,
                    _ => return Err(at(line_no, format!("unsupported format {line:?}"))),
                })
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let [_, name, count] = tok[..] else {
                    return Err(at(line_no, "malformed element line"));
                };
                let count = count.parse().map_err(|_| at(line_no, format!("bad element count {count:?}")))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| at(line_no, "property before any element"))?;
                match tok[..] {
                    [_, "list", _, _, _] => el.props.push(Property::List),
                    [_, ty, name] => {
                        let s = Scalar::parse(ty).ok_or_else(|| at(line_no, format!("unknown property type {ty:?}")))?;
                        el.props.push(Property::Scalar(name.to_string(), s));
                    }
                    _ => return Err(at(line_no, "malformed property line")),
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(at(line_no, format!("unexpected header keyword {other:?}"))),
        }
    }
    let format = format.ok_or_else(|| at(line_no, "missing format line"))?;
    Ok(Header { format, elements, lines: line_no, body: pos })
}

/// Reads the `vertex` element's `x`, `y`, `z` properties.
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud, PlyError> {
    let h = parse_header(bytes)?;
    let vi = h
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| at(h.lines, "no vertex element"))?;
    let vertex = &h.elements[vi];
    let col = |axis: &str| {
        vertex
            .props
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == axis))
            .ok_or_else(|| at(h.lines, format!("vertex element lacks property {axis}")))
    };
    let cols = [col("x")?, col("y")?, col("z")?];
    let points = match h.format {
        Format::Ascii => read_ascii(bytes, &h, vi, cols)?,
        Format::Little | Format::Big => read_binary(bytes, &h, vi, cols, h.format == Format::Big)?,
    };
    let cloud = PointCloud::new(points).map_err(|e| at(h.lines, e.to_string()))?;
    Ok(cloud)
}

fn read_ascii(bytes: &[u8], h: &Header, vi: usize, cols: [usize; 3]) -> Result<Vec<[f64; 3]>, PlyError> {
    let text = std::str::from_utf8(&bytes[h.body..]).map_err(|_| at(h.lines + 1, "body is not UTF-8"))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (h.lines + 1 + i, l)).filter(|(_, l)| !l.trim().is_empty());
    let mut last = h.lines;
    for e in &h.elements[..vi] {
        for _ in 0..e.count {
            last = lines.next().ok_or_else(|| at(last + 1, format!("missing {} record", e.name)))?.0;
        }
    }
    let vertex = &h.elements[vi];
    let mut points = Vec::with_capacity(vertex.count);
    for k in 0..vertex.count {
        let Some((no, line)) = lines.next() else {
            return Err(at(last + 1, format!("vertex count mismatch: header declares {}, found {k}", vertex.count)));
        };
        last = no;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != vertex.props.len() {
            return Err(at(no, format!("expected {} values, found {}", vertex.props.len(), tok.len())));
        }
        let mut p = [0.0; 3];
        for (a, &c) in cols.iter().enumerate() {
            let Property::Scalar(name, ty) = &vertex.props[c] else { unreachable!() };
            p[a] = ty
                .text(tok[c])
                .filter(|v| v.is_finite())
                .ok_or_else(|| at(no, format!("non-numeric {name} {:?}", tok[c])))?;
        }
        points.push(p);
    }
    if vi + 1 == h.elements.len() {
        if let Some((no, _)) = lines.next() {
            return Err(at(no, format!("vertex count mismatch: data beyond the {} declared vertices", vertex.count)));
        }
    }
    Ok(points)
}

fn read_binary(bytes: &[u8], h: &Header, vi: usize, cols: [usize; 3], big: bool) -> Result<Vec<[f64; 3]>, PlyError> {
    let mut pos = h.body;
    for e in &h.elements[..vi] {
        let size = e.fixed_size().ok_or_else(|| at(h.lines, format!("list properties in {} before vertex are not supported", e.name)))?;
        pos += size * e.count;
    }
    let vertex = &h.elements[vi];
    if vertex.props.iter().any(|p| matches!(p, Property::List)) {
        return Err(at(h.lines, "list property in vertex element"));
    }
    let offsets: Vec<usize> = vertex
        .props
        .iter()
        .scan(0, |o, p| {
            let Property::Scalar(_, s) = p else { unreachable!() };
            let here = *o;
            *o += s.size();
            Some(here)
        })
        .collect();
    let stride = vertex.fixed_size().expect("no lists");
    let mut points = Vec::with_capacity(vertex.count);
    for k in 0..vertex.count {
        let rec = bytes.get(pos + k * stride..pos + (k + 1) * stride).ok_or_else(|| PlyError::Binary {
            index: k,
            msg: format!("vertex count mismatch: data ends before vertex {k} of {}", vertex.count),
        })?;
        let mut p = [0.0; 3];
        for (a, &c) in cols.iter().enumerate() {
            let Property::Scalar(name, ty) = &vertex.props[c] else { unreachable!() };
            p[a] = ty.binary(&rec[offsets[c]..], big);
            if !p[a].is_finite() {
                return Err(PlyError::Binary { index: k, msg: format!("non-finite {name}") });
            }
        }
        points.push(p);
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n";

    #[test]
    fn empty_and_single_point_golden() {
        let empty = String::from_utf8(encode_ply(&PointCloud::default())).unwrap();
        assert_eq!(empty, HEADER.replace("vertex 1", "vertex 0"));
        let one = String::from_utf8(encode_ply(&PointCloud::new(vec![[1.0, 2.0, 3.0]]).unwrap())).unwrap();
        assert_eq!(one, format!("{HEADER}1 2 3\n"));
    }

    #[test]
    fn round_trip_is_f32_rounding() {
        let pts = vec![[0.1, -2.5e-3, 1234.5678], [1e6, 3.0, -0.0]];
        let back = read_ply(&encode_ply(&PointCloud::new(pts.clone()).unwrap())).unwrap();
        for (a, b) in pts.iter().zip(&back.points) {
            for k in 0..3 {
                assert_eq!(b[k], a[k] as f32 as f64);
            }
        }
    }

    #[test]
    fn count_mismatch_names_line() {
        let text = HEADER.replace("vertex 1", "vertex 2") + "1 2 3\n";
        assert_eq!(read_ply(text.as_bytes()), Err(at(9, "vertex count mismatch: header declares 2, found 1")));
        let extra = format!("{HEADER}1 2 3\n4 5 6\n");
        assert!(matches!(read_ply(extra.as_bytes()), Err(PlyError::Decode { line: 9, .. })));
    }

    #[test]
    fn non_numeric_and_bad_header() {
        let text = format!("{HEADER}1 oops 3\n");
        assert!(matches!(read_ply(text.as_bytes()), Err(PlyError::Decode { line: 8, msg }) if msg.contains("y")));
        assert!(matches!(read_ply(b"plyx\n"), Err(PlyError::Decode { line: 1, .. })));
        let no_fmt = "ply\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        assert!(matches!(read_ply(no_fmt.as_bytes()), Err(PlyError::Decode { line: 6, .. })));
        let truncated = "ply\nformat ascii 1.0\nelement vertex 0\n";
        assert!(matches!(read_ply(truncated.as_bytes()), Err(PlyError::Decode { line: 4, .. })));
    }

    #[test]
    fn extra_properties_and_elements() {
        let text = "ply\nformat ascii 1.0\ncomment scanner\nelement vertex 2\nproperty double z\nproperty uchar red\n\
                    property float x\nproperty float y\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    3.5 255 1 2\n6 0 4 5\n3 0 1 1\n";
        let c = read_ply(text.as_bytes()).unwrap();
        assert_eq!(c.points, vec![[1.0, 2.0, 3.5], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn binary_little_and_big_endian() {
        let pts = [[1.5f32, -2.0, 3.25], [0.0, 7.0, -1.0]];
        for (fmt, big) in [("binary_little_endian", false), ("binary_big_endian", true)] {
            let mut b = format!("ply\nformat {fmt} 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n").into_bytes();
            for p in &pts {
                for v in p {
                    b.extend(if big { v.to_be_bytes() } else { v.to_le_bytes() });
                }
            }
            let c = read_ply(&b).unwrap();
            assert_eq!(c.points, vec![[1.5, -2.0, 3.25], [0.0, 7.0, -1.0]]);
            b.truncate(b.len() - 4);
            assert!(matches!(read_ply(&b), Err(PlyError::Binary { index: 1, .. })));
        }
    }
}
