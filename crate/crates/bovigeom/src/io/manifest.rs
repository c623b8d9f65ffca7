//! Dataset manifests:
//! `cow_id,image_id,true_bcs,depth_csv_path,keypoint_json_path[,mask_path][,year]`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use bovigeom_core::BcsLabel;
use thiserror::Error;

pub const REQUIRED: [&str; 5] = ["cow_id", "image_id", "true_bcs", "depth_csv_path", "keypoint_json_path"];
pub const OPTIONAL: [&str; 2] = ["mask_path", "year"];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub cow_id: String,
    pub image_id: String,
    pub true_bcs: BcsLabel,
    pub depth_csv_path: PathBuf,
    pub keypoint_json_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub year: Option<i32>,
}

/// Reads a manifest; relative paths are resolved against `base`.
pub fn read_manifest<R: Read>(r: R, base: &Path) -> Result<Vec<ManifestRow>, ManifestError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers()?.clone();
    for h in &headers {
        if !REQUIRED.contains(&h) && !OPTIONAL.contains(&h) {
            return Err(ManifestError::UnknownColumn(h.to_string()));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0; 5];
    for (i, name) in REQUIRED.iter().enumerate() {
        idx[i] = col(name).ok_or(ManifestError::MissingColumn(name))?;
    }
    let (mask_col, year_col) = (col("mask_path"), col("year"));
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
    };

    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| ManifestError::Row { line, msg };
        let get = |i: usize| rec.get(i).unwrap_or("");
        for (i, name) in REQUIRED.iter().enumerate() {
            if get(idx[i]).is_empty() {
                return Err(bad(format!("empty {name}")));
            }
        }
        let bcs = get(idx[2]);
        let true_bcs = bcs
            .parse::<f64>()
            .ok()
            .and_then(BcsLabel::from_value)
            .ok_or_else(|| bad(format!("true_bcs {bcs:?} is not on the BCS scale")))?;
        let opt = |c: Option<usize>| c.map(get).filter(|s| !s.is_empty());
        let year = opt(year_col)
            .map(|y| y.parse::<i32>().map_err(|_| bad(format!("year {y:?} is not an integer"))))
            .transpose()?;
        rows.push(ManifestRow {
            cow_id: get(idx[0]).to_string(),
            image_id: get(idx[1]).to_string(),
            true_bcs,
            depth_csv_path: resolve(get(idx[3])),
            keypoint_json_path: resolve(get(idx[4])),
            mask_path: opt(mask_col).map(resolve),
            year,
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for r in &rows {
        if !seen.insert((&r.cow_id, &r.image_id)) {
            return Err(ManifestError::Row { line: 0, msg: format!("duplicate image {}/{}", r.cow_id, r.image_id) });
        }
    }
    Ok(rows)
}

/// Writes rows with paths as given (callers pass paths relative to the
/// manifest's directory). Optional columns appear when any row uses them.
pub fn write_manifest<W: Write>(w: W, rows: &[ManifestRow]) -> Result<(), ManifestError> {
    let with_mask = rows.iter().any(|r| r.mask_path.is_some());
    let with_year = rows.iter().any(|r| r.year.is_some());
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let mut header = REQUIRED.to_vec();
    if with_mask {
        header.push("mask_path");
    }
    if with_year {
        header.push("year");
    }
    out.write_record(&header)?;
    let path = |p: &Path| p.to_string_lossy().replace('\\', "/");
    for r in rows {
        let mut rec = vec![
            r.cow_id.clone(),
            r.image_id.clone(),
            format!("{:.2}", r.true_bcs.value()),
            path(&r.depth_csv_path),
            path(&r.keypoint_json_path),
        ];
        if with_mask {
            rec.push(r.mask_path.as_deref().map(path).unwrap_or_default());
        }
        if with_year {
            rec.push(r.year.map(|y| y.to_string()).unwrap_or_default());
        }
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_optional_columns_and_resolves_paths() {
        let text = "cow_id,image_id,true_bcs,depth_csv_path,keypoint_json_path,year\n\
                    c1,i1,3.25,d/a.csv,/abs/k.json,2023\nc2,i2,2.0,b.csv,k2.json,\n";
        let rows = read_manifest(text.as_bytes(), Path::new("/data")).unwrap();
        assert_eq!(rows[0].true_bcs.value(), 3.25);
        assert_eq!(rows[0].depth_csv_path, Path::new("/data/d/a.csv"));
        assert_eq!(rows[0].keypoint_json_path, Path::new("/abs/k.json"));
        assert_eq!((rows[0].year, rows[1].year), (Some(2023), None));
        assert_eq!(rows[1].mask_path, None);
    }

    #[test]
    fn rejects_bad_manifests() {
        let head = "cow_id,image_id,true_bcs,depth_csv_path,keypoint_json_path";
        let off_scale = format!("{head}\nc1,i1,3.3,a.csv,a.json\n");
        let e = read_manifest(off_scale.as_bytes(), Path::new(".")).unwrap_err().to_string();
        assert!(e.starts_with("line 2:"), "{e}");
        assert!(matches!(read_manifest("cow_id,image_id\n".as_bytes(), Path::new(".")), Err(ManifestError::MissingColumn("true_bcs"))));
        let extra = format!("{head},colour\n");
        assert!(matches!(read_manifest(extra.as_bytes(), Path::new(".")), Err(ManifestError::UnknownColumn(_))));
        let dup = format!("{head}\nc,i,3,a,b\nc,i,3,a,b\n");
        assert!(read_manifest(dup.as_bytes(), Path::new(".")).is_err());
    }

    #[test]
    fn write_then_read() {
        let rows = vec![ManifestRow {
            cow_id: "c1".into(),
            image_id: "c1_0".into(),
            true_bcs: BcsLabel::from_value(2.75).unwrap(),
            depth_csv_path: "depth/c1_0.csv".into(),
            keypoint_json_path: "keypoints/c1_0.json".into(),
            mask_path: None,
            year: None,
        }];
        let mut buf = Vec::new();
        write_manifest(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "cow_id,image_id,true_bcs,depth_csv_path,keypoint_json_path\nc1,c1_0,2.75,depth/c1_0.csv,keypoints/c1_0.json\n"
        );
        assert_eq!(read_manifest(buf.as_slice(), Path::new("")).unwrap(), rows);
    }
}
