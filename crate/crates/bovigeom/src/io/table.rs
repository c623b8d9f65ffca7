//! Feature and prediction CSV tables.

use std::io::{Read, Write};

use bovigeom_core::{BcsLabel, FeatureVector, Variant, FEATURE_NAMES};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("header mismatch: expected {expected:?}")]
    Header { expected: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One image's features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub cow_id: String,
    pub image_id: String,
    pub features: FeatureVector,
    pub label: Option<BcsLabel>,
}

pub fn feature_header() -> Vec<&'static str> {
    let mut h = vec!["cow_id", "image_id", "variant"];
    h.extend(FEATURE_NAMES);
    h.push("label");
    h
}

/// Shortest representation that parses back to the same value.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn label_str(l: Option<BcsLabel>) -> String {
    l.map(|l| format!("{:.2}", l.value())).unwrap_or_default()
}

pub fn write_features<W: Write>(w: W, rows: &[FeatureRow]) -> Result<(), TableError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(feature_header())?;
    for r in rows {
        let mut rec = vec![r.cow_id.clone(), r.image_id.clone(), r.features.variant.as_str().to_string()];
        rec.extend(r.features.values.iter().map(|&v| num(v)));
        rec.push(label_str(r.label));
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn encode_features(rows: &[FeatureRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_features(&mut buf, rows).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_features<R: Read>(r: R) -> Result<Vec<FeatureRow>, TableError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let expected = feature_header();
    if rd.headers()?.iter().ne(expected.iter().copied()) {
        return Err(TableError::Header { expected: expected.join(",") });
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| TableError::Row { line, msg };
        let variant = Variant::parse(&rec[2]).ok_or_else(|| bad(format!("unknown variant {:?}", &rec[2])))?;
        let mut values = [0.0; FEATURE_NAMES.len()];
        for (k, v) in values.iter_mut().enumerate() {
            let cell = rec[3 + k].trim();
            *v = cell
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("{}: not a finite number: {cell:?}", FEATURE_NAMES[k])))?;
        }
        let cell = rec[3 + FEATURE_NAMES.len()].trim();
        let label = if cell.is_empty() {
            None
        } else {
            let v: f64 = cell.parse().map_err(|_| bad(format!("label {cell:?} is not a number")))?;
            Some(BcsLabel::from_value(v).ok_or_else(|| bad(format!("label {cell} is not on the BCS scale")))?)
        };
        rows.push(FeatureRow {
            cow_id: rec[0].to_string(),
            image_id: rec[1].to_string(),
            features: FeatureVector { variant, values },
            label,
        });
    }
    Ok(rows)
}

/// One image's prediction and class distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub cow_id: String,
    pub image_id: String,
    pub variant: Variant,
    pub predicted: BcsLabel,
    pub label: Option<BcsLabel>,
    pub proba: [f64; bovigeom_core::N_CLASSES],
}

pub fn write_predictions<W: Write>(w: W, rows: &[PredictionRow]) -> Result<(), TableError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let mut header: Vec<String> = ["cow_id", "image_id", "variant", "predicted", "label"].map(String::from).to_vec();
    header.extend(BcsLabel::all().map(|l| format!("p_{:.2}", l.value())));
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.cow_id.clone(),
            r.image_id.clone(),
            r.variant.as_str().to_string(),
            label_str(Some(r.predicted)),
            label_str(r.label),
        ];
        rec.extend(r.proba.iter().map(|&p| num(p)));
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
