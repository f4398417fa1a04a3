use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ErrorRejectCurve;
use crate::Result;

/// Serde adapter that keeps non-finite floats representable in JSON:
/// finite values are plain numbers, the rest become `"inf"`, `"-inf"`, `"NaN"`.
pub(crate) mod float_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_f64(*value)
        } else if value.is_nan() {
            serializer.serialize_str("NaN")
        } else if *value > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(s) => s
                .parse::<f64>()
                .map_err(|_| de::Error::custom(format!("not a float: {s:?}"))),
        }
    }
}

/// One `(r, far_target)` cell of an error-vs-reject curve. Grid points left
/// without genuine or impostor pairs carry NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveCsvRow {
    pub r: f64,
    pub far_target: f64,
    pub threshold: f64,
    pub achieved_far: f64,
    pub tar: f64,
    pub n_retained: usize,
}

impl CurveCsvRow {
    pub fn from_curve(curve: &ErrorRejectCurve) -> Vec<CurveCsvRow> {
        let mut rows = Vec::with_capacity(curve.rows.len() * curve.far_targets.len());
        for row in &curve.rows {
            for (i, &far_target) in curve.far_targets.iter().enumerate() {
                let point = row.roc.as_ref().map(|roc| roc.points[i]);
                rows.push(CurveCsvRow {
                    r: row.r,
                    far_target,
                    threshold: point.map_or(f64::NAN, |p| p.threshold),
                    achieved_far: point.map_or(f64::NAN, |p| p.achieved_far),
                    tar: point.map_or(f64::NAN, |p| p.tar),
                    n_retained: row.n_retained,
                });
            }
        }
        rows
    }
}

pub fn write_curve_csv<W: Write>(writer: W, rows: &[CurveCsvRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["r", "far_target", "threshold", "achieved_far", "tar", "n_retained"])?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_csv<R: Read>(reader: R) -> Result<Vec<CurveCsvRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| Ok(row?)).collect()
}
