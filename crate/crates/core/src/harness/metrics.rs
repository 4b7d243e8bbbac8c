use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{emps, epe, Mask, ScalarField2D, VectorField2D};

/// Column order of `metrics.csv`.
pub const CSV_HEADER: [&str; 14] = [
    "method",
    "tag_period_mm",
    "preset",
    "motion_id",
    "time_s",
    "epe_mean",
    "epe_median",
    "epe_q1",
    "epe_q3",
    "emps_mean",
    "emps_median",
    "emps_q1",
    "emps_q3",
    "n_px",
];

/// Foreground statistics of one method on one evaluated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub method: String,
    pub tag_period_mm: f64,
    pub preset: String,
    pub motion_id: String,
    pub time_s: f64,
    pub epe_mean: f64,
    pub epe_median: f64,
    pub epe_q1: f64,
    pub epe_q3: f64,
    pub emps_mean: f64,
    pub emps_median: f64,
    pub emps_q1: f64,
    pub emps_q3: f64,
    pub n_px: usize,
}

/// Evaluation mask: true anatomy above 0.05, eroded by 2 px.
pub fn foreground_mask(anatomy: &ScalarField2D) -> Mask {
    Mask::threshold(anatomy, 0.05).eroded(2)
}

/// Identifies the data a record was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordKey<'a> {
    pub method: &'a str,
    pub tag_period_mm: f64,
    pub preset: &'a str,
    pub motion_id: &'a str,
    pub time_s: f64,
}

/// EPE and eMPS statistics of `estimate` against `truth` over `mask`.
pub fn evaluate_frame(key: RecordKey<'_>, truth: &VectorField2D, estimate: &VectorField2D, mask: &Mask) -> Result<MetricsRecord> {
    let e = epe(truth, estimate)?.summary(mask)?;
    let s = emps(truth, estimate)?.summary(mask)?;
    Ok(MetricsRecord {
        method: key.method.to_string(),
        tag_period_mm: key.tag_period_mm,
        preset: key.preset.to_string(),
        motion_id: key.motion_id.to_string(),
        time_s: key.time_s,
        epe_mean: e.mean,
        epe_median: e.median,
        epe_q1: e.q1,
        epe_q3: e.q3,
        emps_mean: s.mean,
        emps_median: s.median,
        emps_q1: s.q1,
        emps_q3: s.q3,
        n_px: e.n,
    })
}

pub fn write_metrics_csv(records: &[MetricsRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Parses `metrics.csv` content; the header must match [`CSV_HEADER`].
pub fn parse_metrics_csv(bytes: &[u8]) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Format(format!("unexpected metrics header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        let rec: MetricsRecord = row?;
        let floats = [
            rec.tag_period_mm,
            rec.time_s,
            rec.epe_mean,
            rec.epe_median,
            rec.epe_q1,
            rec.epe_q3,
            rec.emps_mean,
            rec.emps_median,
            rec.emps_q1,
            rec.emps_q3,
        ];
        // NaN statistics are legitimate for an empty mask; infinities are not.
        if floats.iter().any(|v| v.is_infinite()) || !rec.tag_period_mm.is_finite() || !rec.time_s.is_finite() {
            return Err(Error::Format(format!("non-finite value in record {rec:?}")));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_metrics_csv(&bytes)
}
