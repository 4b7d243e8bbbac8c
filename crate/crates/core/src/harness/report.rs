use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{read_metrics_csv, MetricsRecord};
use super::plot::{LinePlot, Series};
use crate::error::{Error, Result};
use crate::field::quantile_sorted;

/// Total order on finite floats for use in map keys.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ordered(f64);

impl Eq for Ordered {}

impl PartialOrd for Ordered {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct GroupKey {
    method: String,
    tag_period_mm: Ordered,
    preset: String,
    time_s: Ordered,
}

#[derive(Debug, Default)]
struct Samples {
    epe_median: Vec<f64>,
    emps_median: Vec<f64>,
    epe_mean: Vec<f64>,
}

/// Statistics across motions of one (method, tag period, preset, time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub tag_period_mm: f64,
    pub preset: String,
    pub time_s: f64,
    /// Number of contributing records (motions).
    pub n: usize,
    /// Median, first and third quartile of the per-motion EPE medians.
    pub epe_median: f64,
    pub epe_q1: f64,
    pub epe_q3: f64,
    /// Mean of the per-motion EPE means.
    pub epe_mean: f64,
    pub emps_median: f64,
    pub emps_q1: f64,
    pub emps_q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub tag_period_mm: f64,
    pub preset: String,
    pub time_s: f64,
    pub rank: usize,
    pub method: String,
    pub epe_median: f64,
    pub emps_median: f64,
}

/// Incremental grouping of metrics records.
#[derive(Debug, Default)]
pub struct Aggregator {
    groups: BTreeMap<GroupKey, Samples>,
}

fn quartiles(mut v: Vec<f64>) -> (f64, f64, f64) {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    v.sort_by(f64::total_cmp);
    (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75))
}

fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return f64::NAN;
    }
    // Summing in sorted order keeps the result independent of record order.
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

impl Aggregator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: &MetricsRecord) {
        let key = GroupKey {
            method: r.method.clone(),
            tag_period_mm: Ordered(r.tag_period_mm),
            preset: r.preset.clone(),
            time_s: Ordered(r.time_s),
        };
        let s = self.groups.entry(key).or_default();
        s.epe_median.push(r.epe_median);
        s.emps_median.push(r.emps_median);
        s.epe_mean.push(r.epe_mean);
    }

    /// Rows sorted by method, tag period, preset and time.
    pub fn finish(self) -> Vec<AggregateRow> {
        self.groups
            .into_iter()
            .map(|(k, s)| {
                let n = s.epe_median.len();
                let (eq1, em, eq3) = quartiles(s.epe_median);
                let (sq1, sm, sq3) = quartiles(s.emps_median);
                AggregateRow {
                    method: k.method,
                    tag_period_mm: k.tag_period_mm.0,
                    preset: k.preset,
                    time_s: k.time_s.0,
                    n,
                    epe_median: em,
                    epe_q1: eq1,
                    epe_q3: eq3,
                    epe_mean: sorted_mean(s.epe_mean),
                    emps_median: sm,
                    emps_q1: sq1,
                    emps_q3: sq3,
                }
            })
            .collect()
    }
}

pub fn aggregate(records: &[MetricsRecord]) -> Vec<AggregateRow> {
    let mut agg = Aggregator::new();
    records.iter().for_each(|r| agg.push(r));
    agg.finish()
}

/// Methods ordered by final-time EPE median within each (tag period, preset).
/// Ties and NaN values are ordered by method name.
pub fn ranking(rows: &[AggregateRow]) -> Vec<RankingRow> {
    let mut cases: BTreeMap<(Ordered, String), Vec<&AggregateRow>> = BTreeMap::new();
    for r in rows {
        cases.entry((Ordered(r.tag_period_mm), r.preset.clone())).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((tp, preset), group) in cases {
        let t_final = group.iter().map(|r| r.time_s).fold(f64::NEG_INFINITY, f64::max);
        let mut last: Vec<&AggregateRow> = group.into_iter().filter(|r| r.time_s == t_final).collect();
        last.sort_by(|a, b| {
            let key = |r: &AggregateRow| if r.epe_median.is_nan() { f64::INFINITY } else { r.epe_median };
            key(a).total_cmp(&key(b)).then_with(|| a.method.cmp(&b.method))
        });
        for (i, r) in last.into_iter().enumerate() {
            out.push(RankingRow {
                tag_period_mm: tp.0,
                preset: preset.clone(),
                time_s: t_final,
                rank: i + 1,
                method: r.method.clone(),
                epe_median: r.epe_median,
                emps_median: r.emps_median,
            });
        }
    }
    out
}

fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(rows.is_empty()).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

const SUMMARY_HEADER: [&str; 12] = [
    "method",
    "tag_period_mm",
    "preset",
    "time_s",
    "n",
    "epe_median",
    "epe_q1",
    "epe_q3",
    "epe_mean",
    "emps_median",
    "emps_q1",
    "emps_q3",
];

const RANKING_HEADER: [&str; 7] = ["tag_period_mm", "preset", "time_s", "rank", "method", "epe_median", "emps_median"];

/// Wide table: one row per (method, tag period, preset), one column per time.
pub fn pivot_csv(rows: &[AggregateRow], value: impl Fn(&AggregateRow) -> f64) -> Result<Vec<u8>> {
    let mut times: Vec<f64> = rows.iter().map(|r| r.time_s).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut table: BTreeMap<(String, Ordered, String), Vec<Option<f64>>> = BTreeMap::new();
    for r in rows {
        let cols = table
            .entry((r.method.clone(), Ordered(r.tag_period_mm), r.preset.clone()))
            .or_insert_with(|| vec![None; times.len()]);
        let i = times.partition_point(|&t| t < r.time_s);
        cols[i] = Some(value(r));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string(), "tag_period_mm".into(), "preset".into()];
    header.extend(times.iter().map(|t| format!("t={t}")));
    w.write_record(&header)?;
    for ((method, tp, preset), cols) in table {
        let mut rec = vec![method, tp.0.to_string(), preset];
        rec.extend(cols.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub rows: Vec<AggregateRow>,
    pub ranking: Vec<RankingRow>,
    pub files: Vec<PathBuf>,
}

fn write(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    files.push(p);
    Ok(())
}

/// Aggregated tables and one plot per (tag period, preset) and metric,
/// written to `out_dir`.
pub fn report_records(records: &[MetricsRecord], out_dir: &Path) -> Result<ReportOutput> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let rows = aggregate(records);
    let rank = ranking(&rows);
    let mut files = Vec::new();
    write(out_dir, "summary.csv", &to_csv(&rows, &SUMMARY_HEADER)?, &mut files)?;
    write(out_dir, "ranking.csv", &to_csv(&rank, &RANKING_HEADER)?, &mut files)?;
    write(out_dir, "epe_median_pivot.csv", &pivot_csv(&rows, |r| r.epe_median)?, &mut files)?;
    write(out_dir, "emps_median_pivot.csv", &pivot_csv(&rows, |r| r.emps_median)?, &mut files)?;

    let mut cases: BTreeMap<(Ordered, String), Vec<&AggregateRow>> = BTreeMap::new();
    for r in &rows {
        cases.entry((Ordered(r.tag_period_mm), r.preset.clone())).or_default().push(r);
    }
    for ((tp, preset), group) in cases {
        for (metric, pick) in [
            ("epe", (|r: &AggregateRow| (r.epe_q1, r.epe_median, r.epe_q3)) as fn(&AggregateRow) -> (f64, f64, f64)),
            ("emps", |r: &AggregateRow| (r.emps_q1, r.emps_median, r.emps_q3)),
        ] {
            let mut by_method: BTreeMap<&str, Series> = BTreeMap::new();
            for r in &group {
                let (q1, m, q3) = pick(r);
                by_method.entry(&r.method).or_default().push(r.time_s, q1, m, q3);
            }
            let plot = LinePlot {
                series: by_method.into_values().collect(),
            };
            let name = format!("{metric}_tp{}_{preset}.png", tp.0);
            write(out_dir, &name, &plot.render_png()?, &mut files)?;
        }
    }
    Ok(ReportOutput { rows, ranking: rank, files })
}

pub fn report(csv_path: &Path, out_dir: &Path) -> Result<ReportOutput> {
    let records = read_metrics_csv(csv_path)?;
    report_records(&records, out_dir)
}
