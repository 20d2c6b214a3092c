use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{read_text, write_text};
use crate::body::NUM_JOINTS;
use crate::error::{Error, Result};
use crate::fusion::{FeatureSequence, Mat};
use crate::metrics::EvalReport;
use crate::optim::IterationRecord;
use crate::sync::{Event, EventStream, SampledSeries};

/// Parses a numeric CSV with a header row; `expected` pins the header when
/// given. Returns the header and the rows.
fn parse_numeric(
    context: &str,
    text: &str,
    expected: Option<&[&str]>,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(context, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if let Some(exp) = expected {
        if header != exp {
            return Err(Error::parse(
                context,
                format!("header must be `{}`", exp.join(",")),
            ));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(context, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(context, format!("row {} has a non-numeric field", i + 1)))?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn events_to_csv(events: &[Event]) -> String {
    let mut s = String::from("t,x,y,polarity\n");
    for e in events {
        let _ = writeln!(s, "{},{},{},{}", e.t, e.x, e.y, e.polarity);
    }
    s
}

pub fn events_from_csv(text: &str, width: u32, height: u32) -> Result<EventStream> {
    let (_, rows) = parse_numeric("events", text, Some(&["t", "x", "y", "polarity"]))?;
    let events = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let int =
                |v: f64| (v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64).then_some(v as u32);
            match (int(r[1]), int(r[2]), r[3]) {
                (Some(x), Some(y), p) if p == 1.0 || p == -1.0 => Event::new(r[0], x, y, p as i8),
                _ => Err(Error::parse(
                    "events",
                    format!("row {} has a bad pixel or polarity", i + 1),
                )),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    EventStream::new(width, height, events)
}

pub fn series_to_csv(series: &SampledSeries) -> String {
    let mut s = String::from("t,value\n");
    for (t, v) in series.timestamps().iter().zip(series.values()) {
        let _ = writeln!(s, "{t},{v}");
    }
    s
}

pub fn series_from_csv(text: &str) -> Result<SampledSeries> {
    let (_, rows) = parse_numeric("series", text, Some(&["t", "value"]))?;
    SampledSeries::new(
        rows.iter().map(|r| r[0]).collect(),
        rows.iter().map(|r| r[1]).collect(),
    )
}

pub fn history_to_csv(history: &[IterationRecord]) -> String {
    let mut s = format!("{}\n", IterationRecord::CSV_HEADER);
    for h in history {
        let _ = writeln!(s, "{}", h.csv_row());
    }
    s
}

pub fn report_to_csv(report: &EvalReport) -> String {
    format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row())
}

/// One row per frame, columns `c0..c{d-1}`.
pub fn features_to_csv(f: &FeatureSequence) -> String {
    let m = f.matrix();
    let header: Vec<String> = (0..m.cols()).map(|c| format!("c{c}")).collect();
    let mut s = format!("{}\n", header.join(","));
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn features_from_csv(text: &str) -> Result<FeatureSequence> {
    let (header, rows) = parse_numeric("features", text, None)?;
    let d = header.len();
    let data: Vec<f64> = rows.concat();
    FeatureSequence::new(Mat::from_vec(rows.len(), d, data)?)
}

/// IMU samples: timestamp then 24 axis-angle rotations per row.
pub fn imu_poses_to_csv(times: &[f64], poses: &[[Vector3<f64>; NUM_JOINTS]]) -> String {
    let mut header = vec!["t".to_string()];
    for j in 0..NUM_JOINTS {
        header.extend(["x", "y", "z"].map(|a| format!("j{j}_{a}")));
    }
    let mut s = format!("{}\n", header.join(","));
    for (t, p) in times.iter().zip(poses) {
        let _ = write!(s, "{t}");
        for r in p {
            let _ = write!(s, ",{},{},{}", r.x, r.y, r.z);
        }
        s.push('\n');
    }
    s
}

#[allow(clippy::type_complexity)]
pub fn imu_poses_from_csv(text: &str) -> Result<(Vec<f64>, Vec<[Vector3<f64>; NUM_JOINTS]>)> {
    let (header, rows) = parse_numeric("imu poses", text, None)?;
    if header.len() != 1 + 3 * NUM_JOINTS || header[0] != "t" {
        return Err(Error::parse(
            "imu poses",
            format!("expected t plus {} rotation columns", 3 * NUM_JOINTS),
        ));
    }
    let times = rows.iter().map(|r| r[0]).collect();
    let poses = rows
        .iter()
        .map(|r| std::array::from_fn(|j| Vector3::new(r[1 + 3 * j], r[2 + 3 * j], r[3 + 3 * j])))
        .collect();
    Ok((times, poses))
}

pub fn write_features(path: &Path, f: &FeatureSequence) -> Result<()> {
    write_text(path, &features_to_csv(f))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    features_from_csv(&read_text(path)?)
}

pub fn read_series(path: &Path) -> Result<SampledSeries> {
    series_from_csv(&read_text(path)?)
}

pub fn read_events(path: &Path, width: u32, height: u32) -> Result<EventStream> {
    events_from_csv(&read_text(path)?, width, height)
}
