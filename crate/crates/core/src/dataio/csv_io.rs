//! CSV with the columns `point_id,track_id,time,lat,lon,speed,course`.
//!
//! `time` is `HH:MM:SS` within a day. An optional `day` column (or the file's
//! position in a multi-file list) adds `86400 s` per day. Output files add
//! `predicted_track_id` when labels are supplied. Number formats are pinned:
//! 6 decimals for lat/lon and 1 for speed and course.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::RawRecord;

pub const DAY: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseReport {
    pub records: Vec<RawRecord>,
    /// Optional `predicted_track_id` column, aligned with `records`.
    pub predicted: Vec<Option<u64>>,
    pub errors: Vec<RowError>,
}

pub fn parse_time_of_day(s: &str) -> Option<f64> {
    let s = s.trim();
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0);
    }
    let h: u32 = parts[0].parse().ok()?;
    let m: u32 = parts[1].parse().ok()?;
    let sec: f64 = parts[2].parse().ok()?;
    if m >= 60 || !(0.0..60.0).contains(&sec) {
        return None;
    }
    Some(f64::from(h) * 3600.0 + f64::from(m) * 60.0 + sec)
}

pub fn format_time_of_day(secs: f64) -> String {
    let s = secs.round() as u64;
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

fn split_time(t: f64) -> (u64, f64) {
    let t = t.round().max(0.0);
    let day = (t / DAY).floor();
    (day as u64, t - day * DAY)
}

struct Columns {
    point_id: usize,
    track_id: usize,
    time: usize,
    lat: usize,
    lon: usize,
    speed: usize,
    course: usize,
    day: Option<usize>,
    predicted: Option<usize>,
}

impl Columns {
    fn from_header(h: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| h.iter().position(|c| c.trim().eq_ignore_ascii_case(name));
        let need = |name: &str| find(name).ok_or_else(|| Error::InvalidRecord(format!("missing column {name:?}")));
        Ok(Self {
            point_id: need("point_id")?,
            track_id: need("track_id")?,
            time: need("time")?,
            lat: need("lat")?,
            lon: need("lon")?,
            speed: need("speed")?,
            course: need("course")?,
            day: find("day"),
            predicted: find("predicted_track_id"),
        })
    }
}

fn parse_row(cols: &Columns, row: &csv::StringRecord, day_offset: u64) -> std::result::Result<(RawRecord, Option<u64>), String> {
    let field = |i: usize| row.get(i).map(str::trim).ok_or_else(|| format!("missing field {i}"));
    let num = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let v = field(i)?;
        v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("bad {name} {v:?}"))
    };
    let opt_id = |i: usize, name: &str| -> std::result::Result<Option<u64>, String> {
        let v = field(i)?;
        if v.is_empty() {
            Ok(None)
        } else {
            v.parse().map(Some).map_err(|_| format!("bad {name} {v:?}"))
        }
    };
    let point_id = field(cols.point_id)?.parse::<u64>().map_err(|_| "bad point_id".to_string())?;
    let tod = parse_time_of_day(field(cols.time)?).ok_or_else(|| "bad time".to_string())?;
    let day = match cols.day {
        Some(i) => opt_id(i, "day")?.unwrap_or(0),
        None => 0,
    };
    let rec = RawRecord {
        point_id,
        track_id: opt_id(cols.track_id, "track_id")?,
        time: (day + day_offset) as f64 * DAY + tod,
        lat: num(cols.lat, "lat")?,
        lon: num(cols.lon, "lon")?,
        sog: num(cols.speed, "speed")?,
        cog: num(cols.course, "course")?,
    };
    rec.validate().map_err(|e| e.to_string())?;
    let predicted = match cols.predicted {
        Some(i) => opt_id(i, "predicted_track_id")?,
        None => None,
    };
    Ok((rec, predicted))
}

fn parse_reader<R: std::io::Read>(reader: R, day_offset: u64, report: &mut ParseReport) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Ok(());
    }
    let cols = Columns::from_header(&header)?;
    for row in rdr.records() {
        match row {
            Ok(row) => {
                let line = row.position().map_or(0, |p| p.line());
                match parse_row(&cols, &row, day_offset) {
                    Ok((rec, pred)) => {
                        report.records.push(rec);
                        report.predicted.push(pred);
                    }
                    Err(message) => report.errors.push(RowError { line, message }),
                }
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                report.errors.push(RowError { line, message: e.to_string() });
            }
        }
    }
    Ok(())
}

/// Parses one file. Malformed rows are skipped and reported with their line.
pub fn parse_csv(path: &Path) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    let file = std::fs::File::open(path)?;
    if file.metadata()?.len() == 0 {
        return Ok(report);
    }
    parse_reader(file, 0, &mut report)?;
    Ok(report)
}

pub fn parse_str(text: &str) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    if !text.trim().is_empty() {
        parse_reader(text.as_bytes(), 0, &mut report)?;
    }
    Ok(report)
}

/// Parses day files in order; file `i` is offset by `i` days.
pub fn parse_files(paths: &[impl AsRef<Path>]) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    for (i, p) in paths.iter().enumerate() {
        let file = std::fs::File::open(p.as_ref())?;
        if file.metadata()?.len() == 0 {
            continue;
        }
        parse_reader(file, i as u64, &mut report)?;
    }
    Ok(report)
}

/// Writes records (and predicted labels, when given) with pinned formats.
/// A `day` column is written only when some record lies past the first day.
pub fn write_csv<W: std::io::Write>(out: W, records: &[RawRecord], predicted: Option<&[u64]>) -> Result<()> {
    let multi_day = records.iter().any(|r| split_time(r.time).0 > 0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["point_id", "track_id"];
    if multi_day {
        header.push("day");
    }
    header.extend(["time", "lat", "lon", "speed", "course"]);
    if predicted.is_some() {
        header.push("predicted_track_id");
    }
    w.write_record(&header)?;
    for (i, r) in records.iter().enumerate() {
        let (day, tod) = split_time(r.time);
        let mut row = vec![r.point_id.to_string(), r.track_id.map(|t| t.to_string()).unwrap_or_default()];
        if multi_day {
            row.push(day.to_string());
        }
        row.push(format_time_of_day(tod));
        row.push(format!("{:.6}", r.lat));
        row.push(format!("{:.6}", r.lon));
        row.push(format!("{:.1}", r.sog));
        row.push(format!("{:.1}", r.cog));
        if let Some(p) = predicted {
            row.push(p[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, records: &[RawRecord], predicted: Option<&[u64]>) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(f, records, predicted)
}

/// Rounds a record to the pinned output precision so it survives a round trip.
pub fn quantize(r: &mut RawRecord) {
    r.time = r.time.round().max(0.0);
    r.lat = (r.lat * 1e6).round() / 1e6;
    r.lon = (r.lon * 1e6).round() / 1e6;
    r.sog = (r.sog.max(0.0) * 10.0).round() / 10.0;
    r.cog = (r.cog.rem_euclid(360.0) * 10.0).round() / 10.0;
    if r.cog >= 360.0 {
        r.cog -= 360.0;
    }
}
