//! File formats: GPS trajectory CSV, transit infrastructure CSV, and
//! segment datasets as CSV or compact `SEG1` binary.
//!
//! All writers emit canonical forms (integer epoch timestamps, shortest
//! round-trip float formatting), so reruns with the same inputs produce
//! byte-identical files.

use std::io::{Read, Write};
use std::path::Path;

use chrono::DateTime;

use crate::channels::{Segment, N_CHANNELS};
use crate::geo::GpsPoint;
use crate::nn::{Reader, Writer};
use crate::trip::{TransitInfrastructure, TransitStop, Trip};
use crate::{Error, Mode, Result, N_CLASSES};

/// One GPS CSV row: a point in a per-user stream with an optional mode
/// label.
#[derive(Debug, Clone, PartialEq)]
pub struct GpsRecord {
    pub user_id: String,
    pub point: GpsPoint,
    pub mode: Option<Mode>,
}

fn parse_timestamp(raw: &str, row: usize) -> Result<i64> {
    let raw = raw.trim();
    if let Ok(epoch) = raw.parse::<i64>() {
        return Ok(epoch);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp());
    }
    if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S") {
        return Ok(naive.and_utc().timestamp());
    }
    Err(Error::format(format!(
        "row {row}: timestamp '{raw}' is neither epoch seconds nor ISO-8601"
    )))
}

fn parse_f64(raw: &str, what: &str, row: usize) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::format(format!("row {row}: bad {what} '{raw}'")))
}

/// Parse GPS rows with header `user_id,timestamp,lat,lon[,mode]`.
/// Timestamps may be integer epoch seconds or ISO-8601; an empty mode cell
/// means unlabeled.
pub fn parse_gps_csv<R: Read>(reader: R) -> Result<Vec<GpsRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(format!("bad CSV header: {e}")))?;
    let cols: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    let expected = ["user_id", "timestamp", "lat", "lon"];
    if cols.len() < 4 || cols[..4] != expected {
        return Err(Error::format(format!(
            "GPS header must start with user_id,timestamp,lat,lon (got {})",
            cols.join(",")
        )));
    }
    let has_mode = match cols.len() {
        4 => false,
        5 if cols[4] == "mode" => true,
        _ => {
            return Err(Error::format(format!(
                "unexpected GPS columns after lon: {}",
                cols[4..].join(",")
            )))
        }
    };
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::format(format!("row {row}: {e}")))?;
        if record.len() != cols.len() {
            return Err(Error::format(format!(
                "row {row}: {} fields, expected {}",
                record.len(),
                cols.len()
            )));
        }
        let user_id = record[0].to_string();
        if user_id.is_empty() {
            return Err(Error::format(format!("row {row}: empty user_id")));
        }
        let timestamp = parse_timestamp(&record[1], row)?;
        let lat = parse_f64(&record[2], "lat", row)?;
        let lon = parse_f64(&record[3], "lon", row)?;
        let point = GpsPoint::new(timestamp, lat, lon);
        point
            .validate()
            .map_err(|e| Error::data(format!("row {row}: {e}")))?;
        let mode = if has_mode && !record[4].is_empty() {
            Some(Mode::parse(&record[4]).ok_or_else(|| {
                Error::format(format!("row {row}: unknown mode '{}'", &record[4]))
            })?)
        } else {
            None
        };
        out.push(GpsRecord {
            user_id,
            point,
            mode,
        });
    }
    Ok(out)
}

pub fn read_gps_csv(path: &Path) -> Result<Vec<GpsRecord>> {
    parse_gps_csv(std::fs::File::open(path)?)
}

/// Group records into per-user streams, preserving first-appearance order
/// of users and file order within each user. No sorting is applied;
/// out-of-order timestamps surface later as trip-breaking errors.
pub fn group_by_user(records: &[GpsRecord]) -> Vec<(String, Vec<GpsPoint>, Vec<Option<Mode>>)> {
    let mut order: Vec<String> = Vec::new();
    let mut streams: std::collections::HashMap<String, (Vec<GpsPoint>, Vec<Option<Mode>>)> =
        std::collections::HashMap::new();
    for r in records {
        let entry = streams.entry(r.user_id.clone()).or_insert_with(|| {
            order.push(r.user_id.clone());
            (Vec::new(), Vec::new())
        });
        entry.0.push(r.point);
        entry.1.push(r.mode);
    }
    order
        .into_iter()
        .map(|u| {
            let (points, modes) = streams.remove(&u).expect("present");
            (u, points, modes)
        })
        .collect()
}

fn write_gps_rows<W: Write>(mut w: W, rows: &[GpsRecord]) -> Result<()> {
    writeln!(w, "user_id,timestamp,lat,lon,mode")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.user_id,
            r.point.timestamp,
            r.point.lat,
            r.point.lon,
            r.mode.map_or("", |m| m.name())
        )?;
    }
    Ok(())
}

pub fn write_gps_csv(path: &Path, rows: &[GpsRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_gps_rows(&mut buf, rows)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Flatten trips into GPS rows (the trip label repeated on every point)
/// and write them in the same CSV format the pipeline ingests.
pub fn write_trips_csv(path: &Path, trips: &[Trip]) -> Result<()> {
    let rows: Vec<GpsRecord> = trips
        .iter()
        .flat_map(|t| {
            t.points.iter().map(|&point| GpsRecord {
                user_id: t.user_id.clone(),
                point,
                mode: t.mode_label,
            })
        })
        .collect();
    write_gps_csv(path, &rows)
}

/// Parse the infrastructure CSV `name,lat,lon,kind` with kind in
/// {metro, intersection}.
pub fn parse_infrastructure_csv<R: Read>(reader: R) -> Result<TransitInfrastructure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(format!("bad CSV header: {e}")))?;
    let cols: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if cols != ["name", "lat", "lon", "kind"] {
        return Err(Error::format(format!(
            "infrastructure header must be name,lat,lon,kind (got {})",
            cols.join(",")
        )));
    }
    let mut infra = TransitInfrastructure::empty();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::format(format!("row {row}: {e}")))?;
        if record.len() != 4 {
            return Err(Error::format(format!(
                "row {row}: {} fields, expected 4",
                record.len()
            )));
        }
        let stop = TransitStop {
            name: record[0].to_string(),
            lat: parse_f64(&record[1], "lat", row)?,
            lon: parse_f64(&record[2], "lon", row)?,
        };
        match record[3].to_ascii_lowercase().as_str() {
            "metro" => infra.metro_stations.push(stop),
            "intersection" => infra.bus_intersections.push(stop),
            other => {
                return Err(Error::format(format!(
                    "row {row}: kind '{other}' is not metro or intersection"
                )))
            }
        }
    }
    Ok(infra)
}

pub fn read_infrastructure_csv(path: &Path) -> Result<TransitInfrastructure> {
    parse_infrastructure_csv(std::fs::File::open(path)?)
}

/// Segment CSV: no header, one row per segment: label (mode name, empty if
/// unlabeled), n_valid, then `L × 5` channel values row-major.
pub fn write_segments_csv(path: &Path, segments: &[Segment]) -> Result<()> {
    let mut buf = Vec::new();
    for s in segments {
        let mut line = String::new();
        line.push_str(s.label.map_or("", |m| m.name()));
        line.push(',');
        line.push_str(&s.n_valid.to_string());
        for v in &s.values {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line.push('\n');
        buf.extend_from_slice(line.as_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn parse_segments_csv<R: Read>(reader: R) -> Result<Vec<Segment>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out: Vec<Segment> = Vec::new();
    let mut expected_len: Option<usize> = None;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::format(format!("row {row}: {e}")))?;
        if record.len() < 2 + N_CHANNELS {
            return Err(Error::format(format!(
                "row {row}: too few fields ({})",
                record.len()
            )));
        }
        let n_values = record.len() - 2;
        if n_values % N_CHANNELS != 0 {
            return Err(Error::format(format!(
                "row {row}: {n_values} values is not a multiple of {N_CHANNELS} channels"
            )));
        }
        let segment_len = n_values / N_CHANNELS;
        if let Some(l) = expected_len {
            if segment_len != l {
                return Err(Error::format(format!(
                    "row {row}: segment length {segment_len} differs from {l}"
                )));
            }
        } else {
            expected_len = Some(segment_len);
        }
        let label = if record[0].is_empty() {
            None
        } else {
            Some(Mode::parse(&record[0]).ok_or_else(|| {
                Error::format(format!("row {row}: unknown mode '{}'", &record[0]))
            })?)
        };
        let n_valid: usize = record[1]
            .parse()
            .map_err(|_| Error::format(format!("row {row}: bad n_valid '{}'", &record[1])))?;
        if n_valid > segment_len {
            return Err(Error::format(format!(
                "row {row}: n_valid {n_valid} exceeds segment length {segment_len}"
            )));
        }
        let mut values = Vec::with_capacity(n_values);
        for f in record.iter().skip(2) {
            values.push(parse_f64(f, "channel value", row)?);
        }
        out.push(Segment {
            label,
            n_valid,
            values,
        });
    }
    Ok(out)
}

pub fn read_segments_csv(path: &Path) -> Result<Vec<Segment>> {
    parse_segments_csv(std::fs::File::open(path)?)
}

const SEG_MAGIC: &[u8; 4] = b"SEG1";
const SEG_VERSION: u8 = 1;
const LABEL_NONE: u8 = 255;

/// Compact binary form: `SEG1`, version, segment length, channel count,
/// then per segment a label byte (255 = unlabeled), n_valid, and the raw
/// values as little-endian f64.
pub fn segments_to_bytes(segments: &[Segment]) -> Result<Vec<u8>> {
    let Some(first) = segments.first() else {
        return Err(Error::data("no segments to serialize"));
    };
    let segment_len = first.segment_len();
    let mut w = Writer::new();
    w.buf.extend_from_slice(SEG_MAGIC);
    w.u8(SEG_VERSION);
    w.u32(segment_len as u32);
    w.u8(N_CHANNELS as u8);
    w.u32(segments.len() as u32);
    for (i, s) in segments.iter().enumerate() {
        if s.segment_len() != segment_len {
            return Err(Error::shape(format!(
                "segment {i} has length {}, expected {segment_len}",
                s.segment_len()
            )));
        }
        w.u8(s.label.map_or(LABEL_NONE, |m| m.index() as u8));
        w.u32(s.n_valid as u32);
        for &v in &s.values {
            w.f64(v);
        }
    }
    Ok(w.buf)
}

pub fn segments_from_bytes(bytes: &[u8]) -> Result<Vec<Segment>> {
    let mut r = Reader::new(bytes);
    r.expect_magic(SEG_MAGIC, "segment dataset")?;
    let version = r.u8()?;
    if version != SEG_VERSION {
        return Err(Error::format(format!(
            "unsupported segment-file version {version}"
        )));
    }
    let segment_len = r.u32()? as usize;
    let channels = r.u8()? as usize;
    if channels != N_CHANNELS {
        return Err(Error::format(format!(
            "{channels} channels in file, expected {N_CHANNELS}"
        )));
    }
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let label_byte = r.u8()?;
        let label = if label_byte == LABEL_NONE {
            None
        } else {
            Some(Mode::from_index(label_byte as usize).ok_or_else(|| {
                Error::format(format!("segment {i}: label byte {label_byte} out of range"))
            })?)
        };
        let n_valid = r.u32()? as usize;
        if n_valid > segment_len {
            return Err(Error::format(format!(
                "segment {i}: n_valid {n_valid} exceeds length {segment_len}"
            )));
        }
        let mut values = Vec::with_capacity(segment_len * N_CHANNELS);
        for _ in 0..segment_len * N_CHANNELS {
            values.push(r.f64()?);
        }
        out.push(Segment {
            label,
            n_valid,
            values,
        });
    }
    r.done()?;
    Ok(out)
}

pub fn write_segments_bin(path: &Path, segments: &[Segment]) -> Result<()> {
    std::fs::write(path, segments_to_bytes(segments)?)?;
    Ok(())
}

pub fn read_segments_bin(path: &Path) -> Result<Vec<Segment>> {
    segments_from_bytes(&std::fs::read(path)?)
}

/// Per-mode segment counts, with unlabeled segments in the final slot.
pub fn mode_counts(segments: &[Segment]) -> [usize; N_CLASSES + 1] {
    let mut counts = [0usize; N_CLASSES + 1];
    for s in segments {
        match s.label {
            Some(m) => counts[m.index()] += 1,
            None => counts[N_CLASSES] += 1,
        }
    }
    counts
}
