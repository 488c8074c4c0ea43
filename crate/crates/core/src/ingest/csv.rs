//! Canonical track CSV: `timestamp,lat,lon,speed_mph`.

use std::io::{Read, Write};

use super::Track;
use crate::formats::{format_iso, parse_iso};
use crate::geo::{Fix, GeoPoint};
use crate::{Error, Result};

pub const TRACK_HEADER: [&str; 4] = ["timestamp", "lat", "lon", "speed_mph"];

pub fn parse_csv<R: Read>(reader: R) -> Result<Track> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut fixes: Vec<Fix> = Vec::new();
    let mut header_seen = false;

    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if !header_seen {
            if record.iter().ne(TRACK_HEADER) {
                return Err(Error::parse(
                    line,
                    "expected header timestamp,lat,lon,speed_mph",
                ));
            }
            header_seen = true;
            continue;
        }
        if record.len() != 4 {
            return Err(Error::parse(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let timestamp = parse_iso(&record[0])
            .ok_or_else(|| Error::parse(line, format!("invalid timestamp {:?}", &record[0])))?;
        let lat = parse_number(&record[1], "latitude", line)?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::parse(line, "latitude out of range"));
        }
        let lon = parse_number(&record[2], "longitude", line)?;
        if !(lon > -180.0 && lon <= 180.0) {
            return Err(Error::parse(line, "longitude out of range"));
        }
        let speed = match record[3].trim() {
            "" => None,
            s => Some(parse_number(s, "speed", line)?),
        };
        let point = GeoPoint::new(lat, lon).map_err(|e| Error::parse(line, e.to_string()))?;
        let fix =
            Fix::new(point, timestamp, speed).map_err(|e| Error::parse(line, e.to_string()))?;
        if let Some(prev) = fixes.last() {
            if fix.timestamp == prev.timestamp {
                return Err(Error::parse(line, "duplicate timestamp"));
            }
            if fix.timestamp < prev.timestamp {
                return Err(Error::parse(line, "non-increasing timestamp"));
            }
        }
        fixes.push(fix);
    }
    Track::new(fixes)
}

fn parse_number(s: &str, what: &str, line: u64) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(line, format!("invalid {what} {s:?}")))
}

pub fn write_csv<W: Write>(track: &Track, mut out: W) -> Result<()> {
    writeln!(out, "{}", TRACK_HEADER.join(","))?;
    for f in track.fixes() {
        let speed = f.speed_mph.map(|s| format!("{s:.2}")).unwrap_or_default();
        writeln!(
            out,
            "{},{:.6},{:.6},{}",
            format_iso(f.timestamp),
            f.point.lat(),
            f.point.lon(),
            speed
        )?;
    }
    Ok(())
}

pub fn emit_csv(track: &Track) -> Vec<u8> {
    let mut buf = Vec::with_capacity(track.len() * 48);
    write_csv(track, &mut buf).expect("writing to a Vec cannot fail");
    buf
}
