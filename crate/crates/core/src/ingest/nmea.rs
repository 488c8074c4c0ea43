//! NMEA-0183 `RMC` sentences.

use std::io::BufRead;

use chrono::{NaiveDate, NaiveTime};

use super::Track;
use crate::geo::{Fix, GeoPoint, MPH_PER_KNOT};
use crate::{Error, Result};

/// Outcome of parsing an NMEA log.
#[derive(Debug, Clone, Default)]
pub struct NmeaReport {
    pub track: Track,
    pub bad_checksum: usize,
    /// RMC sentences with status `V`.
    pub inactive: usize,
    /// RMC sentences with missing or malformed fields.
    pub malformed: usize,
    /// Valid fixes dropped because an earlier one had the same timestamp.
    pub duplicates: usize,
    /// Well-formed sentences of other types.
    pub ignored: usize,
}

impl NmeaReport {
    pub fn skipped(&self) -> usize {
        self.bad_checksum + self.inactive + self.malformed
    }
}

enum Sentence {
    Fix(Fix),
    Inactive,
    Other,
}

pub fn parse_nmea<R: BufRead>(reader: R) -> Result<NmeaReport> {
    let mut report = NmeaReport::default();
    let mut fixes = Vec::new();
    let mut saw_input = false;

    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        saw_input = true;
        let Some(body) = checked_body(line) else {
            report.bad_checksum += 1;
            continue;
        };
        match parse_sentence(body) {
            Some(Sentence::Fix(f)) => fixes.push(f),
            Some(Sentence::Inactive) => report.inactive += 1,
            Some(Sentence::Other) => report.ignored += 1,
            None => report.malformed += 1,
        }
    }

    if saw_input && fixes.is_empty() {
        return Err(Error::NoValidFixes {
            skipped: report.skipped(),
        });
    }

    // Stable sort keeps stream order among equal timestamps.
    fixes.sort_by_key(|f| f.timestamp);
    let before = fixes.len();
    fixes.dedup_by_key(|f| f.timestamp);
    report.duplicates = before - fixes.len();
    report.track = Track::new(fixes)?;
    Ok(report)
}

/// Returns the text between `$` and `*` when the XOR checksum matches.
fn checked_body(line: &str) -> Option<&str> {
    let rest = line.strip_prefix('$')?;
    let (body, sum) = rest.split_once('*')?;
    if sum.len() < 2 {
        return None;
    }
    let expected = u8::from_str_radix(&sum[..2], 16).ok()?;
    let actual = body.bytes().fold(0u8, |acc, b| acc ^ b);
    (actual == expected).then_some(body)
}

fn parse_sentence(body: &str) -> Option<Sentence> {
    let fields: Vec<&str> = body.split(',').collect();
    let kind = fields[0];
    if kind.len() != 5 || !kind.ends_with("RMC") {
        return Some(Sentence::Other);
    }
    if fields.len() < 10 {
        return None;
    }
    match fields[2] {
        "A" => {}
        "V" => return Some(Sentence::Inactive),
        _ => return None,
    }
    let time = parse_time(fields[1])?;
    let lat = parse_coord(fields[3], fields[4], 2, 'N', 'S')?;
    let lon = parse_coord(fields[5], fields[6], 3, 'E', 'W')?;
    let speed = match fields[7] {
        "" => None,
        s => Some(s.parse::<f64>().ok()? * MPH_PER_KNOT),
    };
    let date = parse_date(fields[9])?;
    let timestamp = date.and_time(time).and_utc().timestamp();
    let point = GeoPoint::new(lat, lon).ok()?;
    Fix::new(point, timestamp, speed).ok().map(Sentence::Fix)
}

/// `hhmmss[.sss]`; fractional seconds are dropped.
fn parse_time(s: &str) -> Option<NaiveTime> {
    let whole = s.split('.').next()?;
    if whole.len() != 6 || !whole.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n = |r: std::ops::Range<usize>| whole[r].parse::<u32>().ok();
    NaiveTime::from_hms_opt(n(0..2)?, n(2..4)?, n(4..6)?)
}

/// `ddmmyy`, two-digit years before 80 map to 20xx.
fn parse_date(s: &str) -> Option<NaiveDate> {
    if s.len() != 6 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n = |r: std::ops::Range<usize>| s[r].parse::<u32>().ok();
    let yy = n(4..6)? as i32;
    let year = if yy < 80 { 2000 + yy } else { 1900 + yy };
    NaiveDate::from_ymd_opt(year, n(2..4)?, n(0..2)?)
}

/// `d{deg_digits}mm.mmmm` plus hemisphere.
fn parse_coord(value: &str, hemi: &str, deg_digits: usize, pos: char, neg: char) -> Option<f64> {
    if value.len() <= deg_digits || !value.is_char_boundary(deg_digits) {
        return None;
    }
    let degrees: f64 = value[..deg_digits].parse().ok()?;
    let minutes: f64 = value[deg_digits..].parse().ok()?;
    if !(0.0..60.0).contains(&minutes) {
        return None;
    }
    let magnitude = degrees + minutes / 60.0;
    match hemi.chars().next()? {
        c if c == pos => Some(magnitude),
        c if c == neg => Some(-magnitude),
        _ => None,
    }
}
