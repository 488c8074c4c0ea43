//! CSV schemas for pipeline artifacts.
//!
//! All writers are deterministic: fixed column order, fixed precision, rows in
//! id or time order.

use std::io::{BufRead, BufReader, Read, Write};

use chrono::{DateTime, Weekday};

use crate::alert::{Alert, Appointment, Calendar};
use crate::cluster::{Location, LocationId, RadiusSweep};
use crate::geo::GeoPoint;
use crate::schedule::{ScheduleModel, MINUTES_PER_DAY, WEEKDAYS};
use crate::travel::TravelEdge;
use crate::{Error, Result};

pub const LOCATIONS_VERSION_LINE: &str = "#version=1";
pub const LOCATIONS_HEADER: &str = "id,center_lat,center_lon,radius_m,member_count";
pub const EDGES_HEADER: &str = "from_id,to_id,mean_seconds,n_samples,mean_speed_mph";
pub const SCHEDULE_HEADER: &str = "weekday,minute,location_id,count,coverage";
pub const CALENDAR_HEADER: &str = "start_iso8601,location_id,title,recurs_weekly";
pub const ALERTS_HEADER: &str =
    "issued_at_iso8601,appointment_title,appointment_start,travel_seconds,slack_seconds";
pub const SWEEP_HEADER: &str = "radius_m,raw_count,smoothed_count,chosen";

/// `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_iso(timestamp: i64) -> String {
    DateTime::from_timestamp(timestamp, 0)
        .expect("timestamp in range")
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

/// RFC 3339 timestamp to UTC seconds; fractional seconds are dropped.
pub fn parse_iso(s: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(s.trim())
        .ok()
        .map(|d| d.timestamp())
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &str) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?;
    if headers.iter().ne(expected.split(',')) {
        return Err(Error::parse(1, format!("expected header {expected}")));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    let line = line_of(record);
    let raw = record
        .get(i)
        .ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {raw:?}")))
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
) -> impl Iterator<Item = Result<csv::StringRecord>> + '_ {
    rdr.records().map(|r| {
        r.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(line, e.to_string())
        })
    })
}

pub fn write_locations<W: Write>(locations: &[Location], mut out: W) -> Result<()> {
    writeln!(out, "{LOCATIONS_VERSION_LINE}")?;
    writeln!(out, "{LOCATIONS_HEADER}")?;
    let mut sorted: Vec<&Location> = locations.iter().collect();
    sorted.sort_by_key(|l| l.id);
    for l in sorted {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.3},{}",
            l.id,
            l.center.lat(),
            l.center.lon(),
            l.radius_m,
            l.member_count
        )?;
    }
    Ok(())
}

pub fn read_locations<R: Read>(input: R) -> Result<Vec<Location>> {
    let mut buf = BufReader::new(input);
    let mut first = String::new();
    buf.read_line(&mut first)?;
    if first.trim_end() != LOCATIONS_VERSION_LINE {
        return Err(Error::parse(
            1,
            format!("expected {LOCATIONS_VERSION_LINE}"),
        ));
    }
    let mut rdr = reader(buf);
    check_header(&mut rdr, LOCATIONS_HEADER)?;
    let mut out = Vec::new();
    for rec in records(&mut rdr) {
        let rec = rec?;
        // Line numbers from the csv reader start after the version line.
        let line = line_of(&rec) + 1;
        let lat: f64 = field(&rec, 1, "center_lat")?;
        let lon: f64 = field(&rec, 2, "center_lon")?;
        let radius_m: f64 = field(&rec, 3, "radius_m")?;
        if !(radius_m > 0.0) {
            return Err(Error::parse(line, "radius must be positive"));
        }
        out.push(Location {
            id: LocationId(field(&rec, 0, "id")?),
            center: GeoPoint::new(lat, lon).map_err(|e| Error::parse(line, e.to_string()))?,
            radius_m,
            members: Vec::new(),
            member_count: field(&rec, 4, "member_count")?,
        });
    }
    Ok(out)
}

pub fn write_edges<W: Write>(edges: &[TravelEdge], mut out: W) -> Result<()> {
    writeln!(out, "{EDGES_HEADER}")?;
    let mut sorted: Vec<&TravelEdge> = edges.iter().collect();
    sorted.sort_by_key(|e| (e.from, e.to));
    for e in sorted {
        writeln!(
            out,
            "{},{},{:.3},{},{:.4}",
            e.from, e.to, e.mean_seconds, e.n_samples, e.mean_speed_mph
        )?;
    }
    Ok(())
}

pub fn read_edges<R: Read>(input: R) -> Result<Vec<TravelEdge>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, EDGES_HEADER)?;
    let mut out = Vec::new();
    for rec in records(&mut rdr) {
        let rec = rec?;
        let edge = TravelEdge {
            from: LocationId(field(&rec, 0, "from_id")?),
            to: LocationId(field(&rec, 1, "to_id")?),
            mean_seconds: field(&rec, 2, "mean_seconds")?,
            n_samples: field(&rec, 3, "n_samples")?,
            mean_speed_mph: field(&rec, 4, "mean_speed_mph")?,
        };
        if !(edge.mean_seconds > 0.0) || edge.n_samples == 0 {
            return Err(Error::parse(
                line_of(&rec),
                "edge needs positive time and samples",
            ));
        }
        out.push(edge);
    }
    Ok(out)
}

/// One row per non-zero count. Each covered weekday also gets a row at
/// minute 0 with an empty location id, so coverage survives a round trip.
pub fn write_schedule<W: Write>(model: &ScheduleModel, mut out: W) -> Result<()> {
    writeln!(out, "{SCHEDULE_HEADER}")?;
    for day in WEEKDAYS {
        let coverage = model.coverage(day);
        if coverage > 0 {
            writeln!(out, "{day},0,,0,{coverage}")?;
        }
        for minute in 0..MINUTES_PER_DAY {
            for (loc, count) in model.counts_at(day, minute) {
                writeln!(out, "{day},{minute},{loc},{count},{coverage}")?;
            }
        }
    }
    Ok(())
}

pub fn read_schedule<R: Read>(input: R) -> Result<ScheduleModel> {
    let mut rdr = reader(input);
    check_header(&mut rdr, SCHEDULE_HEADER)?;
    let mut coverage: [Option<u32>; 7] = [None; 7];
    let mut counts = Vec::new();
    for rec in records(&mut rdr) {
        let rec = rec?;
        let line = line_of(&rec);
        let day: Weekday = field(&rec, 0, "weekday")?;
        let minute: u32 = field(&rec, 1, "minute")?;
        let cov: u32 = field(&rec, 4, "coverage")?;
        let slot = &mut coverage[day.num_days_from_monday() as usize];
        match *slot {
            Some(c) if c != cov => {
                return Err(Error::parse(line, "coverage differs within a weekday"))
            }
            _ => *slot = Some(cov),
        }
        if rec.get(2).is_some_and(|s| !s.trim().is_empty()) {
            counts.push((
                day,
                minute,
                LocationId(field(&rec, 2, "location_id")?),
                field(&rec, 3, "count")?,
            ));
        }
    }
    ScheduleModel::from_counts(coverage.map(|c| c.unwrap_or(0)), counts)
}

pub fn write_calendar<W: Write>(calendar: &Calendar, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CALENDAR_HEADER.split(',')).map_err(csv_io)?;
    for a in &calendar.appointments {
        w.write_record([
            format_iso(a.start),
            a.location.to_string(),
            a.title.clone(),
            u8::from(a.recurs_weekly).to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_calendar<R: Read>(input: R) -> Result<Calendar> {
    let mut rdr = reader(input);
    check_header(&mut rdr, CALENDAR_HEADER)?;
    let mut appointments = Vec::new();
    for rec in records(&mut rdr) {
        let rec = rec?;
        let line = line_of(&rec);
        let start = rec
            .get(0)
            .and_then(parse_iso)
            .ok_or_else(|| Error::parse(line, "invalid start_iso8601"))?;
        let recurs_weekly = match rec.get(3).map(str::trim) {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(Error::parse(line, "recurs_weekly must be 0 or 1")),
        };
        appointments.push(Appointment {
            title: rec.get(2).unwrap_or_default().to_string(),
            location: LocationId(field(&rec, 1, "location_id")?),
            start,
            recurs_weekly,
        });
    }
    Ok(Calendar::new(appointments))
}

pub fn write_alerts<W: Write>(alerts: &[Alert], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ALERTS_HEADER.split(',')).map_err(csv_io)?;
    for a in alerts {
        w.write_record([
            format_iso(a.issued_at),
            a.title.clone(),
            format_iso(a.occurrence.start),
            format!("{:.1}", a.travel_seconds),
            format!("{:.1}", a.slack_seconds),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(sweep: &RadiusSweep, mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for (i, r) in sweep.radii.iter().enumerate() {
        writeln!(
            out,
            "{:.3},{},{:.4},{}",
            r,
            sweep.raw_counts[i],
            sweep.smoothed_counts[i],
            u8::from(i == sweep.knee.index)
        )?;
    }
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
