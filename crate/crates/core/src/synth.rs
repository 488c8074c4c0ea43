//! Synthetic GPS tracks from a scripted weekly routine.
//!
//! The user starts at home, visits each attended pattern entry of the day by
//! a straight-line leg that arrives exactly at the entry's start, stays until
//! its end, and goes home after the last attended entry. Skipped entries
//! leave the user where they are. Legs are sampled at 1 Hz; stays either
//! produce no fixes (indoor dropout) or slow jittering fixes.

use std::io::Write;

use chrono::{Duration, FixedOffset, NaiveDate, NaiveTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::formats::format_iso;
use crate::geo::{haversine_distance, mph_to_mps, Fix, GeoPoint, LocalFrame};
use crate::ingest::Track;
use crate::{Error, Result};

fn default_true() -> bool {
    true
}
fn default_speed() -> f64 {
    25.0
}
fn default_stay_interval() -> i64 {
    60
}
fn default_attendance() -> f64 {
    1.0
}
fn default_weeks() -> u32 {
    1
}
fn default_start_date() -> String {
    "2004-05-03".into()
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecLocation {
    pub label: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PatternEntry {
    /// `Mon`, `Tue`, ... or full names.
    pub weekday: String,
    /// Local `HH:MM`.
    pub start: String,
    pub end: String,
    pub location: String,
    #[serde(default = "default_attendance")]
    pub attendance: f64,
    /// Speed of the leg that reaches this entry; defaults to the routine speed.
    #[serde(default)]
    pub speed_mph: Option<f64>,
}

/// A weekly routine, usually read from a TOML file.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RoutineSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_weeks")]
    pub weeks: u32,
    /// First simulated day, `YYYY-MM-DD`.
    #[serde(default = "default_start_date")]
    pub start_date: String,
    #[serde(default)]
    pub utc_offset_minutes: i32,
    #[serde(default)]
    pub noise_m: f64,
    #[serde(default = "default_true")]
    pub dropout: bool,
    #[serde(default = "default_speed")]
    pub speed_mph: f64,
    #[serde(default = "default_stay_interval")]
    pub stay_fix_interval_s: i64,
    /// Label of the overnight location; the first location when absent.
    #[serde(default)]
    pub home: Option<String>,
    #[serde(rename = "location")]
    pub locations: Vec<SpecLocation>,
    #[serde(default)]
    pub pattern: Vec<PatternEntry>,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    weekday: Weekday,
    start_min: i64,
    end_min: i64,
    location: usize,
    attendance: f64,
    speed_mph: f64,
}

#[derive(Debug, Clone)]
struct Plan {
    points: Vec<GeoPoint>,
    home: usize,
    entries: Vec<Entry>,
    start_date: NaiveDate,
    offset: FixedOffset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrueStay {
    pub location: usize,
    pub arrive: i64,
    pub depart: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrueLeg {
    pub from: usize,
    pub to: usize,
    pub depart: i64,
    pub arrive: i64,
}

impl TrueLeg {
    pub fn duration(&self) -> i64 {
        self.arrive - self.depart
    }
}

/// Whether one day's instance of a pattern entry was attended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attendance {
    pub date: NaiveDate,
    /// Index into `RoutineSpec::pattern`.
    pub entry: usize,
    pub location: usize,
    pub start: i64,
    pub end: i64,
    pub attended: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<String>,
    pub points: Vec<GeoPoint>,
    /// Stays reached by a leg, in time order. The last one ends with the data.
    pub stays: Vec<TrueStay>,
    pub legs: Vec<TrueLeg>,
    pub attendance: Vec<Attendance>,
}

impl RoutineSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: RoutineSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.plan()?;
        Ok(spec)
    }

    fn plan(&self) -> Result<Plan> {
        if self.weeks < 1 {
            return Err(Error::Config("weeks must be at least 1".into()));
        }
        if !(self.noise_m >= 0.0 && self.noise_m.is_finite()) {
            return Err(Error::Config("noise_m must be non-negative".into()));
        }
        if !(self.speed_mph > 0.0) {
            return Err(Error::Config("speed_mph must be positive".into()));
        }
        if self.stay_fix_interval_s <= 0 {
            return Err(Error::Config("stay_fix_interval_s must be positive".into()));
        }
        if self.locations.is_empty() {
            return Err(Error::Config("at least one location is required".into()));
        }
        let points = self
            .locations
            .iter()
            .map(|l| GeoPoint::new(l.lat, l.lon))
            .collect::<Result<Vec<_>>>()?;
        let index_of = |label: &str| {
            self.locations
                .iter()
                .position(|l| l.label == label)
                .ok_or_else(|| Error::Config(format!("unknown location {label:?}")))
        };
        let home = match &self.home {
            Some(h) => index_of(h)?,
            None => 0,
        };
        let start_date = NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|e| Error::Config(format!("start_date: {e}")))?;
        let offset = FixedOffset::east_opt(self.utc_offset_minutes * 60)
            .ok_or_else(|| Error::Config("utc_offset_minutes out of range".into()))?;

        let mut entries = Vec::with_capacity(self.pattern.len());
        for (i, p) in self.pattern.iter().enumerate() {
            let name = || {
                format!(
                    "pattern entry {} ({} {}-{} at {})",
                    i + 1,
                    p.weekday,
                    p.start,
                    p.end,
                    p.location
                )
            };
            let weekday: Weekday = p
                .weekday
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad weekday", name())))?;
            let start_min = parse_hhmm(&p.start)
                .ok_or_else(|| Error::Config(format!("{}: bad start", name())))?;
            let end_min =
                parse_hhmm(&p.end).ok_or_else(|| Error::Config(format!("{}: bad end", name())))?;
            if end_min <= start_min {
                return Err(Error::Config(format!("{}: end must follow start", name())));
            }
            if !(0.0..=1.0).contains(&p.attendance) {
                return Err(Error::Config(format!(
                    "{}: attendance must be in [0, 1]",
                    name()
                )));
            }
            let speed_mph = p.speed_mph.unwrap_or(self.speed_mph);
            if !(speed_mph > 0.0) {
                return Err(Error::Config(format!("{}: speed must be positive", name())));
            }
            entries.push(Entry {
                weekday,
                start_min,
                end_min,
                location: index_of(&p.location)?,
                attendance: p.attendance,
                speed_mph,
            });
        }

        let plan = Plan {
            points,
            home,
            entries,
            start_date,
            offset,
        };
        plan.check_feasible(self)?;
        Ok(plan)
    }
}

fn parse_hhmm(s: &str) -> Option<i64> {
    if s == "24:00" {
        return Some(1_440);
    }
    let t = NaiveTime::parse_from_str(s, "%H:%M").ok()?;
    Some(chrono::Timelike::num_seconds_from_midnight(&t) as i64 / 60)
}

impl Plan {
    fn leg_seconds(&self, from: usize, to: usize, speed_mph: f64) -> i64 {
        (haversine_distance(self.points[from], self.points[to]) / mph_to_mps(speed_mph)).round()
            as i64
    }

    fn day_entries(&self, weekday: Weekday) -> Vec<(usize, Entry)> {
        let mut v: Vec<(usize, Entry)> = self
            .entries
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, e)| e.weekday == weekday)
            .collect();
        v.sort_by_key(|(_, e)| e.start_min);
        v
    }

    /// Every combination of skipped entries must leave enough time to travel.
    fn check_feasible(&self, spec: &RoutineSpec) -> Result<()> {
        let describe = |i: usize| {
            let p = &spec.pattern[i];
            format!(
                "pattern entry {} ({} {}-{} at {})",
                i + 1,
                p.weekday,
                p.start,
                p.end,
                p.location
            )
        };
        let home_speed = spec.speed_mph;
        for weekday in crate::schedule::WEEKDAYS {
            let day = self.day_entries(weekday);
            for (k, &(i, e)) in day.iter().enumerate() {
                if let Some(&(j, next)) = day.get(k + 1) {
                    if next.start_min < e.end_min {
                        return Err(Error::InfeasibleRoutine(format!(
                            "{} overlaps {}",
                            describe(j),
                            describe(i)
                        )));
                    }
                }
                let from_home = self.leg_seconds(self.home, e.location, e.speed_mph);
                if e.start_min * 60 < from_home {
                    return Err(Error::InfeasibleRoutine(format!(
                        "{}: no time to travel from home",
                        describe(i)
                    )));
                }
                let to_home = self.leg_seconds(e.location, self.home, home_speed);
                if e.end_min * 60 + to_home > 1_440 * 60 {
                    return Err(Error::InfeasibleRoutine(format!(
                        "{}: cannot get home before midnight",
                        describe(i)
                    )));
                }
                for &(j, later) in &day[k + 1..] {
                    let travel = self.leg_seconds(e.location, later.location, later.speed_mph);
                    if e.end_min * 60 + travel > later.start_min * 60 {
                        return Err(Error::InfeasibleRoutine(format!(
                            "{}: travel from {} takes {travel} s",
                            describe(j),
                            describe(i)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn local_midnight(&self, date: NaiveDate) -> i64 {
        date.and_time(NaiveTime::MIN).and_utc().timestamp() - self.offset.local_minus_utc() as i64
    }
}

struct Emitter {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    fixes: Vec<Fix>,
}

impl Emitter {
    fn push(&mut self, base: GeoPoint, t: i64, speed: f64) -> Result<()> {
        let dx = self.noise.sample(&mut self.rng);
        let dy = self.noise.sample(&mut self.rng);
        let p = if dx == 0.0 && dy == 0.0 {
            base
        } else {
            LocalFrame::new(base).from_xy(dx, dy)
        };
        self.fixes.push(Fix::new(p, t, Some(speed))?);
        Ok(())
    }
}

/// Generates the track and its ground truth. Identical specs give identical output.
pub fn generate(spec: &RoutineSpec) -> Result<(Track, GroundTruth)> {
    let plan = spec.plan()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_m).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Emitter {
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED_F1E5),
        noise,
        fixes: Vec::new(),
    };

    let mut truth = GroundTruth {
        labels: spec.locations.iter().map(|l| l.label.clone()).collect(),
        points: plan.points.clone(),
        stays: Vec::new(),
        legs: Vec::new(),
        attendance: Vec::new(),
    };

    let mut here = plan.home;
    // Arrival time at `here`, once reached by a leg.
    let mut arrived: Option<i64> = None;
    // Earliest time the user may leave `here`.
    let mut free_at = i64::MIN;

    let travel = |out: &mut Emitter,
                  truth: &mut GroundTruth,
                  here: &mut usize,
                  arrived: &mut Option<i64>,
                  to: usize,
                  depart: i64,
                  speed_mph: f64|
     -> Result<i64> {
        if let Some(a) = *arrived {
            stay_fixes(out, plan.points[*here], a, depart, spec)?;
            truth.stays.push(TrueStay {
                location: *here,
                arrive: a,
                depart,
            });
        }
        let n = plan.leg_seconds(*here, to, speed_mph).max(1);
        let frame = LocalFrame::new(plan.points[*here]);
        let (tx, ty) = frame.to_xy(plan.points[to]);
        for k in 0..=n {
            let base = match k {
                0 => plan.points[*here],
                k if k == n => plan.points[to],
                k => {
                    let f = k as f64 / n as f64;
                    frame.from_xy(tx * f, ty * f)
                }
            };
            out.push(base, depart + k, speed_mph)?;
        }
        truth.legs.push(TrueLeg {
            from: *here,
            to,
            depart,
            arrive: depart + n,
        });
        *here = to;
        *arrived = Some(depart + n);
        Ok(depart + n)
    };

    for d in 0..(spec.weeks as i64 * 7) {
        let date = plan.start_date + Duration::days(d);
        let midnight = plan.local_midnight(date);
        let weekday = chrono::Datelike::weekday(&date);
        for (i, e) in plan.day_entries(weekday) {
            let attended = rng.random::<f64>() < e.attendance;
            let start = midnight + e.start_min * 60;
            let end = midnight + e.end_min * 60;
            truth.attendance.push(Attendance {
                date,
                entry: i,
                location: e.location,
                start,
                end,
                attended,
            });
            if !attended {
                continue;
            }
            if e.location != here {
                let n = plan.leg_seconds(here, e.location, e.speed_mph).max(1);
                let depart = start - n;
                if depart < free_at {
                    return Err(Error::InfeasibleRoutine(format!(
                        "pattern entry {} on {date}",
                        i + 1
                    )));
                }
                travel(
                    &mut out,
                    &mut truth,
                    &mut here,
                    &mut arrived,
                    e.location,
                    depart,
                    e.speed_mph,
                )?;
            }
            free_at = end;
        }
        if here != plan.home {
            let depart = free_at;
            travel(
                &mut out,
                &mut truth,
                &mut here,
                &mut arrived,
                plan.home,
                depart,
                spec.speed_mph,
            )?;
            free_at = arrived.unwrap_or(depart);
        }
    }

    let data_end = out.fixes.last().map(|f| f.timestamp);
    if let (Some(a), Some(end)) = (arrived, data_end) {
        truth.stays.push(TrueStay {
            location: here,
            arrive: a,
            depart: end,
        });
    }
    Ok((Track::new(out.fixes)?, truth))
}

fn stay_fixes(
    out: &mut Emitter,
    at: GeoPoint,
    arrive: i64,
    depart: i64,
    spec: &RoutineSpec,
) -> Result<()> {
    if spec.dropout {
        return Ok(());
    }
    let mut t = arrive + spec.stay_fix_interval_s;
    while t < depart {
        let speed = out.rng.random::<f64>() * 0.9;
        out.push(at, t, speed)?;
        t += spec.stay_fix_interval_s;
    }
    Ok(())
}

/// Ground truth as CSV: `kind,label,start,end,lat,lon`.
pub fn write_truth_csv<W: Write>(truth: &GroundTruth, mut out: W) -> Result<()> {
    writeln!(out, "kind,label,start,end,lat,lon")?;
    for (label, p) in truth.labels.iter().zip(&truth.points) {
        writeln!(out, "location,{label},,,{:.6},{:.6}", p.lat(), p.lon())?;
    }
    for s in &truth.stays {
        writeln!(
            out,
            "stay,{},{},{},,",
            truth.labels[s.location],
            format_iso(s.arrive),
            format_iso(s.depart)
        )?;
    }
    for l in &truth.legs {
        writeln!(
            out,
            "leg,{}>{},{},{},,",
            truth.labels[l.from],
            truth.labels[l.to],
            format_iso(l.depart),
            format_iso(l.arrive)
        )?;
    }
    for a in truth.attendance.iter().filter(|a| !a.attended) {
        writeln!(
            out,
            "absent,{},{},{},,",
            truth.labels[a.location],
            format_iso(a.start),
            format_iso(a.end)
        )?;
    }
    Ok(())
}
