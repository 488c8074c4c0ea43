//! The probabilistic weekly schedule.
//!
//! Every located place opens an event. Its end is inferred from the start of
//! the following event minus the travel time between the two locations. The
//! schedule counts, per weekday and minute of day, how often each location
//! was occupied, and divides by the number of observed days of that weekday.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, NaiveDate};
pub use chrono::{FixedOffset, Weekday};

use crate::cluster::{assign_location, LocationId};
use crate::ingest::{PlacePoint, Track};
use crate::travel::{estimate_trip_time, fixes_between, TravelModel, Trip};
use crate::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 1_440;
const SLOTS: usize = 7 * MINUTES_PER_DAY as usize;

pub const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub location: LocationId,
    /// Arrival, the place point's timestamp.
    pub start: i64,
    pub end: i64,
    /// Local calendar date of `start`.
    pub source_day: NaiveDate,
    /// The travel time did not fit between the two starts, or was unknown.
    pub flagged: bool,
}

/// Local `(date, minute of day)` for a UTC timestamp.
pub fn local_minute(timestamp: i64, offset: FixedOffset) -> (NaiveDate, u32) {
    let local = timestamp + offset.local_minus_utc() as i64;
    let minute = local.div_euclid(60);
    let day = minute.div_euclid(MINUTES_PER_DAY as i64);
    let date = DateTime::from_timestamp(day * 86_400, 0)
        .expect("timestamp in range")
        .date_naive();
    (date, minute.rem_euclid(MINUTES_PER_DAY as i64) as u32)
}

/// Local dates on which `track` has at least one fix.
pub fn observed_days(track: &Track, offset: FixedOffset) -> BTreeSet<NaiveDate> {
    track
        .fixes()
        .iter()
        .map(|f| local_minute(f.timestamp, offset).0)
        .collect()
}

/// Turns located places into events.
///
/// `track` is the moving-filtered track the places came from; it is only
/// read when a pair of consecutive locations has no learned edge, in which
/// case the trip between them is estimated directly (`fallback_speed_mph`
/// covers trips with no moving fixes). The final event ends at `data_end`,
/// normally the last fix of the raw track.
pub fn infer_events(
    places: &[PlacePoint],
    track: &Track,
    model: &TravelModel,
    data_end: i64,
    fallback_speed_mph: Option<f64>,
    offset: FixedOffset,
) -> Vec<Event> {
    let located: Vec<(LocationId, &PlacePoint)> = places
        .iter()
        .filter_map(|p| assign_location(p.fix.point, model.locations()).map(|id| (id, p)))
        .collect();

    let mut events = Vec::with_capacity(located.len());
    for (i, &(loc, place)) in located.iter().enumerate() {
        let start = place.fix.timestamp;
        let (end, flagged) = match located.get(i + 1) {
            Some(&(next_loc, next)) => {
                let next_start = next.fix.timestamp;
                let travel = model
                    .edge(loc, next_loc)
                    .map(|e| e.mean_seconds)
                    .or_else(|| {
                        let trip = Trip {
                            from: loc,
                            to: next_loc,
                            depart: place.fix,
                            arrive: next.fix,
                            en_route: fixes_between(track, start, next_start),
                        };
                        estimate_trip_time(&trip, fallback_speed_mph)
                            .ok()
                            .map(|e| e.seconds)
                    });
                match travel {
                    Some(t) => {
                        let end = (next_start as f64 - t).round() as i64;
                        if end > start {
                            (end, false)
                        } else {
                            (next_start, true)
                        }
                    }
                    None => (next_start, true),
                }
            }
            None => (data_end, false),
        };
        if end > start {
            events.push(Event {
                location: loc,
                start,
                end,
                source_day: local_minute(start, offset).0,
                flagged,
            });
        }
    }
    events
}

/// Probability of a location at a weekday minute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    pub value: f64,
    /// False when no day of this weekday was observed.
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleModel {
    counts: Vec<BTreeMap<LocationId, u32>>,
    coverage: [u32; 7],
}

fn slot(weekday: Weekday, minute: u32) -> usize {
    assert!(minute < MINUTES_PER_DAY, "minute {minute} out of range");
    weekday.num_days_from_monday() as usize * MINUTES_PER_DAY as usize + minute as usize
}

impl ScheduleModel {
    pub fn empty(coverage: [u32; 7]) -> Self {
        ScheduleModel {
            counts: vec![BTreeMap::new(); SLOTS],
            coverage,
        }
    }

    /// Rebuilds a model from stored counts, checking that no minute holds
    /// more occupancy than its coverage.
    pub fn from_counts(
        coverage: [u32; 7],
        records: impl IntoIterator<Item = (Weekday, u32, LocationId, u32)>,
    ) -> Result<Self> {
        let mut model = ScheduleModel::empty(coverage);
        for (day, minute, loc, count) in records {
            if minute >= MINUTES_PER_DAY {
                return Err(Error::Config(format!("minute {minute} out of range")));
            }
            *model.counts[slot(day, minute)].entry(loc).or_default() += count;
        }
        for day in WEEKDAYS {
            for minute in 0..MINUTES_PER_DAY {
                let total: u32 = model.counts[slot(day, minute)].values().sum();
                if total > model.coverage(day) {
                    return Err(Error::Config(format!(
                        "occupancy {total} exceeds coverage at {day} minute {minute}"
                    )));
                }
            }
        }
        Ok(model)
    }

    pub fn coverage(&self, weekday: Weekday) -> u32 {
        self.coverage[weekday.num_days_from_monday() as usize]
    }

    pub fn count(&self, weekday: Weekday, minute: u32, loc: LocationId) -> u32 {
        self.counts[slot(weekday, minute)]
            .get(&loc)
            .copied()
            .unwrap_or(0)
    }

    pub fn counts_at(&self, weekday: Weekday, minute: u32) -> &BTreeMap<LocationId, u32> {
        &self.counts[slot(weekday, minute)]
    }

    pub fn query(&self, weekday: Weekday, minute: u32, loc: LocationId) -> Probability {
        let coverage = self.coverage(weekday);
        if coverage == 0 {
            return Probability {
                value: 0.0,
                covered: false,
            };
        }
        Probability {
            value: self.count(weekday, minute, loc) as f64 / coverage as f64,
            covered: true,
        }
    }

    /// Locations that appear anywhere in the model.
    pub fn locations(&self) -> BTreeSet<LocationId> {
        self.counts.iter().flat_map(|m| m.keys().copied()).collect()
    }

    pub fn total_count(&self) -> u64 {
        self.counts
            .iter()
            .flat_map(|m| m.values())
            .map(|&c| c as u64)
            .sum()
    }

    pub fn segment_averages(&self, segment_minutes: u32) -> Result<SegmentGrid> {
        if segment_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(segment_minutes) {
            return Err(Error::InvalidSegment(segment_minutes));
        }
        let segments = MINUTES_PER_DAY / segment_minutes;
        let cells = WEEKDAYS
            .iter()
            .map(|&day| {
                (0..segments)
                    .map(|s| {
                        let minutes = s * segment_minutes..(s + 1) * segment_minutes;
                        let mut sums: BTreeMap<LocationId, f64> = BTreeMap::new();
                        for m in minutes {
                            for &loc in self.counts_at(day, m).keys() {
                                *sums.entry(loc).or_default() += self.query(day, m, loc).value;
                            }
                        }
                        sums.into_iter()
                            .map(|(loc, sum)| (loc, sum / segment_minutes as f64))
                            .filter(|(_, mean)| *mean > 0.0)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(SegmentGrid {
            segment_minutes,
            cells,
        })
    }
}

/// Counts each event's whole minutes into its (weekday, minute) slots.
///
/// An event occupies minutes `[floor(start / 60), floor(end / 60))` of local
/// time, so events crossing midnight land on both days. Minutes on dates
/// outside `observed` are not counted.
pub fn build_schedule(
    events: &[Event],
    observed: &BTreeSet<NaiveDate>,
    offset: FixedOffset,
) -> Result<ScheduleModel> {
    let mut coverage = [0u32; 7];
    for d in observed {
        coverage[d.weekday().num_days_from_monday() as usize] += 1;
    }
    let mut model = ScheduleModel::empty(coverage);

    let mut sorted: Vec<&Event> = events.iter().collect();
    sorted.sort_by_key(|e| (e.start, e.end));
    for w in sorted.windows(2) {
        if w[1].start < w[0].end {
            return Err(Error::OverlappingEvents(w[1].start));
        }
    }

    let shift = offset.local_minus_utc() as i64;
    for e in sorted {
        let first = (e.start + shift).div_euclid(60);
        let last = (e.end + shift).div_euclid(60);
        for minute in first..last {
            let (date, of_day) = local_minute(minute * 60 - shift, offset);
            if observed.contains(&date) {
                *model.counts[slot(date.weekday(), of_day)]
                    .entry(e.location)
                    .or_default() += 1;
            }
        }
    }
    Ok(model)
}

/// Whole minutes an event contributes when every day is observed.
pub fn event_minutes(e: &Event, offset: FixedOffset) -> i64 {
    let shift = offset.local_minus_utc() as i64;
    (e.end + shift).div_euclid(60) - (e.start + shift).div_euclid(60)
}

/// Mean probability per location, per weekday and time segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGrid {
    pub segment_minutes: u32,
    /// `cells[weekday][segment]`, sorted by location id; zero means omitted.
    pub cells: Vec<Vec<Vec<(LocationId, f64)>>>,
}

impl SegmentGrid {
    pub fn segments(&self) -> usize {
        (MINUTES_PER_DAY / self.segment_minutes) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().flatten().all(|c| c.is_empty())
    }

    pub fn locations(&self) -> BTreeSet<LocationId> {
        self.cells
            .iter()
            .flatten()
            .flatten()
            .map(|(l, _)| *l)
            .collect()
    }
}
