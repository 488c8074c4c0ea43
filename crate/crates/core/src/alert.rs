//! Lateness alerts.
//!
//! On every tick, each appointment starting within the lookahead window is
//! checked against the travel time from the current position. Replay runs the
//! same check over a recorded track on a simulated clock.

use std::collections::BTreeSet;

use crate::cluster::LocationId;
use crate::geo::GeoPoint;
use crate::ingest::Track;
use crate::travel::TravelModel;
use crate::{Error, Result};

pub const DEFAULT_TICK_SECONDS: i64 = 15;
pub const DEFAULT_LOOKAHEAD_SECONDS: i64 = 7_200;
const WEEK_SECONDS: i64 = 7 * 86_400;

#[derive(Debug, Clone, PartialEq)]
pub struct Appointment {
    pub title: String,
    pub location: LocationId,
    /// UTC seconds of the first occurrence.
    pub start: i64,
    pub recurs_weekly: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Calendar {
    pub appointments: Vec<Appointment>,
}

/// One concrete start of an appointment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Occurrence {
    pub appointment: usize,
    pub start: i64,
}

impl Calendar {
    pub fn new(appointments: Vec<Appointment>) -> Self {
        Calendar { appointments }
    }

    pub fn is_empty(&self) -> bool {
        self.appointments.is_empty()
    }

    /// Occurrences with `after < start <= until`, ordered by start.
    pub fn occurrences(&self, after: i64, until: i64) -> Vec<Occurrence> {
        let mut out = Vec::new();
        for (i, a) in self.appointments.iter().enumerate() {
            if a.recurs_weekly {
                let k = if after < a.start {
                    0
                } else {
                    (after - a.start).div_euclid(WEEK_SECONDS) + 1
                };
                let mut start = a.start + k * WEEK_SECONDS;
                while start <= until {
                    out.push(Occurrence {
                        appointment: i,
                        start,
                    });
                    start += WEEK_SECONDS;
                }
            } else if after < a.start && a.start <= until {
                out.push(Occurrence {
                    appointment: i,
                    start: a.start,
                });
            }
        }
        out.sort_by_key(|o| (o.start, o.appointment));
        out
    }

    pub fn validate(&self, model: &TravelModel) -> Result<()> {
        match self
            .appointments
            .iter()
            .find(|a| model.location(a.location).is_none())
        {
            Some(a) => Err(Error::UnknownLocation(a.location)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlertConfig {
    pub tick_seconds: i64,
    pub lookahead_seconds: i64,
    /// Extra margin; an alert fires once slack drops below it.
    pub buffer_seconds: f64,
}

impl Default for AlertConfig {
    fn default() -> Self {
        AlertConfig {
            tick_seconds: DEFAULT_TICK_SECONDS,
            lookahead_seconds: DEFAULT_LOOKAHEAD_SECONDS,
            buffer_seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub occurrence: Occurrence,
    pub title: String,
    pub issued_at: i64,
    pub travel_seconds: f64,
    /// `start - issued_at - travel_seconds`; negative when late.
    pub slack_seconds: f64,
}

struct Status {
    occurrence: Occurrence,
    travel_seconds: f64,
    slack_seconds: f64,
    late: bool,
}

fn evaluate(
    now: i64,
    position: GeoPoint,
    calendar: &Calendar,
    model: &TravelModel,
    cfg: &AlertConfig,
) -> Result<Vec<Status>> {
    calendar
        .occurrences(now, now + cfg.lookahead_seconds)
        .into_iter()
        .map(|occ| {
            let appt = &calendar.appointments[occ.appointment];
            let travel = model.travel_time_from(position, appt.location)?.seconds;
            let slack = (occ.start - now) as f64 - travel;
            Ok(Status {
                occurrence: occ,
                travel_seconds: travel,
                slack_seconds: slack,
                late: slack < cfg.buffer_seconds,
            })
        })
        .collect()
}

fn alert_for(calendar: &Calendar, now: i64, s: &Status) -> Alert {
    Alert {
        occurrence: s.occurrence,
        title: calendar.appointments[s.occurrence.appointment]
            .title
            .clone(),
        issued_at: now,
        travel_seconds: s.travel_seconds,
        slack_seconds: s.slack_seconds,
    }
}

/// Alerts for every appointment in `(now, now + lookahead]` the user would
/// reach late from `position`.
pub fn check(
    now: i64,
    position: GeoPoint,
    calendar: &Calendar,
    model: &TravelModel,
    cfg: &AlertConfig,
) -> Result<Vec<Alert>> {
    Ok(evaluate(now, position, calendar, model, cfg)?
        .iter()
        .filter(|s| s.late)
        .map(|s| alert_for(calendar, now, s))
        .collect())
}

/// Runs `check` every tick from the first to the last fix of `track`, using
/// the latest fix at or before each tick as the position.
///
/// An occurrence alerts once per run of consecutive late ticks and re-arms
/// when a tick finds it on time again.
pub fn replay(
    track: &Track,
    calendar: &Calendar,
    model: &TravelModel,
    cfg: &AlertConfig,
) -> Result<Vec<Alert>> {
    let (Some(first), Some(last)) = (track.first(), track.last()) else {
        return Ok(Vec::new());
    };
    if calendar.is_empty() {
        return Ok(Vec::new());
    }
    if model.edges().next().is_none() {
        return Err(Error::UntrainedTravelModel);
    }
    calendar.validate(model)?;
    if cfg.tick_seconds <= 0 {
        return Err(Error::Config(format!(
            "tick must be positive, got {}",
            cfg.tick_seconds
        )));
    }

    let fixes = track.fixes();
    let mut cursor = 0;
    let mut alerted: BTreeSet<Occurrence> = BTreeSet::new();
    let mut log = Vec::new();
    let mut now = first.timestamp;
    while now <= last.timestamp {
        while cursor + 1 < fixes.len() && fixes[cursor + 1].timestamp <= now {
            cursor += 1;
        }
        for s in evaluate(now, fixes[cursor].point, calendar, model, cfg)? {
            if s.late {
                if alerted.insert(s.occurrence) {
                    log.push(alert_for(calendar, now, &s));
                }
            } else {
                alerted.remove(&s.occurrence);
            }
        }
        now += cfg.tick_seconds;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Location;
    use crate::geo::{mph_to_mps, Fix, LocalFrame};
    use crate::travel::TravelEdge;

    fn frame() -> LocalFrame {
        LocalFrame::new(GeoPoint::new(33.7756, -84.3963).unwrap())
    }

    /// Home at the origin, office 12 km east; home -> office takes `secs`.
    fn model(secs: f64) -> TravelModel {
        let loc = |id: u32, x: f64| Location {
            id: LocationId(id),
            center: frame().from_xy(x, 0.0),
            radius_m: 150.0,
            members: vec![],
            member_count: 1,
        };
        TravelModel::new(
            vec![loc(0, 0.0), loc(1, 12_000.0)],
            vec![TravelEdge {
                from: LocationId(0),
                to: LocationId(1),
                mean_seconds: secs,
                n_samples: 3,
                mean_speed_mph: 20.0,
            }],
        )
    }

    fn cal(start: i64) -> Calendar {
        Calendar::new(vec![Appointment {
            title: "standup".into(),
            location: LocationId(1),
            start,
            recurs_weekly: false,
        }])
    }

    const T0: i64 = 1_100_000_000;

    fn home() -> GeoPoint {
        frame().from_xy(0.0, 0.0)
    }

    #[test]
    fn on_time_no_alert() {
        let alerts = check(
            T0,
            home(),
            &cal(T0 + 1_800),
            &model(600.0),
            &AlertConfig::default(),
        )
        .unwrap();
        assert!(alerts.is_empty());
    }

    #[test]
    fn late_alert_has_negative_slack() {
        let alerts = check(
            T0,
            home(),
            &cal(T0 + 1_800),
            &model(2_400.0),
            &AlertConfig::default(),
        )
        .unwrap();
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].slack_seconds, -600.0);
        assert_eq!(alerts[0].travel_seconds, 2_400.0);
    }

    #[test]
    fn beyond_lookahead_never_alerts() {
        let alerts = check(
            T0,
            home(),
            &cal(T0 + 10_800),
            &model(14_400.0),
            &AlertConfig::default(),
        )
        .unwrap();
        assert!(alerts.is_empty());
        // Exactly at the window edge is still inside.
        let edge = check(
            T0,
            home(),
            &cal(T0 + 7_200),
            &model(14_400.0),
            &AlertConfig::default(),
        )
        .unwrap();
        assert_eq!(edge.len(), 1);
    }

    #[test]
    fn start_equal_to_now_is_not_checked() {
        let alerts = check(
            T0,
            home(),
            &cal(T0),
            &model(14_400.0),
            &AlertConfig::default(),
        )
        .unwrap();
        assert!(alerts.is_empty());
    }

    #[test]
    fn buffer_widens_the_condition() {
        let cfg = AlertConfig {
            buffer_seconds: 300.0,
            ..AlertConfig::default()
        };
        let alerts = check(T0, home(), &cal(T0 + 1_800), &model(1_600.0), &cfg).unwrap();
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].slack_seconds, 200.0);
    }

    #[test]
    fn untrained_model_errors() {
        let m = TravelModel::new(vec![], vec![]);
        assert!(matches!(
            check(T0, home(), &cal(T0 + 60), &m, &AlertConfig::default()),
            Err(Error::UntrainedTravelModel)
        ));
    }

    #[test]
    fn weekly_occurrences() {
        let c = Calendar::new(vec![Appointment {
            title: "gym".into(),
            location: LocationId(0),
            start: T0,
            recurs_weekly: true,
        }]);
        let occ = c.occurrences(T0, T0 + 3 * WEEK_SECONDS);
        let starts: Vec<i64> = occ.iter().map(|o| o.start).collect();
        assert_eq!(
            starts,
            vec![
                T0 + WEEK_SECONDS,
                T0 + 2 * WEEK_SECONDS,
                T0 + 3 * WEEK_SECONDS
            ]
        );
        assert_eq!(c.occurrences(T0 - 1, T0).len(), 1);
    }

    fn stationary_track(from: i64, to: i64) -> Track {
        Track::new(
            (from..=to)
                .step_by(30)
                .map(|t| Fix::new(home(), t, Some(0.0)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn replay_deduplicates_and_rearms() {
        // Sitting at home; a 40 minute trip to a meeting an hour out. The
        // user becomes late 20 minutes before the hour and stays late.
        let track = stationary_track(T0, T0 + 3_600);
        let alerts = replay(
            &track,
            &cal(T0 + 3_600),
            &model(2_400.0),
            &AlertConfig::default(),
        )
        .unwrap();
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].issued_at, T0 + 1_215);

        // Two occurrences of a weekly appointment alert separately.
        let mut c = cal(T0 + 3_600);
        c.appointments[0].recurs_weekly = true;
        let long = stationary_track(T0, T0 + WEEK_SECONDS + 3_600);
        let alerts = replay(&long, &c, &model(2_400.0), &AlertConfig::default()).unwrap();
        assert_eq!(alerts.len(), 2);
    }

    #[test]
    fn replay_rearms_when_slack_recovers() {
        // Drive away from home and back again, then wait there.
        let f = frame();
        let v = mph_to_mps(20.0);
        let xs = (0..100)
            .map(|i| i as f64)
            .chain((0..100).rev().map(|i| i as f64))
            .chain((0..100).map(|_| 0.0));
        let fixes: Vec<Fix> = xs
            .enumerate()
            .map(|(k, i)| {
                Fix::new(f.from_xy(i * v * 5.0, 0.0), T0 + 5 * k as i64, Some(20.0)).unwrap()
            })
            .collect();
        let track = Track::new(fixes).unwrap();
        // Inside home the edge says 2,400 s and the user is late. Once outside,
        // the straight-line estimate at 20 mph is shorter and the user is on
        // time again, so heading home raises a second alert.
        let alerts = replay(
            &track,
            &cal(T0 + 2_000),
            &model(2_400.0),
            &AlertConfig::default(),
        )
        .unwrap();
        assert_eq!(alerts.len(), 2);
        assert_eq!(alerts[0].issued_at, T0);
        // The second alert fires on the way back, after the turnaround.
        assert!(alerts[1].issued_at > T0 + 500, "{alerts:?}");
    }

    #[test]
    fn empty_inputs() {
        let m = model(100.0);
        assert!(
            replay(&Track::default(), &cal(T0), &m, &AlertConfig::default())
                .unwrap()
                .is_empty()
        );
        assert!(replay(
            &stationary_track(T0, T0 + 60),
            &Calendar::default(),
            &m,
            &AlertConfig::default()
        )
        .unwrap()
        .is_empty());
    }

    #[test]
    fn unknown_location_rejected() {
        let mut c = cal(T0 + 100);
        c.appointments[0].location = LocationId(7);
        assert!(matches!(
            replay(
                &stationary_track(T0, T0 + 60),
                &c,
                &model(100.0),
                &AlertConfig::default()
            ),
            Err(Error::UnknownLocation(LocationId(7)))
        ));
    }
}
