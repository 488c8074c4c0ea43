//! Travel times between locations.
//!
//! A trip runs from the place point where the user arrived at one location
//! (A) to the place point at the next location (C). Signal is usually lost
//! around A, so the time spent covering the distance from A to the first
//! moving fix B is extrapolated from the average speed over B..C:
//!
//! ```text
//! T = distance(A, B) / speed(B..C) + time(B..C)
//! ```

use std::collections::BTreeMap;

use crate::cluster::{assign_location, Location, LocationId};
use crate::geo::{haversine_distance, mph_to_mps, mps_to_mph, Fix, GeoPoint};
use crate::ingest::{PlacePoint, Track, DEFAULT_SPEED_THRESHOLD_MPH};
use crate::{Error, Result};

pub const DEFAULT_DETOUR_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub from: LocationId,
    pub to: LocationId,
    pub depart: Fix,
    pub arrive: Fix,
    /// Fixes strictly between `depart` and `arrive`.
    pub en_route: Vec<Fix>,
}

/// Fixes of `track` strictly between two timestamps.
pub fn fixes_between(track: &Track, after: i64, before: i64) -> Vec<Fix> {
    let fixes = track.fixes();
    let lo = fixes.partition_point(|f| f.timestamp <= after);
    let hi = fixes.partition_point(|f| f.timestamp < before);
    fixes[lo..hi.max(lo)].to_vec()
}

/// Consecutive located places at different locations become trips.
///
/// Places outside every location are skipped, so a trip spans over them.
pub fn segment_trips(track: &Track, places: &[PlacePoint], locations: &[Location]) -> Vec<Trip> {
    let located: Vec<(LocationId, &PlacePoint)> = places
        .iter()
        .filter_map(|p| assign_location(p.fix.point, locations).map(|id| (id, p)))
        .collect();
    located
        .windows(2)
        .filter(|w| w[0].0 != w[1].0 && w[0].1.fix.timestamp < w[1].1.fix.timestamp)
        .map(|w| Trip {
            from: w[0].0,
            to: w[1].0,
            depart: w[0].1.fix,
            arrive: w[1].1.fix,
            en_route: fixes_between(track, w[0].1.fix.timestamp, w[1].1.fix.timestamp),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Confidence {
    /// No moving fix was seen en route; the time came from straight-line
    /// distance and a global speed.
    Low,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripEstimate {
    pub from: LocationId,
    pub to: LocationId,
    pub seconds: f64,
    /// Distance credited to the trip, used for speed averages.
    pub path_m: f64,
    pub confidence: Confidence,
}

impl TripEstimate {
    pub fn speed_mph(&self) -> f64 {
        mps_to_mph(self.path_m / self.seconds)
    }
}

/// Estimates one trip's duration.
///
/// `fallback_speed_mph` is only consulted when the trip has no moving
/// en-route fix.
pub fn estimate_trip_time(trip: &Trip, fallback_speed_mph: Option<f64>) -> Result<TripEstimate> {
    let a = &trip.depart;
    let c = &trip.arrive;
    let b_index = trip
        .en_route
        .iter()
        .position(|f| f.speed_mph.is_some_and(|s| s > DEFAULT_SPEED_THRESHOLD_MPH));

    let Some(bi) = b_index else {
        let speed = fallback_speed_mph.filter(|s| *s > 0.0).ok_or_else(|| {
            Error::DegenerateTrip("no en-route fixes and no fallback speed".into())
        })?;
        let d = haversine_distance(a.point, c.point);
        let seconds = d / mph_to_mps(speed);
        if seconds <= 0.0 {
            return Err(Error::DegenerateTrip("zero-length fallback trip".into()));
        }
        return Ok(TripEstimate {
            from: trip.from,
            to: trip.to,
            seconds,
            path_m: d,
            confidence: Confidence::Low,
        });
    };

    let b = &trip.en_route[bi];
    let path_bc: f64 = trip.en_route[bi..]
        .iter()
        .chain(std::iter::once(c))
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| haversine_distance(w[0].point, w[1].point))
        .sum();
    let time_bc = (c.timestamp - b.timestamp) as f64;
    let dist_ab = haversine_distance(a.point, b.point);
    let speed_bc = path_bc / time_bc;

    let seconds = if speed_bc > 0.0 {
        dist_ab / speed_bc + time_bc
    } else if dist_ab > 0.0 {
        return Err(Error::DegenerateTrip("zero speed after departure".into()));
    } else {
        time_bc
    };
    Ok(TripEstimate {
        from: trip.from,
        to: trip.to,
        seconds,
        path_m: dist_ab + path_bc,
        confidence: Confidence::Full,
    })
}

/// Estimates every trip, filling gaps with the overall average speed.
///
/// The fallback speed is the pathlength-weighted speed of the full-confidence
/// estimates, or the mean reported speed of `track` when there are none.
/// Degenerate trips are dropped and counted.
pub fn estimate_trips(trips: &[Trip], track: &Track) -> (Vec<TripEstimate>, usize) {
    let full: Vec<TripEstimate> = trips
        .iter()
        .filter_map(|t| estimate_trip_time(t, None).ok())
        .collect();
    let fallback = fallback_speed_mph(&full, track);
    let mut rejected = 0;
    let estimates = trips
        .iter()
        .filter_map(|t| match estimate_trip_time(t, fallback) {
            Ok(e) => Some(e),
            Err(_) => {
                rejected += 1;
                None
            }
        })
        .collect();
    (estimates, rejected)
}

/// Overall speed used for trips without moving fixes: pathlength-weighted
/// over the full-confidence estimates, else the mean reported speed.
pub fn fallback_speed_mph(estimates: &[TripEstimate], track: &Track) -> Option<f64> {
    let full: Vec<&TripEstimate> = estimates
        .iter()
        .filter(|e| e.confidence == Confidence::Full)
        .collect();
    if full.is_empty() {
        let speeds: Vec<f64> = track
            .fixes()
            .iter()
            .filter_map(|f| f.speed_mph)
            .filter(|s| *s > 0.0)
            .collect();
        (!speeds.is_empty()).then(|| speeds.iter().sum::<f64>() / speeds.len() as f64)
    } else {
        let path: f64 = full.iter().map(|e| e.path_m).sum();
        let secs: f64 = full.iter().map(|e| e.seconds).sum();
        Some(mps_to_mph(path / secs))
    }
}

/// Averaged travel between an ordered pair of locations.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelEdge {
    pub from: LocationId,
    pub to: LocationId,
    pub mean_seconds: f64,
    pub n_samples: usize,
    pub mean_speed_mph: f64,
}

/// Averages estimates per ordered pair. Low-confidence samples only count
/// for pairs that have no full-confidence sample.
pub fn build_edges(estimates: &[TripEstimate]) -> Vec<TravelEdge> {
    let mut pairs: BTreeMap<(LocationId, LocationId), (Vec<&TripEstimate>, Vec<&TripEstimate>)> =
        BTreeMap::new();
    for e in estimates {
        let entry = pairs.entry((e.from, e.to)).or_default();
        match e.confidence {
            Confidence::Full => entry.0.push(e),
            Confidence::Low => entry.1.push(e),
        }
    }
    pairs
        .into_iter()
        .map(|((from, to), (full, low))| {
            let used = if full.is_empty() { low } else { full };
            let secs: f64 = used.iter().map(|e| e.seconds).sum();
            let path: f64 = used.iter().map(|e| e.path_m).sum();
            TravelEdge {
                from,
                to,
                mean_seconds: secs / used.len() as f64,
                n_samples: used.len(),
                mean_speed_mph: mps_to_mph(path / secs),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Route {
    /// Already inside the destination.
    AtDestination,
    /// Inside a known location with a learned edge to the destination.
    Edge(LocationId),
    /// Straight line at the speed of the best detour-feasible known path.
    Via(LocationId),
    /// Straight line at the mean speed over all edges.
    GlobalSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelEstimate {
    pub seconds: f64,
    pub route: Route,
}

/// Locations plus the learned edge table.
#[derive(Debug, Clone)]
pub struct TravelModel {
    locations: Vec<Location>,
    edges: BTreeMap<(LocationId, LocationId), TravelEdge>,
    pub detour_factor: f64,
}

impl TravelModel {
    pub fn new(locations: Vec<Location>, edges: Vec<TravelEdge>) -> Self {
        TravelModel {
            locations,
            edges: edges.into_iter().map(|e| ((e.from, e.to), e)).collect(),
            detour_factor: DEFAULT_DETOUR_FACTOR,
        }
    }

    pub fn with_detour_factor(mut self, factor: f64) -> Self {
        self.detour_factor = factor;
        self
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn location(&self, id: LocationId) -> Option<&Location> {
        self.locations.iter().find(|l| l.id == id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &TravelEdge> {
        self.edges.values()
    }

    pub fn edge(&self, from: LocationId, to: LocationId) -> Option<&TravelEdge> {
        self.edges.get(&(from, to))
    }

    /// Travel time from an arbitrary position to `dest`.
    pub fn travel_time_from(&self, x: GeoPoint, dest: LocationId) -> Result<TravelEstimate> {
        if self.edges.is_empty() {
            return Err(Error::UntrainedTravelModel);
        }
        let target = self.location(dest).ok_or(Error::UnknownLocation(dest))?;
        if target.contains(x) {
            return Ok(TravelEstimate {
                seconds: 0.0,
                route: Route::AtDestination,
            });
        }
        if let Some(here) = assign_location(x, &self.locations) {
            if let Some(edge) = self.edge(here, dest) {
                return Ok(TravelEstimate {
                    seconds: edge.mean_seconds,
                    route: Route::Edge(here),
                });
            }
        }

        let direct = haversine_distance(x, target.center);
        let best = self
            .edges
            .values()
            .filter(|e| e.to == dest && e.from != dest && e.mean_speed_mph > 0.0)
            .filter_map(|e| {
                let via = self.location(e.from)?;
                let detour = haversine_distance(x, via.center)
                    + haversine_distance(via.center, target.center);
                (detour <= self.detour_factor * direct).then_some((e.from, e.mean_speed_mph))
            })
            .fold(None::<(LocationId, f64)>, |best, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            });

        let (speed, route) = match best {
            Some((k, v)) => (v, Route::Via(k)),
            None => {
                let speeds: Vec<f64> = self.edges.values().map(|e| e.mean_speed_mph).collect();
                (
                    speeds.iter().sum::<f64>() / speeds.len() as f64,
                    Route::GlobalSpeed,
                )
            }
        };
        if speed <= 0.0 {
            return Err(Error::UntrainedTravelModel);
        }
        Ok(TravelEstimate {
            seconds: direct / mph_to_mps(speed),
            route,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{LocalFrame, METERS_PER_MILE};
    use proptest::prelude::*;

    fn frame() -> LocalFrame {
        LocalFrame::new(GeoPoint::new(33.7756, -84.3963).unwrap())
    }

    fn fix_at(x: f64, y: f64, t: i64, speed: f64) -> Fix {
        Fix::new(frame().from_xy(x, y), t, Some(speed)).unwrap()
    }

    fn loc(id: u32, x: f64, y: f64) -> Location {
        Location {
            id: LocationId(id),
            center: frame().from_xy(x, y),
            radius_m: 100.0,
            members: vec![],
            member_count: 1,
        }
    }

    /// Constant-speed straight trip east, one fix per second, departing at t0.
    fn straight_trip(distance: f64, mph: f64, t0: i64, keep_from: f64) -> (Trip, f64) {
        let v = mph_to_mps(mph);
        let duration = (distance / v).round() as i64;
        let step = distance / duration as f64;
        let depart = fix_at(0.0, 0.0, t0, mph);
        let arrive = fix_at(distance, 0.0, t0 + duration, mph);
        let first_kept = (duration as f64 * keep_from).ceil() as i64;
        let en_route = (1..duration)
            .filter(|&k| k >= first_kept)
            .map(|k| fix_at(step * k as f64, 0.0, t0 + k, mph))
            .collect();
        let trip = Trip {
            from: LocationId(0),
            to: LocationId(1),
            depart,
            arrive,
            en_route,
        };
        (trip, duration as f64)
    }

    #[test]
    fn b_at_a_gives_elapsed_time() {
        let a = fix_at(0.0, 0.0, 1_000, 0.0);
        let b = fix_at(0.0, 0.0, 5_000, 20.0);
        let c = fix_at(2_000.0, 0.0, 5_300, 20.0);
        let trip = Trip {
            from: LocationId(0),
            to: LocationId(1),
            depart: a,
            arrive: c,
            en_route: vec![b],
        };
        let e = estimate_trip_time(&trip, None).unwrap();
        assert_eq!(e.seconds, 300.0);
        assert_eq!(e.confidence, Confidence::Full);
    }

    #[test]
    fn gap_compensation_within_two_percent() {
        let distance = 5.0 * METERS_PER_MILE;
        let (trip, truth) = straight_trip(distance, 30.0, 10_000, 0.5);
        let e = estimate_trip_time(&trip, None).unwrap();
        assert!(
            (e.seconds - truth).abs() / truth < 0.02,
            "{} vs {truth}",
            e.seconds
        );
    }

    #[test]
    fn gap_free_within_one_percent() {
        let (trip, truth) = straight_trip(3_000.0, 25.0, 10_000, 0.0);
        let e = estimate_trip_time(&trip, None).unwrap();
        assert!((e.seconds - truth).abs() / truth < 0.01);
    }

    #[test]
    fn fallback_is_low_confidence() {
        let trip = Trip {
            from: LocationId(0),
            to: LocationId(1),
            depart: fix_at(0.0, 0.0, 100, 3.0),
            arrive: fix_at(METERS_PER_MILE, 0.0, 9_000, 3.0),
            en_route: vec![],
        };
        let e = estimate_trip_time(&trip, Some(30.0)).unwrap();
        assert_eq!(e.confidence, Confidence::Low);
        assert!((e.seconds - 120.0).abs() < 0.1, "{}", e.seconds);
        assert!(estimate_trip_time(&trip, None).is_err());
    }

    #[test]
    fn zero_speed_with_distance_is_degenerate() {
        let trip = Trip {
            from: LocationId(0),
            to: LocationId(1),
            depart: fix_at(0.0, 0.0, 100, 3.0),
            arrive: fix_at(500.0, 0.0, 900, 3.0),
            en_route: vec![fix_at(500.0, 0.0, 800, 3.0)],
        };
        assert!(matches!(
            estimate_trip_time(&trip, None),
            Err(Error::DegenerateTrip(_))
        ));
    }

    fn est(from: u32, to: u32, seconds: f64, path_m: f64, confidence: Confidence) -> TripEstimate {
        TripEstimate {
            from: LocationId(from),
            to: LocationId(to),
            seconds,
            path_m,
            confidence,
        }
    }

    #[test]
    fn edge_means() {
        let one = build_edges(&[est(0, 1, 600.0, 6_000.0, Confidence::Full)]);
        assert_eq!(one[0].mean_seconds, 600.0);
        assert_eq!(one[0].n_samples, 1);
        let two = build_edges(&[
            est(0, 1, 500.0, 5_000.0, Confidence::Full),
            est(0, 1, 700.0, 7_000.0, Confidence::Full),
            est(0, 1, 5_000.0, 1.0, Confidence::Low),
            est(1, 0, 800.0, 4_000.0, Confidence::Low),
        ]);
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].mean_seconds, 600.0);
        assert_eq!(two[0].n_samples, 2);
        assert!((two[0].mean_speed_mph - mps_to_mph(10.0)).abs() < 1e-9);
        assert_eq!(two[1].from, LocationId(1));
        assert_eq!(two[1].mean_seconds, 800.0);
    }

    #[test]
    fn segmentation_skips_unlocated_and_same_location() {
        let locs = vec![loc(0, 0.0, 0.0), loc(1, 5_000.0, 0.0)];
        let track = Track::new(
            (0..20)
                .map(|i| fix_at(i as f64 * 300.0, 0.0, 1_000 + i * 100, 20.0))
                .collect(),
        )
        .unwrap();
        let place = |f: Fix| PlacePoint {
            fix: f,
            gap_seconds: Some(600),
        };
        let fx = track.fixes();
        let places = vec![
            place(fix_at(0.0, 0.0, 500, 20.0)),
            place(fix_at(10.0, 0.0, 900, 20.0)),
            place(fx[5]),
            place(fix_at(5_000.0, 0.0, 3_000, 20.0)),
        ];
        let trips = segment_trips(&track, &places, &locs);
        assert_eq!(trips.len(), 1);
        assert_eq!(trips[0].depart.timestamp, 900);
        assert_eq!(trips[0].arrive.timestamp, 3_000);
        assert!(trips[0]
            .en_route
            .iter()
            .all(|f| f.timestamp > 900 && f.timestamp < 3_000));
        assert_eq!(trips[0].en_route.len(), 20);
    }

    fn model() -> TravelModel {
        let locs = vec![
            loc(0, 0.0, 0.0),
            loc(1, 2_000.0, 300.0),
            loc(2, 4_000.0, 6_000.0),
            loc(3, 10_000.0, 0.0),
        ];
        let edge = |f: u32, t: u32, secs: f64, mph: f64| TravelEdge {
            from: LocationId(f),
            to: LocationId(t),
            mean_seconds: secs,
            n_samples: 1,
            mean_speed_mph: mph,
        };
        TravelModel::new(
            locs,
            vec![
                edge(0, 3, 900.0, 20.0),
                edge(1, 3, 700.0, 30.0),
                edge(2, 3, 600.0, 45.0),
                edge(3, 0, 1_000.0, 18.0),
            ],
        )
    }

    #[test]
    fn inside_destination_is_zero() {
        let m = model();
        let t = m
            .travel_time_from(frame().from_xy(10_050.0, 0.0), LocationId(3))
            .unwrap();
        assert_eq!(t.seconds, 0.0);
        assert_eq!(t.route, Route::AtDestination);
    }

    #[test]
    fn inside_known_location_uses_edge() {
        let t = model()
            .travel_time_from(frame().from_xy(30.0, 0.0), LocationId(3))
            .unwrap();
        assert_eq!(t.seconds, 900.0);
        assert_eq!(t.route, Route::Edge(LocationId(0)));
    }

    #[test]
    fn on_the_fly_picks_fastest_feasible() {
        let m = model();
        let x = frame().from_xy(1_000.0, -200.0);
        let t = m.travel_time_from(x, LocationId(3)).unwrap();
        // Location 2 is fastest but the detour through it is too long.
        assert_eq!(t.route, Route::Via(LocationId(1)));
        let d = haversine_distance(x, m.location(LocationId(3)).unwrap().center);
        assert!((t.seconds - d / mph_to_mps(30.0)).abs() < 1e-9);
    }

    #[test]
    fn single_candidate_arithmetic() {
        let locs = vec![loc(0, 0.0, 0.0), loc(1, 8_000.0, 0.0)];
        let m = TravelModel::new(
            locs,
            vec![TravelEdge {
                from: LocationId(0),
                to: LocationId(1),
                mean_seconds: 1.0,
                n_samples: 1,
                mean_speed_mph: 30.0,
            }],
        );
        let x = frame().from_xy(1_000.0, 0.0);
        let t = m.travel_time_from(x, LocationId(1)).unwrap();
        let d = haversine_distance(x, m.location(LocationId(1)).unwrap().center);
        assert!((t.seconds - d / METERS_PER_MILE * 3_600.0 / 30.0).abs() < 1e-9);
    }

    #[test]
    fn global_speed_and_errors() {
        let m = model();
        // Far to the west; no candidate satisfies the detour bound.
        let x = frame().from_xy(-30_000.0, 20_000.0);
        let t = m.travel_time_from(x, LocationId(0)).unwrap();
        assert_eq!(t.route, Route::GlobalSpeed);
        let mean = (20.0 + 30.0 + 45.0 + 18.0) / 4.0;
        let d = haversine_distance(x, m.location(LocationId(0)).unwrap().center);
        assert!((t.seconds - d / mph_to_mps(mean)).abs() < 1e-6);

        assert!(matches!(
            m.travel_time_from(x, LocationId(9)),
            Err(Error::UnknownLocation(_))
        ));
        let empty = TravelModel::new(vec![loc(0, 0.0, 0.0)], vec![]);
        assert!(matches!(
            empty.travel_time_from(x, LocationId(0)),
            Err(Error::UntrainedTravelModel)
        ));
    }

    proptest! {
        #[test]
        fn time_shift_invariant(shift in -1_000_000i64..1_000_000, mph in 5.0f64..60.0, keep in 0.0f64..0.8) {
            let (trip, _) = straight_trip(4_000.0, mph, 2_000_000, keep);
            let shifted = Trip {
                depart: Fix { timestamp: trip.depart.timestamp + shift, ..trip.depart },
                arrive: Fix { timestamp: trip.arrive.timestamp + shift, ..trip.arrive },
                en_route: trip.en_route.iter().map(|f| Fix { timestamp: f.timestamp + shift, ..*f }).collect(),
                ..trip.clone()
            };
            let a = estimate_trip_time(&trip, None).unwrap().seconds;
            let b = estimate_trip_time(&shifted, None).unwrap().seconds;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn gap_free_constant_speed(distance in 500.0f64..20_000.0, mph in 3.0f64..70.0) {
            let (trip, truth) = straight_trip(distance, mph, 50_000, 0.0);
            prop_assume!(!trip.en_route.is_empty());
            let e = estimate_trip_time(&trip, None).unwrap();
            prop_assert!((e.seconds - truth).abs() / truth < 0.01);
        }

        #[test]
        fn edges_match_brute_force(samples in prop::collection::vec((0u32..3, 0u32..3, 10.0f64..5_000.0, any::<bool>()), 1..30)) {
            let ests: Vec<TripEstimate> = samples.iter()
                .map(|&(f, t, s, full)| est(f, t, s, s * 10.0, if full { Confidence::Full } else { Confidence::Low }))
                .collect();
            let edges = build_edges(&ests);
            let again = build_edges(&ests);
            prop_assert_eq!(&edges, &again);
            for f in 0..3 {
                for t in 0..3 {
                    let full: Vec<f64> = samples.iter().filter(|s| s.0 == f && s.1 == t && s.3).map(|s| s.2).collect();
                    let low: Vec<f64> = samples.iter().filter(|s| s.0 == f && s.1 == t && !s.3).map(|s| s.2).collect();
                    let used = if full.is_empty() { low } else { full };
                    let edge = edges.iter().find(|e| e.from == LocationId(f) && e.to == LocationId(t));
                    if used.is_empty() {
                        prop_assert!(edge.is_none());
                    } else {
                        let edge = edge.unwrap();
                        let mut sum = 0.0;
                        for v in &used { sum += v; }
                        prop_assert!((edge.mean_seconds - sum / used.len() as f64).abs() < 1e-9);
                        prop_assert_eq!(edge.n_samples, used.len());
                    }
                }
            }
        }
    }
}
