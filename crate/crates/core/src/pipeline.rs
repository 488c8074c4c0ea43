//! End-to-end learning: track in, locations, edges and schedule out.

use std::collections::BTreeSet;

use chrono::{FixedOffset, NaiveDate};

use crate::cluster::{
    cluster_at_radius, place_points, sweep_radii, Location, RadiusSweep, SweepOptions,
};
use crate::ingest::{
    extract_places, filter_moving, PlacePoint, Track, DEFAULT_GAP_SECONDS,
    DEFAULT_SPEED_THRESHOLD_MPH,
};
use crate::schedule::{build_schedule, infer_events, observed_days, Event, ScheduleModel};
use crate::travel::{
    build_edges, estimate_trips, fallback_speed_mph, segment_trips, TravelEdge, TravelModel, Trip,
    TripEstimate,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOptions {
    pub gap_seconds: i64,
    pub speed_threshold_mph: f64,
    pub sweep: SweepOptions,
    pub utc_offset: FixedOffset,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            gap_seconds: DEFAULT_GAP_SECONDS,
            speed_threshold_mph: DEFAULT_SPEED_THRESHOLD_MPH,
            sweep: SweepOptions::default(),
            utc_offset: FixedOffset::east_opt(0).expect("zero offset"),
        }
    }
}

/// Every intermediate product of [`learn`].
#[derive(Debug, Clone)]
pub struct Learned {
    pub moving: Track,
    pub places: Vec<PlacePoint>,
    pub sweep: RadiusSweep,
    pub locations: Vec<Location>,
    pub trips: Vec<Trip>,
    pub estimates: Vec<TripEstimate>,
    pub rejected_trips: usize,
    pub edges: Vec<TravelEdge>,
    pub events: Vec<Event>,
    pub observed_days: BTreeSet<NaiveDate>,
    pub schedule: ScheduleModel,
}

impl Learned {
    pub fn travel_model(&self) -> TravelModel {
        TravelModel::new(self.locations.clone(), self.edges.clone())
    }
}

pub fn learn(track: &Track, opts: &LearnOptions) -> Result<Learned> {
    if opts.gap_seconds <= 0 {
        return Err(Error::Config("gap must be positive".into()));
    }
    if !(opts.speed_threshold_mph >= 0.0) {
        return Err(Error::Config("speed threshold must be non-negative".into()));
    }
    let moving = filter_moving(track, opts.speed_threshold_mph);
    let places = extract_places(&moving, opts.gap_seconds);
    let points = place_points(&places);
    let sweep = sweep_radii(&points, &opts.sweep)?;
    let locations = cluster_at_radius(&points, sweep.chosen_radius(), sweep.chosen_seed());

    let trips = segment_trips(&moving, &places, &locations);
    let (estimates, rejected_trips) = estimate_trips(&trips, &moving);
    let edges = build_edges(&estimates);
    let model = TravelModel::new(locations.clone(), edges.clone());

    let data_end = track.last().map_or(0, |f| f.timestamp);
    let fallback = fallback_speed_mph(&estimates, &moving);
    let events = infer_events(
        &places,
        &moving,
        &model,
        data_end,
        fallback,
        opts.utc_offset,
    );
    let observed = observed_days(track, opts.utc_offset);
    let schedule = build_schedule(&events, &observed, opts.utc_offset)?;

    Ok(Learned {
        moving,
        places,
        sweep,
        locations,
        trips,
        estimates,
        rejected_trips,
        edges,
        events,
        observed_days: observed,
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, RoutineSpec};
    use crate::LocationId;

    const SPEC: &str = r#"
seed = 5
weeks = 2
noise_m = 0.0
dropout = true

[[location]]
label = "home"
lat = 33.7756
lon = -84.3963

[[location]]
label = "work"
lat = 33.8100
lon = -84.3500

[[pattern]]
weekday = "Mon"
start = "09:00"
end = "17:00"
location = "work"

[[pattern]]
weekday = "Wed"
start = "09:00"
end = "17:00"
location = "work"
"#;

    #[test]
    fn learns_two_locations_and_an_edge_each_way() {
        let spec = RoutineSpec::from_toml(SPEC).unwrap();
        let (track, truth) = generate(&spec).unwrap();
        let learned = learn(&track, &LearnOptions::default()).unwrap();
        assert_eq!(learned.locations.len(), 2);
        assert_eq!(learned.edges.len(), 2);
        assert_eq!(learned.rejected_trips, 0);
        let work = learned
            .locations
            .iter()
            .find(|l| crate::geo::haversine_distance(l.center, truth.points[1]) < 50.0)
            .unwrap()
            .id;
        let monday = chrono::Weekday::Mon;
        assert_eq!(learned.schedule.query(monday, 12 * 60, work).value, 1.0);
        assert_eq!(
            learned
                .schedule
                .query(chrono::Weekday::Tue, 12 * 60, work)
                .value,
            0.0
        );
        assert!(
            learned
                .schedule
                .query(monday, 12 * 60, LocationId(99))
                .value
                == 0.0
        );
    }

    #[test]
    fn rejects_bad_options() {
        let opts = LearnOptions {
            gap_seconds: 0,
            ..LearnOptions::default()
        };
        assert!(matches!(
            learn(&Track::default(), &opts),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            learn(&Track::default(), &LearnOptions::default()),
            Err(Error::NothingToSweep)
        ));
    }
}
