//! Learning significant locations, travel times and a probabilistic weekly
//! schedule from GPS tracks, and replaying tracks against a calendar to
//! predict lateness.
//!
//! The pipeline runs in stages, each with its own module:
//!
//! - [`ingest`]: NMEA / CSV parsing, the moving-point filter and place extraction
//! - [`cluster`]: radius-sweep k-means and knee selection over places
//! - [`travel`]: trip segmentation, gap-compensated trip times, edge table
//! - [`schedule`]: event end-time inference and the per-minute weekly model
//! - [`alert`]: the tick-driven lateness check and replay harness
//! - [`synth`]: scripted routines with ground truth
//! - [`viz`]: SVG / ASCII schedule charts and GeoJSON export
//! - [`pipeline`]: the learning stages chained together
//! - [`formats`]: CSV schemas shared by the command line tools

pub mod alert;
pub mod cluster;
mod error;
pub mod formats;
pub mod geo;
pub mod ingest;
pub mod pipeline;
pub mod schedule;
pub mod synth;
pub mod travel;
pub mod viz;

pub use alert::{Alert, Appointment, Calendar};
pub use cluster::{Location, LocationId, RadiusSweep};
pub use error::{Error, Result};
pub use geo::{Fix, GeoPoint};
pub use ingest::{PlacePoint, Track};
pub use schedule::{Event, ScheduleModel, Weekday};
pub use travel::{TravelEdge, TravelModel, Trip};
