//! Turning raw GPS logs into tracks and candidate places.

mod csv;
mod nmea;

pub use self::csv::{emit_csv, parse_csv, write_csv};
pub use self::nmea::{parse_nmea, NmeaReport};

use crate::geo::{derived_speed, Fix};
use crate::{Error, Result};

/// Speeds strictly below this many mph count as stationary.
pub const DEFAULT_SPEED_THRESHOLD_MPH: f64 = 1.0;
/// A moving fix followed by at least this many seconds of silence is a place.
pub const DEFAULT_GAP_SECONDS: i64 = 600;

/// An ordered GPS trace with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Track {
    fixes: Vec<Fix>,
}

impl Track {
    pub fn new(fixes: Vec<Fix>) -> Result<Self> {
        if fixes.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::NonIncreasingTime);
        }
        Ok(Track { fixes })
    }

    pub fn fixes(&self) -> &[Fix] {
        &self.fixes
    }

    pub fn len(&self) -> usize {
        self.fixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixes.is_empty()
    }

    pub fn first(&self) -> Option<&Fix> {
        self.fixes.first()
    }

    pub fn last(&self) -> Option<&Fix> {
        self.fixes.last()
    }

    pub fn into_fixes(self) -> Vec<Fix> {
        self.fixes
    }
}

/// A moving fix that precedes a data gap of at least the extraction threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacePoint {
    pub fix: Fix,
    /// Seconds until the next moving fix; `None` at the end of the data.
    pub gap_seconds: Option<i64>,
}

impl PlacePoint {
    pub fn is_terminal(&self) -> bool {
        self.gap_seconds.is_none()
    }
}

/// Keeps the fixes whose speed is at least `threshold_mph`.
///
/// Fixes without a reported speed get the speed derived from the previous fix
/// (the first fix uses the next one). Retained fixes carry the speed that was
/// used, so filtering twice is the same as filtering once.
pub fn filter_moving(track: &Track, threshold_mph: f64) -> Track {
    let fixes = track.fixes();
    let kept = fixes
        .iter()
        .enumerate()
        .filter_map(|(i, fix)| {
            let speed = fix.speed_mph.or_else(|| {
                let neighbor = if i > 0 {
                    derived_speed(&fixes[i - 1], fix)
                } else {
                    fixes.get(1).map_or(Err(Error::NonIncreasingTime), |next| {
                        derived_speed(fix, next)
                    })
                };
                neighbor.ok()
            })?;
            (speed >= threshold_mph).then_some(Fix {
                speed_mph: Some(speed),
                ..*fix
            })
        })
        .collect();
    Track { fixes: kept }
}

/// Every fix whose successor is at least `gap_seconds` later, plus the final fix.
pub fn extract_places(track: &Track, gap_seconds: i64) -> Vec<PlacePoint> {
    let fixes = track.fixes();
    let mut places: Vec<PlacePoint> = fixes
        .windows(2)
        .filter_map(|w| {
            let gap = w[1].timestamp - w[0].timestamp;
            (gap >= gap_seconds).then_some(PlacePoint {
                fix: w[0],
                gap_seconds: Some(gap),
            })
        })
        .collect();
    if let Some(&last) = fixes.last() {
        places.push(PlacePoint {
            fix: last,
            gap_seconds: None,
        });
    }
    places
}
