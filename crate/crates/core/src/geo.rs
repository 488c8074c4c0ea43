//! Geodesic and kinematic primitives.
//!
//! The Earth is a sphere of radius [`EARTH_RADIUS_M`]. Timestamps are integer
//! UTC seconds.

use crate::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const METERS_PER_MILE: f64 = 1_609.344;
pub const MPH_PER_KNOT: f64 = 1.150779;

/// Converts meters per second to miles per hour.
pub fn mps_to_mph(mps: f64) -> f64 {
    mps * 3_600.0 / METERS_PER_MILE
}

pub fn mph_to_mps(mph: f64) -> f64 {
    mph * METERS_PER_MILE / 3_600.0
}

/// A validated latitude / longitude pair in degrees.
///
/// Latitude lies in `[-90, 90]`, longitude in `(-180, 180]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let lat_ok = lat.is_finite() && (-90.0..=90.0).contains(&lat);
        let lon_ok = lon.is_finite() && lon > -180.0 && lon <= 180.0;
        if lat_ok && lon_ok {
            Ok(GeoPoint { lat, lon })
        } else {
            Err(Error::InvalidCoordinate { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance in meters (haversine form).
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// One GPS sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub point: GeoPoint,
    /// UTC seconds since the Unix epoch.
    pub timestamp: i64,
    /// Speed over ground in mph, if the source reported one.
    pub speed_mph: Option<f64>,
}

impl Fix {
    pub fn new(point: GeoPoint, timestamp: i64, speed_mph: Option<f64>) -> Result<Self> {
        if timestamp <= 0 {
            return Err(Error::InvalidFix(format!(
                "timestamp {timestamp} must be positive"
            )));
        }
        if let Some(s) = speed_mph {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidFix(format!("speed {s} must be non-negative")));
            }
        }
        Ok(Fix {
            point,
            timestamp,
            speed_mph,
        })
    }
}

/// Average speed in mph needed to get from `a` to `b`.
pub fn derived_speed(a: &Fix, b: &Fix) -> Result<f64> {
    if b.timestamp <= a.timestamp {
        return Err(Error::NonIncreasingTime);
    }
    let dt = (b.timestamp - a.timestamp) as f64;
    Ok(mps_to_mph(haversine_distance(a.point, b.point) / dt))
}

/// Equirectangular projection about a fixed origin.
///
/// Accurate to centimeters over the few-kilometer extents used for cluster
/// means and synthetic legs.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: GeoPoint,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        LocalFrame {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    /// Returns `(east, north)` offsets in meters.
    pub fn to_xy(&self, p: GeoPoint) -> (f64, f64) {
        let mut dlon = p.lon - self.origin.lon;
        if dlon > 180.0 {
            dlon -= 360.0;
        } else if dlon <= -180.0 {
            dlon += 360.0;
        }
        let x = EARTH_RADIUS_M * dlon.to_radians() * self.cos_lat;
        let y = EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians();
        (x, y)
    }

    pub fn from_xy(&self, x: f64, y: f64) -> GeoPoint {
        let lat = (self.origin.lat + (y / EARTH_RADIUS_M).to_degrees()).clamp(-90.0, 90.0);
        let dlon = if self.cos_lat.abs() < 1e-12 {
            0.0
        } else {
            (x / (EARTH_RADIUS_M * self.cos_lat)).to_degrees()
        };
        let mut lon = self.origin.lon + dlon;
        while lon > 180.0 {
            lon -= 360.0;
        }
        while lon <= -180.0 {
            lon += 360.0;
        }
        GeoPoint { lat, lon }
    }
}

/// Arithmetic mean of `points` in the tangent plane at `origin`.
pub fn planar_mean(
    origin: GeoPoint,
    points: impl IntoIterator<Item = GeoPoint>,
) -> Option<GeoPoint> {
    let frame = LocalFrame::new(origin);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        let (x, y) = frame.to_xy(p);
        sx += x;
        sy += y;
        n += 1;
    }
    (n > 0).then(|| frame.from_xy(sx / n as f64, sy / n as f64))
}
