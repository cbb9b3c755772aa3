//! Geodesic primitives: great-circle distance, compass bearing, and bearing
//! rate over consecutive GPS fixes.
//!
//! The Earth is modelled as a sphere of radius 6,371,000 m; at GPS noise
//! scales the ellipsoidal correction is irrelevant. Coordinates are stored in
//! degrees and converted to radians inside each operation.

use crate::{Error, Result};

/// Spherical Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A timestamped latitude/longitude observation, the atomic input of the
/// pipeline. `timestamp` is seconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    pub timestamp: i64,
    /// Latitude in degrees, `[-90, 90]`.
    pub lat: f64,
    /// Longitude in degrees, `[-180, 180]`.
    pub lon: f64,
}

impl GpsPoint {
    pub fn new(timestamp: i64, lat: f64, lon: f64) -> GpsPoint {
        GpsPoint {
            timestamp,
            lat,
            lon,
        }
    }

    /// Checks the coordinate ranges. Ingestion paths call this on every
    /// parsed point; the numeric operations assume it already passed.
    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::data(format!(
                "latitude {} out of [-90, 90]",
                self.lat
            )));
        }
        if !self.lon.is_finite() || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::data(format!(
                "longitude {} out of [-180, 180]",
                self.lon
            )));
        }
        Ok(())
    }

    pub fn same_coordinates(&self, other: &GpsPoint) -> bool {
        self.lat == other.lat && self.lon == other.lon
    }
}

/// A compass angle in degrees, normalized to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Angle(f64);

impl Angle {
    pub fn from_degrees(deg: f64) -> Angle {
        let mut d = deg.rem_euclid(360.0);
        // rem_euclid can return exactly 360.0 for tiny negative inputs
        if d >= 360.0 {
            d = 0.0;
        }
        Angle(d)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }
}

/// Great-circle distance in meters between two fixes.
///
/// Symmetric by construction: both halves of the haversine term are built
/// from absolute coordinate differences, so `d(a, b)` and `d(b, a)` are
/// bitwise identical.
pub fn haversine_distance(a: &GpsPoint, b: &GpsPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (lat2 - lat1).abs();
    let dlon = (b.lon - a.lon).to_radians().abs();

    let sin_half_dlat = (dlat / 2.0).sin();
    let sin_half_dlon = (dlon / 2.0).sin();
    let h = sin_half_dlat * sin_half_dlat + lat1.cos() * lat2.cos() * sin_half_dlon * sin_half_dlon;

    EARTH_RADIUS_M * 2.0 * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Compass bearing from `p1` toward `p2`, measured clockwise from north.
///
/// Computed as `atan2(Y, X)` with
/// `X = cos(lat1)·sin(lat2) − sin(lat1)·cos(lat2)·cos(Δlon)` and
/// `Y = sin(Δlon)·cos(lat2)`, then normalized to `[0, 360)`. Coincident
/// coordinates yield 0° by convention, so stationary jitter produces a
/// bearing rate of 0 rather than NaN.
pub fn bearing(p1: &GpsPoint, p2: &GpsPoint) -> Angle {
    if p1.same_coordinates(p2) {
        return Angle::from_degrees(0.0);
    }
    let lat1 = p1.lat.to_radians();
    let lat2 = p2.lat.to_radians();
    let dlon = (p2.lon - p1.lon).to_radians();

    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    let y = dlon.sin() * lat2.cos();
    Angle::from_degrees(y.atan2(x).to_degrees())
}

/// How the absolute bearing change is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BearingRateMode {
    /// `|β₂ − β₁|` in `[0, 360)`: the literal absolute difference of the two
    /// normalized bearings.
    #[default]
    Literal,
    /// `min(|Δ|, 360 − |Δ|)` in `[0, 180]`: the smaller arc between the two
    /// bearings.
    Wrapped,
}

/// Absolute change in bearing across three consecutive fixes, in degrees.
///
/// `β₁` is the bearing from `p1` to `p2` and `β₂` the bearing from `p2` to
/// `p3`; the value is assigned to the middle point.
pub fn bearing_rate(p1: &GpsPoint, p2: &GpsPoint, p3: &GpsPoint, mode: BearingRateMode) -> f64 {
    let b1 = bearing(p1, p2).degrees();
    let b2 = bearing(p2, p3).degrees();
    let diff = (b2 - b1).abs();
    match mode {
        BearingRateMode::Literal => diff,
        BearingRateMode::Wrapped => diff.min(360.0 - diff),
    }
}
