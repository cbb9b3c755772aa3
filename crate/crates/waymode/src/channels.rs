//! Per-point motion channels and fixed-size segment construction.
//!
//! Each GPS point of a trip is expanded into five channels (distance to the
//! previous point, speed, acceleration, jerk, bearing rate). After quality
//! filtering, the per-point rows are cut into non-overlapping windows of
//! fixed length, zero-padding the tail, to form the grids classifiers
//! consume.

use crate::geo::{bearing_rate, haversine_distance, BearingRateMode, GpsPoint};
use crate::par;
use crate::trip::Trip;
use crate::Mode;

pub const DEFAULT_SEGMENT_LEN: usize = 70;
pub const N_CHANNELS: usize = 5;

/// Channel indices within a row.
pub const CH_DISTANCE: usize = 0;
pub const CH_SPEED: usize = 1;
pub const CH_ACCEL: usize = 2;
pub const CH_JERK: usize = 3;
pub const CH_BEARING_RATE: usize = 4;

/// One fixed-length training example: `segment_len` rows of five channels,
/// row-major, with rows at index `>= n_valid` all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub label: Option<Mode>,
    pub n_valid: usize,
    pub values: Vec<f64>,
}

impl Segment {
    pub fn zeros(segment_len: usize, label: Option<Mode>) -> Segment {
        Segment {
            label,
            n_valid: 0,
            values: vec![0.0; segment_len * N_CHANNELS],
        }
    }

    pub fn segment_len(&self) -> usize {
        self.values.len() / N_CHANNELS
    }

    pub fn get(&self, row: usize, channel: usize) -> f64 {
        self.values[row * N_CHANNELS + channel]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * N_CHANNELS..(row + 1) * N_CHANNELS]
    }
}

/// Thresholds and sizes for channel computation and segmentation.
#[derive(Debug, Clone)]
pub struct ChannelConfig {
    pub segment_len: usize,
    pub min_points: usize,
    pub max_speed_mps: f64,
    pub max_accel_mps2: f64,
    pub bearing_rate_mode: BearingRateMode,
}

impl Default for ChannelConfig {
    fn default() -> ChannelConfig {
        ChannelConfig {
            segment_len: DEFAULT_SEGMENT_LEN,
            min_points: 10,
            max_speed_mps: 62.5,
            max_accel_mps2: 10.0,
            bearing_rate_mode: BearingRateMode::Literal,
        }
    }
}

/// Drop points that repeat the previous timestamp, keeping the first.
pub fn dedup_zero_dt(points: &[GpsPoint]) -> Vec<GpsPoint> {
    let mut out: Vec<GpsPoint> = Vec::with_capacity(points.len());
    for p in points {
        if out
            .last()
            .map(|l| p.timestamp > l.timestamp)
            .unwrap_or(true)
        {
            out.push(*p);
        }
    }
    out
}

/// Expand a point sequence into per-point channel rows.
///
/// Row 0 has no predecessor, so all its channels are 0; each derivative
/// channel then follows from the previous row's value (speed 0 at row 0
/// makes row 1's acceleration `speed_1 / dt`, and likewise for jerk).
/// Bearing rate needs both a predecessor and a successor, so the first and
/// last rows carry 0 there.
///
/// Timestamps must be strictly increasing; run [`dedup_zero_dt`] first.
pub fn compute_channels(points: &[GpsPoint], mode: BearingRateMode) -> Vec<[f64; N_CHANNELS]> {
    let n = points.len();
    let mut rows = vec![[0.0; N_CHANNELS]; n];
    for i in 1..n {
        let dt = points[i].timestamp - points[i - 1].timestamp;
        assert!(
            dt > 0,
            "compute_channels requires strictly increasing timestamps"
        );
        let dt = dt as f64;
        let d = haversine_distance(&points[i - 1], &points[i]);
        let v = d / dt;
        rows[i][CH_DISTANCE] = d;
        rows[i][CH_SPEED] = v;
        rows[i][CH_ACCEL] = (v - rows[i - 1][CH_SPEED]) / dt;
        rows[i][CH_JERK] = (rows[i][CH_ACCEL] - rows[i - 1][CH_ACCEL]) / dt;
    }
    for i in 1..n.saturating_sub(1) {
        rows[i][CH_BEARING_RATE] = bearing_rate(&points[i - 1], &points[i], &points[i + 1], mode);
    }
    rows
}

/// Remove implausible points until the trip is clean, or reject it.
///
/// A point is an offender when its implied speed exceeds `max_speed_mps` or
/// its implied |acceleration| exceeds `max_accel_mps2`. Offenders are
/// removed one at a time, earliest first, recomputing the channels after
/// each removal, so a single glitch costs a single point. Trips left with
/// fewer than `min_points` points are rejected (`None`).
pub fn filter_trajectory(trip: &Trip, cfg: &ChannelConfig) -> Option<Trip> {
    let mut pts = dedup_zero_dt(&trip.points);
    loop {
        if pts.len() < cfg.min_points {
            return None;
        }
        let rows = compute_channels(&pts, cfg.bearing_rate_mode);
        match rows
            .iter()
            .position(|r| r[CH_SPEED] > cfg.max_speed_mps || r[CH_ACCEL].abs() > cfg.max_accel_mps2)
        {
            Some(i) => {
                pts.remove(i);
            }
            None => break,
        }
    }
    Some(Trip::new(trip.user_id.clone(), pts, trip.mode_label))
}

/// Cut a filtered trip into consecutive `segment_len`-row segments, zero
/// padding the final partial window. Each segment inherits the trip label.
pub fn build_segments(trip: &Trip, cfg: &ChannelConfig) -> Vec<Segment> {
    let rows = compute_channels(&trip.points, cfg.bearing_rate_mode);
    rows.chunks(cfg.segment_len)
        .map(|chunk| {
            let mut values = vec![0.0; cfg.segment_len * N_CHANNELS];
            for (i, row) in chunk.iter().enumerate() {
                values[i * N_CHANNELS..(i + 1) * N_CHANNELS].copy_from_slice(row);
            }
            Segment {
                label: trip.mode_label,
                n_valid: chunk.len(),
                values,
            }
        })
        .collect()
}

/// Filter one trip and segment it; `None` when the trip is rejected.
pub fn segment_trip(trip: &Trip, cfg: &ChannelConfig) -> Option<Vec<Segment>> {
    filter_trajectory(trip, cfg).map(|t| build_segments(&t, cfg))
}

/// Segment a whole corpus, trips in parallel, output order matching input
/// order with rejected trips skipped.
pub fn segment_trips(trips: &[Trip], cfg: &ChannelConfig) -> Vec<Segment> {
    par::map_slice(trips, |t| segment_trip(t, cfg))
        .into_iter()
        .flatten()
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    const M_PER_DEG_LAT: f64 = 111_194.92664455873; // R · π/180

    fn northward(t0: i64, n: usize, dt: i64, step_m: f64) -> Vec<GpsPoint> {
        (0..n)
            .map(|i| {
                GpsPoint::new(
                    t0 + i as i64 * dt,
                    45.0 + i as f64 * step_m / M_PER_DEG_LAT,
                    -73.6,
                )
            })
            .collect()
    }

    #[test]
    fn two_point_trip_rows() {
        let p = vec![
            GpsPoint::new(0, 45.0, -73.6),
            GpsPoint::new(10, 45.0 + 100.0 / M_PER_DEG_LAT, -73.6),
        ];
        let rows = compute_channels(&p, BearingRateMode::Literal);
        assert_eq!(rows[0], [0.0; 5]);
        assert_abs_diff_eq!(rows[1][CH_DISTANCE], 100.0, epsilon = 0.05);
        assert_abs_diff_eq!(rows[1][CH_SPEED], 10.0, epsilon = 0.005);
        assert_abs_diff_eq!(rows[1][CH_ACCEL], 1.0, epsilon = 0.0005);
        assert_abs_diff_eq!(rows[1][CH_JERK], 0.1, epsilon = 0.00005);
        assert_eq!(rows[1][CH_BEARING_RATE], 0.0);
        // The derivative chain divides by dt at each stage.
        assert_eq!(rows[1][CH_SPEED], rows[1][CH_DISTANCE] / 10.0);
        assert_eq!(rows[1][CH_ACCEL], rows[1][CH_SPEED] / 10.0);
        assert_eq!(rows[1][CH_JERK], rows[1][CH_ACCEL] / 10.0);
    }

    #[test]
    fn stationary_trip_all_zero() {
        let p: Vec<GpsPoint> = (0..6).map(|i| GpsPoint::new(i * 5, 45.2, -73.5)).collect();
        let rows = compute_channels(&p, BearingRateMode::Literal);
        for row in rows {
            assert_eq!(row, [0.0; 5]);
        }
    }

    #[test]
    fn collinear_points_zero_bearing_rate() {
        let p = northward(0, 3, 10, 50.0);
        let rows = compute_channels(&p, BearingRateMode::Literal);
        assert_abs_diff_eq!(rows[1][CH_BEARING_RATE], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn right_turn_bearing_rate() {
        // North then east: bearing goes 0° → 90°.
        let step = 50.0 / M_PER_DEG_LAT;
        let p = vec![
            GpsPoint::new(0, 45.0, -73.6),
            GpsPoint::new(10, 45.0 + step, -73.6),
            GpsPoint::new(20, 45.0 + step, -73.6 + step / (45.0f64.to_radians().cos())),
        ];
        let rows = compute_channels(&p, BearingRateMode::Literal);
        assert_abs_diff_eq!(rows[1][CH_BEARING_RATE], 90.0, epsilon = 0.1);
    }

    #[test]
    fn dedup_keeps_first_of_equal_timestamps() {
        let p = vec![
            GpsPoint::new(0, 45.0, -73.6),
            GpsPoint::new(10, 45.1, -73.6),
            GpsPoint::new(10, 45.2, -73.6),
            GpsPoint::new(20, 45.3, -73.6),
        ];
        let d = dedup_zero_dt(&p);
        assert_eq!(d.len(), 3);
        assert_eq!(d[1].lat, 45.1);
    }

    #[test]
    fn nine_point_trip_rejected() {
        let trip = Trip::new("u", northward(0, 9, 10, 10.0), None);
        assert!(filter_trajectory(&trip, &ChannelConfig::default()).is_none());
    }

    #[test]
    fn glitch_point_removed_once() {
        let mut pts = northward(0, 50, 10, 10.0);
        // Teleport one fix ~4 km east: implied speed ~400 m/s.
        pts[25].lon += 0.05;
        let trip = Trip::new("u", pts, Some(Mode::Walk));
        let cfg = ChannelConfig::default();
        let kept = filter_trajectory(&trip, &cfg).expect("trip should survive");
        assert_eq!(kept.points.len(), 49);
        let rows = compute_channels(&kept.points, cfg.bearing_rate_mode);
        assert!(rows
            .iter()
            .all(|r| r[CH_SPEED] <= cfg.max_speed_mps && r[CH_ACCEL].abs() <= cfg.max_accel_mps2));
    }

    #[test]
    fn hard_braking_point_removed() {
        // 30 m/s cruise, then a 1-second sample implying -15 m/s² braking.
        let mut pts: Vec<GpsPoint> = Vec::new();
        let mut lat = 45.0;
        for i in 0..30i64 {
            pts.push(GpsPoint::new(i * 10, lat, -73.6));
            lat += 30.0 * 10.0 / M_PER_DEG_LAT;
        }
        let last = pts[29];
        pts.push(GpsPoint::new(
            last.timestamp + 1,
            last.lat + 15.0 / M_PER_DEG_LAT,
            -73.6,
        ));
        let trip = Trip::new("u", pts, None);
        let kept = filter_trajectory(&trip, &ChannelConfig::default()).unwrap();
        assert_eq!(kept.points.len(), 30);
        assert_eq!(kept.points[29], last, "the braking fix is the one removed");
    }

    #[test]
    fn clean_walk_unchanged() {
        let trip = Trip::new("u", northward(0, 50, 10, 12.0), Some(Mode::Walk));
        let kept = filter_trajectory(&trip, &ChannelConfig::default()).unwrap();
        assert_eq!(kept.points, trip.points);
    }

    #[test]
    fn segments_150_points() {
        let trip = Trip::new("u", northward(0, 150, 10, 10.0), Some(Mode::Bike));
        let segs = build_segments(&trip, &ChannelConfig::default());
        assert_eq!(segs.len(), 3);
        assert_eq!(
            segs.iter().map(|s| s.n_valid).collect::<Vec<_>>(),
            vec![70, 70, 10]
        );
        for s in &segs {
            assert_eq!(s.label, Some(Mode::Bike));
            assert_eq!(s.segment_len(), 70);
            for row in s.n_valid..70 {
                assert_eq!(s.row(row), [0.0; 5]);
            }
        }
    }

    #[test]
    fn segments_exact_and_one_over() {
        let cfg = ChannelConfig::default();
        let t70 = Trip::new("u", northward(0, 70, 10, 10.0), None);
        let segs = build_segments(&t70, &cfg);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].n_valid, 70);

        let t71 = Trip::new("u", northward(0, 71, 10, 10.0), None);
        let segs = build_segments(&t71, &cfg);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].n_valid, 1);
        for row in 1..70 {
            assert_eq!(segs[1].row(row), [0.0; 5]);
        }
    }

    #[test]
    fn segment_trips_skips_rejected() {
        let cfg = ChannelConfig::default();
        let good = Trip::new("u", northward(0, 80, 10, 10.0), Some(Mode::Walk));
        let short = Trip::new("u", northward(0, 5, 10, 10.0), Some(Mode::Car));
        let segs = segment_trips(&[short.clone(), good.clone(), short], &cfg);
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.label == Some(Mode::Walk)));
    }

    fn arb_trip() -> impl Strategy<Value = Vec<GpsPoint>> {
        // Steps cover degenerate timing (dt = 1) and jumps big enough to
        // trip the speed filter.
        prop::collection::vec((1i64..=120, -5e-4f64..5e-4, -5e-4f64..5e-4), 2..120).prop_map(
            |steps| {
                let mut t = 0i64;
                let mut lat = 45.0;
                let mut lon = -73.6;
                let mut pts = vec![GpsPoint::new(t, lat, lon)];
                for (dt, dlat, dlon) in steps {
                    t += dt;
                    lat += dlat;
                    lon += dlon;
                    pts.push(GpsPoint::new(t, lat, lon));
                }
                pts
            },
        )
    }

    proptest! {
        #[test]
        fn n_valid_conserved_and_finite(pts in arb_trip()) {
            let cfg = ChannelConfig::default();
            let trip = Trip::new("u", pts, Some(Mode::Transit));
            if let Some(filtered) = filter_trajectory(&trip, &cfg) {
                let segs = build_segments(&filtered, &cfg);
                let total: usize = segs.iter().map(|s| s.n_valid).sum();
                prop_assert_eq!(total, filtered.points.len());
                for s in &segs {
                    for v in &s.values {
                        prop_assert!(v.is_finite());
                    }
                    for row in s.n_valid..s.segment_len() {
                        prop_assert_eq!(s.row(row), [0.0; 5]);
                    }
                    for row in 0..s.n_valid {
                        prop_assert!(s.get(row, CH_DISTANCE) >= 0.0);
                        prop_assert!(s.get(row, CH_SPEED) >= 0.0);
                    }
                }
            }
        }

        #[test]
        fn filter_output_within_bounds(pts in arb_trip()) {
            let cfg = ChannelConfig::default();
            let trip = Trip::new("u", pts, None);
            if let Some(filtered) = filter_trajectory(&trip, &cfg) {
                prop_assert!(filtered.points.len() >= cfg.min_points);
                let rows = compute_channels(&filtered.points, cfg.bearing_rate_mode);
                for r in rows {
                    prop_assert!(r[CH_SPEED] <= cfg.max_speed_mps);
                    prop_assert!(r[CH_ACCEL].abs() <= cfg.max_accel_mps2);
                }
            }
        }
    }

    #[test]
    fn speed_matches_distance_over_time() {
        let p = northward(0, 20, 7, 33.0);
        let rows = compute_channels(&p, BearingRateMode::Literal);
        for i in 1..p.len() {
            assert_relative_eq!(
                rows[i][CH_SPEED],
                rows[i][CH_DISTANCE] / 7.0,
                max_relative = 1e-12
            );
        }
    }
}
