//! Seeded synthetic labeled-trajectory generator.
//!
//! Real labeled GPS corpora are rarely shareable, so tests and benchmarks
//! run on generated trips instead. Each mode gets a motion profile (speed
//! band, acceleration jitter, heading noise, stop behaviour) and trips are
//! random walks in speed/heading space integrated to latitude/longitude.
//! Generation is a pure function of the seed.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::geo::GpsPoint;
use crate::par;
use crate::trip::Trip;
use crate::Mode;

const M_PER_DEG_LAT: f64 = 111_194.92664455873;

/// Speed change per step is capped at this fraction of the default
/// 10 m/s² acceleration filter, so generated trips always pass it.
const ACCEL_HEADROOM: f64 = 0.45;
const MAX_ACCEL_MPS2: f64 = 10.0;

/// Motion characteristics of one transportation mode.
#[derive(Debug, Clone)]
pub struct ModeProfile {
    pub mode: Mode,
    /// Closed speed band the target speed wanders in, m/s.
    pub speed_range_mps: (f64, f64),
    /// Std of the per-second drift applied to the target speed, m/s².
    pub accel_std: f64,
    /// Std of the per-step heading change, degrees.
    pub heading_change_std_deg: f64,
    /// Chance per step of entering a multi-step stop (transit stations,
    /// traffic lights).
    pub stop_probability: f64,
    /// Uniform sampling-interval band, seconds.
    pub sample_interval_s: (i64, i64),
}

/// One profile per mode, tuned so the modes overlap enough to be
/// non-trivial but remain separable: walkers are slow and wander, bikes
/// are faster with moderate wander, transit moves fast but keeps stopping,
/// cars are fast with steady headings.
pub fn default_profiles() -> Vec<ModeProfile> {
    vec![
        ModeProfile {
            mode: Mode::Walk,
            speed_range_mps: (0.5, 2.5),
            accel_std: 0.06,
            heading_change_std_deg: 35.0,
            stop_probability: 0.0,
            sample_interval_s: (8, 16),
        },
        ModeProfile {
            mode: Mode::Bike,
            speed_range_mps: (2.0, 8.0),
            accel_std: 0.18,
            heading_change_std_deg: 14.0,
            stop_probability: 0.02,
            sample_interval_s: (6, 14),
        },
        ModeProfile {
            mode: Mode::Transit,
            speed_range_mps: (0.0, 15.0),
            accel_std: 0.55,
            heading_change_std_deg: 7.0,
            stop_probability: 0.18,
            sample_interval_s: (4, 12),
        },
        ModeProfile {
            mode: Mode::Car,
            speed_range_mps: (0.0, 25.0),
            accel_std: 0.50,
            heading_change_std_deg: 4.0,
            stop_probability: 0.03,
            sample_interval_s: (4, 12),
        },
    ]
}

fn normal(rng: &mut ChaCha20Rng, std: f64) -> f64 {
    if std <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).unwrap().sample(rng)
}

/// Generate one labeled trip of `n_points` fixes starting at `origin`.
/// Identical arguments always produce the identical trip.
pub fn generate_trip(profile: &ModeProfile, n_points: usize, origin: &GpsPoint, seed: u64) -> Trip {
    assert!(n_points >= 2, "a trip needs at least two points");
    let (lo, hi) = profile.speed_range_mps;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut v = rng.random_range(lo + 0.25 * (hi - lo)..=hi);
    let mut target = v;
    let mut heading: f64 = rng.random_range(0.0..360.0);
    let mut lat = origin.lat;
    let mut lon = origin.lon;
    let mut t = origin.timestamp;
    let mut stop_steps = 0u32;

    let mut points = Vec::with_capacity(n_points);
    points.push(GpsPoint::new(t, lat, lon));
    for _ in 1..n_points {
        let dt = rng.random_range(profile.sample_interval_s.0..=profile.sample_interval_s.1);
        let dts = dt as f64;

        let target_now = if stop_steps > 0 {
            stop_steps -= 1;
            0.05
        } else if profile.stop_probability > 0.0 && rng.random::<f64>() < profile.stop_probability {
            stop_steps = rng.random_range(2..=5);
            0.05
        } else {
            target = (target + normal(&mut rng, profile.accel_std) * dts).clamp(lo, hi);
            target
        };

        let max_dv = ACCEL_HEADROOM * MAX_ACCEL_MPS2 * dts;
        v = (v + (target_now - v).clamp(-max_dv, max_dv)).clamp(0.0, hi);
        heading = (heading + normal(&mut rng, profile.heading_change_std_deg)).rem_euclid(360.0);

        let dist = v * dts;
        let theta = heading.to_radians();
        lat += dist * theta.cos() / M_PER_DEG_LAT;
        lon += dist * theta.sin() / (M_PER_DEG_LAT * lat.to_radians().cos());
        t += dt;
        points.push(GpsPoint::new(t, lat, lon));
    }

    Trip::new(format!("synth-{seed:016x}"), points, Some(profile.mode))
}

/// Generate a balanced corpus: `trips_per_mode` trips for every profile,
/// each from its own seed derived from `seed`. Trip lengths and origins
/// vary per trip; output order is profile-major, so labels come in blocks.
pub fn generate_dataset(profiles: &[ModeProfile], trips_per_mode: usize, seed: u64) -> Vec<Trip> {
    let mut master = StdRng::seed_from_u64(seed);
    let mut jobs = Vec::with_capacity(profiles.len() * trips_per_mode);
    for profile in profiles {
        for i in 0..trips_per_mode {
            let trip_seed: u64 = master.random();
            let n_points = master.random_range(60..=150);
            let origin = GpsPoint::new(
                1_700_000_000,
                master.random_range(45.40..45.62),
                master.random_range(-73.75..-73.45),
            );
            let user = format!("synth-{}-{i:04}", profile.mode.name());
            jobs.push((profile.clone(), n_points, origin, trip_seed, user));
        }
    }
    par::map_slice(&jobs, |(profile, n_points, origin, trip_seed, user)| {
        let mut trip = generate_trip(profile, *n_points, origin, *trip_seed);
        trip.user_id = user.clone();
        trip
    })
}
