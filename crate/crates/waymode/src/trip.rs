//! Rule-based trip breaking: split a per-user GPS stream on time gaps, then
//! stitch runs back together where the public transit network explains the
//! gap (underground metro legs, waits at bus intersections).

use crate::geo::{haversine_distance, GpsPoint};
use crate::{Error, Mode, Result};

/// An ordered GPS point sequence belonging to one user, with an optional
/// ground-truth mode label.
#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub user_id: String,
    pub points: Vec<GpsPoint>,
    pub mode_label: Option<Mode>,
}

impl Trip {
    pub fn new(
        user_id: impl Into<String>,
        points: Vec<GpsPoint>,
        mode_label: Option<Mode>,
    ) -> Trip {
        Trip {
            user_id: user_id.into(),
            points,
            mode_label,
        }
    }

    pub fn duration_s(&self) -> i64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0,
        }
    }
}

/// A named transit location (metro station or bus intersection).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitStop {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

impl TransitStop {
    pub fn new(name: impl Into<String>, lat: f64, lon: f64) -> TransitStop {
        TransitStop {
            name: name.into(),
            lat,
            lon,
        }
    }

    fn distance_to(&self, p: &GpsPoint) -> f64 {
        haversine_distance(&GpsPoint::new(0, self.lat, self.lon), p)
    }
}

/// Transit network parameters consulted by the stitching rules.
#[derive(Debug, Clone, Default)]
pub struct TransitInfrastructure {
    pub metro_stations: Vec<TransitStop>,
    pub bus_intersections: Vec<TransitStop>,
    /// Maximum plausible travel time by metro between two stations, in
    /// seconds. Network-dependent; 1800 s is a reasonable default for a
    /// mid-size system.
    pub max_metro_travel_s: i64,
}

impl TransitInfrastructure {
    pub fn empty() -> TransitInfrastructure {
        TransitInfrastructure {
            metro_stations: Vec::new(),
            bus_intersections: Vec::new(),
            max_metro_travel_s: 1800,
        }
    }
}

/// Tunable thresholds of the trip-breaking rules.
#[derive(Debug, Clone)]
pub struct BreakConfig {
    /// Split the stream wherever consecutive fixes are more than this far
    /// apart in time.
    pub gap_s: i64,
    /// A run boundary counts as "at a metro station" within this radius.
    pub metro_radius_m: f64,
    /// Both boundary points must fall within this radius of the same bus
    /// intersection for the extended-gap rule.
    pub intersection_radius_m: f64,
    /// Extended gap allowed at a bus intersection.
    pub extended_gap_s: i64,
    /// Plausibility guard: a stitch implying a straight-line bridge speed
    /// above this is discarded.
    pub max_bridge_speed_mps: f64,
}

impl Default for BreakConfig {
    fn default() -> BreakConfig {
        BreakConfig {
            gap_s: 180,
            metro_radius_m: 300.0,
            intersection_radius_m: 100.0,
            extended_gap_s: 600,
            max_bridge_speed_mps: 36.0,
        }
    }
}

/// Split a sorted point stream into runs at every time gap exceeding `gap_s`.
/// Every input point lands in exactly one run, order preserved.
pub fn split_on_gaps(points: &[GpsPoint], gap_s: i64) -> Vec<Vec<GpsPoint>> {
    let mut runs = Vec::new();
    let mut current: Vec<GpsPoint> = Vec::new();
    for p in points {
        if let Some(last) = current.last() {
            if p.timestamp - last.timestamp > gap_s {
                runs.push(std::mem::take(&mut current));
            }
        }
        current.push(*p);
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs
}

fn bridge_plausible(last: &GpsPoint, next: &GpsPoint, cfg: &BreakConfig) -> bool {
    let gap = next.timestamp - last.timestamp;
    if gap <= 0 {
        return false;
    }
    haversine_distance(last, next) / gap as f64 <= cfg.max_bridge_speed_mps
}

fn metro_stitchable(
    last: &GpsPoint,
    next: &GpsPoint,
    infra: &TransitInfrastructure,
    cfg: &BreakConfig,
) -> bool {
    let gap = next.timestamp - last.timestamp;
    if gap >= infra.max_metro_travel_s {
        return false;
    }
    let near = |p: &GpsPoint| {
        infra
            .metro_stations
            .iter()
            .any(|s| s.distance_to(p) <= cfg.metro_radius_m)
    };
    near(last) && near(next) && bridge_plausible(last, next, cfg)
}

fn intersection_stitchable(
    last: &GpsPoint,
    next: &GpsPoint,
    infra: &TransitInfrastructure,
    cfg: &BreakConfig,
) -> bool {
    let gap = next.timestamp - last.timestamp;
    if gap > cfg.extended_gap_s {
        return false;
    }
    // Both boundary points must sit at the *same* intersection.
    let same = infra.bus_intersections.iter().any(|s| {
        s.distance_to(last) <= cfg.intersection_radius_m
            && s.distance_to(next) <= cfg.intersection_radius_m
    });
    same && bridge_plausible(last, next, cfg)
}

fn stitch_pass<F>(runs: Vec<Vec<GpsPoint>>, can_merge: F) -> Vec<Vec<GpsPoint>>
where
    F: Fn(&GpsPoint, &GpsPoint) -> bool,
{
    let mut out: Vec<Vec<GpsPoint>> = Vec::with_capacity(runs.len());
    for run in runs {
        let merge = match (out.last(), run.first()) {
            (Some(prev), Some(first)) => prev
                .last()
                .map(|last| can_merge(last, first))
                .unwrap_or(false),
            _ => false,
        };
        if merge {
            out.last_mut().unwrap().extend(run);
        } else {
            out.push(run);
        }
    }
    out
}

/// Merge adjacent runs whose boundary points both sit near metro stations and
/// whose gap is shorter than the maximum metro travel time.
pub fn stitch_metro(
    runs: Vec<Vec<GpsPoint>>,
    infra: &TransitInfrastructure,
    cfg: &BreakConfig,
) -> Vec<Vec<GpsPoint>> {
    stitch_pass(runs, |last, next| metro_stitchable(last, next, infra, cfg))
}

/// Merge adjacent runs whose boundary points fall within the same bus
/// intersection, allowing an extended time gap there.
pub fn stitch_intersection(
    runs: Vec<Vec<GpsPoint>>,
    infra: &TransitInfrastructure,
    cfg: &BreakConfig,
) -> Vec<Vec<GpsPoint>> {
    stitch_pass(runs, |last, next| {
        intersection_stitchable(last, next, infra, cfg)
    })
}

/// Run the full trip-breaking pipeline on one user's sorted stream:
/// gap split, then metro and intersection stitching repeated to a fixpoint,
/// then dropping runs too short to be trips.
///
/// `labels`, when given, must parallel `points`; a trip inherits a label when
/// all of its labelled points agree.
pub fn break_trips(
    user_id: &str,
    points: &[GpsPoint],
    labels: Option<&[Option<Mode>]>,
    infra: &TransitInfrastructure,
    cfg: &BreakConfig,
) -> Result<Vec<Trip>> {
    for w in points.windows(2) {
        if w[1].timestamp <= w[0].timestamp {
            return Err(Error::data(format!(
                "timestamps not strictly increasing for user {user_id} at t={}",
                w[1].timestamp
            )));
        }
    }
    if let Some(ls) = labels {
        if ls.len() != points.len() {
            return Err(Error::data("labels length does not match points"));
        }
    }

    let mut runs = split_on_gaps(points, cfg.gap_s);
    // Stitching rules may cascade (a metro stitch enabling an intersection
    // stitch), so iterate to a fixpoint. Each pass only merges, so the run
    // count strictly decreases and the loop terminates.
    loop {
        let before = runs.len();
        runs = stitch_metro(runs, infra, cfg);
        runs = stitch_intersection(runs, infra, cfg);
        if runs.len() == before {
            break;
        }
    }

    // Runs partition the input in order, so labels can be consumed by cursor.
    let mut cursor = 0usize;
    let mut trips = Vec::new();
    for run in runs {
        let n = run.len();
        let label = labels.and_then(|ls| {
            let slice = &ls[cursor..cursor + n];
            let mut found: Option<Mode> = None;
            for l in slice.iter().flatten() {
                match found {
                    None => found = Some(*l),
                    Some(f) if f != *l => return None,
                    _ => {}
                }
            }
            found
        });
        cursor += n;
        if n >= 2 {
            trips.push(Trip::new(user_id, run, label));
        }
    }
    Ok(trips)
}
