//! Grouping places into significant locations.
//!
//! Every location from one run shares a single radius. The radius itself is
//! chosen by sweeping a range of candidates, counting clusters at each one,
//! smoothing the count curve and picking the knee where it flattens out.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geo::{haversine_distance, planar_mean, GeoPoint};
use crate::ingest::PlacePoint;
use crate::{Error, Result};

/// Refinement stops once the center moves less than this many meters.
pub const CONVERGENCE_M: f64 = 1.0;
pub const MAX_ITERATIONS: usize = 100;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;
pub const DEFAULT_KNEE_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocationId(pub u32);

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A circle around a cluster of places.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub id: LocationId,
    pub center: GeoPoint,
    pub radius_m: f64,
    /// Indices into the clustered place list, ascending. Empty when the
    /// location was loaded from a file.
    pub members: Vec<usize>,
    pub member_count: usize,
}

impl Location {
    pub fn contains(&self, p: GeoPoint) -> bool {
        haversine_distance(self.center, p) <= self.radius_m
    }
}

pub fn place_points(places: &[PlacePoint]) -> Vec<GeoPoint> {
    places.iter().map(|p| p.fix.point).collect()
}

struct Candidate {
    center: GeoPoint,
    members: Vec<usize>,
}

fn within(points: &[GeoPoint], center: GeoPoint, radius: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| haversine_distance(center, **p) <= radius)
        .map(|(i, _)| i)
        .collect()
}

/// Mean-shift style refinement of a single cluster started at `seed`.
///
/// The result always contains `seed`: if the center wanders off it, the last
/// iterate that still covered it is returned instead.
fn refine(points: &[GeoPoint], seed: usize, radius: f64) -> Candidate {
    let mut center = points[seed];
    let mut members = within(points, center, radius);
    let mut fallback = (center, members.clone());
    for _ in 0..MAX_ITERATIONS {
        let Some(next) = planar_mean(center, members.iter().map(|&i| points[i])) else {
            break;
        };
        let moved = haversine_distance(center, next);
        center = next;
        members = within(points, center, radius);
        if members.binary_search(&seed).is_ok() {
            fallback = (center, members.clone());
        }
        if moved < CONVERGENCE_M {
            break;
        }
    }
    if members.binary_search(&seed).is_err() {
        (center, members) = fallback;
    }
    Candidate { center, members }
}

/// Clusters `points` with a fixed `radius_m`.
///
/// Clusters are grown from random unclaimed points until every point is
/// claimed. Clusters with no point of their own are then dropped, latest
/// first, and each point is owned by the nearest surviving center that covers
/// it. Locations come back sorted by descending member count.
pub fn cluster_at_radius(points: &[GeoPoint], radius_m: f64, seed: u64) -> Vec<Location> {
    assert!(radius_m > 0.0, "radius must be positive");
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut claimed = vec![false; n];
    let mut unclaimed: Vec<usize> = (0..n).collect();
    let mut candidates: Vec<Candidate> = Vec::new();

    while !unclaimed.is_empty() {
        let start = unclaimed[rng.random_range(0..unclaimed.len())];
        let candidate = refine(points, start, radius_m);
        for &m in &candidate.members {
            claimed[m] = true;
        }
        unclaimed.retain(|&i| !claimed[i]);
        candidates.push(candidate);
    }

    // Drop clusters owning no unique point, one at a time.
    let mut alive = vec![true; candidates.len()];
    let mut cover = vec![0usize; n];
    for c in &candidates {
        for &m in &c.members {
            cover[m] += 1;
        }
    }
    while let Some(k) = (0..candidates.len())
        .rev()
        .find(|&k| alive[k] && candidates[k].members.iter().all(|&m| cover[m] > 1))
    {
        alive[k] = false;
        for &m in &candidates[k].members {
            cover[m] -= 1;
        }
    }

    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); candidates.len()];
    for (i, p) in points.iter().enumerate() {
        let owner = candidates
            .iter()
            .enumerate()
            .filter(|(k, c)| alive[*k] && c.members.binary_search(&i).is_ok())
            .map(|(k, c)| (k, haversine_distance(c.center, *p)))
            .fold(None::<(usize, f64)>, |best, (k, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((k, d)),
            });
        if let Some((k, _)) = owner {
            owned[k].push(i);
        }
    }

    let mut survivors: Vec<(GeoPoint, Vec<usize>)> = candidates
        .into_iter()
        .zip(owned)
        .zip(alive)
        .filter(|(_, a)| *a)
        .map(|((c, o), _)| (c.center, o))
        .collect();
    survivors.sort_by_key(|s| std::cmp::Reverse(s.1.len()));
    survivors
        .into_iter()
        .enumerate()
        .map(|(id, (center, members))| Location {
            id: LocationId(id as u32),
            center,
            radius_m,
            member_count: members.len(),
            members,
        })
        .collect()
}

/// The id of the nearest location whose circle contains `p`; ties go to the lower id.
pub fn assign_location(p: GeoPoint, locations: &[Location]) -> Option<LocationId> {
    let mut sorted: Vec<&Location> = locations.iter().collect();
    sorted.sort_by_key(|l| l.id);
    sorted
        .into_iter()
        .filter_map(|l| {
            let d = haversine_distance(p, l.center);
            (d <= l.radius_m).then_some((l.id, d))
        })
        .fold(None::<(LocationId, f64)>, |best, (id, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((id, d)),
        })
        .map(|(id, _)| id)
}

/// Centered moving average; near the ends the window is clipped to the data.
pub fn smooth_counts(counts: &[usize], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = counts.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let slice = &counts[lo..=hi];
            slice.iter().sum::<usize>() as f64 / slice.len() as f64
        })
        .collect()
}

/// Evenly spaced radii `min, min + step, ...` up to and including `max`.
pub fn radii_range(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min > 0.0 && step > 0.0 && max >= min && min.is_finite() && max.is_finite()) {
        return Err(Error::InvalidRadii(format!("{min}:{max}:{step}")));
    }
    let steps = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=steps).map(|i| min + step * i as f64).collect())
}

/// 50 m to 1,000 m in 25 m steps.
pub fn default_radii() -> Vec<f64> {
    radii_range(50.0, 1_000.0, 25.0).expect("static range is valid")
}

/// Per-radius seed derived from the sweep seed (splitmix64 finalizer).
pub fn derived_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed
        ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub radii: Vec<f64>,
    pub seed: u64,
    pub smoothing_window: usize,
    pub knee_factor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            radii: default_radii(),
            seed: 0,
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            knee_factor: DEFAULT_KNEE_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knee {
    pub index: usize,
    pub radius_m: f64,
    /// False when the curve had no qualifying drop and the median radius was used.
    pub found: bool,
}

/// Cluster counts over a range of radii and the radius picked from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusSweep {
    pub radii: Vec<f64>,
    pub raw_counts: Vec<usize>,
    pub smoothed_counts: Vec<f64>,
    pub knee: Knee,
    pub seed: u64,
}

impl RadiusSweep {
    /// Builds a sweep from already computed counts.
    pub fn from_counts(
        radii: Vec<f64>,
        raw_counts: Vec<usize>,
        seed: u64,
        smoothing_window: usize,
        knee_factor: f64,
    ) -> Result<Self> {
        if radii.len() != raw_counts.len() {
            return Err(Error::InvalidRadii(
                "radii and counts differ in length".into(),
            ));
        }
        let smoothed_counts = smooth_counts(&raw_counts, smoothing_window);
        let knee = knee_of(
            &radii,
            &raw_counts,
            &smoothed_counts,
            smoothing_window / 2,
            knee_factor,
        )?;
        Ok(RadiusSweep {
            radii,
            raw_counts,
            smoothed_counts,
            knee,
            seed,
        })
    }

    pub fn chosen_radius(&self) -> f64 {
        self.knee.radius_m
    }

    /// Seed that reproduces the clustering counted at the chosen radius.
    pub fn chosen_seed(&self) -> u64 {
        derived_seed(self.seed, self.knee.index)
    }
}

pub fn sweep_radii(points: &[GeoPoint], opts: &SweepOptions) -> Result<RadiusSweep> {
    if points.is_empty() {
        return Err(Error::NothingToSweep);
    }
    validate_radii(&opts.radii)?;
    let counts: Vec<usize> = opts
        .radii
        .par_iter()
        .enumerate()
        .map(|(i, &r)| cluster_at_radius(points, r, derived_seed(opts.seed, i)).len())
        .collect();
    RadiusSweep::from_counts(
        opts.radii.clone(),
        counts,
        opts.seed,
        opts.smoothing_window,
        opts.knee_factor,
    )
}

fn validate_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidRadii("no radii".into()));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidRadii(
            "radii must be positive and ascending".into(),
        ));
    }
    Ok(())
}

/// Re-runs knee selection on a sweep's smoothed curve.
pub fn select_knee(sweep: &RadiusSweep, smoothing_window: usize, knee_factor: f64) -> Result<Knee> {
    knee_of(
        &sweep.radii,
        &sweep.raw_counts,
        &sweep.smoothed_counts,
        smoothing_window / 2,
        knee_factor,
    )
}

/// Scans the smoothed curve right to left for the first slope steeper than
/// `knee_factor` times the flat-tail slope.
///
/// The moving average spreads a drop `half_window` steps to the right, so the
/// hit is walked back across that spread for as long as the raw count stays
/// at its value at the hit.
fn knee_of(
    radii: &[f64],
    raw: &[usize],
    smoothed: &[f64],
    half_window: usize,
    knee_factor: f64,
) -> Result<Knee> {
    let n = radii.len();
    if n < 4 {
        return Err(Error::TooFewRadii(n));
    }
    validate_radii(radii)?;

    // slopes[j] is the derivative between radii j and j + 1.
    let slopes: Vec<f64> = (1..n)
        .map(|i| ((smoothed[i] - smoothed[i - 1]) / (radii[i] - radii[i - 1])).abs())
        .collect();
    let tail = ((slopes.len() as f64) * 0.25).ceil().max(1.0) as usize;
    let mut baseline = slopes[slopes.len() - tail..].iter().sum::<f64>() / tail as f64;
    if baseline == 0.0 {
        baseline = slopes.iter().sum::<f64>() / slopes.len() as f64 / 10.0;
    }
    let threshold = knee_factor * baseline;

    let Some(j) = (0..slopes.len()).rev().find(|&j| slopes[j] > threshold) else {
        let mid = (n - 1) / 2;
        return Ok(Knee {
            index: mid,
            radius_m: radii[mid],
            found: false,
        });
    };
    let hit = j + 1;
    let mut index = hit;
    while index > hit.saturating_sub(half_window) && raw[index - 1] == raw[hit] {
        index -= 1;
    }
    Ok(Knee {
        index,
        radius_m: radii[index],
        found: true,
    })
}
