//! Grid and time sweeps of 4-GEO visibility and the GEO GDOP gate.

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{visible_from, Catalog, SatellitePosition};
use crate::error::{Error, Result};
use crate::frames::{wrap_longitude, GeodeticPoint};
use crate::solver::{eigenvalue_gate, GeoNormalMatrix, SolverConfig};

const MAX_ALTITUDE_M: f64 = 2_000_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_step: f64,
    pub lon_step: f64,
    pub altitudes: Vec<f64>,
}

impl GridSpec {
    pub fn uniform(step: f64, altitudes: Vec<f64>) -> Self {
        Self {
            lat_step: step,
            lon_step: step,
            altitudes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat_step > 0.0 && self.lat_step <= 180.0) {
            return Err(Error::InvalidConfig(format!(
                "latitude step {} out of (0, 180]",
                self.lat_step
            )));
        }
        let turns = 360.0 / self.lon_step;
        if !(self.lon_step > 0.0) || (turns - turns.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "longitude step {} must divide 360",
                self.lon_step
            )));
        }
        if self.altitudes.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one altitude is required".into(),
            ));
        }
        if let Some(a) = self
            .altitudes
            .iter()
            .find(|a| !(0.0..=MAX_ALTITUDE_M).contains(*a))
        {
            return Err(Error::InvalidConfig(format!(
                "altitude {a} m outside [0, 2000 km]"
            )));
        }
        Ok(())
    }

    pub fn latitudes(&self) -> Vec<f64> {
        let n = (180.0 / self.lat_step + 1e-9).floor() as usize;
        (0..=n).map(|k| -90.0 + k as f64 * self.lat_step).collect()
    }

    /// Longitudes in (-180, 180].
    pub fn longitudes(&self) -> Vec<f64> {
        let n = (360.0 / self.lon_step).round() as usize;
        (1..=n).map(|k| -180.0 + k as f64 * self.lon_step).collect()
    }

    /// Grid points for one altitude, ordered by latitude then longitude. The
    /// poles appear once each.
    pub fn points_at(&self, altitude: f64) -> Vec<GeodeticPoint> {
        let lons = self.longitudes();
        let mut out = Vec::new();
        for lat in self.latitudes() {
            if lat.abs() == 90.0 {
                out.push(GeodeticPoint {
                    latitude: lat,
                    longitude: 0.0,
                    altitude,
                });
                continue;
            }
            out.extend(lons.iter().map(|&lon| GeodeticPoint {
                latitude: lat,
                longitude: lon,
                altitude,
            }));
        }
        out
    }

    /// All points, altitude-major.
    pub fn points(&self) -> Vec<GeodeticPoint> {
        self.altitudes
            .iter()
            .flat_map(|&a| self.points_at(a))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub point: GeodeticPoint,
    pub n_geo_visible: usize,
    /// Absent when fewer than four GEOs are visible.
    pub gdop_geo: Option<f64>,
    pub gate_pass: bool,
}

impl CoverageCell {
    pub fn has_four_geos(&self) -> bool {
        self.n_geo_visible >= 4
    }
}

/// GEO positions at `t`, the only satellites coverage looks at.
pub fn geo_positions(cat: &Catalog, t: DateTime<Utc>) -> Result<Vec<SatellitePosition>> {
    let geos: Vec<_> = cat.records().iter().filter(|r| r.is_geo()).collect();
    geos.iter()
        .map(|r| {
            Ok(SatellitePosition {
                id: r.id.clone(),
                class: r.class,
                position: r.position_at(t)?,
            })
        })
        .collect()
}

/// Evaluates one point against precomputed GEO positions.
pub fn evaluate_point(
    geos: &[SatellitePosition],
    point: &GeodeticPoint,
    cfg: &SolverConfig,
) -> Result<CoverageCell> {
    let user = point.to_ecef();
    let visible = visible_from(geos, &user, cfg.elevation_cutoff)?;
    let n = visible.len();
    let mut cell = CoverageCell {
        point: *point,
        n_geo_visible: n,
        gdop_geo: None,
        gate_pass: false,
    };
    if n < 4 {
        return Ok(cell);
    }
    let los: Vec<_> = visible
        .iter()
        .filter_map(|v| (v.position - user).unit())
        .collect();
    if let Ok(d) = GeoNormalMatrix::from_los(&los) {
        let verdict = eigenvalue_gate(&d, cfg.beta);
        cell.gdop_geo = Some(verdict.gdop);
        cell.gate_pass = verdict.pass;
    }
    Ok(cell)
}

pub fn evaluate_cell(
    cat: &Catalog,
    point: &GeodeticPoint,
    t: DateTime<Utc>,
    cfg: &SolverConfig,
) -> Result<CoverageCell> {
    if !(0.0..=MAX_ALTITUDE_M).contains(&point.altitude) {
        return Err(Error::InvalidConfig(format!(
            "altitude {} m outside [0, 2000 km]",
            point.altitude
        )));
    }
    evaluate_point(&geo_positions(cat, t)?, point, cfg)
}

/// All cells of `points` at one epoch, in input order.
pub fn evaluate_epoch(
    cat: &Catalog,
    points: &[GeodeticPoint],
    t: DateTime<Utc>,
    cfg: &SolverConfig,
) -> Result<Vec<CoverageCell>> {
    let geos = geo_positions(cat, t)?;
    points
        .par_iter()
        .map(|p| evaluate_point(&geos, p, cfg))
        .collect()
}

/// Longitude interval `[west, east]`, read eastward; `west > east` when it
/// crosses the antimeridian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extents {
    pub lon_west: f64,
    pub lon_east: f64,
    pub lat_south: f64,
    pub lat_north: f64,
}

impl Extents {
    pub fn lon_width(&self) -> f64 {
        (self.lon_east - self.lon_west).rem_euclid(360.0)
    }

    /// True when `other` lies strictly inside on every side.
    pub fn strictly_contains(&self, other: &Extents) -> bool {
        let off = |lon: f64| (lon - self.lon_west).rem_euclid(360.0);
        let width = self.lon_width();
        let (w, e) = (off(other.lon_west), off(other.lon_east));
        w > 0.0
            && e < width
            && w <= e
            && other.lat_south > self.lat_south
            && other.lat_north < self.lat_north
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub altitude: f64,
    /// Cells with at least four visible GEOs.
    pub cells: Vec<CoverageCell>,
    pub extents: Option<Extents>,
}

/// Smallest eastward arc covering every longitude: the complement of the
/// widest empty gap.
fn longitude_extent(lons: &[f64]) -> (f64, f64) {
    let mut sorted: Vec<f64> = lons.iter().map(|&l| wrap_longitude(l)).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let n = sorted.len();
    let mut best_gap = -1.0;
    let mut west = sorted[0];
    let mut east = sorted[n - 1];
    for i in 0..n {
        let a = sorted[i];
        let b = sorted[(i + 1) % n];
        let gap = if i + 1 == n { b + 360.0 - a } else { b - a };
        if gap > best_gap {
            best_gap = gap;
            west = b;
            east = a;
        }
    }
    (west, east)
}

pub fn footprint(
    cat: &Catalog,
    t: DateTime<Utc>,
    cfg: &SolverConfig,
    grid: &GridSpec,
) -> Result<Vec<Footprint>> {
    grid.validate()?;
    let geos = geo_positions(cat, t)?;
    grid.altitudes
        .iter()
        .map(|&alt| {
            let points = grid.points_at(alt);
            let cells: Vec<CoverageCell> = points
                .par_iter()
                .map(|p| evaluate_point(&geos, p, cfg))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter(CoverageCell::has_four_geos)
                .collect();
            let extents = (!cells.is_empty()).then(|| {
                let lons: Vec<f64> = cells.iter().map(|c| c.point.longitude).collect();
                let (lon_west, lon_east) = longitude_extent(&lons);
                let lats = cells.iter().map(|c| c.point.latitude);
                Extents {
                    lon_west,
                    lon_east,
                    lat_south: lats.clone().fold(f64::INFINITY, f64::min),
                    lat_north: lats.fold(f64::NEG_INFINITY, f64::max),
                }
            });
            Ok(Footprint {
                altitude: alt,
                cells,
                extents,
            })
        })
        .collect()
}

/// Sweep epochs: `start + k * step` for `k * step < duration`, at least one.
pub fn sweep_epochs(start: DateTime<Utc>, duration: f64, step: f64) -> Result<Vec<DateTime<Utc>>> {
    if !(step > 0.0) || !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "need step > 0 and duration >= 0, got step {step}, duration {duration}"
        )));
    }
    let count = ((duration / step).ceil() as usize).max(1);
    Ok((0..count)
        .map(|k| start + Duration::nanoseconds((k as f64 * step * 1e9).round() as i64))
        .collect())
}

/// Proportion of gate-passing cells among those with four visible GEOs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionStats {
    /// `None` for an epoch with no 4-GEO cell.
    pub per_epoch: Vec<Option<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Total passing over total eligible, across every epoch.
    pub overall: Option<f64>,
    pub eligible_cells: u64,
    pub passing_cells: u64,
}

impl ProportionStats {
    fn from_counts(counts: &[(u64, u64)]) -> Self {
        let per_epoch: Vec<Option<f64>> = counts
            .iter()
            .map(|&(elig, pass)| (elig > 0).then(|| pass as f64 / elig as f64))
            .collect();
        let present = per_epoch.iter().flatten().copied();
        let min = present.clone().reduce(f64::min);
        let max = present.reduce(f64::max);
        let eligible_cells = counts.iter().map(|c| c.0).sum();
        let passing_cells = counts.iter().map(|c| c.1).sum();
        Self {
            per_epoch,
            min,
            max,
            overall: (eligible_cells > 0).then(|| passing_cells as f64 / eligible_cells as f64),
            eligible_cells,
            passing_cells,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AltitudeStats {
    pub altitude: f64,
    #[serde(flatten)]
    pub stats: ProportionStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub epochs: Vec<DateTime<Utc>>,
    pub beta: f64,
    pub per_altitude: Vec<AltitudeStats>,
    /// All altitudes pooled.
    pub combined: ProportionStats,
}

/// `(eligible, passing)` counts per altitude for one epoch's cells.
fn count_cells(cells: &[CoverageCell], altitudes: &[f64]) -> Vec<(u64, u64)> {
    altitudes
        .iter()
        .map(|&a| {
            cells
                .iter()
                .filter(|c| c.point.altitude == a && c.has_four_geos())
                .fold((0, 0), |(e, p), c| (e + 1, p + u64::from(c.gate_pass)))
        })
        .collect()
}

/// Summarizes already-evaluated epochs (one cell vector per epoch).
pub fn summarize(
    epochs: &[DateTime<Utc>],
    cells: &[Vec<CoverageCell>],
    grid: &GridSpec,
    beta: f64,
) -> SweepSummary {
    let counts: Vec<Vec<(u64, u64)>> = cells
        .iter()
        .map(|c| count_cells(c, &grid.altitudes))
        .collect();
    summary_from_counts(epochs.to_vec(), &counts, grid, beta)
}

fn summary_from_counts(
    epochs: Vec<DateTime<Utc>>,
    counts: &[Vec<(u64, u64)>],
    grid: &GridSpec,
    beta: f64,
) -> SweepSummary {
    let per_altitude = grid
        .altitudes
        .iter()
        .enumerate()
        .map(|(i, &altitude)| AltitudeStats {
            altitude,
            stats: ProportionStats::from_counts(&counts.iter().map(|c| c[i]).collect::<Vec<_>>()),
        })
        .collect();
    let pooled: Vec<(u64, u64)> = counts
        .iter()
        .map(|c| c.iter().fold((0, 0), |(e, p), &(ce, cp)| (e + ce, p + cp)))
        .collect();
    SweepSummary {
        epochs,
        beta,
        per_altitude,
        combined: ProportionStats::from_counts(&pooled),
    }
}

pub fn sweep(
    cat: &Catalog,
    start: DateTime<Utc>,
    duration: f64,
    step: f64,
    grid: &GridSpec,
    cfg: &SolverConfig,
) -> Result<SweepSummary> {
    grid.validate()?;
    let epochs = sweep_epochs(start, duration, step)?;
    let points = grid.points();
    let counts = epochs
        .par_iter()
        .map(|&t| {
            let geos = geo_positions(cat, t)?;
            let cells = points
                .iter()
                .map(|p| evaluate_point(&geos, p, cfg))
                .collect::<Result<Vec<_>>>()?;
            Ok(count_cells(&cells, &grid.altitudes))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summary_from_counts(epochs, &counts, grid, cfg.beta))
}
