//! File formats: elements CSV, measurements JSON-lines, result JSON and
//! coverage CSV. All writers go through a temporary file and a rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::constellation::{Catalog, SatelliteClass, SatelliteRecord};
use crate::coverage::CoverageCell;
use crate::error::{Error, Result};
use crate::frames::{ecef_to_geodetic, OrbitalElements, SPEED_OF_LIGHT};
use crate::measurements::{Measurement, MeasurementKind, MeasurementSet, Modulus};
use crate::solver::SolveResult;

/// Table of the 14-satellite constellation at 2015-05-19T04:00:00Z.
pub const BUNDLED_ELEMENTS: &str = include_str!("../data/bds_elements.csv");

#[derive(Debug, Serialize, Deserialize)]
struct ElementRow {
    sat_id: String,
    class: String,
    semi_major_axis_m: f64,
    eccentricity: f64,
    inclination_deg: f64,
    raan_deg: f64,
    arg_perigee_deg: f64,
    true_anomaly_deg: f64,
    epoch_utc: DateTime<Utc>,
}

pub fn read_elements(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_elements(file, path)
}

/// Parses an elements CSV; `label` names the source in error messages.
pub fn parse_elements(reader: impl Read, label: impl AsRef<Path>) -> Result<Catalog> {
    let label = label.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    for row in rdr.deserialize::<ElementRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(label, line, e.to_string())
        })?;
        let line = records.len() as u64 + 2;
        let class: SatelliteClass = row
            .class
            .parse()
            .map_err(|m: String| Error::parse(label, line, m))?;
        if let Some(implied) = SatelliteClass::from_id_prefix(&row.sat_id) {
            if implied != class {
                return Err(Error::parse(
                    label,
                    line,
                    format!(
                        "{} is labelled {class} but its id implies {implied}",
                        row.sat_id
                    ),
                ));
            }
        }
        let elements = OrbitalElements {
            semi_major_axis: row.semi_major_axis_m,
            eccentricity: row.eccentricity,
            inclination: row.inclination_deg,
            raan: row.raan_deg,
            arg_perigee: row.arg_perigee_deg,
            true_anomaly: row.true_anomaly_deg,
            epoch: row.epoch_utc,
        };
        elements
            .validate()
            .map_err(|e| Error::parse(label, line, e.to_string()))?;
        records.push(SatelliteRecord {
            id: row.sat_id,
            class,
            elements,
        });
    }
    Catalog::new(records)
}

pub fn write_elements(cat: &Catalog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in cat.records() {
        let e = &r.elements;
        w.serialize(ElementRow {
            sat_id: r.id.clone(),
            class: r.class.to_string(),
            semi_major_axis_m: e.semi_major_axis,
            eccentricity: e.eccentricity,
            inclination_deg: e.inclination,
            raan_deg: e.raan,
            arg_perigee_deg: e.arg_perigee,
            true_anomaly_deg: e.true_anomaly,
            epoch_utc: e.epoch,
        })
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasurementLine {
    epoch: String,
    sat: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modulus_ms: Option<u32>,
    value_m: f64,
}

pub fn format_epoch(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_epoch(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad ISO-8601 timestamp {s:?}: {e}"))
}

/// Reads measurement sets grouped by epoch, in ascending epoch order.
pub fn read_measurements(path: impl AsRef<Path>) -> Result<Vec<MeasurementSet>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_measurements(BufReader::new(file), path)
}

pub fn parse_measurements(
    reader: impl BufRead,
    label: impl AsRef<Path>,
) -> Result<Vec<MeasurementSet>> {
    let label = label.as_ref();
    let mut groups: BTreeMap<DateTime<Utc>, Vec<(u64, Measurement)>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx as u64 + 1;
        let line = line.map_err(|e| Error::io(label, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MeasurementLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(label, lineno, e.to_string()))?;
        let epoch = parse_epoch(&rec.epoch).map_err(|m| Error::parse(label, lineno, m))?;
        let kind = match (rec.kind.as_str(), rec.modulus_ms) {
            ("full", None) => MeasurementKind::Full,
            ("full", Some(_)) => {
                return Err(Error::parse(
                    label,
                    lineno,
                    "modulus_ms given for a full measurement",
                ))
            }
            ("fractional", Some(ms)) => {
                MeasurementKind::Fractional(Modulus::from_ms(ms).ok_or_else(|| {
                    Error::parse(
                        label,
                        lineno,
                        format!("modulus_ms must be 1 or 20, got {ms}"),
                    )
                })?)
            }
            ("fractional", None) => {
                return Err(Error::parse(
                    label,
                    lineno,
                    "fractional measurement without modulus_ms",
                ))
            }
            (other, _) => {
                return Err(Error::parse(
                    label,
                    lineno,
                    format!("unknown kind {other:?}"),
                ))
            }
        };
        let m = Measurement {
            sat_id: rec.sat,
            kind,
            value: rec.value_m,
        };
        m.validate()
            .map_err(|e| Error::parse(label, lineno, e.to_string()))?;
        groups.entry(epoch).or_default().push((lineno, m));
    }
    groups
        .into_iter()
        .map(|(epoch, rows)| {
            let first_line = rows.first().map_or(0, |r| r.0);
            MeasurementSet::new(epoch, rows.into_iter().map(|(_, m)| m).collect())
                .map_err(|e| Error::parse(label, first_line, e.to_string()))
        })
        .collect()
}

pub fn format_measurements(sets: &[MeasurementSet]) -> String {
    let mut out = String::new();
    for set in sets {
        let epoch = format_epoch(set.epoch);
        for m in set.measurements() {
            let (kind, modulus_ms) = match m.kind {
                MeasurementKind::Full => ("full", None),
                MeasurementKind::Fractional(md) => ("fractional", Some(md.millis())),
            };
            let line = MeasurementLine {
                epoch: epoch.clone(),
                sat: m.sat_id.clone(),
                kind: kind.into(),
                modulus_ms,
                value_m: m.value,
            };
            out.push_str(&serde_json::to_string(&line).expect("plain record serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn write_measurements(sets: &[MeasurementSet], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_measurements(sets).as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lla {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityRecord {
    pub sat: String,
    #[serde(rename = "N")]
    pub n: i64,
}

/// JSON view of a [`SolveResult`]. Position, clock and ambiguities are only
/// present for converged solutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_ecef_m: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_lla: Option<Lla>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clock_bias_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clock_bias_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambiguities: Option<Vec<AmbiguityRecord>>,
    /// Null when the GEO geometry is singular.
    pub gdop_geo: Option<f64>,
    pub iterations: usize,
}

impl ResultRecord {
    pub fn from_result(res: &SolveResult, epoch: Option<DateTime<Utc>>) -> Self {
        let converged = res.is_converged();
        let lla = converged
            .then(|| ecef_to_geodetic(&res.state.position).ok())
            .flatten()
            .map(|g| Lla {
                lat_deg: g.latitude,
                lon_deg: g.longitude,
                alt_m: g.altitude,
            });
        Self {
            status: res.status.as_str().into(),
            epoch: epoch.map(format_epoch),
            position_ecef_m: converged.then(|| res.state.position.to_array()),
            position_lla: lla,
            clock_bias_m: converged.then_some(res.state.clock_bias),
            clock_bias_s: converged.then(|| res.state.clock_bias / SPEED_OF_LIGHT),
            ambiguities: converged.then(|| {
                res.fixed_ambiguities
                    .iter()
                    .map(|a| AmbiguityRecord {
                        sat: a.sat_id.clone(),
                        n: a.n,
                    })
                    .collect()
            }),
            gdop_geo: res.gdop_geo.is_finite().then_some(res.gdop_geo),
            iterations: res.iterations,
        }
    }
}

pub fn write_result(
    res: &SolveResult,
    epoch: Option<DateTime<Utc>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_json(&ResultRecord::from_result(res, epoch), path)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("plain records serialize");
    bytes.push(b'\n');
    write_atomic(path.as_ref(), &bytes)
}

/// One coverage CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageRow {
    pub epoch: DateTime<Utc>,
    pub cell: CoverageCell,
}

#[derive(Debug, Serialize, Deserialize)]
struct CoverageCsv {
    epoch_utc: String,
    lat_deg: f64,
    lon_deg: f64,
    alt_m: f64,
    n_geo: usize,
    gdop_geo: Option<f64>,
    gate_pass: u8,
}

/// Writes rows sorted by (epoch, lat, lon, alt).
pub fn write_coverage(rows: &[CoverageRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&CoverageRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.epoch
            .cmp(&b.epoch)
            .then(a.cell.point.latitude.total_cmp(&b.cell.point.latitude))
            .then(a.cell.point.longitude.total_cmp(&b.cell.point.longitude))
            .then(a.cell.point.altitude.total_cmp(&b.cell.point.altitude))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in sorted {
        w.serialize(CoverageCsv {
            epoch_utc: format_epoch(r.epoch),
            lat_deg: r.cell.point.latitude,
            lon_deg: r.cell.point.longitude,
            alt_m: r.cell.point.altitude,
            n_geo: r.cell.n_geo_visible,
            gdop_geo: r.cell.gdop_geo,
            gate_pass: u8::from(r.cell.gate_pass),
        })
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
