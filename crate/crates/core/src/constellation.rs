//! Satellite catalog, epoch-wise positions and visibility.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{
    elevation_with_up, local_up, propagate_kepler, propagate_offset, seconds_between, EcefVector,
    OrbitalElements,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SatelliteClass {
    #[serde(rename = "GEO")]
    Geo,
    #[serde(rename = "IGSO")]
    Igso,
    #[serde(rename = "MEO")]
    Meo,
}

impl SatelliteClass {
    /// Class implied by the first letter of a Table-1 style id (G, I, M).
    pub fn from_id_prefix(id: &str) -> Option<Self> {
        match id.chars().next()? {
            'G' => Some(Self::Geo),
            'I' => Some(Self::Igso),
            'M' => Some(Self::Meo),
            _ => None,
        }
    }
}

impl fmt::Display for SatelliteClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Geo => "GEO",
            Self::Igso => "IGSO",
            Self::Meo => "MEO",
        })
    }
}

impl FromStr for SatelliteClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "GEO" => Ok(Self::Geo),
            "IGSO" => Ok(Self::Igso),
            "MEO" => Ok(Self::Meo),
            other => Err(format!("unknown satellite class {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatelliteRecord {
    pub id: String,
    pub class: SatelliteClass,
    pub elements: OrbitalElements,
}

impl SatelliteRecord {
    pub fn is_geo(&self) -> bool {
        self.class == SatelliteClass::Geo
    }

    /// ECEF position at `t`, with propagation errors tagged by satellite id.
    pub fn position_at(&self, t: DateTime<Utc>) -> Result<EcefVector> {
        propagate_kepler(&self.elements, t).map_err(|e| self.tag(e))
    }

    /// ECEF position at `t - delay` seconds.
    pub fn position_before(&self, t: DateTime<Utc>, delay: f64) -> Result<EcefVector> {
        let dt = seconds_between(self.elements.epoch, t) - delay;
        propagate_offset(&self.elements, dt).map_err(|e| self.tag(e))
    }

    fn tag(&self, e: Error) -> Error {
        Error::Propagation {
            sat: self.id.clone(),
            source: Box::new(e),
        }
    }
}

/// Ordered, non-empty set of satellites with unique ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    records: Vec<SatelliteRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SatellitePosition {
    pub id: String,
    pub class: SatelliteClass,
    pub position: EcefVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisibleSatellite {
    pub id: String,
    pub class: SatelliteClass,
    pub position: EcefVector,
    pub elevation: f64,
    pub is_geo: bool,
}

impl Catalog {
    pub fn new(records: Vec<SatelliteRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateSatellite(r.id.clone()));
            }
            r.elements.validate()?;
        }
        Ok(Self { records })
    }

    /// The 14-satellite constellation at 2015-05-19T04:00:00Z shipped with
    /// the crate.
    pub fn bundled() -> Self {
        crate::io::parse_elements(crate::io::BUNDLED_ELEMENTS.as_bytes(), "bds_elements.csv")
            .expect("bundled element table is valid")
    }

    pub fn records(&self) -> &[SatelliteRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SatelliteRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn geo_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_geo()).count()
    }

    /// Copy without the listed satellites. Fails if nothing would remain.
    pub fn without(&self, ids: &[&str]) -> Result<Self> {
        Self::new(
            self.records
                .iter()
                .filter(|r| !ids.contains(&r.id.as_str()))
                .cloned()
                .collect(),
        )
    }

    /// Sub-catalog holding only the records of one class, if any exist.
    pub fn of_class(&self, class: SatelliteClass) -> Option<Self> {
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.class == class)
            .cloned()
            .collect();
        (!records.is_empty()).then_some(Self { records })
    }

    pub fn positions_at(&self, t: DateTime<Utc>) -> Result<Vec<SatellitePosition>> {
        self.records
            .iter()
            .map(|r| {
                Ok(SatellitePosition {
                    id: r.id.clone(),
                    class: r.class,
                    position: r.position_at(t)?,
                })
            })
            .collect()
    }

    pub fn visible_satellites(
        &self,
        user: &EcefVector,
        t: DateTime<Utc>,
        cutoff: f64,
    ) -> Result<Vec<VisibleSatellite>> {
        let positions = self.positions_at(t)?;
        visible_from(&positions, user, cutoff)
    }

    pub fn count_visible_geos(
        &self,
        user: &EcefVector,
        t: DateTime<Utc>,
        cutoff: f64,
    ) -> Result<usize> {
        Ok(self
            .visible_satellites(user, t, cutoff)?
            .iter()
            .filter(|s| s.is_geo)
            .count())
    }
}

/// Filters precomputed positions by elevation at `user`.
pub fn visible_from(
    positions: &[SatellitePosition],
    user: &EcefVector,
    cutoff: f64,
) -> Result<Vec<VisibleSatellite>> {
    let up = local_up(user)?;
    Ok(positions
        .iter()
        .filter_map(|p| {
            let elevation = elevation_with_up(user, &up, &p.position);
            (elevation >= cutoff).then(|| VisibleSatellite {
                id: p.id.clone(),
                class: p.class,
                position: p.position,
                elevation,
                is_geo: p.class == SatelliteClass::Geo,
            })
        })
        .collect())
}
