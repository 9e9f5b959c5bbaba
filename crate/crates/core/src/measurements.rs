//! Pseudorange measurements: full and fractional observables, the
//! transmit-time fixed point, and the scenario simulator.

use std::collections::HashSet;
use std::fmt;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constellation::{Catalog, SatelliteRecord};
use crate::error::{Error, Result};
use crate::frames::{sagnac_correct, EcefVector, GeodeticPoint, SPEED_OF_LIGHT};
use crate::solver::NavState;

/// Number of fixed-point refinements of the signal travel time.
pub const TRAVEL_TIME_ITERATIONS: usize = 2;

/// Period after which a fractional pseudorange wraps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulus {
    /// One ranging-code period.
    OneMs,
    /// One navigation data bit.
    TwentyMs,
}

impl Modulus {
    pub fn from_ms(ms: u32) -> Option<Self> {
        match ms {
            1 => Some(Self::OneMs),
            20 => Some(Self::TwentyMs),
            _ => None,
        }
    }

    pub fn millis(self) -> u32 {
        match self {
            Self::OneMs => 1,
            Self::TwentyMs => 20,
        }
    }

    pub fn seconds(self) -> f64 {
        f64::from(self.millis()) * 1e-3
    }

    /// Distance light covers in one period, `c_T` (m).
    pub fn length(self) -> f64 {
        SPEED_OF_LIGHT * self.seconds()
    }
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.millis())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementKind {
    Full,
    Fractional(Modulus),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub sat_id: String,
    pub kind: MeasurementKind,
    /// Pseudorange in meters.
    pub value: f64,
}

impl Measurement {
    pub fn full(sat_id: impl Into<String>, value: f64) -> Self {
        Self {
            sat_id: sat_id.into(),
            kind: MeasurementKind::Full,
            value,
        }
    }

    pub fn fractional(sat_id: impl Into<String>, value: f64, modulus: Modulus) -> Self {
        Self {
            sat_id: sat_id.into(),
            kind: MeasurementKind::Fractional(modulus),
            value,
        }
    }

    pub fn modulus(&self) -> Option<Modulus> {
        match self.kind {
            MeasurementKind::Full => None,
            MeasurementKind::Fractional(m) => Some(m),
        }
    }

    pub fn is_full(&self) -> bool {
        self.kind == MeasurementKind::Full
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            MeasurementKind::Full => self.value > 0.0 && self.value.is_finite(),
            MeasurementKind::Fractional(m) => (0.0..m.length()).contains(&self.value),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMeasurements(match self.kind {
                MeasurementKind::Full => {
                    format!(
                        "{}: full pseudorange {} must be positive",
                        self.sat_id, self.value
                    )
                }
                MeasurementKind::Fractional(m) => format!(
                    "{}: fractional pseudorange {} outside [0, {})",
                    self.sat_id,
                    self.value,
                    m.length()
                ),
            }))
        }
    }
}

/// Measurements sharing one reception epoch, at most one per satellite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub epoch: DateTime<Utc>,
    measurements: Vec<Measurement>,
}

impl MeasurementSet {
    pub fn new(epoch: DateTime<Utc>, measurements: Vec<Measurement>) -> Result<Self> {
        let mut seen = HashSet::new();
        for m in &measurements {
            m.validate()?;
            if !seen.insert(m.sat_id.as_str()) {
                return Err(Error::InvalidMeasurements(format!(
                    "satellite {} measured twice",
                    m.sat_id
                )));
            }
        }
        Ok(Self {
            epoch,
            measurements,
        })
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn full_count(&self) -> usize {
        self.measurements.iter().filter(|m| m.is_full()).count()
    }

    pub fn fractional_count(&self) -> usize {
        self.len() - self.full_count()
    }
}

/// Splits a full pseudorange into its fractional part and integer ambiguity.
///
/// `fractional + true_n * c_T` reproduces `z_full` exactly in floating point.
pub fn truncate_fractional(z_full: f64, modulus: Modulus) -> (f64, i64) {
    let ct = modulus.length();
    let mut n = (z_full / ct).floor() as i64;
    let mut frac = z_full - n as f64 * ct;
    if frac < 0.0 {
        n -= 1;
        frac = z_full - n as f64 * ct;
    } else if frac >= ct {
        n += 1;
        frac = z_full - n as f64 * ct;
    }
    (frac, n)
}

/// Full pseudorange from a fractional value and its ambiguity.
pub fn reconstruct_full(fractional: f64, n: i64, modulus: Modulus) -> f64 {
    fractional + n as f64 * modulus.length()
}

/// Pseudorange model: range plus clock bias plus noise, all in meters.
pub fn simulate_full(
    sat_pos: EcefVector,
    user_pos: EcefVector,
    clock_bias_m: f64,
    noise: f64,
) -> f64 {
    (sat_pos - user_pos).norm() + clock_bias_m + noise
}

/// Satellite position at transmission, expressed in the ECEF frame at
/// reception, together with the signal travel time.
///
/// The travel time starts from the receive-time geometric range and is
/// refined [`TRAVEL_TIME_ITERATIONS`] times.
pub fn satellite_at_transmit(
    record: &SatelliteRecord,
    t_rx: DateTime<Utc>,
    receiver: EcefVector,
) -> Result<(EcefVector, f64)> {
    let mut tau = (record.position_at(t_rx)? - receiver).norm() / SPEED_OF_LIGHT;
    for _ in 0..TRAVEL_TIME_ITERATIONS {
        let p = sagnac_correct(record.position_before(t_rx, tau)?, tau);
        tau = (p - receiver).norm() / SPEED_OF_LIGHT;
    }
    Ok((sagnac_correct(record.position_before(t_rx, tau)?, tau), tau))
}

/// Seeded zero-mean Gaussian range noise.
pub struct NoiseSource {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl NoiseSource {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidConfig(format!("noise sigma {sigma}: {e}")))?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal,
        })
    }

    pub fn sample(&mut self) -> f64 {
        self.normal.sample(&mut self.rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub user_truth: GeodeticPoint,
    /// Receiver clock bias in seconds.
    pub clock_bias: f64,
    /// One-sigma pseudorange noise in meters.
    pub noise_sigma: f64,
    pub seed: u64,
    pub fractional_modulus: Modulus,
    pub elevation_cutoff: f64,
    /// Satellites whose signals are not received.
    pub exclude: Vec<String>,
}

impl SimulationScenario {
    /// 5 s clock bias, 1.3 m noise, 0° cutoff, 1 ms truncation.
    pub fn standard(user_truth: GeodeticPoint, seed: u64) -> Self {
        Self {
            user_truth,
            clock_bias: 5.0,
            noise_sigma: 1.3,
            seed,
            fractional_modulus: Modulus::OneMs,
            elevation_cutoff: 0.0,
            exclude: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrueAmbiguity {
    pub sat_id: String,
    pub n: i64,
}

/// Output of [`simulate_scenario`].
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    /// Full GEO and fractional non-GEO measurements.
    pub measurements: MeasurementSet,
    /// The same noise realization with every satellite full.
    pub full_measurements: MeasurementSet,
    pub truth: NavState,
    pub true_ambiguities: Vec<TrueAmbiguity>,
    pub geo_visible: usize,
    /// Set when fewer than four GEOs are in view.
    pub warning: Option<String>,
}

pub fn simulate_scenario(
    cat: &Catalog,
    scen: &SimulationScenario,
    t: DateTime<Utc>,
) -> Result<Simulation> {
    if !(scen.noise_sigma >= 0.0) {
        return Err(Error::InvalidConfig(
            "noise sigma must be non-negative".into(),
        ));
    }
    let user = scen.user_truth.to_ecef();
    let clock_bias_m = scen.clock_bias * SPEED_OF_LIGHT;
    let visible: Vec<_> = cat
        .visible_satellites(&user, t, scen.elevation_cutoff)?
        .into_iter()
        .filter(|v| !scen.exclude.iter().any(|x| x == &v.id))
        .collect();
    if visible.is_empty() {
        return Err(Error::NoVisibleSatellites);
    }

    let mut noise = NoiseSource::new(scen.noise_sigma, scen.seed)?;
    let mut fast = Vec::with_capacity(visible.len());
    let mut full = Vec::with_capacity(visible.len());
    let mut ambiguities = Vec::new();
    for v in &visible {
        let record = cat
            .get(&v.id)
            .ok_or_else(|| Error::UnknownSatellite(v.id.clone()))?;
        let (sat, _) = satellite_at_transmit(record, t, user)?;
        let z = simulate_full(sat, user, clock_bias_m, noise.sample());
        full.push(Measurement::full(&v.id, z));
        if v.is_geo {
            fast.push(Measurement::full(&v.id, z));
        } else {
            let (frac, n) = truncate_fractional(z, scen.fractional_modulus);
            fast.push(Measurement::fractional(
                &v.id,
                frac,
                scen.fractional_modulus,
            ));
            ambiguities.push(TrueAmbiguity {
                sat_id: v.id.clone(),
                n,
            });
        }
    }

    let geo_visible = visible.iter().filter(|v| v.is_geo).count();
    let warning = (geo_visible < 4)
        .then(|| format!("only {geo_visible} GEOs visible; at least 4 are required"));
    Ok(Simulation {
        measurements: MeasurementSet::new(t, fast)?,
        full_measurements: MeasurementSet::new(t, full)?,
        truth: NavState {
            position: user,
            clock_bias: clock_bias_m,
            ambiguities: ambiguities.iter().map(|a| a.n as f64).collect(),
        },
        true_ambiguities: ambiguities,
        geo_visible,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epoch() -> DateTime<Utc> {
        "2015-05-19T04:00:00Z".parse().unwrap()
    }

    #[test]
    fn exact_multiple_truncates_to_zero() {
        assert_eq!(
            truncate_fractional(SPEED_OF_LIGHT * 0.001, Modulus::OneMs),
            (0.0, 1)
        );
    }

    #[test]
    fn modulo_arithmetic() {
        let (frac, n) = truncate_fractional(36_500_000.0, Modulus::OneMs);
        assert_eq!(n, 121);
        assert_eq!(frac, 36_500_000.0 - 121.0 * 299_792.458);
        assert_eq!(reconstruct_full(frac, n, Modulus::OneMs), 36_500_000.0);
    }

    #[test]
    fn twenty_ms_modulus() {
        let (frac, n) = truncate_fractional(36_500_000.0, Modulus::TwentyMs);
        assert_eq!(n, 6);
        assert!((0.0..Modulus::TwentyMs.length()).contains(&frac));
    }

    #[test]
    fn noiseless_zero_bias_is_range() {
        let sat = EcefVector::new(2.0e7, 1.0e7, 3.0e6);
        let user = EcefVector::new(6.0e6, 1.0e5, 2.0e5);
        assert_eq!(simulate_full(sat, user, 0.0, 0.0), (sat - user).norm());
        let biased = simulate_full(sat, user, 5.0 * SPEED_OF_LIGHT, 0.0);
        assert!(biased > 1.49e9);
    }

    #[test]
    fn noise_has_requested_sigma() {
        let mut src = NoiseSource::new(1.3, 7).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| src.sample()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((1.2..=1.4).contains(&sd), "sample sigma {sd}");
    }

    #[test]
    fn fractional_bounds_are_validated() {
        assert!(Measurement::fractional("I1", 299_800.0, Modulus::OneMs)
            .validate()
            .is_err());
        assert!(Measurement::fractional("I1", -1.0, Modulus::OneMs)
            .validate()
            .is_err());
        assert!(Measurement::fractional("I1", 299_800.0, Modulus::TwentyMs)
            .validate()
            .is_ok());
        assert!(Measurement::full("G1", 0.0).validate().is_err());
    }

    #[test]
    fn duplicate_satellite_rejected() {
        let ms = vec![
            Measurement::full("G1", 3.6e7),
            Measurement::full("G1", 3.7e7),
        ];
        assert!(MeasurementSet::new(epoch(), ms).is_err());
    }

    #[test]
    fn scenario_mid_footprint() {
        let cat = Catalog::bundled();
        let scen = SimulationScenario::standard(GeodeticPoint::new(30.0, 110.0, 0.0).unwrap(), 3);
        let sim = simulate_scenario(&cat, &scen, epoch()).unwrap();
        assert_eq!(sim.measurements.full_count(), 5);
        assert!(sim.measurements.fractional_count() >= 1);
        assert_eq!(
            sim.truth.ambiguities.len(),
            sim.measurements.fractional_count()
        );
        assert!(sim.warning.is_none());

        let again = simulate_scenario(&cat, &scen, epoch()).unwrap();
        assert_eq!(sim, again);
    }

    #[test]
    fn reconstruction_is_bit_exact() {
        let cat = Catalog::bundled();
        let scen =
            SimulationScenario::standard(GeodeticPoint::new(20.0, 120.0, 500.0).unwrap(), 11);
        let sim = simulate_scenario(&cat, &scen, epoch()).unwrap();
        let mut amb = sim.true_ambiguities.iter();
        for (m, f) in sim
            .measurements
            .measurements()
            .iter()
            .zip(sim.full_measurements.measurements())
        {
            assert_eq!(m.sat_id, f.sat_id);
            match m.kind {
                MeasurementKind::Full => assert_eq!(m.value, f.value),
                MeasurementKind::Fractional(md) => {
                    let a = amb.next().unwrap();
                    assert!((0.0..md.length()).contains(&m.value));
                    assert_eq!(reconstruct_full(m.value, a.n, md), f.value);
                }
            }
        }
    }

    #[test]
    fn noiseless_full_equals_corrected_range() {
        let cat = Catalog::bundled();
        let t = epoch();
        let g = GeodeticPoint::new(40.0, 116.0, 50.0).unwrap();
        let mut scen = SimulationScenario::standard(g, 1);
        scen.clock_bias = 0.0;
        scen.noise_sigma = 0.0;
        let sim = simulate_scenario(&cat, &scen, t).unwrap();
        let user = g.to_ecef();
        for m in sim.full_measurements.measurements() {
            let (sat, tau) = satellite_at_transmit(cat.get(&m.sat_id).unwrap(), t, user).unwrap();
            assert!((m.value - (sat - user).norm()).abs() < 1e-6);
            assert!((tau * SPEED_OF_LIGHT - m.value).abs() < 1e-3);
        }
    }

    #[test]
    fn no_visible_satellites_is_an_error() {
        let cat = Catalog::bundled()
            .of_class(crate::constellation::SatelliteClass::Geo)
            .unwrap();
        let scen = SimulationScenario::standard(GeodeticPoint::new(0.0, -60.0, 0.0).unwrap(), 1);
        assert!(matches!(
            simulate_scenario(&cat, &scen, epoch()),
            Err(Error::NoVisibleSatellites)
        ));
    }

    #[test]
    fn excluded_satellites_are_skipped() {
        let cat = Catalog::bundled();
        let mut scen =
            SimulationScenario::standard(GeodeticPoint::new(30.0, 110.0, 0.0).unwrap(), 3);
        scen.exclude = vec!["G1".into()];
        let sim = simulate_scenario(&cat, &scen, epoch()).unwrap();
        assert!(sim
            .measurements
            .measurements()
            .iter()
            .all(|m| m.sat_id != "G1"));
        assert_eq!(sim.geo_visible, 4);
    }
}
