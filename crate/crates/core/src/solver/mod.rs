//! Fast positioning from full GEO and fractional non-GEO pseudoranges.
//!
//! The receiver position, clock bias and one real-valued ambiguity per
//! fractional measurement are estimated together by Gauss-Newton from the
//! earth center. Every iteration first checks the GEO-only geometry with the
//! eigenvalue gate. After convergence the ambiguities are rounded, the full
//! pseudoranges rebuilt, and position and clock re-solved over all of them.

pub mod eigen;
pub mod gate;
pub mod model;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::constellation::{Catalog, SatelliteRecord};
use crate::error::{Error, Result};
use crate::frames::EcefVector;
use crate::measurements::{
    reconstruct_full, satellite_at_transmit, Measurement, MeasurementKind, MeasurementSet,
};

pub use gate::{
    beta_from_alpha, eigenvalue_gate, usability_criterion, GateVerdict, GeoNormalMatrix,
    UsabilityCheck,
};
pub use model::{design_matrix, geometric_distances, least_squares, line_of_sight, residuals};

/// Unknowns `[x, y, z, b, N_1 .. N_m]`; clock bias in meters, ambiguities in
/// cycles of `c_T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub position: EcefVector,
    pub clock_bias: f64,
    pub ambiguities: Vec<f64>,
}

impl NavState {
    /// Earth center, zero clock, zero ambiguities.
    pub fn zero(ambiguities: usize) -> Self {
        Self {
            position: EcefVector::ZERO,
            clock_bias: 0.0,
            ambiguities: vec![0.0; ambiguities],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Half-cycle rounding threshold (m).
    pub alpha: f64,
    /// GEO GDOP gate threshold.
    pub beta: f64,
    pub max_iterations: usize,
    /// Step norm (m) below which Gauss-Newton stops.
    pub convergence_norm: f64,
    /// Elevation mask (degrees) for visibility decisions.
    pub elevation_cutoff: f64,
    /// Optional per-measurement weights; identity when absent.
    pub weights: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 150_000.0,
            beta: 3000.0,
            max_iterations: 20,
            convergence_norm: 1e-4,
            elevation_cutoff: 0.0,
            weights: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidConfig("beta must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.convergence_norm > 0.0) {
            return Err(Error::InvalidConfig(
                "convergence norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    GdopGateFailed,
    MaxIterations,
    InsufficientMeasurements,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Converged => "Converged",
            Self::GdopGateFailed => "GdopGateFailed",
            Self::MaxIterations => "MaxIterations",
            Self::InsufficientMeasurements => "InsufficientMeasurements",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedAmbiguity {
    pub sat_id: String,
    pub n: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Final state; ambiguities are integer-valued once fixed.
    pub state: NavState,
    /// Float solution before rounding, when the iteration converged.
    pub float_state: Option<NavState>,
    pub gdop_geo: f64,
    /// Gauss-Newton iterations of the augmented (or conventional) solve.
    pub iterations: usize,
    /// Iterations spent re-solving after the ambiguities were fixed.
    pub correction_iterations: usize,
    pub fixed_ambiguities: Vec<FixedAmbiguity>,
    /// One per measurement, in input order.
    pub recovered_full_pseudoranges: Vec<f64>,
}

impl SolveResult {
    fn unfinished(status: SolveStatus, state: NavState, gdop_geo: f64, iterations: usize) -> Self {
        Self {
            status,
            state,
            float_state: None,
            gdop_geo,
            iterations,
            correction_iterations: 0,
            fixed_ambiguities: Vec::new(),
            recovered_full_pseudoranges: Vec::new(),
        }
    }

    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

fn records_for<'a>(meas: &MeasurementSet, cat: &'a Catalog) -> Result<Vec<&'a SatelliteRecord>> {
    meas.measurements()
        .iter()
        .map(|m| {
            cat.get(&m.sat_id)
                .ok_or_else(|| Error::UnknownSatellite(m.sat_id.clone()))
        })
        .collect()
}

/// Satellite positions at transmit time as seen from `receiver`.
pub fn transmit_positions(
    records: &[&SatelliteRecord],
    epoch: DateTime<Utc>,
    receiver: EcefVector,
) -> Result<Vec<EcefVector>> {
    records
        .iter()
        .map(|r| satellite_at_transmit(r, epoch, receiver).map(|(p, _)| p))
        .collect()
}

/// `D` over the full-pseudorange rows at the current estimate.
pub fn geo_normal_matrix(
    meas: &MeasurementSet,
    state: &NavState,
    sat_positions: &[EcefVector],
) -> Result<GeoNormalMatrix> {
    let los = line_of_sight(state, sat_positions)?;
    let full: Vec<_> = meas
        .measurements()
        .iter()
        .zip(los)
        .filter(|(m, _)| m.is_full())
        .map(|(_, e)| e)
        .collect();
    GeoNormalMatrix::from_los(&full)
}

/// One unweighted (or weighted) Gauss-Newton step. Returns the new state and
/// the step norm in meters, ambiguity components scaled by `c_T`.
pub fn iterate_once(
    state: &NavState,
    meas: &MeasurementSet,
    sat_positions: &[EcefVector],
    weights: Option<&[f64]>,
) -> Result<(NavState, f64)> {
    let h = design_matrix(state, meas, sat_positions)?;
    let r = residuals(state, meas, sat_positions)?;
    let dx = least_squares(&h, &r, weights)?;

    let mut next = state.clone();
    next.position = state.position + EcefVector::new(dx[0], dx[1], dx[2]);
    next.clock_bias += dx[3];
    let mut norm2 = dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2] + dx[3] * dx[3];
    let lengths = meas
        .measurements()
        .iter()
        .filter_map(Measurement::modulus)
        .map(|m| m.length());
    for ((n, d), ct) in next
        .ambiguities
        .iter_mut()
        .zip(dx.iter().skip(4))
        .zip(lengths)
    {
        *n += d;
        norm2 += (d * ct).powi(2);
    }
    Ok((next, norm2.sqrt()))
}

/// Gauss-Newton over all-full measurements from `start` until the step norm
/// drops below tolerance. Returns the state, iterations used, and whether it
/// converged.
fn refine_full(
    meas: &MeasurementSet,
    records: &[&SatelliteRecord],
    start: NavState,
    cfg: &SolverConfig,
) -> Result<(NavState, usize, bool)> {
    let mut state = start;
    for it in 1..=cfg.max_iterations {
        let sats = transmit_positions(records, meas.epoch, state.position)?;
        let (next, step) = iterate_once(&state, meas, &sats, cfg.weights.as_deref())?;
        state = next;
        if step < cfg.convergence_norm {
            return Ok((state, it, true));
        }
    }
    Ok((state, cfg.max_iterations, false))
}

/// Rebuilds the full pseudorange of every fractional row from integer
/// ambiguities.
pub fn reconstruct_measurements(
    meas: &MeasurementSet,
    ambiguities: &[i64],
) -> Result<MeasurementSet> {
    if ambiguities.len() != meas.fractional_count() {
        return Err(Error::InvalidMeasurements(format!(
            "{} ambiguities for {} fractional measurements",
            ambiguities.len(),
            meas.fractional_count()
        )));
    }
    let mut amb = ambiguities.iter();
    let rows = meas
        .measurements()
        .iter()
        .map(|m| match m.kind {
            MeasurementKind::Full => m.clone(),
            MeasurementKind::Fractional(md) => Measurement::full(
                &m.sat_id,
                reconstruct_full(m.value, *amb.next().expect("length checked"), md),
            ),
        })
        .collect();
    MeasurementSet::new(meas.epoch, rows)
}

/// Outcome of re-solving position and clock with the ambiguities held fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct Correction {
    pub state: NavState,
    pub iterations: usize,
    pub converged: bool,
    pub recovered: MeasurementSet,
}

/// Re-solves `[x, y, z, b]` over the reconstructed full measurements,
/// starting from `fixed_state`.
pub fn state_correction(
    fixed_state: &NavState,
    meas: &MeasurementSet,
    cat: &Catalog,
    cfg: &SolverConfig,
) -> Result<Correction> {
    let ints = fixed_state
        .ambiguities
        .iter()
        .map(|n| {
            if n.fract() == 0.0 && n.is_finite() {
                Ok(*n as i64)
            } else {
                Err(Error::InvalidMeasurements(format!(
                    "ambiguity {n} is not integer-fixed"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let recovered = reconstruct_measurements(meas, &ints)?;
    let records = records_for(&recovered, cat)?;
    let start = NavState {
        position: fixed_state.position,
        clock_bias: fixed_state.clock_bias,
        ambiguities: Vec::new(),
    };
    let (solved, iterations, converged) = refine_full(&recovered, &records, start, cfg)?;
    Ok(Correction {
        state: NavState {
            ambiguities: fixed_state.ambiguities.clone(),
            ..solved
        },
        iterations,
        converged,
        recovered,
    })
}

/// Fast fix from the zero state.
pub fn solve_fast(meas: &MeasurementSet, cat: &Catalog, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_fast_from(meas, cat, cfg, NavState::zero(meas.fractional_count()))
}

/// Fast fix from an arbitrary starting state.
pub fn solve_fast_from(
    meas: &MeasurementSet,
    cat: &Catalog,
    cfg: &SolverConfig,
    initial: NavState,
) -> Result<SolveResult> {
    cfg.validate()?;
    if initial.ambiguities.len() != meas.fractional_count() {
        return Err(Error::InvalidMeasurements(format!(
            "initial state carries {} ambiguities for {} fractional measurements",
            initial.ambiguities.len(),
            meas.fractional_count()
        )));
    }
    let full = meas.full_count();
    if full < 4 {
        return Ok(SolveResult::unfinished(
            SolveStatus::InsufficientMeasurements,
            initial,
            f64::NAN,
            0,
        ));
    }
    let records = records_for(meas, cat)?;
    let weights = cfg.weights.as_deref();

    let mut state = initial;
    let mut gdop = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let sats = transmit_positions(&records, meas.epoch, state.position)?;
        let verdict = eigenvalue_gate(&geo_normal_matrix(meas, &state, &sats)?, cfg.beta);
        gdop = verdict.gdop;
        if !verdict.pass {
            return Ok(SolveResult::unfinished(
                SolveStatus::GdopGateFailed,
                state,
                gdop,
                iterations,
            ));
        }
        let (next, step) = iterate_once(&state, meas, &sats, weights)?;
        state = next;
        if step < cfg.convergence_norm {
            converged = true;
            break;
        }
    }
    if !converged {
        return Ok(SolveResult::unfinished(
            SolveStatus::MaxIterations,
            state,
            gdop,
            iterations,
        ));
    }

    let float_state = state.clone();
    let mut fixed = state;
    for n in &mut fixed.ambiguities {
        *n = n.round();
    }
    // With no fractional rows nothing was fixed and the float solve already
    // is the full-measurement solve.
    let correction = if fixed.ambiguities.is_empty() {
        Correction {
            state: fixed.clone(),
            iterations: 0,
            converged: true,
            recovered: meas.clone(),
        }
    } else {
        state_correction(&fixed, meas, cat, cfg)?
    };
    let status = if correction.converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIterations
    };
    let fixed_ambiguities = meas
        .measurements()
        .iter()
        .filter(|m| !m.is_full())
        .zip(&fixed.ambiguities)
        .map(|(m, n)| FixedAmbiguity {
            sat_id: m.sat_id.clone(),
            n: *n as i64,
        })
        .collect();
    Ok(SolveResult {
        status,
        state: correction.state,
        float_state: Some(float_state),
        gdop_geo: gdop,
        iterations,
        correction_iterations: correction.iterations,
        fixed_ambiguities,
        recovered_full_pseudoranges: correction
            .recovered
            .measurements()
            .iter()
            .map(|m| m.value)
            .collect(),
    })
}

/// Conventional single-point positioning over full pseudoranges from the
/// zero state.
pub fn solve_conventional(
    meas: &MeasurementSet,
    cat: &Catalog,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if meas.fractional_count() > 0 {
        return Err(Error::InvalidMeasurements(
            "conventional solving needs full pseudoranges only".into(),
        ));
    }
    if meas.full_count() < 4 {
        return Ok(SolveResult::unfinished(
            SolveStatus::InsufficientMeasurements,
            NavState::zero(0),
            f64::NAN,
            0,
        ));
    }
    let records = records_for(meas, cat)?;
    let (state, iterations, converged) = refine_full(meas, &records, NavState::zero(0), cfg)?;
    let sats = transmit_positions(&records, meas.epoch, state.position)?;
    let gdop = geo_normal_matrix(meas, &state, &sats)?.gdop();
    Ok(SolveResult {
        status: if converged {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIterations
        },
        state,
        float_state: None,
        gdop_geo: gdop,
        iterations,
        correction_iterations: 0,
        fixed_ambiguities: Vec::new(),
        recovered_full_pseudoranges: meas.measurements().iter().map(|m| m.value).collect(),
    })
}
