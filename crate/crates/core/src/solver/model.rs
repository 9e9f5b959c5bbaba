//! Linearized pseudorange model over the augmented unknown vector
//! `[x, y, z, b, N_1 .. N_m]`.

use nalgebra::{DMatrix, DVector};

use super::NavState;
use crate::error::{Error, Result};
use crate::frames::EcefVector;
use crate::measurements::{MeasurementKind, MeasurementSet};

/// Ranges closer than this are treated as a receiver sitting on a satellite.
const MIN_RANGE_M: f64 = 1e-3;
/// Relative pivot size below which the least-squares problem is rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

/// Ambiguity column (0-based, among ambiguities) for each measurement row.
pub fn ambiguity_slots(meas: &MeasurementSet) -> Vec<Option<usize>> {
    let mut next = 0;
    meas.measurements()
        .iter()
        .map(|m| match m.kind {
            MeasurementKind::Full => None,
            MeasurementKind::Fractional(_) => {
                next += 1;
                Some(next - 1)
            }
        })
        .collect()
}

/// `|X_k - x|` for every satellite.
pub fn geometric_distances(state: &NavState, sat_positions: &[EcefVector]) -> Result<Vec<f64>> {
    sat_positions
        .iter()
        .map(|s| {
            let d = (*s - state.position).norm();
            if d < MIN_RANGE_M || !d.is_finite() {
                Err(Error::DegenerateGeometry)
            } else {
                Ok(d)
            }
        })
        .collect()
}

/// Predicted pseudorange for each row at `state`.
pub fn predicted(
    state: &NavState,
    meas: &MeasurementSet,
    sat_positions: &[EcefVector],
) -> Result<Vec<f64>> {
    check_shapes(state, meas, sat_positions)?;
    let dist = geometric_distances(state, sat_positions)?;
    Ok(meas
        .measurements()
        .iter()
        .zip(ambiguity_slots(meas))
        .zip(dist)
        .map(|((m, slot), rho)| match (m.kind, slot) {
            (MeasurementKind::Fractional(md), Some(j)) => {
                rho + state.clock_bias - state.ambiguities[j] * md.length()
            }
            _ => rho + state.clock_bias,
        })
        .collect())
}

/// Observed minus predicted, in meters.
///
/// The clock bias is of the order of 1e9 m while the range is 1e7 m, so the
/// large terms are cancelled first: `z - b` is exact for full rows, and
/// `N c_T - b` is formed with a single rounding. Evaluating `z - (rho + b)`
/// naively leaves per-row errors of ~1e-7 m that the GEO geometry can blow
/// up past the convergence norm.
pub fn residuals(
    state: &NavState,
    meas: &MeasurementSet,
    sat_positions: &[EcefVector],
) -> Result<DVector<f64>> {
    check_shapes(state, meas, sat_positions)?;
    let dist = geometric_distances(state, sat_positions)?;
    let b = state.clock_bias;
    Ok(DVector::from_iterator(
        meas.len(),
        meas.measurements()
            .iter()
            .zip(ambiguity_slots(meas))
            .zip(dist)
            .map(|((m, slot), rho)| match (m.kind, slot) {
                (MeasurementKind::Fractional(md), Some(j)) => {
                    (m.value - rho) + state.ambiguities[j].mul_add(md.length(), -b)
                }
                _ => (m.value - b) - rho,
            }),
    ))
}

/// Unit line-of-sight vectors from the receiver estimate to each satellite.
pub fn line_of_sight(state: &NavState, sat_positions: &[EcefVector]) -> Result<Vec<EcefVector>> {
    let dist = geometric_distances(state, sat_positions)?;
    Ok(sat_positions
        .iter()
        .zip(dist)
        .map(|(s, d)| (*s - state.position) * (1.0 / d))
        .collect())
}

/// Jacobian of [`predicted`]: `[-e^T, 1, 0.., -c_T, ..0]` per row.
pub fn design_matrix(
    state: &NavState,
    meas: &MeasurementSet,
    sat_positions: &[EcefVector],
) -> Result<DMatrix<f64>> {
    check_shapes(state, meas, sat_positions)?;
    let los = line_of_sight(state, sat_positions)?;
    let m = state.ambiguities.len();
    let mut h = DMatrix::zeros(meas.len(), 4 + m);
    for (row, ((meas_row, slot), e)) in meas
        .measurements()
        .iter()
        .zip(ambiguity_slots(meas))
        .zip(los)
        .enumerate()
    {
        h[(row, 0)] = -e.x;
        h[(row, 1)] = -e.y;
        h[(row, 2)] = -e.z;
        h[(row, 3)] = 1.0;
        if let (MeasurementKind::Fractional(md), Some(j)) = (meas_row.kind, slot) {
            h[(row, 4 + j)] = -md.length();
        }
    }
    Ok(h)
}

fn check_shapes(
    state: &NavState,
    meas: &MeasurementSet,
    sat_positions: &[EcefVector],
) -> Result<()> {
    if sat_positions.len() != meas.len() {
        return Err(Error::InvalidMeasurements(format!(
            "{} satellite positions for {} measurements",
            sat_positions.len(),
            meas.len()
        )));
    }
    if state.ambiguities.len() != meas.fractional_count() {
        return Err(Error::InvalidMeasurements(format!(
            "state carries {} ambiguities for {} fractional measurements",
            state.ambiguities.len(),
            meas.fractional_count()
        )));
    }
    Ok(())
}

/// Minimizer of `|W^(1/2) (H dx - r)|` by Householder QR on a column-scaled
/// copy of `H`.
pub fn least_squares(
    h: &DMatrix<f64>,
    r: &DVector<f64>,
    weights: Option<&[f64]>,
) -> Result<DVector<f64>> {
    let (rows, cols) = h.shape();
    if rows < cols || r.len() != rows {
        return Err(Error::Underdetermined);
    }
    let mut a = h.clone();
    let mut b = r.clone();
    if let Some(w) = weights {
        if w.len() != rows || w.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidConfig(
                "weights must be positive, one per row".into(),
            ));
        }
        for (i, wi) in w.iter().enumerate() {
            let s = wi.sqrt();
            a.row_mut(i).scale_mut(s);
            b[i] *= s;
        }
    }
    let mut scale = vec![1.0; cols];
    for (j, sj) in scale.iter_mut().enumerate() {
        let n = a.column(j).norm();
        if n == 0.0 {
            return Err(Error::Underdetermined);
        }
        *sj = n;
        a.column_mut(j).unscale_mut(n);
    }

    let qr = a.qr();
    let rmat = qr.r();
    let max_pivot = rmat.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rmat
        .diagonal()
        .iter()
        .any(|v| v.abs() <= RANK_TOLERANCE * max_pivot)
    {
        return Err(Error::Underdetermined);
    }
    let qtb = qr.q().transpose() * b;
    let mut x = rmat
        .solve_upper_triangular(&qtb)
        .ok_or(Error::Underdetermined)?;
    for (xj, sj) in x.iter_mut().zip(&scale) {
        *xj /= sj;
    }
    Ok(x)
}
