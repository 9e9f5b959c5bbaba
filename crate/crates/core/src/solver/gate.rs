//! GEO-only geometry matrix, the eigenvalue (GDOP) gate, and the ambiguity
//! usability bound behind it.

use nalgebra::{DMatrix, DVector, Matrix4, RowVector4};

use super::eigen::symmetric_eigenvalues;
use crate::error::{Error, Result};
use crate::frames::EcefVector;

/// `D = G^T G` over the full-pseudorange rows `[-e^T, 1]`, with its spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct GeoNormalMatrix {
    pub matrix: Matrix4<f64>,
    /// Ascending.
    pub eigenvalues: [f64; 4],
}

impl GeoNormalMatrix {
    /// Builds `D` from unit line-of-sight vectors (receiver to satellite).
    pub fn from_los(los: &[EcefVector]) -> Result<Self> {
        if los.len() < 4 {
            return Err(Error::InsufficientMeasurements { full: los.len() });
        }
        let mut d = Matrix4::zeros();
        for e in los {
            let g = RowVector4::new(-e.x, -e.y, -e.z, 1.0);
            d += g.transpose() * g;
        }
        Ok(Self::from_matrix(d))
    }

    pub fn from_matrix(matrix: Matrix4<f64>) -> Self {
        Self {
            eigenvalues: symmetric_eigenvalues(&matrix),
            matrix,
        }
    }

    /// `sqrt(sum 1/lambda)`, infinite when any eigenvalue is not positive.
    pub fn gdop(&self) -> f64 {
        if self.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return f64::INFINITY;
        }
        self.eigenvalues
            .iter()
            .map(|l| l.recip())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateVerdict {
    pub pass: bool,
    pub gdop: f64,
    /// Rank-deficient GEO geometry (some eigenvalue <= 0).
    pub singular: bool,
}

/// Passes when `sqrt(sum 1/lambda_i) < beta`.
pub fn eigenvalue_gate(d: &GeoNormalMatrix, beta: f64) -> GateVerdict {
    let singular = d.eigenvalues.iter().any(|&l| !(l > 0.0));
    let gdop = d.gdop();
    GateVerdict {
        pass: !singular && gdop < beta,
        gdop,
        singular,
    }
}

/// Gate threshold from the rounding half-cycle `alpha` and the worst-case
/// ranging error, both in meters.
pub fn beta_from_alpha(alpha: f64, max_range_error: f64) -> f64 {
    alpha / max_range_error
}

/// Both forms of the rounding-safety test for one error realization.
#[derive(Clone, Debug, PartialEq)]
pub struct UsabilityCheck {
    /// `max_j |sum_i drho_i (e_i . e_j)|`, the bound as literally written.
    pub literal_projection: f64,
    /// `max_j |e_j . dP|` with `dP` the least-squares position error the GEO
    /// errors actually produce.
    pub position_error_projection: f64,
    /// `GDOP * max_i |drho_i|`.
    pub gdop_bound: f64,
    pub alpha: f64,
}

impl UsabilityCheck {
    pub fn projection_pass(&self) -> bool {
        self.position_error_projection < self.alpha
    }

    /// The stricter GDOP form; this is the verdict the solver relies on.
    pub fn usable(&self) -> bool {
        self.gdop_bound < self.alpha
    }
}

/// Evaluates rounding safety for GEO range errors `geo_errors` (m) seen
/// along `geo_los`, projected onto each non-GEO line of sight.
pub fn usability_criterion(
    geo_errors: &[f64],
    geo_los: &[EcefVector],
    nongeo_los: &[EcefVector],
    alpha: f64,
) -> Result<UsabilityCheck> {
    if geo_errors.len() != geo_los.len() {
        return Err(Error::InvalidMeasurements(format!(
            "{} errors for {} GEO lines of sight",
            geo_errors.len(),
            geo_los.len()
        )));
    }
    let d = GeoNormalMatrix::from_los(geo_los)?;
    let max_err = geo_errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));

    let literal_projection = nongeo_los
        .iter()
        .map(|ej| {
            geo_errors
                .iter()
                .zip(geo_los)
                .map(|(dr, ei)| dr * ei.dot(ej))
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max);

    let g = DMatrix::from_fn(geo_los.len(), 4, |r, c| match c {
        0 => -geo_los[r].x,
        1 => -geo_los[r].y,
        2 => -geo_los[r].z,
        _ => 1.0,
    });
    let rhs = g.transpose() * DVector::from_column_slice(geo_errors);
    let dx = nalgebra::Cholesky::new(d.matrix)
        .map(|ch| ch.solve(&rhs))
        .ok_or(Error::DegenerateGeometry)?;
    let dp = EcefVector::new(dx[0], dx[1], dx[2]);
    let position_error_projection = nongeo_los
        .iter()
        .map(|ej| ej.dot(&dp).abs())
        .fold(0.0, f64::max);

    Ok(UsabilityCheck {
        literal_projection,
        position_error_projection,
        gdop_bound: d.gdop() * max_err,
        alpha,
    })
}
