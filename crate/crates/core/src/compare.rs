//! Paired Monte-Carlo comparison of the fast and conventional solvers: each
//! trial draws one noise realization and feeds the fractional view to the
//! fast solver and the all-full view to the conventional one.

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::Catalog;
use crate::coverage::{evaluate_epoch, GridSpec};
use crate::error::Result;
use crate::frames::GeodeticPoint;
use crate::measurements::{simulate_scenario, Modulus, SimulationScenario};
use crate::solver::{solve_conventional, solve_fast, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareParams {
    pub trials: usize,
    /// Clock bias in seconds.
    pub clock_bias: f64,
    pub noise_sigma: f64,
    pub fractional_modulus: Modulus,
    pub seed: u64,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            trials: 100,
            clock_bias: 5.0,
            noise_sigma: 1.3,
            fractional_modulus: Modulus::OneMs,
            seed: 0,
        }
    }
}

/// Outcome of one paired trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub fast_converged: bool,
    pub conv_converged: bool,
    pub fast_iterations: usize,
    pub fast_error_m: f64,
    pub conv_error_m: f64,
    /// `|x_fast - x_conv|`; NaN unless both converged.
    pub paired_diff_m: f64,
    pub ambiguities_correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub point: GeodeticPoint,
    pub trials: usize,
    /// Over trials where the respective solver converged; NaN if none did.
    pub rmse_fast_m: f64,
    pub rmse_conv_m: f64,
    pub ambiguity_success_rate: f64,
    pub fast_convergence_rate: f64,
    pub max_paired_diff_m: f64,
    pub max_fast_iterations: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed for trial `trial` at point index `point`.
pub fn trial_seed(seed: u64, point: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(point as u64)) ^ trial as u64)
}

pub fn run_trial(
    cat: &Catalog,
    point: &GeodeticPoint,
    t: DateTime<Utc>,
    params: &CompareParams,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<TrialOutcome> {
    let scen = SimulationScenario {
        user_truth: *point,
        clock_bias: params.clock_bias,
        noise_sigma: params.noise_sigma,
        seed,
        fractional_modulus: params.fractional_modulus,
        elevation_cutoff: cfg.elevation_cutoff,
        exclude: Vec::new(),
    };
    let sim = simulate_scenario(cat, &scen, t)?;
    let fast = solve_fast(&sim.measurements, cat, cfg)?;
    let conv = solve_conventional(&sim.full_measurements, cat, cfg)?;
    let truth = sim.truth.position;
    let ambiguities_correct = fast.is_converged()
        && fast.fixed_ambiguities.len() == sim.true_ambiguities.len()
        && fast
            .fixed_ambiguities
            .iter()
            .zip(&sim.true_ambiguities)
            .all(|(f, t)| f.sat_id == t.sat_id && f.n == t.n);
    let both = fast.is_converged() && conv.is_converged();
    Ok(TrialOutcome {
        fast_converged: fast.is_converged(),
        conv_converged: conv.is_converged(),
        fast_iterations: fast.iterations,
        fast_error_m: (fast.state.position - truth).norm(),
        conv_error_m: (conv.state.position - truth).norm(),
        paired_diff_m: if both {
            (fast.state.position - conv.state.position).norm()
        } else {
            f64::NAN
        },
        ambiguities_correct,
    })
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn compare_point(
    cat: &Catalog,
    point: &GeodeticPoint,
    point_index: usize,
    t: DateTime<Utc>,
    params: &CompareParams,
    cfg: &SolverConfig,
) -> Result<ComparisonRow> {
    let outcomes = (0..params.trials)
        .map(|k| {
            run_trial(
                cat,
                point,
                t,
                params,
                cfg,
                trial_seed(params.seed, point_index, k),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let n = outcomes.len().max(1) as f64;
    Ok(ComparisonRow {
        point: *point,
        trials: outcomes.len(),
        rmse_fast_m: rms(outcomes
            .iter()
            .filter(|o| o.fast_converged)
            .map(|o| o.fast_error_m)),
        rmse_conv_m: rms(outcomes
            .iter()
            .filter(|o| o.conv_converged)
            .map(|o| o.conv_error_m)),
        ambiguity_success_rate: outcomes.iter().filter(|o| o.ambiguities_correct).count() as f64
            / n,
        fast_convergence_rate: outcomes.iter().filter(|o| o.fast_converged).count() as f64 / n,
        max_paired_diff_m: outcomes.iter().map(|o| o.paired_diff_m).fold(0.0, |m, d| {
            if d.is_nan() || m.is_nan() {
                f64::NAN
            } else {
                m.max(d)
            }
        }),
        max_fast_iterations: outcomes
            .iter()
            .map(|o| o.fast_iterations)
            .max()
            .unwrap_or(0),
    })
}

/// Rows for each point, in input order; runs points in parallel.
pub fn compare_points(
    cat: &Catalog,
    points: &[GeodeticPoint],
    t: DateTime<Utc>,
    params: &CompareParams,
    cfg: &SolverConfig,
) -> Result<Vec<ComparisonRow>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| compare_point(cat, p, i, t, params, cfg))
        .collect()
}

/// Grid points whose GEO geometry passes the gate at `t`.
pub fn gate_passing_points(
    cat: &Catalog,
    grid: &GridSpec,
    t: DateTime<Utc>,
    cfg: &SolverConfig,
) -> Result<Vec<GeodeticPoint>> {
    grid.validate()?;
    Ok(evaluate_epoch(cat, &grid.points(), t, cfg)?
        .into_iter()
        .filter(|c| c.gate_pass)
        .map(|c| c.point)
        .collect())
}
