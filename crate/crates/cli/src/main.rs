use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fastfix::compare::{compare_points, gate_passing_points, CompareParams};
use fastfix::coverage::{evaluate_epoch, footprint, summarize, sweep_epochs, Extents, GridSpec};
use fastfix::frames::{GeodeticPoint, SPEED_OF_LIGHT};
use fastfix::io::{self, AmbiguityRecord, CoverageRow, Lla, ResultRecord};
use fastfix::measurements::{simulate_scenario, Modulus, SimulationScenario};
use fastfix::{solve_conventional, solve_fast, Catalog, Error, SolveStatus, SolverConfig};

mod parse;

const EXIT_GATE_FAILED: u8 = 10;
const EXIT_INSUFFICIENT: u8 = 11;
const EXIT_MAX_ITERATIONS: u8 = 12;
const EXIT_INVALID_INPUT: u8 = 13;
const EXIT_IO: u8 = 20;
const EXIT_PARSE: u8 = 21;

const ELEMENTS_EPOCH: &str = "2015-05-19T04:00:00Z";

#[derive(Parser)]
#[command(
    name = "fastfix",
    version,
    about = "BeiDou fast first fix without position or time priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate full GEO and fractional non-GEO pseudoranges at one point.
    Simulate(SimulateArgs),
    /// Solve position, clock and ambiguities from a measurements file.
    Solve(SolveArgs),
    /// Sweep 4-GEO visibility and the GDOP gate over a grid and time span.
    Coverage(CoverageArgs),
    /// Monte-Carlo accuracy of the fast solver against the conventional one.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Common {
    /// Orbital elements CSV; the bundled constellation when omitted.
    #[arg(long)]
    elements: Option<PathBuf>,
    /// Elevation mask in degrees.
    #[arg(long, default_value_t = 0.0)]
    cutoff: f64,
    /// GEO GDOP gate threshold.
    #[arg(long, default_value_t = 3000.0)]
    threshold: f64,
}

impl Common {
    fn catalog(&self) -> fastfix::Result<Catalog> {
        match &self.elements {
            Some(p) => io::read_elements(p),
            None => Ok(Catalog::bundled()),
        }
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            beta: self.threshold,
            elevation_cutoff: self.cutoff,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse::epoch, default_value = ELEMENTS_EPOCH)]
    epoch: DateTime<Utc>,
    /// "lat,lon,alt" in degrees and meters.
    #[arg(long, value_parser = parse::lla, allow_hyphen_values = true)]
    user_lla: GeodeticPoint,
    /// Receiver clock bias in seconds.
    #[arg(long, default_value_t = 5.0)]
    clock_bias: f64,
    #[arg(long, default_value_t = 1.3)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse::modulus, default_value = "1ms")]
    frac_modulus: Modulus,
    /// Measurements JSON-lines output.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth JSON; defaults to `<out>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fast,
    Conventional,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    meas: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Fast)]
    mode: Mode,
    /// Result JSON: one object, or an array when the file holds several epochs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse::epoch, default_value = ELEMENTS_EPOCH)]
    start: DateTime<Utc>,
    /// Span such as 8d, 12h or 3600 (seconds).
    #[arg(long, value_parser = parse::duration, default_value = "0")]
    duration: f64,
    /// Epoch spacing in seconds (suffixes allowed).
    #[arg(long, value_parser = parse::duration, default_value = "3600")]
    step: f64,
    /// Grid spacing in degrees.
    #[arg(long, default_value_t = 1.0)]
    grid: f64,
    /// Comma-separated altitudes in meters.
    #[arg(long, value_parser = parse::altitudes, default_value = "0,1000000")]
    alts: parse::Altitudes,
    /// Coverage CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON; defaults to `<out>.summary.json`.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse::epoch, default_value = ELEMENTS_EPOCH)]
    epoch: DateTime<Utc>,
    /// Single test point; otherwise every gate-passing grid point.
    #[arg(long, value_parser = parse::lla, allow_hyphen_values = true)]
    user_lla: Option<GeodeticPoint>,
    #[arg(long, default_value_t = 5.0)]
    grid: f64,
    #[arg(long, value_parser = parse::altitudes, default_value = "0")]
    alts: parse::Altitudes,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5.0)]
    clock_bias: f64,
    #[arg(long, default_value_t = 1.3)]
    noise_sigma: f64,
    #[arg(long, value_parser = parse::modulus, default_value = "1ms")]
    frac_modulus: Modulus,
    /// Comparison CSV output.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Core(Error),
    Status(SolveStatus),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Status(SolveStatus::GdopGateFailed) => EXIT_GATE_FAILED,
        Failure::Status(SolveStatus::InsufficientMeasurements) => EXIT_INSUFFICIENT,
        Failure::Status(_) => EXIT_MAX_ITERATIONS,
        Failure::Core(Error::Io { .. }) => EXIT_IO,
        Failure::Core(Error::Parse { .. }) => EXIT_PARSE,
        Failure::Core(Error::InsufficientMeasurements { .. }) => EXIT_INSUFFICIENT,
        Failure::Core(_) => EXIT_INVALID_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Coverage(a) => cmd_coverage(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Status(s) => eprintln!("solve finished with status {}", s.as_str()),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct TruthFile {
    epoch: String,
    position_ecef_m: [f64; 3],
    position_lla: Lla,
    clock_bias_s: f64,
    clock_bias_m: f64,
    ambiguities: Vec<AmbiguityRecord>,
    geo_visible: usize,
    noise_sigma_m: f64,
    seed: u64,
    warning: Option<String>,
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let cat = a.common.catalog()?;
    let scen = SimulationScenario {
        user_truth: a.user_lla,
        clock_bias: a.clock_bias,
        noise_sigma: a.noise_sigma,
        seed: a.seed,
        fractional_modulus: a.frac_modulus,
        elevation_cutoff: a.common.cutoff,
        exclude: Vec::new(),
    };
    let sim = simulate_scenario(&cat, &scen, a.epoch)?;
    if let Some(w) = &sim.warning {
        eprintln!("warning: {w}");
    }
    io::write_measurements(std::slice::from_ref(&sim.measurements), &a.out)?;
    let truth = TruthFile {
        epoch: io::format_epoch(a.epoch),
        position_ecef_m: sim.truth.position.to_array(),
        position_lla: Lla {
            lat_deg: a.user_lla.latitude,
            lon_deg: a.user_lla.longitude,
            alt_m: a.user_lla.altitude,
        },
        clock_bias_s: a.clock_bias,
        clock_bias_m: a.clock_bias * SPEED_OF_LIGHT,
        ambiguities: sim
            .true_ambiguities
            .iter()
            .map(|t| AmbiguityRecord {
                sat: t.sat_id.clone(),
                n: t.n,
            })
            .collect(),
        geo_visible: sim.geo_visible,
        noise_sigma_m: a.noise_sigma,
        seed: a.seed,
        warning: sim.warning.clone(),
    };
    let truth_path = a.truth.unwrap_or_else(|| sibling(&a.out, ".truth.json"));
    io::write_json(&truth, truth_path)?;
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Result<(), Failure> {
    let cat = a.common.catalog()?;
    let cfg = a.common.solver_config();
    let sets = io::read_measurements(&a.meas)?;
    if sets.is_empty() {
        return Err(Error::InvalidMeasurements(format!(
            "{} holds no measurements",
            a.meas.display()
        ))
        .into());
    }
    let mut records = Vec::with_capacity(sets.len());
    let mut worst = None;
    for set in &sets {
        let res = match a.mode {
            Mode::Fast => solve_fast(set, &cat, &cfg)?,
            Mode::Conventional => solve_conventional(set, &cat, &cfg)?,
        };
        if !res.is_converged() && worst.is_none() {
            worst = Some(res.status);
        }
        records.push(ResultRecord::from_result(&res, Some(set.epoch)));
    }
    if records.len() == 1 {
        io::write_json(&records[0], &a.out)?;
    } else {
        io::write_json(&records, &a.out)?;
    }
    match worst {
        None => Ok(()),
        Some(s) => Err(Failure::Status(s)),
    }
}

#[derive(Serialize)]
struct CoverageSummaryFile {
    start: String,
    step_s: f64,
    epochs: usize,
    grid_deg: f64,
    beta: f64,
    per_altitude: Vec<AltitudeSummary>,
    combined: Proportions,
}

#[derive(Serialize)]
struct AltitudeSummary {
    altitude_m: f64,
    #[serde(flatten)]
    proportions: Proportions,
    footprint_at_start: Option<Extents>,
}

#[derive(Serialize)]
struct Proportions {
    max: Option<f64>,
    min: Option<f64>,
    overall: Option<f64>,
    eligible_cells: u64,
    passing_cells: u64,
    per_epoch: Vec<Option<f64>>,
}

impl From<&fastfix::coverage::ProportionStats> for Proportions {
    fn from(s: &fastfix::coverage::ProportionStats) -> Self {
        Self {
            max: s.max,
            min: s.min,
            overall: s.overall,
            eligible_cells: s.eligible_cells,
            passing_cells: s.passing_cells,
            per_epoch: s.per_epoch.clone(),
        }
    }
}

fn cmd_coverage(a: CoverageArgs) -> Result<(), Failure> {
    let cat = a.common.catalog()?;
    let cfg = a.common.solver_config();
    let grid = GridSpec::uniform(a.grid, a.alts.0.clone());
    grid.validate()?;
    let epochs = sweep_epochs(a.start, a.duration, a.step)?;
    let points = grid.points();
    let mut cells = Vec::with_capacity(epochs.len());
    for &t in &epochs {
        cells.push(evaluate_epoch(&cat, &points, t, &cfg)?);
    }
    let summary = summarize(&epochs, &cells, &grid, cfg.beta);
    let fp = footprint(&cat, a.start, &cfg, &grid)?;

    let rows: Vec<CoverageRow> = epochs
        .iter()
        .zip(cells)
        .flat_map(|(&epoch, cs)| cs.into_iter().map(move |cell| CoverageRow { epoch, cell }))
        .collect();
    io::write_coverage(&rows, &a.out)?;

    let file = CoverageSummaryFile {
        start: io::format_epoch(a.start),
        step_s: a.step,
        epochs: epochs.len(),
        grid_deg: a.grid,
        beta: cfg.beta,
        per_altitude: summary
            .per_altitude
            .iter()
            .zip(&fp)
            .map(|(s, f)| AltitudeSummary {
                altitude_m: s.altitude,
                proportions: (&s.stats).into(),
                footprint_at_start: f.extents,
            })
            .collect(),
        combined: (&summary.combined).into(),
    };
    io::write_json(
        &file,
        a.summary
            .unwrap_or_else(|| sibling(&a.out, ".summary.json")),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CompareCsv {
    lat: f64,
    lon: f64,
    alt: f64,
    rmse_fast_m: f64,
    rmse_conv_m: f64,
    ambiguity_success_rate: f64,
}

fn cmd_compare(a: CompareArgs) -> Result<(), Failure> {
    let cat = a.common.catalog()?;
    let cfg = a.common.solver_config();
    let points = match a.user_lla {
        Some(p) => vec![p],
        None => gate_passing_points(
            &cat,
            &GridSpec::uniform(a.grid, a.alts.0.clone()),
            a.epoch,
            &cfg,
        )?,
    };
    let params = CompareParams {
        trials: a.trials,
        clock_bias: a.clock_bias,
        noise_sigma: a.noise_sigma,
        fractional_modulus: a.frac_modulus,
        seed: a.seed,
    };
    let rows = compare_points(&cat, &points, a.epoch, &params, &cfg)?;
    let mut w = csv_writer();
    for r in &rows {
        w.serialize(CompareCsv {
            lat: r.point.latitude,
            lon: r.point.longitude,
            alt: r.point.altitude,
            rmse_fast_m: r.rmse_fast_m,
            rmse_conv_m: r.rmse_conv_m,
            ambiguity_success_rate: r.ambiguity_success_rate,
        })
        .map_err(|e| Error::InvalidMeasurements(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e.into_error(),
    })?;
    io::write_atomic(&a.out, &bytes)?;
    Ok(())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}
