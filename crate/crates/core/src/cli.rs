//! Command-line front end: configuration, orchestration and result files.
//!
//! Exit codes: 0 on success, 1 for usage and I/O errors, 2 when
//! identification (or scan coverage) fails; diagnostics are still written in
//! that case.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{
    chip_scan, sample_best_effort, ChipScanReport, PlantedFault, ScanConfig, SimulatedDevice,
};
use crate::eigensolve::MuStage;
use crate::error::Error;
use crate::io::{
    check_header, complex_rows, read_json, real_from_rows, real_rows, write_json, Complex,
    Provenance, TimeSeriesFile, Truth, FORMAT_VERSION,
};
use crate::linalg::{CMat, RMat};
use crate::metrics::{
    analog_accuracy, analog_accuracy_complex, entrywise_deviation, frequency_accuracy,
    FitDiagnostics,
};
use crate::model::{
    build_harper, eig_symmetric, HamiltonianParams, LatticeGeometry, Shots, SpamMap, TimeGrid,
};
use crate::pipeline::{identify, IdentificationResult, IdentifyConfig};
use crate::simulate::{
    perturbed_identity, ramp_map_matrix, random_diagonal_unitary, sample_shots, simulate_exact,
    NoiseConfig, RampDirection, RampModelConfig,
};
use crate::uncertainty::{
    bootstrap, diag_phase_calibration, project_orthogonal, ramp_systematic, BootstrapConfig,
    BootstrapReport, CalibrationReport, CalibrationRun, ErrorReport, SystematicReport,
    OUTLIER_CUTOFF_DEG,
};

#[derive(Debug, Parser)]
#[command(
    name = "hamid",
    version,
    about = "Hamiltonian identification from quadrature time series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a time-series data file.
    Simulate(SimulateArgs),
    /// Identify h, S and the final signs from a data file.
    Identify(IdentifyArgs),
    /// Parametric bootstrap around an identification result.
    Bootstrap(BootstrapArgs),
    /// Simulate the ramp maps, the systematic error and a phase calibration.
    RampModel(RampModelArgs),
    /// Chip scan over connected subsets of a device.
    Scan(ScanArgs),
    /// Tables and SVG plots from result files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also write `data.csv`.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub no_regularization: bool,
    /// Run a bootstrap with this many resamples.
    #[arg(long, value_name = "N")]
    pub bootstrap: Option<usize>,
    /// Estimate the final-ramp systematic error.
    #[arg(long)]
    pub systematic: bool,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    pub result: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_name = "N")]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RampModelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Identification result to attach a systematic error to.
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Number of synthetic diagonal runs for the phase calibration.
    #[arg(long, default_value_t = 0)]
    pub calibration_runs: usize,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] Error),
    #[error("identification failed: {0}")]
    Identification(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Identification(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Chain(usize),
    /// `[rows, cols]`, sites row-major.
    Grid([usize; 2]),
    /// Geometry JSON file, relative to the config file.
    File(PathBuf),
    Inline(LatticeGeometry),
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec::Chain(5)
    }
}

impl GeometrySpec {
    fn resolve(&self, base: &Path) -> CliResult<LatticeGeometry> {
        Ok(match self {
            GeometrySpec::Chain(n) => {
                if *n == 0 {
                    return Err(CliError::Usage("chain needs at least one site".into()));
                }
                LatticeGeometry::chain(*n)
            }
            GeometrySpec::Grid([r, c]) => {
                if *r == 0 || *c == 0 {
                    return Err(CliError::Usage("grid dimensions must be positive".into()));
                }
                LatticeGeometry::grid(*r, *c)
            }
            GeometrySpec::File(p) => read_json(&base.join(p))?,
            GeometrySpec::Inline(g) => g.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarperSpec {
    pub b: f64,
    #[serde(default = "default_coupling")]
    pub j: f64,
}

fn default_coupling() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Harper(HarperSpec),
    Matrix(Vec<Vec<f64>>),
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::Harper(HarperSpec { b: 0.35, j: 20.0 })
    }
}

impl TargetSpec {
    fn build(&self, geometry: &LatticeGeometry) -> CliResult<HamiltonianParams> {
        Ok(match self {
            TargetSpec::Harper(h) => build_harper(geometry.num_sites(), h.b, h.j, geometry)?,
            TargetSpec::Matrix(rows) => {
                HamiltonianParams::new(real_from_rows(rows)?, geometry.clone())?
            }
        })
    }

    fn harper_b(&self) -> Option<f64> {
        match self {
            TargetSpec::Harper(h) => Some(h.b),
            TargetSpec::Matrix(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dt: f64,
    pub samples: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dt: 1.0,
            samples: 201,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub shots: Shots,
    /// 1/ns.
    pub damping: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            shots: Shots::Finite(1000),
            damping: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpamMode {
    #[default]
    None,
    /// `S = 1 + scale · G` rescaled to unit largest column norm, `M` a random
    /// diagonal unitary.
    Random,
    /// Both maps from the ramp model.
    RampModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RampSpec {
    /// Idle detunings (MHz); drawn from `±idle_range` when absent.
    pub idle: Option<Vec<f64>>,
    pub idle_range: [f64; 2],
    pub speed: f64,
    pub wait_time: f64,
    pub integration_step: f64,
    /// Range of ramp distances of the synthetic calibration runs (MHz).
    pub calibration_distances: [f64; 2],
    pub outlier_cutoff_deg: f64,
}

impl Default for RampSpec {
    fn default() -> Self {
        let d = RampModelConfig::new(Vec::new());
        Self {
            idle: None,
            idle_range: [100.0, 500.0],
            speed: d.speed,
            wait_time: d.wait_time,
            integration_step: d.integration_step,
            calibration_distances: [10.0, 90.0],
            outlier_cutoff_deg: OUTLIER_CUTOFF_DEG,
        }
    }
}

impl RampSpec {
    fn model(&self, n: usize, seed: u64) -> CliResult<RampModelConfig> {
        let idle = match &self.idle {
            Some(v) if v.len() != n => {
                return Err(CliError::Usage(format!(
                    "ramp idle has {} entries for {n} sites",
                    v.len()
                )))
            }
            Some(v) => v.clone(),
            None => {
                RampModelConfig::random_idle(n, self.idle_range[0], self.idle_range[1], seed).idle
            }
        };
        let cfg = RampModelConfig {
            idle,
            speed: self.speed,
            wait_time: self.wait_time,
            integration_step: self.integration_step,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpamSpec {
    pub mode: SpamMode,
    pub initial_scale: f64,
    pub ramp: RampSpec,
}

impl Default for SpamSpec {
    fn default() -> Self {
        Self {
            mode: SpamMode::None,
            initial_scale: 0.3,
            ramp: RampSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSpec {
    pub identify: IdentifyConfig,
    pub bootstrap: BootstrapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub subset_size: usize,
    pub min_coverage: usize,
    pub b_values: Vec<f64>,
    pub min_gap_mhz: f64,
    pub faults: Vec<PlantedFault>,
}

impl Default for ScanSpec {
    fn default() -> Self {
        let d = ScanConfig::default();
        Self {
            subset_size: d.subset_size,
            min_coverage: d.min_coverage,
            b_values: d.b_values,
            min_gap_mhz: d.min_gap_mhz,
            faults: Vec::new(),
        }
    }
}

/// Everything a run needs; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub target: TargetSpec,
    pub grid: GridSpec,
    pub noise: NoiseSpec,
    pub spam: SpamSpec,
    pub pipeline: PipelineSpec,
    pub scan: ScanSpec,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    fn seed(&self) -> u64 {
        self.noise.seed
    }

    fn time_grid(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(self.grid.dt, self.grid.samples)?)
    }
}

/// Derived seeds for the independent random streams of a run.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

struct Loaded {
    config: RunConfig,
    base: PathBuf,
}

fn load_config(common: &CommonArgs, fallback: Option<&serde_json::Value>) -> CliResult<Loaded> {
    let (mut config, base) = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            let config: RunConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (config, base)
        }
        None => match fallback {
            Some(v) => {
                let config = serde_json::from_value(v.clone()).unwrap_or_else(|e| {
                    log::warn!("ignoring the configuration stored in the input file: {e}");
                    RunConfig::default()
                });
                (config, PathBuf::new())
            }
            None => (RunConfig::default(), PathBuf::new()),
        },
    };
    if let Some(seed) = common.seed {
        config.noise.seed = seed;
        config.pipeline.bootstrap.rng_seed = seed;
    }
    Ok(Loaded { config, base })
}

fn out_dir(common_out: &Option<PathBuf>, config: &RunConfig) -> CliResult<PathBuf> {
    let dir = common_out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::RampModel(a) => cmd_ramp_model(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Rescales `S` to unit largest column norm so that `|y_mn| <= 1/2`.
fn physical_initial_map(s: SpamMap) -> CliResult<SpamMap> {
    let norm = s.0.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(SpamMap::new(s.0.unscale(norm))?)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let Loaded { config, base } = load_config(&args.common, None)?;
    let geometry = config.geometry.resolve(&base)?;
    let target = config.target.build(&geometry)?;
    let grid = config.time_grid()?;
    let n = geometry.num_sites();
    let seed = config.seed();
    let (s, m) = match config.spam.mode {
        SpamMode::None => (SpamMap::identity(n), SpamMap::identity(n)),
        SpamMode::Random => (
            physical_initial_map(perturbed_identity(
                n,
                config.spam.initial_scale,
                stream_seed(seed, 1),
            )?)?,
            random_diagonal_unitary(n, stream_seed(seed, 2)).0,
        ),
        SpamMode::RampModel => {
            let ramp = config.spam.ramp.model(n, stream_seed(seed, 3))?;
            (
                ramp_map_matrix(target.matrix(), &ramp, RampDirection::In)?,
                ramp_map_matrix(target.matrix(), &ramp, RampDirection::Out)?,
            )
        }
    };
    let exact = simulate_exact(&target, &s, &m, &grid)?;
    let noise = NoiseConfig {
        shots: config.noise.shots,
        damping_rate: config.noise.damping,
        rng_seed: stream_seed(seed, 0),
        clip: false,
    };
    noise.validate()?;
    let data = sample_shots(&exact, &noise)?;
    let mut provenance = Provenance::new("simulate", &config, seed)?;
    provenance.truth = Some(Truth {
        h: real_rows(target.matrix()),
        initial_map: complex_rows(s.matrix()),
        final_map: complex_rows(m.matrix()),
    });
    let file = TimeSeriesFile::new(&data, provenance);
    let dir = out_dir(&args.common.out, &config)?;
    write_json(&dir.join("data.json"), &file)?;
    if args.csv {
        fs::write(dir.join("data.csv"), file.to_csv())?;
    }
    Ok(())
}

/// Comparison of a result with the configured target and, for simulated
/// data, with the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetComparison {
    pub h_target: Vec<Vec<f64>>,
    pub analog_accuracy: f64,
    pub frequency_accuracy: f64,
    pub entrywise_deviation: Vec<Vec<f64>>,
    /// `E_analog(Ŝ, 1)`.
    pub initial_map_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthComparison {
    pub analog_accuracy: f64,
    /// `|phase| > π/2` of a diagonal planted final map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_sign_flips: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_pattern_matches: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format_version: u32,
    pub kind: String,
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "L")]
    pub len: usize,
    pub shots: Shots,
    pub geometry: LatticeGeometry,
    pub h_hat: Vec<Vec<f64>>,
    pub h_prime: Vec<Vec<f64>>,
    pub s_hat: Vec<Vec<Complex>>,
    /// Diagonal of `D̂_M`.
    pub final_signs: Vec<f64>,
    pub final_phases: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub mu_used: f64,
    pub fit: f64,
    pub unregularized_fit: f64,
    pub converged: bool,
    pub stages: Vec<MuStage>,
    pub diagnostics: FitDiagnostics,
    pub skipped_anchors: Vec<usize>,
    pub frequency_anchor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harper_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorReport>,
    pub provenance: Provenance,
}

pub const RESULT_KIND: &str = "identification";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FailureFile {
    format_version: u32,
    kind: String,
    error: String,
    provenance: Provenance,
}

fn compare(
    r: &IdentificationResult,
    target: &HamiltonianParams,
    truth: Option<&Truth>,
) -> CliResult<TargetComparison> {
    let n = r.h_hat.nrows();
    let truth = match truth {
        Some(t) => {
            let h_true = real_from_rows(&t.h)?;
            let m = crate::io::complex_from_rows(&t.final_map)?;
            let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)].norm() == 0.0));
            let planted: Option<Vec<bool>> = diagonal.then(|| {
                (0..n)
                    .map(|i| m[(i, i)].arg().abs() > std::f64::consts::FRAC_PI_2)
                    .collect()
            });
            Some(TruthComparison {
                analog_accuracy: analog_accuracy(&r.h_hat, &h_true)?,
                sign_pattern_matches: planted.as_ref().map(|p| *p == r.sign_flips()),
                planted_sign_flips: planted,
            })
        }
        None => None,
    };
    Ok(TargetComparison {
        h_target: real_rows(target.matrix()),
        analog_accuracy: analog_accuracy(&r.h_hat, target.matrix())?,
        frequency_accuracy: frequency_accuracy(
            r.frequencies.as_slice(),
            &eig_symmetric(target.matrix()).values,
        )?,
        entrywise_deviation: real_rows(&entrywise_deviation(&r.h_hat, target.matrix())?),
        initial_map_accuracy: analog_accuracy_complex(r.s_hat.matrix(), &CMat::identity(n, n))?,
        truth,
    })
}

fn cmd_identify(args: &IdentifyArgs) -> CliResult<()> {
    let file: TimeSeriesFile = read_json(&args.data)?;
    let data = file.to_data()?;
    let Loaded { mut config, base } = load_config(&args.common, Some(&file.provenance.config))?;
    if args.no_regularization {
        config.pipeline.identify.eigensolve.regularize = false;
    }
    let base = if args.common.config.is_some() {
        base
    } else {
        args.data
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    };
    let geometry = config.geometry.resolve(&base)?;
    if geometry.num_sites() != data.dim() {
        return Err(CliError::Usage(format!(
            "geometry has {} sites, data has {}",
            geometry.num_sites(),
            data.dim()
        )));
    }
    let target = config.target.build(&geometry)?;
    let boot_cfg = args
        .bootstrap
        .map(|resamples| {
            let cfg = BootstrapConfig {
                resamples,
                shots: data.shots(),
                ..config.pipeline.bootstrap
            };
            cfg.validate().map(|_| cfg).map_err(usage)
        })
        .transpose()?;
    let mut pipeline = config.pipeline.identify;
    pipeline.preprocess.window = pipeline.preprocess.window.min(data.grid().len());
    let provenance = Provenance::new("identify", &config, config.seed())?;
    let dir = out_dir(&args.common.out, &config)?;
    let r = match identify(&data, &geometry, Some(target.matrix()), &pipeline) {
        Ok(r) => r,
        Err(e) => {
            let failure = FailureFile {
                format_version: FORMAT_VERSION,
                kind: "identification_failure".into(),
                error: e.to_string(),
                provenance,
            };
            write_json(&dir.join("failure.json"), &failure)?;
            return Err(CliError::Identification(e));
        }
    };
    let statistical = match boot_cfg {
        Some(cfg) => {
            Some(
                bootstrap(&r.h_hat, &geometry, data.grid(), &cfg)
                    .map_err(CliError::Identification)?,
            )
        }
        None => None,
    };
    let systematic = if args.systematic {
        let ramp = config
            .spam
            .ramp
            .model(geometry.num_sites(), stream_seed(config.seed(), 3))?;
        Some(ramp_systematic(&r.h_prime, target.matrix(), &ramp)?)
    } else {
        None
    };
    let errors = (statistical.is_some() || systematic.is_some())
        .then(|| ErrorReport::new(statistical.as_ref(), systematic.as_ref()));
    let result = ResultFile {
        format_version: FORMAT_VERSION,
        kind: RESULT_KIND.into(),
        n: data.dim(),
        dt: data.grid().dt(),
        len: data.grid().len(),
        shots: data.shots(),
        geometry,
        h_hat: real_rows(&r.h_hat),
        h_prime: real_rows(&r.h_prime),
        s_hat: complex_rows(r.s_hat.matrix()),
        final_signs: r.final_signs.clone(),
        final_phases: r.final_phases.clone(),
        frequencies: r.frequencies.as_slice().to_vec(),
        mu_used: r.mu_used,
        fit: r.fit,
        unregularized_fit: r.unregularized_fit,
        converged: r.converged,
        stages: r.stages.clone(),
        diagnostics: r.diagnostics.clone(),
        skipped_anchors: r.skipped_anchors.clone(),
        frequency_anchor: r.frequency_anchor,
        harper_b: config.target.harper_b(),
        target: Some(compare(&r, &target, file.provenance.truth.as_ref())?),
        errors,
        provenance,
    };
    write_json(&dir.join("result.json"), &result)?;
    Ok(())
}

fn read_result(path: &Path) -> CliResult<ResultFile> {
    let r: ResultFile = read_json(path)?;
    check_header(r.format_version, &r.kind, RESULT_KIND)?;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BootstrapFile {
    format_version: u32,
    kind: String,
    per_entry: Vec<Vec<f64>>,
    per_entry_max: f64,
    diagonal_max: f64,
    off_diagonal_max: f64,
    accuracy: f64,
    frequency: f64,
    resamples: usize,
    failures: usize,
    provenance: Provenance,
}

impl BootstrapFile {
    fn new(b: &BootstrapReport, provenance: Provenance) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: "bootstrap".into(),
            per_entry: real_rows(&b.per_entry),
            per_entry_max: b.per_entry_max,
            diagonal_max: b.diagonal_max,
            off_diagonal_max: b.off_diagonal_max,
            accuracy: b.accuracy,
            frequency: b.frequency,
            resamples: b.resamples,
            failures: b.failures,
            provenance,
        }
    }
}

fn cmd_bootstrap(args: &BootstrapArgs) -> CliResult<()> {
    let result = read_result(&args.result)?;
    let Loaded { config, .. } = load_config(&args.common, Some(&result.provenance.config))?;
    let h_hat = real_from_rows(&result.h_hat)?;
    let grid = TimeGrid::new(result.dt, result.len)?;
    let cfg = BootstrapConfig {
        resamples: args
            .bootstrap
            .unwrap_or(config.pipeline.bootstrap.resamples),
        shots: result.shots,
        ..config.pipeline.bootstrap
    };
    cfg.validate().map_err(usage)?;
    let provenance = Provenance::new("bootstrap", &config, cfg.rng_seed)?;
    let report =
        bootstrap(&h_hat, &result.geometry, &grid, &cfg).map_err(CliError::Identification)?;
    let dir = out_dir(&args.common.out, &config)?;
    write_json(
        &dir.join("bootstrap.json"),
        &BootstrapFile::new(&report, provenance),
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystematicSummary {
    pub rotation: Vec<Vec<f64>>,
    pub h_bar: Vec<Vec<f64>>,
    pub diagonal_max: f64,
    pub off_diagonal_max: f64,
    pub accuracy: f64,
}

impl From<&SystematicReport> for SystematicSummary {
    fn from(s: &SystematicReport) -> Self {
        Self {
            rotation: real_rows(&s.rotation),
            h_bar: real_rows(&s.h_bar),
            diagonal_max: s.diagonal_max,
            off_diagonal_max: s.off_diagonal_max,
            accuracy: s.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampModelFile {
    pub format_version: u32,
    pub kind: String,
    pub idle: Vec<f64>,
    pub duration_ns: f64,
    pub initial_map: Vec<Vec<Complex>>,
    pub final_map: Vec<Vec<Complex>>,
    /// Projection of the final map onto the real orthogonal group.
    pub final_rotation: Vec<Vec<f64>>,
    /// Diagonal phases of the final map (degrees).
    pub final_phases_deg: Vec<f64>,
    pub final_phases_beyond_half_pi: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub systematic: Option<SystematicSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
    pub provenance: Provenance,
}

pub const RAMP_KIND: &str = "ramp_model";

fn calibration_runs(
    config: &RunConfig,
    n: usize,
    runs: usize,
    grid: &TimeGrid,
    seed: u64,
) -> CliResult<Vec<CalibrationRun>> {
    let spec = &config.spam.ramp;
    let [lo, hi] = spec.calibration_distances;
    if !(lo >= 0.0 && hi > lo) {
        return Err(CliError::Usage(
            "calibration distances must satisfy 0 <= lo < hi".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let empty = LatticeGeometry::new(n, [])?;
    (0..runs)
        .map(|k| {
            let dist: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
            let h = RMat::from_diagonal(&nalgebra::DVector::from_vec(dist));
            let ramp = RampModelConfig {
                idle: vec![0.0; n],
                speed: spec.speed,
                wait_time: spec.wait_time,
                integration_step: spec.integration_step,
            };
            let s = ramp_map_matrix(&h, &ramp, RampDirection::In)?;
            let m = ramp_map_matrix(&h, &ramp, RampDirection::Out)?;
            let target = HamiltonianParams::new(h.clone(), empty.clone())?;
            let exact = simulate_exact(&target, &s, &m, grid)?;
            let noise = NoiseConfig {
                shots: config.noise.shots,
                damping_rate: config.noise.damping,
                rng_seed: stream_seed(seed, 10 + k as u64),
                clip: false,
            };
            Ok(CalibrationRun {
                data: sample_shots(&exact, &noise)?,
                hamiltonian: h,
            })
        })
        .collect()
}

fn cmd_ramp_model(args: &RampModelArgs) -> CliResult<()> {
    let result = args.result.as_deref().map(read_result).transpose()?;
    let fallback = result.as_ref().map(|r| &r.provenance.config);
    let Loaded { config, base } = load_config(&args.common, fallback)?;
    let geometry = config.geometry.resolve(&base)?;
    let n = geometry.num_sites();
    let target = config.target.build(&geometry)?;
    let seed = config.seed();
    let ramp = config.spam.ramp.model(n, stream_seed(seed, 3))?;
    let s = ramp_map_matrix(target.matrix(), &ramp, RampDirection::In)?;
    let m = ramp_map_matrix(target.matrix(), &ramp, RampDirection::Out)?;
    let phases: Vec<f64> = (0..n).map(|i| m.0[(i, i)].arg().to_degrees()).collect();
    let systematic = match &result {
        Some(r) => {
            if r.n != n {
                return Err(CliError::Usage(format!(
                    "result has N = {}, config has {n}",
                    r.n
                )));
            }
            Some(SystematicSummary::from(&ramp_systematic(
                &real_from_rows(&r.h_prime)?,
                target.matrix(),
                &ramp,
            )?))
        }
        None => None,
    };
    let calibration = if args.calibration_runs > 0 {
        let runs = calibration_runs(
            &config,
            n,
            args.calibration_runs,
            &config.time_grid()?,
            stream_seed(seed, 4),
        )?;
        Some(diag_phase_calibration(
            &runs,
            config.spam.ramp.speed,
            config.spam.ramp.outlier_cutoff_deg,
        )?)
    } else {
        None
    };
    let file = RampModelFile {
        format_version: FORMAT_VERSION,
        kind: RAMP_KIND.into(),
        idle: ramp.idle.clone(),
        duration_ns: ramp.duration(target.matrix()),
        initial_map: complex_rows(s.matrix()),
        final_map: complex_rows(m.matrix()),
        final_rotation: real_rows(&project_orthogonal(&m)),
        final_phases_beyond_half_pi: phases.iter().filter(|p| p.abs() > 90.0).count(),
        final_phases_deg: phases,
        systematic,
        calibration,
        provenance: Provenance::new("ramp-model", &config, seed)?,
    };
    let dir = out_dir(&args.common.out, &config)?;
    write_json(&dir.join("ramp_model.json"), &file)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFile {
    pub format_version: u32,
    pub kind: String,
    /// False when the coverage target was out of reach.
    pub coverage_complete: bool,
    pub min_coverage_reached: usize,
    pub report: ChipScanReport,
    pub provenance: Provenance,
}

fn cmd_scan(args: &ScanArgs) -> CliResult<()> {
    let Loaded { config, base } = load_config(&args.common, None)?;
    let device = config.geometry.resolve(&base)?;
    let seed = config.seed();
    let coupling = match config.target {
        TargetSpec::Harper(h) => h.j,
        TargetSpec::Matrix(_) => {
            return Err(CliError::Usage("scan needs a harper target".into()));
        }
    };
    let scan = ScanConfig {
        subset_size: config.scan.subset_size,
        min_coverage: config.scan.min_coverage,
        b_values: config.scan.b_values.clone(),
        coupling_mhz: coupling,
        min_gap_mhz: config.scan.min_gap_mhz,
        seed,
        pipeline: config.pipeline.identify,
    };
    for f in &config.scan.faults {
        let site = match *f {
            PlantedFault::DetuningBias { site, .. } | PlantedFault::FinalPhase { site, .. } => site,
        };
        if site >= device.num_sites() {
            return Err(CliError::Usage(format!(
                "fault site {site} outside the device"
            )));
        }
    }
    let sampled = sample_best_effort(
        &device,
        scan.subset_size,
        scan.min_coverage,
        stream_seed(seed, 5),
    )?;
    let source = SimulatedDevice {
        grid: config.time_grid()?,
        noise: NoiseConfig {
            shots: config.noise.shots,
            damping_rate: config.noise.damping,
            rng_seed: stream_seed(seed, 6),
            clip: false,
        },
        faults: config.scan.faults.clone(),
    };
    let report = chip_scan(&device, &sampled.subsets, &scan, &source)?;
    let complete = sampled.reached >= scan.min_coverage;
    let dir = out_dir(&args.common.out, &config)?;
    fs::write(dir.join("scan.csv"), scan_csv(&report))?;
    let file = ScanFile {
        format_version: FORMAT_VERSION,
        kind: "scan".into(),
        coverage_complete: complete,
        min_coverage_reached: sampled.reached,
        report,
        provenance: Provenance::new("scan", &config, seed)?,
    };
    write_json(&dir.join("scan.json"), &file)?;
    if !complete {
        return Err(CliError::Identification(Error::CoverageUnreachable {
            reached: sampled.reached,
            required: scan.min_coverage,
            iterations: sampled.draws,
        }));
    }
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `element_id, kind, median_dev_MHz, S_median, signflip_mean, coverage`.
pub fn scan_csv(report: &ChipScanReport) -> String {
    let mut out = String::from("element_id,kind,median_dev_MHz,S_median,signflip_mean,coverage\n");
    for s in &report.sites {
        let _ = writeln!(
            out,
            "{},site,{},{},{},{}",
            s.site + 1,
            opt(s.median_deviation),
            opt(s.initial_map_median),
            opt(s.sign_flip_mean),
            report.site_coverage[s.site]
        );
    }
    for (c, (_, cov)) in report.couplers.iter().zip(&report.edge_coverage) {
        let _ = writeln!(
            out,
            "{}-{},coupler,{},,,{}",
            c.edge.0 + 1,
            c.edge.1 + 1,
            opt(c.median_deviation),
            cov
        );
    }
    out
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
}

fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let mut results = Vec::new();
    let mut ramps = Vec::new();
    for path in &args.results {
        let header: Header = read_json(path)?;
        match header.kind.as_str() {
            RESULT_KIND => results.push((path.clone(), read_result(path)?)),
            RAMP_KIND => {
                let r: RampModelFile = read_json(path)?;
                check_header(r.format_version, &r.kind, RAMP_KIND)?;
                ramps.push((path.clone(), r));
            }
            other => {
                check_header(header.format_version, other, RESULT_KIND)?;
            }
        }
    }
    if let Some((_, first)) = results.first() {
        if let Some((p, r)) = results.iter().find(|(_, r)| r.n != first.n) {
            return Err(CliError::Usage(format!(
                "mixed N: {} has N = {}, expected {}",
                p.display(),
                r.n,
                first.n
            )));
        }
    }
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("report"));
    fs::create_dir_all(&dir)?;
    let stems = unique_stems(&results.iter().map(|(p, _)| p.as_path()).collect::<Vec<_>>());
    let mut rms = String::from("result,t,rms\n");
    let mut butterfly = String::from("result,b,k,frequency_MHz\n");
    let mut rms_series = Vec::new();
    let mut points = Vec::new();
    for ((_, r), stem) in results.iter().zip(&stems) {
        fs::write(dir.join(format!("deviation_{stem}.csv")), deviation_csv(r))?;
        if let Some(t) = &r.target {
            fs::write(
                dir.join(format!("deviation_{stem}.svg")),
                heatmap_svg(
                    &t.entrywise_deviation,
                    &format!("|h_hat - h_target| (MHz), {stem}"),
                ),
            )?;
        }
        let series: Vec<(f64, f64)> = r
            .diagnostics
            .instantaneous_rms
            .iter()
            .enumerate()
            .map(|(l, &v)| (l as f64 * r.dt, v))
            .collect();
        for &(t, v) in &series {
            let _ = writeln!(rms, "{stem},{t},{v}");
        }
        rms_series.push((stem.clone(), series));
        for (k, f) in r.frequencies.iter().enumerate() {
            let _ = writeln!(butterfly, "{stem},{},{},{f}", opt(r.harper_b), k + 1);
            if let Some(b) = r.harper_b {
                points.push((b, *f));
            }
        }
    }
    if !results.is_empty() {
        fs::write(dir.join("rms_vs_time.csv"), rms)?;
        fs::write(
            dir.join("rms_vs_time.svg"),
            line_svg(&rms_series, "t (ns)", "RMS deviation"),
        )?;
        fs::write(dir.join("butterfly.csv"), butterfly)?;
        if !points.is_empty() {
            fs::write(
                dir.join("butterfly.svg"),
                scatter_svg(&points, "b", "frequency (MHz)"),
            )?;
        }
    }
    let calibrations: Vec<_> = ramps
        .iter()
        .filter_map(|(p, r)| r.calibration.as_ref().map(|c| (p, c)))
        .collect();
    if !calibrations.is_empty() {
        let mut table = String::from("file,run,site,distance_MHz,phase_deg,outlier\n");
        let mut pts = Vec::new();
        for (p, c) in &calibrations {
            for q in &c.points {
                let _ = writeln!(
                    table,
                    "{},{},{},{},{},{}",
                    p.display(),
                    q.run,
                    q.site + 1,
                    q.distance,
                    q.phase_deg,
                    q.outlier
                );
                pts.push((q.distance, q.phase_deg));
            }
        }
        fs::write(dir.join("phase_vs_distance.csv"), table)?;
        fs::write(
            dir.join("phase_vs_distance.svg"),
            scatter_svg(&pts, "ramp distance (MHz)", "phase (deg)"),
        )?;
    }
    Ok(())
}

fn unique_stems(paths: &[&Path]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for p in paths {
        let base = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "result".into());
        let mut stem = base.clone();
        let mut k = 2;
        while out.contains(&stem) {
            stem = format!("{base}_{k}");
            k += 1;
        }
        out.push(stem);
    }
    out
}

/// `i, j, h_hat, h_target, deviation` with 1-based indices, `N²` rows.
fn deviation_csv(r: &ResultFile) -> String {
    let mut out = String::from("i,j,h_hat_MHz,h_target_MHz,deviation_MHz\n");
    for i in 0..r.n {
        for j in 0..r.n {
            let (t, d) = match &r.target {
                Some(t) => (
                    t.h_target[i][j].to_string(),
                    t.entrywise_deviation[i][j].to_string(),
                ),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{},{},{},{t},{d}", i + 1, j + 1, r.h_hat[i][j]);
        }
    }
    out
}

const SVG_SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn heatmap_svg(m: &[Vec<f64>], title: &str) -> String {
    let n = m.len().max(1);
    let max = m.iter().flatten().copied().fold(0.0, f64::max).max(1e-300);
    let cell = (SVG_SIZE - 2.0 * MARGIN) / n as f64;
    let mut s = svg_open(title);
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - v / max)).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb(255,{shade},{shade})"><title>({},{}) {v:.4}</title></rect>"#,
                MARGIN + j as f64 * cell,
                MARGIN + i as f64 * cell,
                i + 1,
                j + 1
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-size="11">max {max:.4}</text>"#,
        SVG_SIZE - 15.0
    );
    s.push_str("</svg>\n");
    s
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64, f64, f64) {
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1)
}

fn project(p: (f64, f64), b: (f64, f64, f64, f64)) -> (f64, f64) {
    let w = SVG_SIZE - 2.0 * MARGIN;
    (
        MARGIN + (p.0 - b.0) / (b.1 - b.0) * w,
        SVG_SIZE - MARGIN - (p.1 - b.2) / (b.3 - b.2) * w,
    )
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\">\n<text x=\"{MARGIN}\" y=\"25\" font-size=\"13\">{}</text>\n",
        title.replace('&', "&amp;").replace('<', "&lt;")
    )
}

fn axes(s: &mut String, b: (f64, f64, f64, f64), xlabel: &str, ylabel: &str) {
    let end = SVG_SIZE - MARGIN;
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN},{MARGIN} V{end} H{end}" stroke="black" fill="none"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-size="11">{xlabel}: {:.3} .. {:.3}</text>"#,
        SVG_SIZE - 20.0,
        b.0,
        b.1
    );
    let _ = writeln!(
        s,
        r#"<text x="5" y="{}" font-size="11">{ylabel}: {:.3} .. {:.3}</text>"#,
        MARGIN - 8.0,
        b.2,
        b.3
    );
}

fn line_svg(series: &[(String, Vec<(f64, f64)>)], xlabel: &str, ylabel: &str) -> String {
    let b = bounds(series.iter().flat_map(|(_, s)| s.iter().copied()));
    let mut s = svg_open(ylabel);
    axes(&mut s, b, xlabel, ylabel);
    for (name, pts) in series {
        let d: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (x, y) = project(p, b);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="steelblue" fill="none"><title>{name}</title></polyline>"#,
            d.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

fn scatter_svg(points: &[(f64, f64)], xlabel: &str, ylabel: &str) -> String {
    let b = bounds(points.iter().copied());
    let mut s = svg_open(ylabel);
    axes(&mut s, b, xlabel, ylabel);
    for &p in points {
        let (x, y) = project(p, b);
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="1.5" fill="black"/>"#
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_and_rejects_unknown_keys() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"grid": {"dt": 1, "extra": 2}}"#).is_err());
        let parsed: RunConfig = serde_json::from_str(
            r#"{"geometry": {"grid": [3, 9]}, "target": {"harper": {"b": 0.5}}, "noise": {"shots": "exact"}}"#,
        )
        .unwrap();
        assert_eq!(parsed.geometry, GeometrySpec::Grid([3, 9]));
        assert_eq!(parsed.noise.shots, Shots::Exact);
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(1, 0), stream_seed(1, 1));
        assert_eq!(stream_seed(1, 0), stream_seed(1, 0));
    }

    #[test]
    fn unique_stems_disambiguate() {
        let a = PathBuf::from("x/result.json");
        let b = PathBuf::from("y/result.json");
        assert_eq!(unique_stems(&[&a, &b]), vec!["result", "result_2"]);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["hamid", "report"]), 1);
        assert_eq!(run(["hamid", "frobnicate"]), 1);
    }
}
