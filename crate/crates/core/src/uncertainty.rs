//! Statistical error by parametric bootstrap, systematic error from the
//! final-ramp model, and the ramp-phase calibration fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, C64};
use crate::metrics::{analog_accuracy, frequency_accuracy};
use crate::model::{eig_symmetric, LatticeGeometry, Shots, SpamMap, TimeGrid, TimeSeriesData};
use crate::pipeline::{identify, IdentifyConfig};
use crate::simulate::{
    haar_random_unitary, ramp_map_matrix, sample_shots, simulate_exact_matrix, NoiseConfig,
    RampDirection, RampModelConfig,
};
use crate::spam::{correct_diagonal_sign, estimate_initial_map_matrix};

/// Largest tolerated fraction of failed resamples.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub quantile: f64,
    pub shots: Shots,
    pub rng_seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            quantile: 0.99,
            shots: Shots::Finite(1000),
            rng_seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::InvalidConfig("quantile must lie in (0, 1)".into()));
        }
        // Below 1/(1-q) resamples the upper quantile is just the maximum.
        if (self.resamples as f64) < (1.0 / (1.0 - self.quantile)).min(100.0) || self.resamples == 0
        {
            return Err(Error::InvalidConfig(format!(
                "{} resamples are too few for the {} quantile",
                self.resamples, self.quantile
            )));
        }
        Ok(())
    }
}

/// Quantiles of the bootstrap distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    /// Per-entry quantile of `|ĥ_bt − ĥ|`.
    pub per_entry: RMat,
    pub per_entry_max: f64,
    pub diagonal_max: f64,
    pub off_diagonal_max: f64,
    /// Quantile of `E_analog(ĥ_bt, ĥ)`.
    pub accuracy: f64,
    /// Quantile of the accuracy between the bootstrap and reference spectra.
    pub frequency: f64,
    pub resamples: usize,
    pub failures: usize,
}

/// Nearest-rank quantile of unsorted samples.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    assert!(!samples.is_empty(), "quantile of an empty sample");
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = (q * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

struct Resample {
    deviation: RMat,
    accuracy: f64,
    frequency: f64,
}

fn resample(
    h_hat: &RMat,
    reference_freqs: &[f64],
    geometry: &LatticeGeometry,
    grid: &TimeGrid,
    cfg: &BootstrapConfig,
    pipeline: &IdentifyConfig,
    index: usize,
) -> Result<Resample> {
    let n = h_hat.nrows();
    let seed = cfg
        .rng_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64);
    let s = haar_random_unitary(n, seed);
    let exact = simulate_exact_matrix(h_hat, &s, &SpamMap::identity(n), grid)?;
    let data = match cfg.shots {
        Shots::Exact => exact,
        Shots::Finite(k) => sample_shots(&exact, &NoiseConfig::shots(k, seed ^ 0x5_DEEC_E66D))?,
    };
    let r = identify(&data, geometry, Some(h_hat), pipeline)?;
    Ok(Resample {
        deviation: (&r.h_hat - h_hat).abs(),
        accuracy: analog_accuracy(&r.h_hat, h_hat)?,
        frequency: frequency_accuracy(r.frequencies.as_slice(), reference_freqs)?,
    })
}

/// Parametric bootstrap around `h_hat`: each resample re-simulates data with
/// `M = 1`, a fresh Haar-random `S` and shot noise, and is identified without
/// regularization.
pub fn bootstrap(
    h_hat: &RMat,
    geometry: &LatticeGeometry,
    grid: &TimeGrid,
    cfg: &BootstrapConfig,
) -> Result<BootstrapReport> {
    cfg.validate()?;
    let n = h_hat.nrows();
    if geometry.num_sites() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: geometry.num_sites(),
        });
    }
    let mut pipeline = IdentifyConfig::unregularized();
    pipeline.preprocess.window = pipeline.preprocess.window.min(grid.len());
    let reference: Vec<f64> = eig_symmetric(h_hat).values;

    let runs: Vec<Result<Resample>> = (0..cfg.resamples)
        .into_par_iter()
        .map(|i| resample(h_hat, &reference, geometry, grid, cfg, &pipeline, i))
        .collect();
    let mut ok = Vec::with_capacity(runs.len());
    let mut failures = 0;
    for r in runs {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => {
                log::debug!("bootstrap resample failed: {e}");
                failures += 1;
            }
        }
    }
    if failures as f64 > MAX_FAILURE_RATE * cfg.resamples as f64 || ok.is_empty() {
        return Err(Error::UnreliableBootstrap {
            failures,
            total: cfg.resamples,
        });
    }
    let q = cfg.quantile;
    let per_entry = RMat::from_fn(n, n, |i, j| {
        quantile(
            &ok.iter().map(|r| r.deviation[(i, j)]).collect::<Vec<_>>(),
            q,
        )
    });
    let diag = (0..n).map(|i| per_entry[(i, i)]).fold(0.0, f64::max);
    let off = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| per_entry[(i, j)])
        .fold(0.0, f64::max);
    Ok(BootstrapReport {
        per_entry_max: diag.max(off),
        diagonal_max: diag,
        off_diagonal_max: off,
        per_entry,
        accuracy: quantile(&ok.iter().map(|r| r.accuracy).collect::<Vec<_>>(), q),
        frequency: quantile(&ok.iter().map(|r| r.frequency).collect::<Vec<_>>(), q),
        resamples: cfg.resamples,
        failures,
    })
}

/// Systematic error attributed to the real orthogonal part of the final ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct SystematicReport {
    /// Projection `Ō_M` of the simulated final map.
    pub rotation: RMat,
    /// `Ō_Mᵀ ĥ′ Ō_M` after sign post-processing.
    pub h_bar: RMat,
    pub diagonal_max: f64,
    pub off_diagonal_max: f64,
    pub accuracy: f64,
}

/// Real orthogonal `O` closest to a complex map: the polar factor of its real
/// part, since only `Re⟨M, O⟩` depends on `O` in `‖M − O‖`.
pub fn project_orthogonal(m: &SpamMap) -> RMat {
    linalg::nearest_orthogonal(&linalg::real_part(m.matrix()))
}

/// Final-ramp systematic error of an identified `ĥ′` (before sign correction).
///
/// The map is simulated for `h_target`. Before projecting, its rows are
/// rotated by the diagonal phases modulo π, which is the frame the pipeline
/// reports `ĥ′` in after phase alignment; for phases below π/2 in magnitude
/// this leaves the projection of the real part unchanged to leading order.
pub fn ramp_systematic(
    h_hat_prime: &RMat,
    h_target: &RMat,
    cfg: &RampModelConfig,
) -> Result<SystematicReport> {
    let n = h_hat_prime.nrows();
    if h_target.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: h_target.nrows(),
        });
    }
    let m_bar = ramp_map_matrix(h_target, cfg, RampDirection::Out)?;
    let aligned = CMat::from_fn(n, n, |i, j| {
        let d = m_bar.0[(i, i)];
        let theta = if d.norm() > 0.0 {
            wrap_half_pi(d.arg())
        } else {
            0.0
        };
        C64::from_polar(1.0, -theta) * m_bar.0[(i, j)]
    });
    let rotation = project_orthogonal(&SpamMap(aligned));
    let id = SpamMap::identity(n);
    let h_hat = correct_diagonal_sign(h_hat_prime, &id, h_target)?.h;
    let rotated = rotation.transpose() * h_hat_prime * &rotation;
    let h_bar = correct_diagonal_sign(&linalg::symmetrize(&rotated), &id, h_target)?.h;
    let dev = (&h_bar - &h_hat).abs();
    let mut diagonal_max: f64 = 0.0;
    let mut off_diagonal_max: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                diagonal_max = diagonal_max.max(dev[(i, j)]);
            } else {
                off_diagonal_max = off_diagonal_max.max(dev[(i, j)]);
            }
        }
    }
    Ok(SystematicReport {
        accuracy: analog_accuracy(&h_bar, &h_hat)?,
        rotation,
        h_bar,
        diagonal_max,
        off_diagonal_max,
    })
}

fn wrap_half_pi(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(PI);
    if y > PI / 2.0 {
        y -= PI;
    }
    y
}

/// Combined statistical and systematic error bars of one identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ErrorReport {
    pub per_entry_statistical: Option<f64>,
    pub per_entry_statistical_matrix: Option<Vec<Vec<f64>>>,
    pub accuracy_statistical: Option<f64>,
    pub frequency_statistical: Option<f64>,
    pub per_entry_systematic_diagonal: Option<f64>,
    pub per_entry_systematic_off_diagonal: Option<f64>,
    pub accuracy_systematic: Option<f64>,
}

impl ErrorReport {
    pub fn new(
        statistical: Option<&BootstrapReport>,
        systematic: Option<&SystematicReport>,
    ) -> Self {
        Self {
            per_entry_statistical: statistical.map(|b| b.per_entry_max),
            per_entry_statistical_matrix: statistical.map(|b| rows(&b.per_entry)),
            accuracy_statistical: statistical.map(|b| b.accuracy),
            frequency_statistical: statistical.map(|b| b.frequency),
            per_entry_systematic_diagonal: systematic.map(|s| s.diagonal_max),
            per_entry_systematic_off_diagonal: systematic.map(|s| s.off_diagonal_max),
            accuracy_systematic: systematic.map(|s| s.accuracy),
        }
    }
}

fn rows(a: &RMat) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Degrees of phase per MHz·ns.
pub const DEG_PER_MHZ_NS: f64 = 0.36;

/// Default cutoff above which calibration phases are treated as outliers.
pub const OUTLIER_CUTOFF_DEG: f64 = 140.0;

/// One diagonal-Hamiltonian calibration run.
#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub data: TimeSeriesData,
    /// Diagonal Hamiltonian `ĥ` in the idle frame (MHz).
    pub hamiltonian: RMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub run: usize,
    pub site: usize,
    /// `|ĥ_ii|` (MHz).
    pub distance: f64,
    /// `|arg Ŝ_ii|` in degrees.
    pub phase_deg: f64,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub points: Vec<PhasePoint>,
    /// Linear upper envelope `phase = slope·Δf + offset` (degrees).
    pub envelope_slope: f64,
    pub envelope_offset: f64,
    /// `slope / 0.36`, the total ramp time the envelope implies (ns).
    pub total_ramp_time: f64,
    /// `offset / speed` at the assumed speed (ns).
    pub wait_time: f64,
    /// Least-squares `phase = a·Δf² + b·Δf + c` over the non-outliers.
    pub quadratic: [f64; 3],
}

/// Fits the diagonal phases of `Ŝ` against ramp distance.
pub fn diag_phase_calibration(
    runs: &[CalibrationRun],
    speed: f64,
    cutoff_deg: f64,
) -> Result<CalibrationReport> {
    if !(speed > 0.0) {
        return Err(Error::InvalidConfig("ramp speed must be > 0".into()));
    }
    let mut points = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        let h = &run.hamiltonian;
        let n = h.nrows();
        if (0..n).any(|i| (0..n).any(|j| i != j && h[(i, j)] != 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "calibration run {r} is not diagonal"
            )));
        }
        let s = estimate_initial_map_matrix(&run.data, h)?;
        for i in 0..n {
            let phase_deg = s.0[(i, i)].arg().abs().to_degrees();
            points.push(PhasePoint {
                run: r,
                site: i,
                distance: h[(i, i)].abs(),
                phase_deg,
                outlier: phase_deg > cutoff_deg,
            });
        }
    }
    let inliers: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| !p.outlier)
        .map(|p| (p.distance, p.phase_deg))
        .collect();
    let mut distinct: Vec<f64> = inliers.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if distinct.len() < 3 {
        return Err(Error::TooFewDistances(distinct.len()));
    }
    let (slope, offset) = upper_envelope(&inliers);
    let quadratic = quadratic_fit(&inliers)?;
    Ok(CalibrationReport {
        points,
        envelope_slope: slope,
        envelope_offset: offset,
        total_ramp_time: slope / DEG_PER_MHZ_NS,
        wait_time: offset / speed,
        quadratic,
    })
}

/// Line above every point with the least mean excess: the upper-hull edge
/// spanning the mean abscissa.
pub fn upper_envelope(points: &[(f64, f64)]) -> (f64, f64) {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while let Some(&last) = hull.last() {
            if (last.0 - p.0).abs() < 1e-12 {
                hull.pop();
                continue;
            }
            if hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let cross = (last.0 - a.0) * (p.1 - a.1) - (last.1 - a.1) * (p.0 - a.0);
                if cross >= 0.0 {
                    hull.pop();
                    continue;
                }
            }
            break;
        }
        hull.push(p);
    }
    if hull.len() == 1 {
        return (0.0, hull[0].1);
    }
    let mean = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let k = hull
        .windows(2)
        .position(|w| mean <= w[1].0)
        .unwrap_or(hull.len() - 2);
    let (a, b) = (hull[k], hull[k + 1]);
    let slope = (b.1 - a.1) / (b.0 - a.0);
    (slope, a.1 - slope * a.0)
}

fn quadratic_fit(points: &[(f64, f64)]) -> Result<[f64; 3]> {
    let a = RMat::from_fn(points.len(), 3, |i, j| points[i].0.powi(2 - j as i32));
    let y = nalgebra::DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let svd = linalg::svd(&a, true, true);
    let x = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::InvalidConfig(format!("quadratic fit failed: {e}")))?;
    Ok([x[0], x[1], x[2]])
}
