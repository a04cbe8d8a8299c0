//! Synthetic measurement records: exact dynamics under SPAM maps, a
//! fixed-speed pulse-ramp model for those maps and finite-shot sampling.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, C64};
use crate::model::{
    eig_symmetric, propagator_from_eigen, HamiltonianParams, Shots, SpamMap, TimeGrid,
    TimeSeriesData,
};

/// Values this far past ±1/2 are rounding, not physics.
const RANGE_TOL: f64 = 1e-9;

/// `y[l] = ½ · M · exp(-i 2π·1e-3 t_l h) · S`.
pub fn simulate_exact(
    h: &HamiltonianParams,
    s: &SpamMap,
    m: &SpamMap,
    grid: &TimeGrid,
) -> Result<TimeSeriesData> {
    simulate_exact_matrix(h.matrix(), s, m, grid)
}

pub fn simulate_exact_matrix(
    h: &RMat,
    s: &SpamMap,
    m: &SpamMap,
    grid: &TimeGrid,
) -> Result<TimeSeriesData> {
    let n = h.nrows();
    for map in [s, m] {
        if map.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: map.dim(),
            });
        }
    }
    let eig = eig_symmetric(h);
    let half = C64::new(0.5, 0.0);
    let values = grid
        .times()
        .map(|t| (m.matrix() * propagator_from_eigen(&eig, t) * s.matrix()) * half)
        .collect();
    TimeSeriesData::new(values, *grid, Shots::Exact)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub shots: Shots,
    /// Global incoherent envelope `exp(-rate · t)` applied before sampling (1/ns).
    #[serde(default)]
    pub damping_rate: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Clamp out-of-range expectation values instead of failing.
    #[serde(default)]
    pub clip: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            shots: Shots::Finite(1000),
            damping_rate: 0.0,
            rng_seed: 0,
            clip: false,
        }
    }
}

impl NoiseConfig {
    pub fn exact() -> Self {
        Self {
            shots: Shots::Exact,
            ..Self::default()
        }
    }

    pub fn shots(shots: u32, rng_seed: u64) -> Self {
        Self {
            shots: Shots::Finite(shots),
            rng_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == Shots::Finite(0) {
            return Err(Error::InvalidConfig("shots must be >= 1".into()));
        }
        if !(self.damping_rate >= 0.0) {
            return Err(Error::InvalidConfig("damping rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Replaces each quadrature by the mean of `shots` independent ±½ outcomes.
///
/// The real (X-basis) and imaginary (Y-basis) parts are sampled independently
/// with `P(+½) = ½ + value`. With `Shots::Exact` only the damping envelope is
/// applied.
pub fn sample_shots(exact: &TimeSeriesData, noise: &NoiseConfig) -> Result<TimeSeriesData> {
    noise.validate()?;
    if exact.shots() != Shots::Exact {
        return Err(Error::InvalidConfig("input data is already sampled".into()));
    }
    let grid = *exact.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
    let mut clipped = 0usize;
    let mut out = Vec::with_capacity(grid.len());
    for (l, y) in exact.snapshots().iter().enumerate() {
        let envelope = (-noise.damping_rate * grid.time(l)).exp();
        let mut sampled = CMat::zeros(y.nrows(), y.ncols());
        for (dst, &z) in sampled.iter_mut().zip(y.iter()) {
            let z = z * envelope;
            let re = checked_quadrature(z.re, noise.clip, &mut clipped)?;
            let im = checked_quadrature(z.im, noise.clip, &mut clipped)?;
            *dst = match noise.shots {
                Shots::Exact => C64::new(re, im),
                Shots::Finite(k) => {
                    C64::new(sample_mean(re, k, &mut rng), sample_mean(im, k, &mut rng))
                }
            };
        }
        out.push(sampled);
    }
    if clipped > 0 {
        warn!("clipped {clipped} quadrature values into [-1/2, 1/2]");
    }
    TimeSeriesData::new(out, grid, noise.shots)
}

fn checked_quadrature(x: f64, clip: bool, clipped: &mut usize) -> Result<f64> {
    if x.abs() <= 0.5 {
        return Ok(x);
    }
    if x.abs() > 0.5 + RANGE_TOL {
        if !clip {
            return Err(Error::OutOfRange(x));
        }
        *clipped += 1;
    }
    Ok(x.clamp(-0.5, 0.5))
}

fn sample_mean<R: Rng>(value: f64, shots: u32, rng: &mut R) -> f64 {
    let p = (0.5 + value).clamp(0.0, 1.0);
    let ups = Binomial::new(shots as u64, p)
        .expect("p is clamped to [0, 1]")
        .sample(rng);
    (2.0 * ups as f64 - shots as f64) / (2.0 * shots as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampDirection {
    /// Idle configuration to target (state preparation).
    In,
    /// Target back to idle (measurement).
    Out,
}

/// Fixed-speed ramp between the idle frequencies and a target Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampModelConfig {
    /// Diagonal of the idle matrix `h_m` (MHz).
    pub idle: Vec<f64>,
    /// MHz/ns.
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// ns spent after the slowest entry has arrived.
    #[serde(default = "default_wait")]
    pub wait_time: f64,
    /// Product-integration step (ns).
    #[serde(default = "default_step")]
    pub integration_step: f64,
}

fn default_speed() -> f64 {
    150.0
}
fn default_wait() -> f64 {
    0.1
}
fn default_step() -> f64 {
    0.01
}

impl RampModelConfig {
    pub fn new(idle: Vec<f64>) -> Self {
        Self {
            idle,
            speed: default_speed(),
            wait_time: default_wait(),
            integration_step: default_step(),
        }
    }

    /// Idle detunings drawn uniformly from ±[lo, hi] MHz with random sign.
    pub fn random_idle(n: usize, lo: f64, hi: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idle = (0..n)
            .map(|_| {
                let mag = rng.random_range(lo..=hi);
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        Self::new(idle)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0) {
            return Err(Error::InvalidConfig("ramp speed must be > 0".into()));
        }
        if !(self.wait_time >= 0.0) {
            return Err(Error::InvalidConfig("wait time must be >= 0".into()));
        }
        if !(self.integration_step > 0.0 && self.integration_step <= 0.05) {
            return Err(Error::InvalidConfig(
                "integration step must lie in (0, 0.05] ns".into(),
            ));
        }
        Ok(())
    }

    pub fn idle_matrix(&self) -> RMat {
        RMat::from_diagonal(&nalgebra::DVector::from_vec(self.idle.clone()))
    }

    /// Total ramp duration `max |h - h_m| / v + wait`.
    pub fn duration(&self, h_target: &RMat) -> f64 {
        ramp_distance(h_target, &self.idle_matrix()) / self.speed + self.wait_time
    }
}

/// Largest entry-wise distance `max_ij |h - h_m|` (MHz).
pub fn ramp_distance(h_target: &RMat, idle: &RMat) -> f64 {
    (h_target - idle).amax()
}

/// Time-ordered exponential of the ramp, as a product of piecewise-constant
/// propagators.
///
/// Each entry of `H(t)` moves from its start value towards its end value at
/// speed `v` and holds once it arrives; the ramp lasts
/// `τ = max |h - h_m| / v + wait`. `H(t)` is taken relative to the idle matrix
/// `h_m`, i.e. in the frame co-rotating with the idle frequencies in which
/// state preparation and read-out happen.
pub fn simulate_ramp_map(
    h_target: &HamiltonianParams,
    cfg: &RampModelConfig,
    direction: RampDirection,
) -> Result<SpamMap> {
    ramp_map_matrix(h_target.matrix(), cfg, direction)
}

pub fn ramp_map_matrix(
    h_target: &RMat,
    cfg: &RampModelConfig,
    direction: RampDirection,
) -> Result<SpamMap> {
    cfg.validate()?;
    let n = h_target.nrows();
    if cfg.idle.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: cfg.idle.len(),
        });
    }
    let idle = cfg.idle_matrix();
    let rel_target = h_target - &idle;
    let zero = RMat::zeros(n, n);
    let (start, end) = match direction {
        RampDirection::In => (&zero, &rel_target),
        RampDirection::Out => (&rel_target, &zero),
    };
    let tau = cfg.duration(h_target);
    if tau <= 0.0 {
        return Ok(SpamMap::identity(n));
    }
    let steps = (tau / cfg.integration_step).ceil().max(1.0) as usize;
    let dt = tau / steps as f64;
    let mut total = CMat::identity(n, n);
    for k in 0..steps {
        let t_mid = (k as f64 + 0.5) * dt;
        let h_t = ramp_snapshot(start, end, cfg.speed, t_mid);
        total = propagator_from_eigen(&eig_symmetric(&h_t), dt) * total;
    }
    SpamMap::new(total)
}

/// Entry-wise clamped linear interpolation from `start` to `end` at `speed`.
pub fn ramp_snapshot(start: &RMat, end: &RMat, speed: f64, t: f64) -> RMat {
    start.zip_map(end, |a, b| {
        let travelled = speed * t;
        if (b - a).abs() <= travelled {
            b
        } else {
            a + (b - a).signum() * travelled
        }
    })
}

/// Haar-random unitary SPAM map.
pub fn haar_random_unitary(n: usize, seed: u64) -> SpamMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpamMap(linalg::random_unitary(n, &mut rng))
}

/// `1 + scale · G` with `G` standard complex Gaussian (`E|G_ij|² = 1`).
pub fn perturbed_identity(n: usize, scale: f64, seed: u64) -> Result<SpamMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMat::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    SpamMap::new(CMat::identity(n, n) + g * C64::new(scale, 0.0))
}

/// Diagonal unitary with phases uniform in `(-π, π)`; returns the phases too.
pub fn random_diagonal_unitary(n: usize, seed: u64) -> (SpamMap, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..n)
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    (SpamMap::diagonal_phases(&phases), phases)
}
