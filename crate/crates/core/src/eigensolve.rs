//! Eigenbasis recovery by conjugate-gradient descent on the orthogonal group.
//!
//! Given relative data `Y(Δt) ≈ Σ_k exp(-i φ_k Δt) v_k v_kᵀ` and the
//! frequencies `φ_k`, the orthonormal columns `v_k` are fitted by least squares,
//! optionally with a penalty `μ ‖(V Λ Vᵀ)_{Ω̄}‖` on entries outside the lattice
//! support.
//!
//! For orthogonal `V` the squared residual reduces to
//! `C − 2 Σ_k v_kᵀ A_k v_k` with `A_k = sym Re Σ exp(+i φ_k Δt) Y(Δt)`, so each
//! iteration costs `O(N³)` regardless of the amount of data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RMat, C64};
use crate::model::{FrequencySet, LatticeGeometry, RAD_PER_MHZ_NS};
use crate::spam::RelativeTimeSeries;

/// Smoothing of `‖B‖` near zero, in MHz.
const REG_SMOOTHING: f64 = 1e-7;
/// Orthogonality defect that triggers re-projection of an iterate.
const REORTHONORMALIZE_AT: f64 = 1e-12;
/// Largest rotation angle (Frobenius norm of the step generator) tried first.
const MAX_STEP_ANGLE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearchConfig {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MuSchedule {
    pub initial: f64,
    pub factor: f64,
    pub max_stages: usize,
}

impl Default for MuSchedule {
    fn default() -> Self {
        Self {
            initial: 1.0,
            factor: 1.6,
            max_stages: 12,
        }
    }
}

impl MuSchedule {
    pub fn mu(&self, stage: usize) -> f64 {
        self.initial * self.factor.powi(stage as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenSolveConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Random Haar initializations; the target eigenbasis is tried in addition.
    pub restarts: usize,
    pub line_search: LineSearchConfig,
    pub mu_schedule: MuSchedule,
    pub fit_margin: f64,
    /// Absolute slack of the fit-margin test as a fraction of the data energy;
    /// keeps the margin meaningful when the unregularized fit is at round-off.
    pub fit_floor: f64,
    pub regularize: bool,
    pub rng_seed: u64,
}

impl Default for EigenSolveConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-8,
            restarts: 8,
            line_search: LineSearchConfig::default(),
            mu_schedule: MuSchedule::default(),
            fit_margin: 0.05,
            fit_floor: 1e-12,
            regularize: true,
            rng_seed: 0,
        }
    }
}

impl EigenSolveConfig {
    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        let mu = &self.mu_schedule;
        let ok = self.max_iterations > 0
            && self.gradient_tolerance > 0.0
            && ls.shrink > 0.0
            && ls.shrink < 1.0
            && ls.sufficient_decrease > 0.0
            && ls.sufficient_decrease < 1.0
            && ls.max_backtracks > 0
            && mu.initial > 0.0
            && mu.factor > 1.0
            && self.fit_margin > 0.0
            && self.fit_margin < 1.0
            && self.fit_floor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "eigensolve parameters out of range".into(),
            ))
        }
    }
}

/// One step of the regularization ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuStage {
    pub mu: f64,
    /// Squared-residual data term at the stage optimum.
    pub fit: f64,
    /// `‖(V Λ Vᵀ)_{Ω̄}‖` at the stage optimum (MHz).
    pub leakage: f64,
    pub converged: bool,
    pub accepted: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenbasisEstimate {
    pub v: RMat,
    /// Data term plus `mu_used ·` leakage at `v`.
    pub objective: f64,
    pub fit: f64,
    /// Best data term over all restarts at `μ = 0`.
    pub unregularized_fit: f64,
    pub mu_used: f64,
    pub converged: bool,
    pub stages: Vec<MuStage>,
    /// Final data term of every restart at `μ = 0`, target start last.
    pub restart_fits: Vec<f64>,
}

/// Precomputed reduced form of the least-squares problem.
#[derive(Debug, Clone)]
pub struct Problem {
    a: Vec<RMat>,
    lambda: Vec<f64>,
    mask: RMat,
    /// `Σ ‖Y‖² + N · #points`.
    energy: f64,
}

impl Problem {
    pub fn new(
        freqs: &FrequencySet,
        data: &RelativeTimeSeries,
        geometry: &LatticeGeometry,
    ) -> Result<Self> {
        let n = data.dim();
        if freqs.len() != n || geometry.num_sites() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if freqs.len() != n {
                    freqs.len()
                } else {
                    geometry.num_sites()
                },
            });
        }
        let lambda = freqs.as_slice().to_vec();
        let mut a = vec![RMat::zeros(n, n); n];
        let mut energy = 0.0;
        let mut points = 0usize;
        for b in &data.blocks {
            for (&dt, y) in b.times.iter().zip(&b.values) {
                points += 1;
                energy += y.norm_squared();
                for (ak, &lam) in a.iter_mut().zip(&lambda) {
                    let w = C64::from_polar(1.0, RAD_PER_MHZ_NS * lam * dt);
                    for (dst, z) in ak.iter_mut().zip(y.iter()) {
                        *dst += (w * z).re;
                    }
                }
            }
        }
        let a = a.iter().map(linalg::symmetrize).collect();
        Ok(Self {
            a,
            lambda,
            mask: geometry.off_support_mask(),
            energy: energy + (n * points) as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    fn off_support(&self, v: &RMat) -> RMat {
        assemble_hamiltonian(v, &self.lambda).component_mul(&self.mask)
    }

    /// `‖(V Λ Vᵀ)_{Ω̄}‖`.
    pub fn leakage(&self, v: &RMat) -> f64 {
        self.off_support(v).norm()
    }

    fn smoothed_leakage(&self, v: &RMat) -> f64 {
        (self.off_support(v).norm_squared() + REG_SMOOTHING * REG_SMOOTHING).sqrt()
    }

    /// Reduced data term; loses absolute accuracy near a perfect fit.
    pub fn reduced_fit(&self, v: &RMat) -> f64 {
        let gain: f64 = (0..self.dim())
            .map(|k| {
                let vk = v.column(k);
                vk.dot(&(&self.a[k] * vk))
            })
            .sum();
        self.energy - 2.0 * gain
    }

    /// Euclidean gradient of data term plus `mu ·` smoothed leakage.
    fn euclidean_gradient(&self, v: &RMat, mu: f64) -> RMat {
        let n = self.dim();
        let mut g = RMat::zeros(n, n);
        for k in 0..n {
            g.set_column(k, &(&self.a[k] * v.column(k) * -4.0));
        }
        if mu > 0.0 {
            let b = self.off_support(v);
            let norm = (b.norm_squared() + REG_SMOOTHING * REG_SMOOTHING).sqrt();
            let lam = RMat::from_diagonal(&nalgebra::DVector::from_column_slice(&self.lambda));
            g += (b * v * lam) * (2.0 * mu / norm);
        }
        g
    }

    /// Skew generator `G = Γ Vᵀ − V Γᵀ`; the objective along `exp(-tG) V`
    /// falls at rate `½ ‖G‖²`.
    pub fn riemannian_gradient(&self, v: &RMat, mu: f64) -> RMat {
        let gamma = self.euclidean_gradient(v, mu);
        let gv = &gamma * v.transpose();
        &gv - gv.transpose()
    }

    /// Change of the smoothed objective when `V` moves to `V + Δ`, without the
    /// cancellation of differencing two large values.
    fn change(&self, v: &RMat, delta: &RMat, mu: f64) -> f64 {
        let mut data = 0.0;
        for k in 0..self.dim() {
            let d = delta.column(k);
            let s = v.column(k) * 2.0 + d;
            data += d.dot(&(&self.a[k] * s));
        }
        let mut change = -2.0 * data;
        if mu > 0.0 {
            let moved = v + delta;
            change += mu * (self.smoothed_leakage(&moved) - self.smoothed_leakage(v));
        }
        change
    }
}

/// Direct squared residual `Σ_blocks Σ_l ‖Y_l − V E_l Vᵀ‖²`.
pub fn data_fit(v: &RMat, freqs: &[f64], data: &RelativeTimeSeries) -> f64 {
    let mut total = 0.0;
    for b in &data.blocks {
        for (&dt, y) in b.times.iter().zip(&b.values) {
            let phases: Vec<C64> = freqs
                .iter()
                .map(|&lam| C64::from_polar(1.0, -RAD_PER_MHZ_NS * lam * dt))
                .collect();
            let model = linalg::spectral_synthesis(v, &phases);
            total += (y - model).norm_squared();
        }
    }
    total
}

/// Data term plus `mu · ‖(V Λ Vᵀ)_{Ω̄}‖`, evaluated directly.
pub fn objective(
    v: &RMat,
    freqs: &FrequencySet,
    data: &RelativeTimeSeries,
    mu: f64,
    geometry: &LatticeGeometry,
) -> f64 {
    let h = assemble_hamiltonian(v, freqs.as_slice());
    let leak = h.component_mul(&geometry.off_support_mask()).norm();
    data_fit(v, freqs.as_slice(), data) + mu * leak
}

/// Skew-symmetric Riemannian gradient generator at `V`.
pub fn riemannian_gradient(
    v: &RMat,
    freqs: &FrequencySet,
    data: &RelativeTimeSeries,
    mu: f64,
    geometry: &LatticeGeometry,
) -> Result<RMat> {
    Ok(Problem::new(freqs, data, geometry)?.riemannian_gradient(v, mu))
}

/// `ĥ = V diag(λ) Vᵀ`, symmetrized.
pub fn assemble_hamiltonian(v: &RMat, freqs: &[f64]) -> RMat {
    let lam = RMat::from_diagonal(&nalgebra::DVector::from_column_slice(freqs));
    linalg::symmetrize(&(v * lam * v.transpose()))
}

/// `exp(X) − 1` for skew `X`, accurate also when `X` is tiny.
fn expm1_skew(x: &RMat) -> RMat {
    let n = x.nrows();
    if x.norm() > 0.1 {
        return linalg::expm_skew(x) - RMat::identity(n, n);
    }
    let mut term = x.clone();
    let mut sum = x.clone();
    for k in 2..=20 {
        term = &term * x / k as f64;
        sum += &term;
        if term.amax() <= f64::EPSILON * 1e-3 * sum.amax() {
            break;
        }
    }
    sum
}

/// Result of one conjugate-gradient run.
#[derive(Debug, Clone)]
pub struct CgRun {
    pub v: RMat,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Accepted per-step changes of the smoothed objective; all `≤ 0`.
    pub decreases: Vec<f64>,
}

/// Polak–Ribière conjugate gradient along geodesics `exp(-tH) V` with
/// Armijo backtracking.
pub fn conjugate_gradient(problem: &Problem, v0: &RMat, mu: f64, cfg: &EigenSolveConfig) -> CgRun {
    let ls = &cfg.line_search;
    let mut v = v0.clone();
    let mut g = problem.riemannian_gradient(&v, mu);
    let mut h = g.clone();
    let mut t_prev = f64::INFINITY;
    let mut decreases = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let gnorm = g.norm();
        if gnorm < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        let mut slope = 0.5 * linalg::dot(&g, &h);
        if !(slope > 0.0) {
            h = g.clone();
            slope = 0.5 * gnorm * gnorm;
        }
        let hnorm = h.norm();
        let mut t = (2.0 * t_prev).min(MAX_STEP_ANGLE / hnorm);
        let mut step = None;
        for _ in 0..ls.max_backtracks {
            let delta = expm1_skew(&(&h * -t)) * &v;
            let df = problem.change(&v, &delta, mu);
            if df <= -ls.sufficient_decrease * t * slope {
                step = Some((delta, df));
                break;
            }
            t *= ls.shrink;
        }
        let Some((delta, df)) = step else {
            // No representable decrease along a descent direction: round-off
            // floor reached.
            converged = true;
            break;
        };
        iterations += 1;
        t_prev = t;
        v += delta;
        if linalg::orthogonality_defect(&v) > REORTHONORMALIZE_AT {
            v = linalg::nearest_orthogonal(&v);
        }
        decreases.push(df);
        let g_new = problem.riemannian_gradient(&v, mu);
        let gamma = (linalg::dot(&(&g_new - &g), &g_new) / (gnorm * gnorm)).max(0.0);
        h = &g_new + h * gamma;
        g = g_new;
    }
    if !converged && decreases.len() >= 10 {
        let recent: f64 = decreases[decreases.len() - 10..]
            .iter()
            .map(|d| d.abs())
            .sum();
        converged = recent <= 1e-12 * problem.energy();
    }
    CgRun {
        gradient_norm: g.norm(),
        v,
        converged,
        iterations,
        decreases,
    }
}

/// Multi-start fit at `μ = 0` followed by the regularization ramp.
///
/// A ramp stage is accepted while its data term stays within
/// `(1 + fit_margin) · f₀ + fit_floor · energy` of the best unregularized fit
/// `f₀`; the last accepted stage is returned.
pub fn minimize(
    freqs: &FrequencySet,
    data: &RelativeTimeSeries,
    geometry: &LatticeGeometry,
    target: Option<&RMat>,
    cfg: &EigenSolveConfig,
) -> Result<EigenbasisEstimate> {
    cfg.validate()?;
    let problem = Problem::new(freqs, data, geometry)?;
    let n = problem.dim();
    let mut starts: Vec<RMat> = (0..cfg.restarts)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(r as u64));
            linalg::random_orthogonal(n, &mut rng)
        })
        .collect();
    if let Some(h0) = target {
        if h0.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: h0.nrows(),
            });
        }
        starts.push(linalg::sorted_symmetric_eigen(h0).1);
    }
    if starts.is_empty() {
        return Err(Error::InvalidConfig(
            "no initializations: restarts = 0 and no target".into(),
        ));
    }
    let runs: Vec<(CgRun, f64)> = starts
        .par_iter()
        .map(|v0| {
            let run = conjugate_gradient(&problem, v0, 0.0, cfg);
            let fit = data_fit(&run.v, freqs.as_slice(), data);
            (run, fit)
        })
        .collect();
    let restart_fits: Vec<f64> = runs.iter().map(|(_, f)| *f).collect();
    let (best, f0) = runs
        .into_iter()
        .filter(|(run, _)| run.converged)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::NoConvergence)?;

    let mut estimate = EigenbasisEstimate {
        objective: f0,
        fit: f0,
        unregularized_fit: f0,
        mu_used: 0.0,
        converged: best.converged,
        stages: Vec::new(),
        restart_fits,
        v: best.v,
    };
    if !cfg.regularize {
        return Ok(estimate);
    }
    let bound = (1.0 + cfg.fit_margin) * f0 + cfg.fit_floor * problem.energy();
    for stage in 0..cfg.mu_schedule.max_stages {
        let mu = cfg.mu_schedule.mu(stage);
        let run = conjugate_gradient(&problem, &estimate.v, mu, cfg);
        let fit = data_fit(&run.v, freqs.as_slice(), data);
        let leakage = problem.leakage(&run.v);
        let accepted = fit <= bound;
        estimate.stages.push(MuStage {
            mu,
            fit,
            leakage,
            converged: run.converged,
            accepted,
            iterations: run.iterations,
        });
        if !accepted {
            break;
        }
        estimate.v = run.v;
        estimate.fit = fit;
        estimate.mu_used = mu;
        estimate.converged = run.converged;
        estimate.objective = fit + mu * leakage;
    }
    Ok(estimate)
}
