//! End-to-end identification: frequencies, pre-processing, eigenbasis,
//! initial map, sign post-processing and fit diagnostics.

use serde::{Deserialize, Serialize};

use crate::eigensolve::{assemble_hamiltonian, minimize, EigenSolveConfig, MuStage};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, C64};
use crate::metrics::{fit_deviation, FitDiagnostics};
use crate::model::{FrequencySet, LatticeGeometry, SpamMap, TimeSeriesData};
use crate::spam::{
    correct_diagonal_sign, estimate_initial_map_matrix, estimate_phase_alignment, remove_ramp,
    PreprocessConfig, Side,
};
use crate::spectral::{anchored_trace_signal, esprit, trace_signal, EspritConfig};

/// Signal the eigenfrequencies are extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencySource {
    /// `tr(y[l] y[a]⁺)` at the best-conditioned anchor `a`: unit weights for
    /// every mode whatever the SPAM maps.
    #[default]
    Anchored,
    /// `tr(y[l])`: weights `v_kᵀ S M v_k / 2`.
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifyConfig {
    pub preprocess: PreprocessConfig,
    pub hankel_rows: Option<usize>,
    pub rank_threshold: Option<f64>,
    pub frequency_source: FrequencySource,
    /// Remove diagonal measurement phases modulo π before the real-basis fit.
    pub align_phases: bool,
    pub eigensolve: EigenSolveConfig,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            hankel_rows: None,
            rank_threshold: None,
            frequency_source: FrequencySource::Anchored,
            align_phases: true,
            eigensolve: EigenSolveConfig::default(),
        }
    }
}

impl IdentifyConfig {
    pub fn unregularized() -> Self {
        let mut cfg = Self::default();
        cfg.eigensolve.regularize = false;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    /// `D̂ ĥ′ D̂`.
    pub h_hat: RMat,
    /// Estimate in the frame of the measurement, before sign correction.
    pub h_prime: RMat,
    pub s_hat: SpamMap,
    /// Diagonal of `D̂_M`: `-1` where the final phase exceeds π/2 in magnitude.
    pub final_signs: Vec<f64>,
    /// Phases of the diagonal final map, in `(-π, π]`; the common phase is
    /// fixed by `tr Ŝ > 0`.
    pub final_phases: Vec<f64>,
    pub frequencies: FrequencySet,
    pub mu_used: f64,
    pub fit: f64,
    pub unregularized_fit: f64,
    pub stages: Vec<MuStage>,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
    pub skipped_anchors: Vec<usize>,
    /// Anchor of the frequency signal, if anchored.
    pub frequency_anchor: Option<usize>,
}

impl IdentificationResult {
    /// `Θ D̂_M` as a map.
    pub fn final_map(&self) -> SpamMap {
        SpamMap::diagonal_phases(&self.final_phases)
    }

    /// Sites whose final phase exceeds π/2 in magnitude.
    pub fn sign_flips(&self) -> Vec<bool> {
        self.final_signs.iter().map(|&s| s < 0.0).collect()
    }
}

/// Index and condition number of the best-conditioned snapshot.
pub fn best_anchor(data: &TimeSeriesData) -> (usize, f64) {
    data.snapshots()
        .iter()
        .enumerate()
        .map(|(l, y)| {
            let s = linalg::singular_values(y);
            let max = s.iter().copied().fold(0.0, f64::max);
            let min = s.iter().copied().fold(f64::INFINITY, f64::min);
            (l, if min > 0.0 { max / min } else { f64::INFINITY })
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("time series is never empty")
}

/// Extracts the eigenfrequencies from `data`.
pub fn identify_frequencies(
    data: &TimeSeriesData,
    cfg: &IdentifyConfig,
) -> Result<(FrequencySet, Option<usize>)> {
    let esprit_cfg = EspritConfig {
        model_order: data.dim(),
        hankel_rows: cfg.hankel_rows,
        rank_threshold: cfg.rank_threshold,
    };
    match cfg.frequency_source {
        FrequencySource::Trace => Ok((esprit(&trace_signal(data), &esprit_cfg)?, None)),
        FrequencySource::Anchored => {
            let (anchor, cond) = best_anchor(data);
            if !(cond < cfg.preprocess.max_condition) {
                return Err(Error::AllAnchorsSkipped);
            }
            let (signal, _) =
                anchored_trace_signal(data, anchor, cfg.preprocess.pseudoinverse_cutoff)?;
            Ok((esprit(&signal, &esprit_cfg)?, Some(anchor)))
        }
    }
}

fn wrap_pi(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// Identifies `h`, `S` and the diagonal final map from `data`.
///
/// `target` seeds one optimizer restart and is the reference of the sign
/// search; without it the signs are left at `+1`.
pub fn identify(
    data: &TimeSeriesData,
    geometry: &LatticeGeometry,
    target: Option<&RMat>,
    cfg: &IdentifyConfig,
) -> Result<IdentificationResult> {
    let n = data.dim();
    if geometry.num_sites() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: geometry.num_sites(),
        });
    }
    if cfg.preprocess.side != Side::Initial {
        return Err(Error::InvalidConfig(
            "the pipeline removes the initial map; use spam::remove_ramp for the final side".into(),
        ));
    }
    let (frequencies, frequency_anchor) = identify_frequencies(data, cfg)?;
    let rel = remove_ramp(data, &cfg.preprocess)?;
    let theta = if cfg.align_phases {
        estimate_phase_alignment(&rel)
    } else {
        vec![0.0; n]
    };
    let aligned = rel.unrotate_phases(&theta);
    let est = minimize(&frequencies, &aligned, geometry, target, &cfg.eigensolve)?;
    let h_prime = assemble_hamiltonian(&est.v, frequencies.as_slice());

    let unrotate = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        theta.iter().map(|&t| C64::from_polar(1.0, -t)),
    ));
    let data_aligned = data.map_snapshots(|y| &unrotate * y);
    let s_prime = estimate_initial_map_matrix(&data_aligned, &h_prime)?;
    let corr = correct_diagonal_sign(&h_prime, &s_prime, target.unwrap_or(&h_prime))?;
    // Only relative measurement phases are observable; the common phase is
    // fixed by taking the initial map closest to the identity (tr Ŝ > 0).
    let tr = corr.s.0.trace();
    let alpha = if tr.norm() > 0.0 { tr.arg() } else { 0.0 };
    let s_hat = SpamMap(&corr.s.0 * C64::from_polar(1.0, -alpha));
    let final_phases: Vec<f64> = theta
        .iter()
        .zip(&corr.signs)
        .map(|(&t, &s)| wrap_pi(t + alpha + if s < 0.0 { std::f64::consts::PI } else { 0.0 }))
        .collect();
    let final_signs = final_phases
        .iter()
        .map(|p| {
            if p.abs() > std::f64::consts::FRAC_PI_2 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    let diagnostics = fit_deviation(
        data,
        &corr.h,
        &s_hat,
        &SpamMap::diagonal_phases(&final_phases),
    )?;
    Ok(IdentificationResult {
        h_hat: corr.h,
        h_prime,
        s_hat,
        final_signs,
        final_phases,
        frequencies,
        mu_used: est.mu_used,
        fit: est.fit,
        unregularized_fit: est.unregularized_fit,
        stages: est.stages,
        converged: est.converged,
        diagnostics,
        skipped_anchors: rel.skipped_anchors,
        frequency_anchor,
    })
}
