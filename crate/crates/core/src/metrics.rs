//! Accuracy metrics and fit diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat, C64};
use crate::model::{eig_symmetric, propagator_from_eigen, SpamMap, TimeSeriesData};

fn check_shape(ar: usize, ac: usize, br: usize, bc: usize) -> Result<()> {
    if ar != br || ac != bc {
        return Err(Error::DimensionMismatch {
            expected: ar * ac,
            found: br * bc,
        });
    }
    Ok(())
}

/// `(1/N) ‖A − B‖` with the entry-wise 2-norm, `N` the number of rows.
pub fn analog_accuracy(a: &RMat, b: &RMat) -> Result<f64> {
    check_shape(a.nrows(), a.ncols(), b.nrows(), b.ncols())?;
    Ok((a - b).norm() / a.nrows() as f64)
}

pub fn analog_accuracy_complex(a: &CMat, b: &CMat) -> Result<f64> {
    check_shape(a.nrows(), a.ncols(), b.nrows(), b.ncols())?;
    Ok((a - b).norm() / a.nrows() as f64)
}

/// Accuracy between two spectra, compared in ascending order.
pub fn frequency_accuracy(a: &[f64], b: &[f64]) -> Result<f64> {
    check_shape(a.len(), 1, b.len(), 1)?;
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sq.sqrt() / a.len() as f64)
}

/// `|ĥ − h₀|` entry-wise.
pub fn entrywise_deviation(h_hat: &RMat, h_target: &RMat) -> Result<RMat> {
    check_shape(
        h_hat.nrows(),
        h_hat.ncols(),
        h_target.nrows(),
        h_target.ncols(),
    )?;
    Ok((h_hat - h_target).abs())
}

/// Three views of the time-domain residual `y − ½ M̂ exp(-i t ĥ) Ŝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// RMS over time for each `(m, n)`.
    pub per_series_rms: Vec<Vec<f64>>,
    /// RMS over `(m, n)` for each time.
    pub instantaneous_rms: Vec<f64>,
    pub total_rms: f64,
}

/// Residual RMS of the model with Hamiltonian `h_hat`, initial map `s_hat`
/// and final map `m_hat` (typically the diagonal `D̂_M`).
pub fn fit_deviation(
    data: &TimeSeriesData,
    h_hat: &RMat,
    s_hat: &SpamMap,
    m_hat: &SpamMap,
) -> Result<FitDiagnostics> {
    let n = data.dim();
    for d in [h_hat.nrows(), s_hat.dim(), m_hat.dim()] {
        if d != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: d,
            });
        }
    }
    let eig = eig_symmetric(h_hat);
    let grid = data.grid();
    let half = C64::new(0.5, 0.0);
    let mut per_series = RMat::zeros(n, n);
    let mut inst = Vec::with_capacity(grid.len());
    for (l, y) in data.snapshots().iter().enumerate() {
        let model =
            (m_hat.matrix() * propagator_from_eigen(&eig, grid.time(l)) * s_hat.matrix()) * half;
        let sq = (y - model).map(|z| z.norm_sqr());
        inst.push((sq.sum() / (n * n) as f64).sqrt());
        per_series += sq;
    }
    let len = grid.len() as f64;
    let total = (per_series.sum() / (len * (n * n) as f64)).sqrt();
    let per_series_rms = (0..n)
        .map(|m| (0..n).map(|k| (per_series[(m, k)] / len).sqrt()).collect())
        .collect();
    Ok(FitDiagnostics {
        per_series_rms,
        instantaneous_rms: inst,
        total_rms: total,
    })
}
