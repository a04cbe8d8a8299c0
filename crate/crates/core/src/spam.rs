//! SPAM handling: removal of the initial (or final) map by pseudoinverse
//! pre-processing, measurement phase alignment, the tomographic estimate of
//! the initial map and the diagonal sign search on the final map.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, C64};
use crate::model::{HamiltonianParams, SpamMap, TimeSeriesData, RAD_PER_MHZ_NS};

/// Which SPAM map the pre-processing removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `y[l] · y[l₀]⁺`, removes `S`.
    #[default]
    Initial,
    /// `y[l₀]⁺ · y[l]`, removes `M`.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub stride: usize,
    pub window: usize,
    pub pseudoinverse_cutoff: f64,
    /// Anchors at or above this condition number are skipped.
    pub max_condition: f64,
    pub side: Side,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            window: 50,
            pseudoinverse_cutoff: 1e-6,
            max_condition: 1e6,
            side: Side::Initial,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.stride == 0 || self.stride > len {
            return Err(Error::InvalidConfig(format!(
                "stride must lie in [1, {len}], got {}",
                self.stride
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        if !(self.pseudoinverse_cutoff > 0.0 && self.pseudoinverse_cutoff < 1.0) {
            return Err(Error::InvalidConfig(
                "pseudoinverse cutoff must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Data relative to one anchor slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub anchor: usize,
    /// `l - l₀` for each entry of `values`.
    pub offsets: Vec<isize>,
    /// `t_l - t_{l₀}` in ns.
    pub times: Vec<f64>,
    pub values: Vec<CMat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeTimeSeries {
    pub blocks: Vec<Block>,
    pub skipped_anchors: Vec<usize>,
    pub side: Side,
    dim: usize,
}

impl RelativeTimeSeries {
    pub fn new(blocks: Vec<Block>, side: Side) -> Result<Self> {
        let dim = blocks
            .first()
            .and_then(|b| b.values.first())
            .map(|y| y.nrows())
            .ok_or(Error::AllAnchorsSkipped)?;
        Ok(Self {
            blocks,
            skipped_anchors: Vec::new(),
            side,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of relative snapshots over all blocks.
    pub fn num_points(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    /// `Θ̄ · Y · Θ` on every snapshot with `Θ = diag(exp(i θ))`.
    pub fn unrotate_phases(&self, theta: &[f64]) -> Self {
        let ph: Vec<C64> = theta.iter().map(|&t| C64::from_polar(1.0, t)).collect();
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block {
                values: b
                    .values
                    .iter()
                    .map(|y| {
                        CMat::from_fn(y.nrows(), y.ncols(), |i, j| {
                            ph[i].conj() * y[(i, j)] * ph[j]
                        })
                    })
                    .collect(),
                ..b.clone()
            })
            .collect();
        Self {
            blocks,
            ..self.clone()
        }
    }
}

/// Multi-anchor pseudoinverse pre-processing.
///
/// For `Side::Initial` each block holds `y[l] · y[l₀]⁺` for
/// `|l - l₀| ≤ window`; anchors run over `0, s, 2s, …`. Anchors whose slice has
/// condition number `≥ max_condition` are skipped.
pub fn remove_ramp(data: &TimeSeriesData, cfg: &PreprocessConfig) -> Result<RelativeTimeSeries> {
    let grid = *data.grid();
    let len = grid.len();
    cfg.validate(len)?;
    let mut blocks = Vec::new();
    let mut skipped = Vec::new();
    for anchor in (0..len).step_by(cfg.stride) {
        let (inv, cond) = linalg::pinv(data.snapshot(anchor), cfg.pseudoinverse_cutoff);
        if !(cond < cfg.max_condition) {
            skipped.push(anchor);
            continue;
        }
        let lo = anchor.saturating_sub(cfg.window);
        let hi = (anchor + cfg.window).min(len - 1);
        let mut block = Block {
            anchor,
            offsets: Vec::with_capacity(hi - lo + 1),
            times: Vec::with_capacity(hi - lo + 1),
            values: Vec::with_capacity(hi - lo + 1),
        };
        for l in lo..=hi {
            let y = data.snapshot(l);
            block.offsets.push(l as isize - anchor as isize);
            block.times.push(grid.time(l) - grid.time(anchor));
            block.values.push(match cfg.side {
                Side::Initial => y * &inv,
                Side::Final => &inv * y,
            });
        }
        blocks.push(block);
    }
    if blocks.is_empty() {
        return Err(Error::AllAnchorsSkipped);
    }
    if !skipped.is_empty() {
        warn!(
            "skipped {} of {} anchors with condition number >= {:e}",
            skipped.len(),
            skipped.len() + blocks.len(),
            cfg.max_condition
        );
    }
    let mut rel = RelativeTimeSeries::new(blocks, cfg.side)?;
    rel.skipped_anchors = skipped;
    Ok(rel)
}

/// Diagonal measurement phases `θ` (mod π) of relative data
/// `R(d) = Θ U(d) Θ̄` with `U(d) = exp(-i d h)` for real symmetric `h`.
///
/// Since `U(-d) = conj(U(d))`, the entry-wise product `R(d) ∘ R(-d)` equals
/// `exp(2i(θ_a - θ_b)) |U(d)_ab|²`; the leading eigenvector of the summed
/// products carries `exp(2iθ)`. The common phase is unobservable and fixed by
/// making the sum of the eigenvector real and positive; results lie in
/// `(-π/2, π/2]`. Returns zeros when no `±d` pairs are available.
pub fn estimate_phase_alignment(rel: &RelativeTimeSeries) -> Vec<f64> {
    let n = rel.dim();
    let mut q = CMat::zeros(n, n);
    let mut pairs = 0usize;
    for b in &rel.blocks {
        for (i, &d) in b.offsets.iter().enumerate() {
            if d <= 0 {
                continue;
            }
            let Some(j) = b.offsets.iter().position(|&o| o == -d) else {
                continue;
            };
            q += b.values[i].component_mul(&b.values[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return vec![0.0; n];
    }
    let q = (&q + q.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(q);
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    let sum: C64 = v.iter().sum();
    let gauge = if sum.norm() > 0.0 {
        sum.conj() / sum.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    v.iter()
        .map(|&z| wrap_half_pi((z * gauge).arg() / 2.0))
        .collect()
}

/// Maps an angle to `(-π/2, π/2]` modulo π.
fn wrap_half_pi(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = (x + PI / 2.0).rem_euclid(PI) - PI / 2.0;
    if y <= -PI / 2.0 {
        y += PI;
    }
    y
}

/// `Ŝ = (2/L) Σ_l exp(+i 2π·1e-3 t_l ĥ) · y[l]`.
pub fn estimate_initial_map(data: &TimeSeriesData, h_hat: &HamiltonianParams) -> Result<SpamMap> {
    estimate_initial_map_matrix(data, h_hat.matrix())
}

pub fn estimate_initial_map_matrix(data: &TimeSeriesData, h_hat: &RMat) -> Result<SpamMap> {
    let n = data.dim();
    if h_hat.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: h_hat.nrows(),
        });
    }
    let (values, vectors) = linalg::sorted_symmetric_eigen(h_hat);
    let grid = data.grid();
    let mut acc = CMat::zeros(n, n);
    for (l, y) in data.snapshots().iter().enumerate() {
        let t = grid.time(l);
        let phases: Vec<C64> = values
            .iter()
            .map(|&x| C64::from_polar(1.0, RAD_PER_MHZ_NS * x * t))
            .collect();
        acc += linalg::spectral_synthesis(&vectors, &phases) * y;
    }
    SpamMap::new(acc * C64::new(2.0 / grid.len() as f64, 0.0))
}

/// Outcome of the ±1 diagonal search.
#[derive(Debug, Clone, PartialEq)]
pub struct SignCorrection {
    /// Diagonal of `D̂_M`.
    pub signs: Vec<f64>,
    /// `D̂ h′ D̂`.
    pub h: RMat,
    /// `D̂ S′`.
    pub s: SpamMap,
}

/// Exhaustive search beyond this dimension is replaced by greedy flips.
pub const MAX_EXHAUSTIVE_SIGNS: usize = 24;

/// Diagonal `D = diag(±1)` minimizing `‖D h′ D − h_target‖`.
///
/// `D` and `-D` act identically, so the global sign is fixed by convention:
/// at most half the entries are `-1`, ties broken by `D_11 = +1`.
pub fn correct_diagonal_sign(
    h_prime: &RMat,
    s_prime: &SpamMap,
    h_target: &RMat,
) -> Result<SignCorrection> {
    let n = h_prime.nrows();
    if h_target.nrows() != n || s_prime.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: h_target.nrows().max(s_prime.dim()),
        });
    }
    let signs = if n <= MAX_EXHAUSTIVE_SIGNS {
        exhaustive_signs(h_prime, h_target)
    } else {
        greedy_signs(h_prime, h_target)
    };
    let signs = canonical_global_sign(signs);
    let h = RMat::from_fn(n, n, |i, j| signs[i] * h_prime[(i, j)] * signs[j]);
    let s = CMat::from_fn(n, n, |i, j| s_prime.0[(i, j)] * signs[i]);
    Ok(SignCorrection {
        signs,
        h,
        s: SpamMap(s),
    })
}

/// Only off-diagonal entries depend on the signs:
/// `‖DhD − t‖² = const − 2 Σ_{i≠j} d_i d_j h_ij t_ij`.
fn sign_score(signs: &[f64], corr: &RMat) -> f64 {
    let n = signs.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += signs[i] * signs[j] * corr[(i, j)];
        }
    }
    s
}

fn correlation(h_prime: &RMat, h_target: &RMat) -> RMat {
    h_prime.component_mul(h_target) + h_prime.transpose().component_mul(&h_target.transpose())
}

fn exhaustive_signs(h_prime: &RMat, h_target: &RMat) -> Vec<f64> {
    let n = h_prime.nrows();
    let corr = correlation(h_prime, h_target);
    let mut best = vec![1.0; n];
    let mut best_score = f64::NEG_INFINITY;
    let mut signs = vec![1.0; n];
    for mask in 0u32..(1u32 << (n.saturating_sub(1))) {
        for (k, s) in signs.iter_mut().enumerate().skip(1) {
            *s = if mask >> (k - 1) & 1 == 1 { -1.0 } else { 1.0 };
        }
        let score = sign_score(&signs, &corr);
        if score > best_score {
            best_score = score;
            best.copy_from_slice(&signs);
        }
    }
    best
}

/// Propagates signs along a maximum spanning tree of `|corr|`, then applies
/// single-site flips while they help.
fn greedy_signs(h_prime: &RMat, h_target: &RMat) -> Vec<f64> {
    let n = h_prime.nrows();
    let corr = correlation(h_prime, h_target);
    let mut signs = vec![1.0; n];
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    for _ in 1..n {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..n).filter(|&i| in_tree[i]) {
            for j in (0..n).filter(|&j| !in_tree[j]) {
                let w = corr[(i, j)].abs();
                if best.is_none_or(|(_, _, bw)| w > bw) {
                    best = Some((i, j, w));
                }
            }
        }
        let (i, j, _) = best.expect("a vertex remains outside the tree");
        signs[j] = if corr[(i, j)] < 0.0 {
            -signs[i]
        } else {
            signs[i]
        };
        in_tree[j] = true;
    }
    loop {
        let mut improved = false;
        for k in 0..n {
            let field: f64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| signs[j] * corr[(k, j)])
                .sum();
            if signs[k] * field < 0.0 {
                signs[k] = -signs[k];
                improved = true;
            }
        }
        if !improved {
            return signs;
        }
    }
}

fn canonical_global_sign(mut signs: Vec<f64>) -> Vec<f64> {
    let negatives = signs.iter().filter(|&&s| s < 0.0).count();
    let n = signs.len();
    if 2 * negatives > n || (2 * negatives == n && signs[0] < 0.0) {
        signs.iter_mut().for_each(|s| *s = -*s);
    }
    signs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cnorm;
    use crate::model::{build_harper, propagator, LatticeGeometry, TimeGrid};
    use crate::simulate::simulate_exact;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn harper(n: usize, b: f64) -> HamiltonianParams {
        build_harper(n, b, 20.0, &LatticeGeometry::chain(n)).unwrap()
    }

    fn perturbed_identity(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> SpamMap {
        SpamMap(
            CMat::identity(n, n)
                + CMat::from_fn(n, n, |_, _| {
                    C64::new(
                        rng.random_range(-scale..scale),
                        rng.random_range(-scale..scale),
                    )
                }),
        )
    }

    #[test]
    fn anchor_slice_becomes_identity() {
        let h = harper(4, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = perturbed_identity(4, 0.3, &mut rng);
        let data = simulate_exact(
            &h,
            &s,
            &SpamMap::identity(4),
            &TimeGrid::new(1.0, 60).unwrap(),
        )
        .unwrap();
        let rel = remove_ramp(&data, &PreprocessConfig::default()).unwrap();
        assert!(rel.skipped_anchors.is_empty());
        for b in &rel.blocks {
            let zero = b.offsets.iter().position(|&o| o == 0).unwrap();
            assert!(cnorm(&(&b.values[zero] - CMat::identity(4, 4))) < 1e-8);
        }
    }

    #[test]
    fn initial_map_is_removed() {
        let h = harper(4, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = perturbed_identity(4, 0.3, &mut rng);
        let grid = TimeGrid::new(1.0, 80).unwrap();
        let data = simulate_exact(&h, &s, &SpamMap::identity(4), &grid).unwrap();
        let cfg = PreprocessConfig {
            stride: 7,
            window: 20,
            ..Default::default()
        };
        let rel = remove_ramp(&data, &cfg).unwrap();
        assert_eq!(rel.blocks.len(), 12);
        for b in &rel.blocks {
            for (t, y) in b.times.iter().zip(&b.values) {
                assert!(cnorm(&(y - propagator(h.matrix(), *t))) < 1e-8);
            }
        }
    }

    #[test]
    fn diagonal_final_map_conjugates_blocks() {
        let h = harper(3, 0.15);
        let m = SpamMap::diagonal_phases(&[0.4, 2.5, -1.9]);
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let data = simulate_exact(&h, &SpamMap::identity(3), &m, &grid).unwrap();
        let rel = remove_ramp(&data, &PreprocessConfig::default()).unwrap();
        let m_inv = m.0.adjoint();
        for b in rel.blocks.iter().step_by(5) {
            for (t, y) in b.times.iter().zip(&b.values) {
                let expect = &m.0 * propagator(h.matrix(), *t) * &m_inv;
                assert!(cnorm(&(y - expect)) < 1e-8);
            }
        }
    }

    #[test]
    fn final_side_removes_measurement_map() {
        let h = harper(3, 0.15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = perturbed_identity(3, 0.3, &mut rng);
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let data = simulate_exact(&h, &SpamMap::identity(3), &m, &grid).unwrap();
        let cfg = PreprocessConfig {
            side: Side::Final,
            ..Default::default()
        };
        let rel = remove_ramp(&data, &cfg).unwrap();
        for b in rel.blocks.iter().step_by(7) {
            for (t, y) in b.times.iter().zip(&b.values) {
                assert!(cnorm(&(y - propagator(h.matrix(), *t))) < 1e-8);
            }
        }
    }

    #[test]
    fn singular_anchors_are_skipped() {
        let n = 2;
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let mut rank_one = CMat::zeros(n, n);
        rank_one[(0, 0)] = C64::new(0.5, 0.0);
        let full = CMat::identity(n, n) * C64::new(0.5, 0.0);
        let data = TimeSeriesData::new(
            vec![rank_one.clone(), full.clone(), rank_one.clone(), full],
            grid,
            crate::model::Shots::Exact,
        )
        .unwrap();
        let rel = remove_ramp(&data, &PreprocessConfig::default()).unwrap();
        assert_eq!(rel.skipped_anchors, vec![0, 2]);
        assert_eq!(rel.blocks.len(), 2);
        let dead =
            TimeSeriesData::new(vec![rank_one; 4], grid, crate::model::Shots::Exact).unwrap();
        assert!(matches!(
            remove_ramp(&dead, &PreprocessConfig::default()),
            Err(Error::AllAnchorsSkipped)
        ));
    }

    #[test]
    fn phase_alignment_recovers_phases_modulo_pi() {
        let h = harper(5, 0.35);
        let delta = [0.0, 0.4, -1.2, 2.8, -2.0];
        let m = SpamMap::diagonal_phases(&delta);
        let data = simulate_exact(&h, &SpamMap::identity(5), &m, &TimeGrid::default()).unwrap();
        let rel = remove_ramp(&data, &PreprocessConfig::default()).unwrap();
        let theta = estimate_phase_alignment(&rel);
        // differences are determined modulo π
        for a in 0..5 {
            let diff = wrap_half_pi((theta[a] - theta[0]) - (delta[a] - delta[0]));
            assert!(diff.abs() < 1e-8, "site {a}: {diff}");
        }
        // after alignment only a ±1 conjugation remains, so blocks are symmetric
        let aligned = rel.unrotate_phases(&theta);
        for y in &aligned.blocks[100].values {
            assert!(cnorm(&(y - y.transpose())) < 1e-8);
        }
    }

    #[test]
    fn phase_alignment_is_trivial_for_real_rotations() {
        let h = harper(4, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = linalg::random_skew(4, 0.1, &mut rng);
        let m = SpamMap::from_real(&linalg::expm_skew(&k));
        let data = simulate_exact(&h, &SpamMap::identity(4), &m, &TimeGrid::default()).unwrap();
        let theta =
            estimate_phase_alignment(&remove_ramp(&data, &PreprocessConfig::default()).unwrap());
        assert!(theta.iter().all(|t| t.abs() < 1e-8), "{theta:?}");
    }

    #[test]
    fn initial_map_estimate_is_exact() {
        let h = harper(5, 0.35);
        let grid = TimeGrid::default();
        let id = SpamMap::identity(5);
        let data = simulate_exact(&h, &id, &id, &grid).unwrap();
        let s_hat = estimate_initial_map(&data, &h).unwrap();
        assert!(cnorm(&(s_hat.0 - CMat::identity(5, 5))) < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = perturbed_identity(5, 0.5, &mut rng);
        let data = simulate_exact(&h, &s, &id, &grid).unwrap();
        let s_hat = estimate_initial_map(&data, &h).unwrap();
        assert!(cnorm(&(s_hat.0 - &s.0)) < 1e-10);
    }

    #[test]
    fn initial_map_estimate_in_a_rotated_frame() {
        // M = O (1 + X); the estimate from the rotated Hamiltonian O h Oᵀ is
        // O (1 + X̄) S with X̄ = (1/L) Σ_l U(t_l)† X U(t_l).
        let h = harper(3, 0.35);
        let grid = TimeGrid::new(1.0, 101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let o = linalg::expm_skew(&linalg::random_skew(3, 0.2, &mut rng));
        let x = CMat::from_fn(3, 3, |_, _| {
            C64::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))
        });
        let s = perturbed_identity(3, 0.2, &mut rng);
        let oc = linalg::to_complex(&o);
        let m = SpamMap(&oc * (CMat::identity(3, 3) + &x));
        let data = simulate_exact(&h, &s, &m, &grid).unwrap();
        let h_rot = &o * h.matrix() * o.transpose();
        let s_hat = estimate_initial_map_matrix(&data, &linalg::symmetrize(&h_rot)).unwrap();

        let mut x_bar = CMat::zeros(3, 3);
        for t in grid.times() {
            let u = propagator(h.matrix(), t);
            x_bar += u.adjoint() * &x * u;
        }
        x_bar /= C64::new(grid.len() as f64, 0.0);
        let expect = oc * (CMat::identity(3, 3) + x_bar) * &s.0;
        assert!(cnorm(&(s_hat.0 - expect)) < 1e-10);
    }

    #[test]
    fn sign_correction_examples() {
        let h = harper(5, 0.35).matrix().clone();
        let id = SpamMap::identity(5);
        let c = correct_diagonal_sign(&h, &id, &h).unwrap();
        assert_eq!(c.signs, vec![1.0; 5]);
        assert_eq!(c.h, h);

        let f = RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, -1.0, 1.0, 1.0]));
        let flipped = &f * &h * &f;
        let c = correct_diagonal_sign(&flipped, &id, &h).unwrap();
        assert_eq!(c.signs, vec![1.0, 1.0, -1.0, 1.0, 1.0]);
        assert_eq!(c.h, h);
        assert_eq!(c.s.0[(2, 2)], C64::new(-1.0, 0.0));
    }

    #[test]
    fn sign_correction_recovers_planted_pattern() {
        let g = LatticeGeometry::chain(5);
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut h = RMat::zeros(5, 5);
            for i in 0..5 {
                h[(i, i)] = rng.random_range(-20.0..20.0);
            }
            for &(i, j) in g.edges() {
                let x =
                    rng.random_range(10.0..30.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                h[(i, j)] = x;
                h[(j, i)] = x;
            }
            let plant: Vec<f64> = (0..5)
                .map(|_| if rng.random_bool(0.5) { -1.0 } else { 1.0 })
                .collect();
            let noise =
                linalg::symmetrize(&RMat::from_fn(5, 5, |_, _| rng.random_range(-0.1..0.1)));
            let h_prime = RMat::from_fn(5, 5, |i, j| plant[i] * h[(i, j)] * plant[j]) + noise;
            let c = correct_diagonal_sign(&h_prime, &SpamMap::identity(5), &h).unwrap();
            // equal up to the unobservable global sign
            let same = c.signs.iter().zip(&plant).all(|(a, b)| a == b);
            let opposite = c.signs.iter().zip(&plant).all(|(a, b)| *a == -b);
            assert!(same || opposite, "seed {seed}: {:?} vs {plant:?}", c.signs);
        }
    }

    #[test]
    fn greedy_matches_exhaustive_on_easy_inputs() {
        let h = harper(6, 0.35).matrix().clone();
        let plant = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
        let hp = RMat::from_fn(6, 6, |i, j| plant[i] * h[(i, j)] * plant[j]);
        let a = canonical_global_sign(exhaustive_signs(&hp, &h));
        let b = canonical_global_sign(greedy_signs(&hp, &h));
        assert_eq!(a, b);
    }

    #[test]
    fn global_sign_convention() {
        assert_eq!(
            canonical_global_sign(vec![-1.0, -1.0, 1.0]),
            vec![1.0, 1.0, -1.0]
        );
        assert_eq!(canonical_global_sign(vec![-1.0, 1.0]), vec![1.0, -1.0]);
        assert_eq!(
            canonical_global_sign(vec![1.0, -1.0, 1.0]),
            vec![1.0, -1.0, 1.0]
        );
    }

    #[test]
    fn wrap_half_pi_range() {
        use std::f64::consts::PI;
        assert!((wrap_half_pi(PI / 2.0) - PI / 2.0).abs() < 1e-15);
        assert!((wrap_half_pi(-PI / 2.0) - PI / 2.0).abs() < 1e-15);
        assert!((wrap_half_pi(2.0) - (2.0 - PI)).abs() < 1e-15);
    }
}
