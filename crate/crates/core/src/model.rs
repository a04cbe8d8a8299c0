//! Domain types for single-excitation bosonic lattice dynamics.
//!
//! Units: Hamiltonian entries are cyclic frequencies in MHz, times are in ns.
//! A coefficient `h` evolving for `t` accumulates the phase
//! `2π · 1e-3 · h · t` radians (see [`phase_of`]).

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, C64};

/// Radians per (MHz · ns).
pub const RAD_PER_MHZ_NS: f64 = 2.0 * std::f64::consts::PI * 1e-3;

/// Tolerance under which two eigenfrequencies are considered equal.
pub const DEGENERACY_TOL_MHZ: f64 = 1e-6;

/// Phase in radians accumulated by a frequency `h_mhz` over `t_ns`.
pub fn phase_of(h_mhz: f64, t_ns: f64) -> f64 {
    RAD_PER_MHZ_NS * h_mhz * t_ns
}

/// Sites and couplers of a qubit lattice. Sites are 0-based internally and
/// 1-based in the JSON form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeGeometry {
    num_sites: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryJson {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl LatticeGeometry {
    /// Validates and canonicalizes the edge list (each edge stored as `(i, j)`
    /// with `i < j`, sorted).
    pub fn new(num_sites: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if num_sites == 0 {
            return Err(Error::InvalidGeometry("at least one site required".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, j) in edges {
            if i >= num_sites || j >= num_sites {
                return Err(Error::InvalidGeometry(format!(
                    "edge ({i}, {j}) out of range for {num_sites} sites"
                )));
            }
            if i == j {
                return Err(Error::InvalidGeometry(format!("self-loop at site {i}")));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(Error::InvalidGeometry(format!(
                    "duplicate edge ({}, {})",
                    e.0, e.1
                )));
            }
        }
        Ok(Self {
            num_sites,
            edges: seen.into_iter().collect(),
        })
    }

    pub fn chain(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("chain is valid")
    }

    /// Rectangular grid, sites numbered row-major.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let s = r * cols + c;
                if c + 1 < cols {
                    edges.push((s, s + 1));
                }
                if r + 1 < rows {
                    edges.push((s, s + cols));
                }
            }
        }
        Self::new(rows * cols, edges).expect("grid is valid")
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// Whether `(i, j)` belongs to the support: the diagonal plus both
    /// orientations of every declared edge.
    pub fn in_support(&self, i: usize, j: usize) -> bool {
        i == j || self.has_edge(i, j)
    }

    /// 1.0 on the off-support entries, 0.0 elsewhere.
    pub fn off_support_mask(&self) -> RMat {
        RMat::from_fn(self.num_sites, self.num_sites, |i, j| {
            if self.in_support(i, j) {
                0.0
            } else {
                1.0
            }
        })
    }

    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(i, j)| {
                if i == site {
                    Some(j)
                } else if j == site {
                    Some(i)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_sites];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(s) = queue.pop_front() {
            for nb in self.neighbors(s) {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        seen.into_iter().all(|x| x)
    }

    /// Induced sub-lattice on `sites` (in the given order); local index `q`
    /// corresponds to `sites[q]`.
    pub fn induced(&self, sites: &[usize]) -> Result<Self> {
        let edges = self.edges.iter().filter_map(|&(i, j)| {
            let a = sites.iter().position(|&s| s == i)?;
            let b = sites.iter().position(|&s| s == j)?;
            Some((a, b))
        });
        Self::new(sites.len(), edges)
    }

    pub fn to_json(&self) -> GeometryJson {
        GeometryJson {
            n: self.num_sites,
            edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        }
    }

    pub fn from_json(json: &GeometryJson) -> Result<Self> {
        let mut edges = Vec::with_capacity(json.edges.len());
        for &[i, j] in &json.edges {
            if i == 0 || j == 0 {
                return Err(Error::InvalidGeometry("site indices are 1-based".into()));
            }
            edges.push((i - 1, j - 1));
        }
        Self::new(json.n, edges)
    }
}

impl Serialize for LatticeGeometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LatticeGeometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = GeometryJson::deserialize(d)?;
        Self::from_json(&json).map_err(serde::de::Error::custom)
    }
}

/// Real symmetric coefficient matrix `h` (MHz) together with its lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianParams {
    matrix: RMat,
    geometry: LatticeGeometry,
}

impl HamiltonianParams {
    /// Requires exact symmetry and zero entries outside the support.
    pub fn new(matrix: RMat, geometry: LatticeGeometry) -> Result<Self> {
        let h = Self::unconstrained(matrix, geometry)?;
        let n = h.dim();
        for i in 0..n {
            for j in 0..n {
                if !h.geometry.in_support(i, j) && h.matrix[(i, j)] != 0.0 {
                    return Err(Error::OffSupport(i, j));
                }
            }
        }
        Ok(h)
    }

    /// Identified Hamiltonians may leak outside the support; symmetry is still
    /// enforced.
    pub fn unconstrained(matrix: RMat, geometry: LatticeGeometry) -> Result<Self> {
        let n = geometry.num_sites();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        let asym = linalg::max_asymmetry(&matrix);
        if asym != 0.0 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self { matrix, geometry })
    }

    pub fn matrix(&self) -> &RMat {
        &self.matrix
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.num_sites()
    }

    /// ℓ2 norm of the entries outside the support.
    pub fn leakage(&self) -> f64 {
        self.matrix
            .component_mul(&self.geometry.off_support_mask())
            .norm()
    }

    pub fn eigen(&self) -> Eigensystem {
        eig_symmetric(self.matrix())
    }
}

/// Uniform sampling grid `t_l = l · dt`, `l = 0..L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    num_samples: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            dt: 1.0,
            num_samples: 201,
        }
    }
}

impl TimeGrid {
    pub fn new(dt: f64, num_samples: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if num_samples < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 samples, got {num_samples}"
            )));
        }
        Ok(Self { dt, num_samples })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.num_samples
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, l: usize) -> f64 {
        l as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_samples).map(|l| self.time(l))
    }

    /// Largest frequency magnitude resolvable without aliasing, in MHz.
    pub fn nyquist_mhz(&self) -> f64 {
        0.5 / (self.dt * 1e-3)
    }
}

/// Complex linear map modelling state preparation or measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SpamMap(pub CMat);

impl SpamMap {
    pub fn identity(n: usize) -> Self {
        Self(CMat::identity(n, n))
    }

    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidConfig(
                "SPAM map has non-finite entries".into(),
            ));
        }
        Ok(Self(matrix))
    }

    pub fn diagonal_phases(phases: &[f64]) -> Self {
        let n = phases.len();
        let mut m = CMat::zeros(n, n);
        for (i, &d) in phases.iter().enumerate() {
            m[(i, i)] = C64::from_polar(1.0, d);
        }
        Self(m)
    }

    pub fn from_real(matrix: &RMat) -> Self {
        Self(linalg::to_complex(matrix))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Number of single shots behind each estimated expectation value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    Exact,
    Finite(u32),
}

impl Serialize for Shots {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Shots::Exact => s.serialize_str("exact"),
            Shots::Finite(n) => s.serialize_u32(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u32),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("shots must be >= 1")),
            Raw::Count(n) => Ok(Shots::Finite(n)),
            Raw::Word(w) if w == "exact" => Ok(Shots::Exact),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected an integer or \"exact\", got {w:?}"
            ))),
        }
    }
}

/// Estimated `<a_m(t_l)>_{ψ_n}` for all `m, n, l`. `values[l]` holds the
/// `N × N` snapshot at `t_l`, rows indexed by the measured site `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    values: Vec<CMat>,
    grid: TimeGrid,
    shots: Shots,
}

impl TimeSeriesData {
    pub fn new(values: Vec<CMat>, grid: TimeGrid, shots: Shots) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        let n = values[0].nrows();
        for v in &values {
            if v.nrows() != n || v.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.nrows().max(v.ncols()),
                });
            }
        }
        Ok(Self {
            values,
            grid,
            shots,
        })
    }

    pub fn dim(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn shots(&self) -> Shots {
        self.shots
    }

    pub fn snapshots(&self) -> &[CMat] {
        &self.values
    }

    pub fn snapshot(&self, l: usize) -> &CMat {
        &self.values[l]
    }

    pub fn value(&self, m: usize, n: usize, l: usize) -> C64 {
        self.values[l][(m, n)]
    }

    pub fn map_snapshots(&self, f: impl Fn(&CMat) -> CMat) -> Self {
        Self {
            values: self.values.iter().map(f).collect(),
            grid: self.grid,
            shots: self.shots,
        }
    }

    /// Largest deviation of `2 · y[l]` from unitarity over all time slices.
    pub fn unitarity_defect(&self) -> f64 {
        self.values
            .iter()
            .map(|y| linalg::unitarity_defect(&(y * C64::new(2.0, 0.0))))
            .fold(0.0, f64::max)
    }
}

/// Sorted, pairwise-distinct eigenfrequencies (MHz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySet(Vec<f64>);

impl FrequencySet {
    pub fn new(mut freqs: Vec<f64>) -> Result<Self> {
        freqs.sort_by(f64::total_cmp);
        for w in freqs.windows(2) {
            if (w[1] - w[0]).abs() < DEGENERACY_TOL_MHZ {
                return Err(Error::Degenerate(w[0], w[1]));
            }
        }
        Ok(Self(freqs))
    }

    /// Also checks that every frequency is resolvable on `grid`.
    pub fn within_band(freqs: Vec<f64>, grid: &TimeGrid) -> Result<Self> {
        let nyq = grid.nyquist_mhz();
        if let Some(&f) = freqs.iter().find(|f| !(-nyq < **f && **f <= nyq)) {
            return Err(Error::InvalidConfig(format!(
                "frequency {f} MHz outside the unambiguous band (-{nyq}, {nyq}]"
            )));
        }
        Self::new(freqs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min_gap(&self) -> f64 {
        self.0
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Ascending eigenvalues and the matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: RMat,
}

impl Eigensystem {
    pub fn frequencies(&self) -> Result<FrequencySet> {
        FrequencySet::new(self.values.clone())
    }
}

pub fn eig_symmetric(h: &RMat) -> Eigensystem {
    let (values, vectors) = linalg::sorted_symmetric_eigen(h);
    Eigensystem { values, vectors }
}

/// `exp(-i · 2π·1e-3 · t · h)`.
pub fn propagator(h: &RMat, t_ns: f64) -> CMat {
    propagator_from_eigen(&eig_symmetric(h), t_ns)
}

pub fn propagator_from_eigen(eig: &Eigensystem, t_ns: f64) -> CMat {
    let phases: Vec<C64> = eig
        .values
        .iter()
        .map(|&l| C64::from_polar(1.0, -phase_of(l, t_ns)))
        .collect();
    linalg::spectral_synthesis(&eig.vectors, &phases)
}

/// Harper Hamiltonian: on-site `20 · cos(2π q b)` MHz for `q = 1..N`, hopping
/// `j_mhz` on every declared edge.
pub fn build_harper(
    n: usize,
    b: f64,
    j_mhz: f64,
    geometry: &LatticeGeometry,
) -> Result<HamiltonianParams> {
    if geometry.num_sites() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: geometry.num_sites(),
        });
    }
    let mut h = RMat::zeros(n, n);
    for q in 0..n {
        h[(q, q)] = harper_potential(q + 1, b);
    }
    for &(i, j) in geometry.edges() {
        h[(i, j)] = j_mhz;
        h[(j, i)] = j_mhz;
    }
    HamiltonianParams::new(h, geometry.clone())
}

/// On-site potential of site `q` (1-based) at flux `b`.
pub fn harper_potential(q: usize, b: f64) -> f64 {
    20.0 * (2.0 * std::f64::consts::PI * q as f64 * b).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cnorm, orthogonality_defect, unitarity_defect};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn phase_convention() {
        assert_eq!(phase_of(0.0, 7.0), 0.0);
        assert!((phase_of(500.0, 1.0) - PI).abs() < 1e-15);
        assert!((phase_of(20.0, 25.0) - PI).abs() < 1e-14);
    }

    #[test]
    fn geometry_validation() {
        assert!(LatticeGeometry::new(3, [(0, 0)]).is_err());
        assert!(LatticeGeometry::new(3, [(0, 3)]).is_err());
        assert!(LatticeGeometry::new(3, [(0, 1), (1, 0)]).is_err());
        let g = LatticeGeometry::new(3, [(2, 1), (0, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(g.in_support(1, 0) && g.in_support(2, 2) && !g.in_support(0, 2));
    }

    #[test]
    fn geometry_json_is_one_based() {
        let g = LatticeGeometry::chain(3);
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"n":3,"edges":[[1,2],[2,3]]}"#);
        let back: LatticeGeometry = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<LatticeGeometry>(r#"{"n":2,"edges":[[0,1]]}"#).is_err());
    }

    #[test]
    fn grid_geometry() {
        let g = LatticeGeometry::grid(3, 9);
        assert_eq!(g.num_sites(), 27);
        assert_eq!(g.edges().len(), 3 * 8 + 2 * 9);
        assert!(g.is_connected());
    }

    #[test]
    fn hamiltonian_rejects_off_support_and_asymmetry() {
        let g = LatticeGeometry::chain(3);
        let mut h = RMat::zeros(3, 3);
        h[(0, 2)] = 1.0;
        h[(2, 0)] = 1.0;
        assert!(matches!(
            HamiltonianParams::new(h.clone(), g.clone()),
            Err(Error::OffSupport(0, 2))
        ));
        let leaky = HamiltonianParams::unconstrained(h.clone(), g.clone()).unwrap();
        assert!((leaky.leakage() - 2f64.sqrt()).abs() < 1e-15);
        h[(2, 0)] = 0.5;
        assert!(matches!(
            HamiltonianParams::unconstrained(h, g),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn harper_examples() {
        let chain5 = LatticeGeometry::chain(5);
        let h = build_harper(5, 0.0, 20.0, &chain5).unwrap();
        for q in 0..5 {
            assert!((h.matrix()[(q, q)] - 20.0).abs() < 1e-12);
        }
        for q in 0..4 {
            assert_eq!(h.matrix()[(q, q + 1)], 20.0);
        }
        let h = build_harper(3, 0.5, 20.0, &LatticeGeometry::chain(3)).unwrap();
        let mu: Vec<f64> = (0..3).map(|q| h.matrix()[(q, q)]).collect();
        for (a, b) in mu.iter().zip([-20.0, 20.0, -20.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let h = build_harper(2, 0.25, 20.0, &LatticeGeometry::chain(2)).unwrap();
        assert!(h.matrix()[(0, 0)].abs() < 1e-12);
        assert!((h.matrix()[(1, 1)] + 20.0).abs() < 1e-12);
        assert!(build_harper(4, 0.1, 20.0, &chain5).is_err());
    }

    #[test]
    fn propagator_examples() {
        let n = 3;
        let u = propagator(&RMat::zeros(n, n), 13.0);
        assert!(cnorm(&(u - CMat::identity(n, n))) < 1e-15);

        let mu = 37.0;
        let t = 4.2;
        let u = propagator(&RMat::from_element(1, 1, mu), t);
        assert!((u[(0, 0)] - C64::from_polar(1.0, -phase_of(mu, t))).norm() < 1e-14);

        let j = 20.0;
        let h = RMat::from_row_slice(2, 2, &[0.0, j, j, 0.0]);
        let t = 3.7;
        let th = phase_of(j, t);
        let u = propagator(&h, t);
        let expect = CMat::from_row_slice(
            2,
            2,
            &[
                C64::new(th.cos(), 0.0),
                C64::new(0.0, -th.sin()),
                C64::new(0.0, -th.sin()),
                C64::new(th.cos(), 0.0),
            ],
        );
        assert!(cnorm(&(u - expect)) < 1e-14);
    }

    #[test]
    fn eig_examples() {
        let h = RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let e = eig_symmetric(&h);
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        assert!((e.vectors.abs() - RMat::identity(3, 3)).amax() < 1e-15);

        let j = 7.0;
        let e = eig_symmetric(&RMat::from_row_slice(2, 2, &[0.0, j, j, 0.0]));
        assert!((e.values[0] + j).abs() < 1e-14 && (e.values[1] - j).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // columns (1, ∓1)/√2 up to sign
        assert!((e.vectors[(0, 0)] * e.vectors[(1, 0)] + 0.5).abs() < 1e-14);
        assert!((e.vectors[(0, 1)].abs() - s).abs() < 1e-14);
        assert!((e.vectors[(0, 1)] * e.vectors[(1, 1)] - 0.5).abs() < 1e-14);
    }

    /// Roots of det(h - λ) from the characteristic polynomial (Faddeev-LeVerrier
    /// coefficients, companion-matrix eigenvalues).
    fn charpoly_roots(h: &RMat) -> Vec<f64> {
        let n = h.nrows();
        let mut coeffs = vec![1.0];
        let mut m = RMat::zeros(n, n);
        let id = RMat::identity(n, n);
        for k in 1..=n {
            m = h * &m + &id * coeffs[k - 1];
            let c = -(h * &m).trace() / k as f64;
            coeffs.push(c);
        }
        let mut comp = RMat::zeros(n, n);
        for j in 0..n {
            comp[(0, j)] = -coeffs[j + 1];
        }
        for i in 1..n {
            comp[(i, i - 1)] = 1.0;
        }
        let mut roots: Vec<f64> = comp
            .complex_eigenvalues()
            .iter()
            .map(|z| {
                assert!(z.im.abs() < 1e-6);
                z.re
            })
            .collect();
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn eig_matches_characteristic_polynomial() {
        let h = build_harper(5, 0.35, 20.0, &LatticeGeometry::chain(5)).unwrap();
        let e = h.eigen();
        let roots = charpoly_roots(h.matrix());
        for (a, b) in e.values.iter().zip(&roots) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn shots_serde() {
        assert_eq!(serde_json::to_string(&Shots::Exact).unwrap(), "\"exact\"");
        assert_eq!(
            serde_json::from_str::<Shots>("1000").unwrap(),
            Shots::Finite(1000)
        );
        assert!(serde_json::from_str::<Shots>("0").is_err());
        assert!(serde_json::from_str::<Shots>("\"many\"").is_err());
    }

    #[test]
    fn frequency_set_rejects_degenerate() {
        assert!(FrequencySet::new(vec![1.0, 1.0 + 1e-7]).is_err());
        let f = FrequencySet::new(vec![3.0, -1.0, 2.0]).unwrap();
        assert_eq!(f.as_slice(), &[-1.0, 2.0, 3.0]);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert!(FrequencySet::within_band(vec![600.0], &grid).is_err());
        assert!(FrequencySet::within_band(vec![500.0], &grid).is_ok());
    }

    fn random_supported(seed: u64, n: usize) -> RMat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = LatticeGeometry::chain(n);
        let mut h = RMat::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = rng.random_range(-40.0..40.0);
        }
        for &(i, j) in g.edges() {
            let x = rng.random_range(-30.0..30.0);
            h[(i, j)] = x;
            h[(j, i)] = x;
        }
        h
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn propagator_inverse_and_group(seed in 0u64..10_000, n in 1usize..7,
                                        t1 in -80.0f64..80.0, t2 in -80.0f64..80.0) {
            let h = random_supported(seed, n);
            let u1 = propagator(&h, t1);
            prop_assert!(unitarity_defect(&u1) < 1e-12);
            let inv = &u1 * propagator(&h, -t1);
            prop_assert!(cnorm(&(inv - CMat::identity(n, n))) < 1e-12);
            let lhs = propagator(&h, t1 + t2);
            let rhs = &u1 * propagator(&h, t2);
            prop_assert!(cnorm(&(lhs - rhs)) < 1e-10);
        }

        #[test]
        fn eigendecomposition_reconstructs(seed in 0u64..10_000, n in 1usize..9) {
            let h = random_supported(seed, n);
            let e = eig_symmetric(&h);
            prop_assert!(orthogonality_defect(&e.vectors) < 1e-12);
            let rec = &e.vectors * RMat::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()))
                * e.vectors.transpose();
            prop_assert!((rec - &h).norm() <= 1e-10 * h.norm().max(1.0));
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
