//! Chip-scan benchmark: identification over many connected subsets of a
//! device, aggregated into per-site and per-coupler error maps.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};
use crate::metrics::analog_accuracy_complex;
use crate::model::{
    build_harper, eig_symmetric, HamiltonianParams, LatticeGeometry, SpamMap, TimeGrid,
    TimeSeriesData,
};
use crate::pipeline::{identify, IdentifyConfig};
use crate::simulate::{sample_shots, simulate_exact, NoiseConfig};

/// Draws per element before coverage is declared unreachable.
const DRAWS_PER_ELEMENT: usize = 2000;

/// Connected subset of device sites, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub sites: Vec<usize>,
}

impl Subset {
    pub fn geometry(&self, device: &LatticeGeometry) -> Result<LatticeGeometry> {
        device.induced(&self.sites)
    }

    /// Device edges with both ends in the subset.
    pub fn edges(&self, device: &LatticeGeometry) -> Vec<(usize, usize)> {
        device
            .edges()
            .iter()
            .copied()
            .filter(|(i, j)| self.sites.contains(i) && self.sites.contains(j))
            .collect()
    }
}

fn grow<R: Rng>(geometry: &LatticeGeometry, size: usize, rng: &mut R) -> Option<Vec<usize>> {
    let start = rng.random_range(0..geometry.num_sites());
    let mut chosen = BTreeSet::from([start]);
    while chosen.len() < size {
        let frontier: Vec<usize> = chosen
            .iter()
            .flat_map(|&s| geometry.neighbors(s))
            .filter(|s| !chosen.contains(s))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let &next = frontier.choose(rng)?;
        chosen.insert(next);
    }
    Some(chosen.into_iter().collect())
}

/// Random connected subsets of `size` sites until every site and every edge
/// lies in at least `min_coverage` of them.
///
/// A draw is kept only if it raises the coverage of some element still below
/// `min_coverage`.
pub fn sample_connected_subsets(
    geometry: &LatticeGeometry,
    size: usize,
    min_coverage: usize,
    seed: u64,
) -> Result<Vec<Subset>> {
    let sampled = sample_best_effort(geometry, size, min_coverage, seed)?;
    if sampled.reached >= min_coverage {
        Ok(sampled.subsets)
    } else {
        Err(Error::CoverageUnreachable {
            reached: sampled.reached,
            required: min_coverage,
            iterations: sampled.draws,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub subsets: Vec<Subset>,
    /// Smallest coverage over all sites and edges.
    pub reached: usize,
    pub draws: usize,
}

/// As [`sample_connected_subsets`], but returns what was drawn when the
/// coverage target is out of reach.
pub fn sample_best_effort(
    geometry: &LatticeGeometry,
    size: usize,
    min_coverage: usize,
    seed: u64,
) -> Result<Sampled> {
    let n = geometry.num_sites();
    if size == 0 || size > n {
        return Err(Error::InvalidConfig(format!(
            "subset size {size} outside 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut site_cov = vec![0usize; n];
    let mut edge_cov: BTreeMap<(usize, usize), usize> =
        geometry.edges().iter().map(|&e| (e, 0)).collect();
    let mut subsets = Vec::new();
    let cap = DRAWS_PER_ELEMENT * (n + edge_cov.len()).max(1);
    let reached = |site_cov: &[usize], edge_cov: &BTreeMap<_, usize>| {
        site_cov
            .iter()
            .chain(edge_cov.values())
            .copied()
            .min()
            .unwrap_or(min_coverage)
    };
    let mut draws = 0;
    while draws < cap && reached(&site_cov, &edge_cov) < min_coverage {
        draws += 1;
        let Some(sites) = grow(geometry, size, &mut rng) else {
            continue;
        };
        let subset = Subset { sites };
        let edges = subset.edges(geometry);
        let useful = subset.sites.iter().any(|&s| site_cov[s] < min_coverage)
            || edges.iter().any(|e| edge_cov[e] < min_coverage);
        if !useful {
            continue;
        }
        for &s in &subset.sites {
            site_cov[s] += 1;
        }
        for e in &edges {
            *edge_cov.get_mut(e).expect("subset edges are device edges") += 1;
        }
        subsets.push(subset);
    }
    Ok(Sampled {
        subsets,
        reached: reached(&site_cov, &edge_cov),
        draws,
    })
}

/// Planted deviation of the simulated device from its targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantedFault {
    /// Constant offset of one on-site potential (MHz).
    DetuningBias { site: usize, mhz: f64 },
    /// Diagonal phase of the final map at one site (rad).
    FinalPhase { site: usize, radians: f64 },
}

/// Where scan data comes from: a simulator here, recorded runs elsewhere.
pub trait ScanDataSource: Sync {
    /// Time series for `target` implemented on the device `sites`.
    fn acquire(
        &self,
        sites: &[usize],
        target: &HamiltonianParams,
        run_seed: u64,
    ) -> Result<TimeSeriesData>;
}

/// Simulated device with `S = 1`, shot noise and planted faults.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDevice {
    pub grid: TimeGrid,
    pub noise: NoiseConfig,
    pub faults: Vec<PlantedFault>,
}

impl SimulatedDevice {
    pub fn ideal(grid: TimeGrid) -> Self {
        Self {
            grid,
            noise: NoiseConfig::exact(),
            faults: Vec::new(),
        }
    }
}

impl ScanDataSource for SimulatedDevice {
    fn acquire(
        &self,
        sites: &[usize],
        target: &HamiltonianParams,
        run_seed: u64,
    ) -> Result<TimeSeriesData> {
        let n = sites.len();
        let mut h = target.matrix().clone();
        let mut phases = vec![0.0; n];
        for fault in &self.faults {
            match *fault {
                PlantedFault::DetuningBias { site, mhz } => {
                    if let Some(q) = sites.iter().position(|&s| s == site) {
                        h[(q, q)] += mhz;
                    }
                }
                PlantedFault::FinalPhase { site, radians } => {
                    if let Some(q) = sites.iter().position(|&s| s == site) {
                        phases[q] += radians;
                    }
                }
            }
        }
        let actual = HamiltonianParams::new(h, target.geometry().clone())?;
        let exact = simulate_exact(
            &actual,
            &SpamMap::identity(n),
            &SpamMap::diagonal_phases(&phases),
            &self.grid,
        )?;
        let noise = NoiseConfig {
            rng_seed: self.noise.rng_seed ^ run_seed,
            ..self.noise
        };
        sample_shots(&exact, &noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub subset_size: usize,
    pub min_coverage: usize,
    pub b_values: Vec<f64>,
    pub coupling_mhz: f64,
    /// Subsets whose target spectrum has a gap below this (MHz) are skipped.
    pub min_gap_mhz: f64,
    pub seed: u64,
    pub pipeline: IdentifyConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            subset_size: 5,
            min_coverage: 5,
            b_values: vec![0.0, 0.5],
            coupling_mhz: 20.0,
            min_gap_mhz: 1.0,
            seed: 0,
            pipeline: IdentifyConfig::default(),
        }
    }
}

/// Outcome of one subset × b identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRun {
    pub sites: Vec<usize>,
    pub b: f64,
    /// `None` if the run was skipped or failed.
    pub outcome: Option<RunOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// `|ĥ_qq − h_qq|` per local site.
    pub site_deviation: Vec<f64>,
    /// `|ĥ_ij − h_ij|` per device edge inside the subset.
    pub edge_deviation: Vec<((usize, usize), f64)>,
    /// Largest off-support entry of `ĥ`.
    pub leakage: f64,
    /// `E_analog(Ŝ, 1)`.
    pub initial_map_accuracy: f64,
    pub sign_flips: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSummary {
    pub site: usize,
    pub median_deviation: Option<f64>,
    pub initial_map_median: Option<f64>,
    pub sign_flip_mean: Option<f64>,
    /// Runs involving the site, and how many of those failed.
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplerSummary {
    pub edge: (usize, usize),
    pub median_deviation: Option<f64>,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipScanReport {
    pub sites: Vec<SiteSummary>,
    pub couplers: Vec<CouplerSummary>,
    pub leakage_median: Option<f64>,
    /// Subsets containing each element, before failures.
    pub site_coverage: Vec<usize>,
    pub edge_coverage: Vec<((usize, usize), usize)>,
    pub runs: Vec<ScanRun>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[k]
    } else {
        0.5 * (values[k - 1] + values[k])
    })
}

/// Harper target for a subset, sites numbered in ascending device order.
pub fn subset_target(
    device: &LatticeGeometry,
    subset: &Subset,
    b: f64,
    coupling_mhz: f64,
) -> Result<HamiltonianParams> {
    let geometry = subset.geometry(device)?;
    build_harper(subset.sites.len(), b, coupling_mhz, &geometry)
}

fn run_one<D: ScanDataSource>(
    device: &LatticeGeometry,
    subset: &Subset,
    b: f64,
    cfg: &ScanConfig,
    source: &D,
    run_seed: u64,
) -> std::result::Result<Option<RunOutcome>, Error> {
    let target = subset_target(device, subset, b, cfg.coupling_mhz)?;
    let freqs = eig_symmetric(target.matrix()).values;
    if freqs.windows(2).any(|w| w[1] - w[0] < cfg.min_gap_mhz) {
        return Ok(None);
    }
    let data = source.acquire(&subset.sites, &target, run_seed)?;
    let r = identify(
        &data,
        target.geometry(),
        Some(target.matrix()),
        &cfg.pipeline,
    )?;
    let h = target.matrix();
    let dev = (&r.h_hat - h).abs();
    let n = subset.sites.len();
    let local = |s: usize| {
        subset
            .sites
            .iter()
            .position(|&x| x == s)
            .expect("edge inside subset")
    };
    let edge_deviation = subset
        .edges(device)
        .into_iter()
        .map(|e| (e, dev[(local(e.0), local(e.1))]))
        .collect();
    let leakage = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !target.geometry().in_support(i, j))
        .map(|(i, j)| r.h_hat[(i, j)].abs())
        .fold(0.0, f64::max);
    Ok(Some(RunOutcome {
        site_deviation: (0..n).map(|q| dev[(q, q)]).collect(),
        edge_deviation,
        leakage,
        initial_map_accuracy: analog_accuracy_complex(r.s_hat.matrix(), &CMat::identity(n, n))?,
        sign_flips: r.sign_flips(),
    }))
}

/// Identifies every subset at every `b` and aggregates per element.
pub fn chip_scan<D: ScanDataSource>(
    device: &LatticeGeometry,
    subsets: &[Subset],
    cfg: &ScanConfig,
    source: &D,
) -> Result<ChipScanReport> {
    let jobs: Vec<(usize, &Subset, f64)> = subsets
        .iter()
        .enumerate()
        .flat_map(|(k, s)| cfg.b_values.iter().map(move |&b| (k, s, b)))
        .collect();
    let runs: Vec<ScanRun> = jobs
        .par_iter()
        .enumerate()
        .map(|(idx, &(_, subset, b))| {
            let seed = cfg
                .seed
                .wrapping_mul(0x2545_F491_4F6C_DD1D)
                .wrapping_add(idx as u64);
            let (outcome, error) = match run_one(device, subset, b, cfg, source, seed) {
                Ok(Some(o)) => (Some(o), None),
                Ok(None) => (None, Some("degenerate target spectrum".to_string())),
                Err(e) => (None, Some(e.to_string())),
            };
            ScanRun {
                sites: subset.sites.clone(),
                b,
                outcome,
                error,
            }
        })
        .collect();
    Ok(aggregate(device, &runs))
}

fn aggregate(device: &LatticeGeometry, runs: &[ScanRun]) -> ChipScanReport {
    let n = device.num_sites();
    let mut dev: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut s_acc: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut flips: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut site_runs = vec![0usize; n];
    let mut site_fail = vec![0usize; n];
    let mut edge_dev: BTreeMap<(usize, usize), Vec<f64>> =
        device.edges().iter().map(|&e| (e, Vec::new())).collect();
    let mut edge_runs: BTreeMap<(usize, usize), (usize, usize)> =
        device.edges().iter().map(|&e| (e, (0, 0))).collect();
    let mut site_subsets: Vec<BTreeSet<&[usize]>> = vec![BTreeSet::new(); n];
    let mut edge_subsets: BTreeMap<(usize, usize), BTreeSet<&[usize]>> = BTreeMap::new();
    let mut leakage = Vec::new();
    for run in runs {
        let subset = Subset {
            sites: run.sites.clone(),
        };
        let edges = subset.edges(device);
        for &s in &run.sites {
            site_runs[s] += 1;
            site_subsets[s].insert(&run.sites);
        }
        for e in &edges {
            edge_runs.get_mut(e).expect("device edge").0 += 1;
            edge_subsets.entry(*e).or_default().insert(&run.sites);
        }
        match &run.outcome {
            Some(o) => {
                for (q, &s) in run.sites.iter().enumerate() {
                    dev[s].push(o.site_deviation[q]);
                    s_acc[s].push(o.initial_map_accuracy);
                    flips[s].push(if o.sign_flips[q] { 1.0 } else { 0.0 });
                }
                for &(e, d) in &o.edge_deviation {
                    edge_dev.get_mut(&e).expect("device edge").push(d);
                }
                leakage.push(o.leakage);
            }
            None => {
                for &s in &run.sites {
                    site_fail[s] += 1;
                }
                for e in &edges {
                    edge_runs.get_mut(e).expect("device edge").1 += 1;
                }
            }
        }
    }
    let sites = (0..n)
        .map(|s| SiteSummary {
            site: s,
            median_deviation: median(&mut dev[s]),
            initial_map_median: median(&mut s_acc[s]),
            sign_flip_mean: (!flips[s].is_empty())
                .then(|| flips[s].iter().sum::<f64>() / flips[s].len() as f64),
            runs: site_runs[s],
            failures: site_fail[s],
        })
        .collect();
    let couplers = edge_dev
        .iter_mut()
        .map(|(&e, d)| CouplerSummary {
            edge: e,
            median_deviation: median(d),
            runs: edge_runs[&e].0,
            failures: edge_runs[&e].1,
        })
        .collect();
    ChipScanReport {
        sites,
        couplers,
        leakage_median: median(&mut leakage),
        site_coverage: site_subsets.iter().map(BTreeSet::len).collect(),
        edge_coverage: device
            .edges()
            .iter()
            .map(|e| (*e, edge_subsets.get(e).map_or(0, BTreeSet::len)))
            .collect(),
        runs: runs.to_vec(),
    }
}

/// Median of `|ĥ − h|` entry-wise over an ensemble of results.
pub fn median_deviation(deviations: &[RMat]) -> Option<RMat> {
    let first = deviations.first()?;
    let (r, c) = first.shape();
    Some(RMat::from_fn(r, c, |i, j| {
        median(&mut deviations.iter().map(|d| d[(i, j)]).collect::<Vec<_>>()).expect("non-empty")
    }))
}
