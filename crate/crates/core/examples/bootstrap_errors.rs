//! Statistical error bars from a parametric bootstrap around an estimate.

use hamid::model::{build_harper, LatticeGeometry, SpamMap, TimeGrid};
use hamid::model::Shots;
use hamid::pipeline::{identify, IdentifyConfig};
use hamid::simulate::{sample_shots, simulate_exact, NoiseConfig};
use hamid::uncertainty::{bootstrap, BootstrapConfig};

pub fn run_example() -> hamid::Result<()> {
    let g = LatticeGeometry::chain(4);
    let h = build_harper(4, 0.35, 20.0, &g)?;
    let id = SpamMap::identity(4);
    let grid = TimeGrid::new(1.0, 120)?;
    let exact = simulate_exact(&h, &id, &id, &grid)?;
    for shots in [1000, 4000] {
        let data = sample_shots(&exact, &NoiseConfig::shots(shots, 2))?;
        let r = identify(&data, &g, Some(h.matrix()), &IdentifyConfig::default())?;
        let cfg = BootstrapConfig {
            resamples: 100,
            shots: Shots::Finite(shots),
            ..Default::default()
        };
        let rep = bootstrap(&r.h_hat, &g, &grid, &cfg)?;
        println!(
            "{shots} shots: per-entry 0.99 quantile {:.3} MHz (diagonal {:.3}, couplings {:.3}), \
             frequencies {:.3} MHz",
            rep.per_entry_max, rep.diagonal_max, rep.off_diagonal_max, rep.frequency
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> hamid::Result<()> {
    run_example()
}
