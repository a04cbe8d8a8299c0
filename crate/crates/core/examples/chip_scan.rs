//! Scans a 2×4 device for a planted detuning bias and a planted final phase.

use hamid::bench::{chip_scan, sample_connected_subsets, PlantedFault, ScanConfig, SimulatedDevice};
use hamid::model::{LatticeGeometry, TimeGrid};
use hamid::simulate::NoiseConfig;

pub fn run_example() -> hamid::Result<()> {
    let g = LatticeGeometry::grid(2, 4);
    let device = SimulatedDevice {
        noise: NoiseConfig::shots(1000, 3),
        faults: vec![
            PlantedFault::DetuningBias { site: 2, mhz: 2.0 },
            PlantedFault::FinalPhase { site: 5, radians: 2.4 },
        ],
        ..SimulatedDevice::ideal(TimeGrid::default())
    };
    let cfg = ScanConfig {
        subset_size: 4,
        min_coverage: 3,
        ..Default::default()
    };
    let subsets = sample_connected_subsets(&g, cfg.subset_size, cfg.min_coverage, 1)?;
    let rep = chip_scan(&g, &subsets, &cfg, &device)?;
    println!("{} subsets x {} b values", subsets.len(), cfg.b_values.len());
    println!("site  median dev (MHz)  sign-flip mean");
    for s in &rep.sites {
        println!(
            "{:>4}  {:>16.3}  {:>14.2}",
            s.site,
            s.median_deviation.unwrap_or(f64::NAN),
            s.sign_flip_mean.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> hamid::Result<()> {
    run_example()
}
