//! Simulates a noiseless and a shot-sampled time series for a 5-site chain.

use hamid::model::{build_harper, LatticeGeometry, SpamMap, TimeGrid};
use hamid::simulate::{sample_shots, simulate_exact, NoiseConfig};
use hamid::spectral::trace_signal;

pub fn run_example() -> hamid::Result<()> {
    let g = LatticeGeometry::chain(5);
    let h = build_harper(5, 0.35, 20.0, &g)?;
    let id = SpamMap::identity(5);
    let exact = simulate_exact(&h, &id, &id, &TimeGrid::default())?;
    let noisy = sample_shots(&exact, &NoiseConfig::shots(1000, 7))?;

    println!("eigenfrequencies (MHz): {:?}", h.eigen().values);
    println!("unitarity defect of 2y: {:.1e}", exact.unitarity_defect());
    let (clean, sampled) = (trace_signal(&exact), trace_signal(&noisy));
    for l in [0, 50, 100, 200] {
        println!(
            "t = {:>3} ns  tr y exact {:+.4}  sampled {:+.4}",
            l,
            clean.samples()[l],
            sampled.samples()[l]
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> hamid::Result<()> {
    run_example()
}
