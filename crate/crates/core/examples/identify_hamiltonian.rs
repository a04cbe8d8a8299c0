//! Identifies a Harper chain from shot-sampled data and compares it to the truth.

use hamid::metrics::{analog_accuracy, entrywise_deviation};
use hamid::model::{build_harper, LatticeGeometry, SpamMap, TimeGrid};
use hamid::pipeline::{identify, IdentifyConfig};
use hamid::simulate::{sample_shots, simulate_exact, NoiseConfig};

pub fn run_example() -> hamid::Result<()> {
    let g = LatticeGeometry::chain(5);
    let h = build_harper(5, 0.35, 20.0, &g)?;
    let id = SpamMap::identity(5);
    let exact = simulate_exact(&h, &id, &id, &TimeGrid::default())?;
    let data = sample_shots(&exact, &NoiseConfig::shots(1000, 1))?;

    let r = identify(&data, &g, Some(h.matrix()), &IdentifyConfig::default())?;
    println!("estimated h (MHz):{:.3}", r.h_hat);
    println!("|h_hat - h| (MHz):{:.3}", entrywise_deviation(&r.h_hat, h.matrix())?);
    println!("E_analog: {:.3} MHz", analog_accuracy(&r.h_hat, h.matrix())?);
    println!(
        "mu used {:.2}, fit {:.3e} (unregularized {:.3e}), rms residual {:.2e}",
        r.mu_used, r.fit, r.unregularized_fit, r.diagnostics.total_rms
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> hamid::Result<()> {
    run_example()
}
