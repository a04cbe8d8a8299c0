//! Resolves two modes spaced well below the Fourier limit of a 201-sample trace.

use hamid::linalg::C64;
use hamid::model::TimeGrid;
use hamid::spectral::{esprit, match_frequencies, EspritConfig, TraceSignal};

pub fn run_example() -> hamid::Result<()> {
    let grid = TimeGrid::default();
    let fourier = 1e3 / (grid.len() as f64 * grid.dt());
    println!("Fourier resolution: {fourier:.3} MHz");
    for fraction in [0.5, 0.2, 0.1] {
        let truth = [-8.0, -8.0 + fraction * fourier];
        let one = C64::new(1.0, 0.0);
        let signal = TraceSignal::from_modes(&truth, &[one, one], grid);
        let est = esprit(&signal, &EspritConfig::new(2))?;
        let dev = match_frequencies(est.as_slice(), &truth)?.max_deviation();
        println!(
            "spacing {:.3} MHz -> {:?} (max error {dev:.1e} MHz)",
            truth[1] - truth[0],
            est.as_slice()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> hamid::Result<()> {
    run_example()
}
