//! Random preparation and measurement maps: the Hamiltonian is still exact and
//! large measurement phases show up as sign flips.

use hamid::metrics::analog_accuracy;
use hamid::model::{build_harper, LatticeGeometry, TimeGrid};
use hamid::pipeline::{identify, IdentifyConfig};
use hamid::simulate::{perturbed_identity, random_diagonal_unitary, simulate_exact};

pub fn run_example() -> hamid::Result<()> {
    let g = LatticeGeometry::chain(5);
    let h = build_harper(5, 0.6, 20.0, &g)?;
    let s = perturbed_identity(5, 0.3, 3)?;
    let (m, phases) = random_diagonal_unitary(5, 4);
    let data = simulate_exact(&h, &s, &m, &TimeGrid::default())?;
    let r = identify(&data, &g, Some(h.matrix()), &IdentifyConfig::default())?;

    println!("E_analog: {:.2e} MHz", analog_accuracy(&r.h_hat, h.matrix())?);
    // the data only fix M and S up to a shared phase; results use tr Ŝ > 0
    let alpha = s.0.trace().arg();
    println!("site  planted  planted+arg(tr S)  estimated  flipped");
    let flips = r.sign_flips();
    for (i, (&planted, &est)) in phases.iter().zip(&r.final_phases).enumerate() {
        println!(
            "{i:>4}  {planted:+7.3}  {:+17.3}  {est:+9.3}  {}",
            hamid::linalg::C64::from_polar(1.0, planted + alpha).arg(),
            flips[i]
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> hamid::Result<()> {
    run_example()
}
