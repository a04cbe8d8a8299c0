//! Ramp-induced maps, their systematic effect on an estimate, and the
//! phase-versus-distance calibration from diagonal runs.

use hamid::linalg::RMat;
use hamid::model::{build_harper, HamiltonianParams, LatticeGeometry, TimeGrid};
use hamid::simulate::{
    ramp_map_matrix, sample_shots, simulate_exact, NoiseConfig, RampDirection, RampModelConfig,
};
use hamid::uncertainty::{diag_phase_calibration, ramp_systematic, CalibrationRun};
use rand::{Rng, SeedableRng};

pub fn run_example() -> hamid::Result<()> {
    let g = LatticeGeometry::chain(4);
    let h = build_harper(4, 0.35, 20.0, &g)?;
    let ramp = RampModelConfig::random_idle(4, 100.0, 500.0, 5);
    let out = ramp_map_matrix(h.matrix(), &ramp, RampDirection::Out)?;
    let phases: Vec<f64> = (0..4).map(|i| out.0[(i, i)].arg().to_degrees()).collect();
    println!("idle (MHz) {:?}", ramp.idle);
    println!("final-map diagonal phases (deg) {phases:.1?}");
    let sys = ramp_systematic(h.matrix(), h.matrix(), &ramp)?;
    println!(
        "systematic error: diagonal {:.3} MHz, couplings {:.3} MHz",
        sys.diagonal_max, sys.off_diagonal_max
    );

    let cfg = RampModelConfig::new(vec![0.0; 3]);
    let empty = LatticeGeometry::new(3, [])?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let mut runs = Vec::new();
    for k in 0..10 {
        let d: Vec<f64> = (0..3).map(|_| rng.random_range(10.0..90.0)).collect();
        let hd = RMat::from_diagonal(&nalgebra::DVector::from_vec(d));
        let s = ramp_map_matrix(&hd, &cfg, RampDirection::In)?;
        let m = ramp_map_matrix(&hd, &cfg, RampDirection::Out)?;
        let target = HamiltonianParams::new(hd.clone(), empty.clone())?;
        let exact = simulate_exact(&target, &s, &m, &TimeGrid::default())?;
        runs.push(CalibrationRun {
            data: sample_shots(&exact, &NoiseConfig::shots(1000, k))?,
            hamiltonian: hd,
        });
    }
    let cal = diag_phase_calibration(&runs, cfg.speed, 140.0)?;
    println!(
        "calibration: slope {:.4} deg/MHz, offset {:.2} deg -> total ramp time {:.3} ns, wait {:.3} ns",
        cal.envelope_slope, cal.envelope_offset, cal.total_ramp_time, cal.wait_time
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> hamid::Result<()> {
    run_example()
}
