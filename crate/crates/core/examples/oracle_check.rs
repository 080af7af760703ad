//! Checks the recursion against the brute-force joint information matrix,
//! on the tracking model and on random models covering the three lag cases.

use pcrb::blocks::ExpectationEstimator;
use pcrb::models::{LinearGaussianModel, MaTrackingModel};
use pcrb::noise::{select_case, CorrelationProfile, SystemModel};
use pcrb::oracle::verify;
use pcrb::recursion::FaultInjection;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn worst(model: &dyn SystemModel, fault: FaultInjection) -> pcrb::Result<f64> {
    let devs = verify(model, &ExpectationEstimator::analytic(), 12, fault)?;
    Ok(devs.iter().map(|d| d.max_rel).fold(0.0, f64::max))
}

pub fn run_example() -> pcrb::Result<()> {
    let m = MaTrackingModel::example1();
    println!("tracking model: max relative deviation {:.2e}", worst(&m, FaultInjection::None)?);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (l1, l2, l3, l4) in [(0, 0, 3, 0), (1, 2, 1, 1), (2, 1, 2, 2)] {
        let p = CorrelationProfile::new(l1, l2, l3, l4)?;
        let m = LinearGaussianModel::random(p, 2, 2, &mut rng)?;
        println!("{p} {:?}: {:.2e}", select_case(&p), worst(&m, FaultInjection::None)?);
    }

    // A perturbed D assembly must show up.
    let p = CorrelationProfile::new(1, 1, 2, 1)?;
    let m = LinearGaussianModel::random(p, 2, 2, &mut rng)?;
    match worst(&m, FaultInjection::CorruptDAssembly) {
        Ok(d) => println!("corrupted assembly: {d:.2e}"),
        Err(e) => println!("corrupted assembly: {e}"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> pcrb::Result<()> {
    run_example()
}
