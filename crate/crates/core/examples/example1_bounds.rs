//! Position and velocity bounds for the correlated-noise tracking model
//! (MA(1) noises plus a one-step cross term), over 40 steps.

use pcrb::blocks::ExpectationEstimator;
use pcrb::models::MaTrackingModel;
use pcrb::noise::select_case;
use pcrb::recursion::run;

pub fn run_example() -> pcrb::Result<()> {
    let model = MaTrackingModel::example1();
    let profile = pcrb::noise::SystemModel::profile(&model);
    println!("profile {profile}, {:?}", select_case(&profile));

    let trace = run(&model, &ExpectationEstimator::analytic(), 40)?;
    println!("{:>3} {:>12} {:>12}", "k", "pos [m]", "vel [m/s]");
    for e in trace.entries.iter().filter(|e| e.k <= 5 || e.k % 5 == 0) {
        println!("{:>3} {:>12.4} {:>12.4}", e.k, e.sqrt_bound(0), e.sqrt_bound(1));
    }
    println!("relative change of J over the last step: {:.2e}", trace.final_relative_change());
    Ok(())
}

#[allow(dead_code)]
fn main() -> pcrb::Result<()> {
    run_example()
}
