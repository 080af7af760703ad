//! Range-azimuth tracking with MA(2) process noise. The measurement block has
//! no closed form and is estimated by Monte Carlo.
//!
//! Usage: `cargo run --release --example example2_range_bearing [samples] [seed]`

use pcrb::blocks::ExpectationEstimator;
use pcrb::models::RangeBearingModel;
use pcrb::recursion::run;

pub fn run_with_samples(samples: usize, seed: u64) -> pcrb::Result<()> {
    let model = RangeBearingModel::example2();
    let est = ExpectationEstimator::monte_carlo(samples, seed);
    let trace = run(&model, &est, 40)?;
    println!(
        "{} samples, {} rejected at the azimuth singularity, {:.2?}",
        trace.mc.samples, trace.mc.rejected, trace.wall_time
    );
    println!("{:>3} {:>10} {:>10}", "k", "x [m]", "y [m]");
    for e in trace.entries.iter().filter(|e| e.k % 5 == 0) {
        println!("{:>3} {:>10.3} {:>10.3}", e.k, e.sqrt_bound(0), e.sqrt_bound(2));
    }
    Ok(())
}

pub fn run_example() -> pcrb::Result<()> {
    run_with_samples(5_000, 1)
}

#[allow(dead_code)]
fn main() -> pcrb::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    run_with_samples(samples, seed)
}
