//! How many sensors a target accuracy needs. Each sensor is an independent
//! replica of the measurement equation with its own noise.

use pcrb::blocks::ExpectationEstimator;
use pcrb::models::MaTrackingModel;
use pcrb::selection::{min_sensors, sweep, AVERAGE_WINDOW};

pub fn run_example() -> pcrb::Result<()> {
    let result = sweep(
        MaTrackingModel::example1_sensors,
        8,
        AVERAGE_WINDOW,
        0,
        &ExpectationEstimator::analytic(),
    )?;
    for p in &result.points {
        println!("m={:>2}  average position bound {:.3} m", p.m, p.avg_bound);
    }
    for target in [10.0, 6.0, 3.0] {
        println!("target {target} m: {:?}", min_sensors(&result, target));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> pcrb::Result<()> {
    run_example()
}
