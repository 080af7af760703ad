//! Closed-form, Monte-Carlo and finite-difference estimates of the expected
//! Hessian blocks, side by side.

use pcrb::blocks::{estimate_b, estimate_c, ExpectationEstimator};
use pcrb::linalg::rel_diff;
use pcrb::models::{MaTrackingModel, RangeBearingModel};

pub fn run_example() -> pcrb::Result<()> {
    let model = MaTrackingModel::example1();
    let exact = estimate_c(&model, 2, &ExpectationEstimator::analytic())?;
    for n in [1_000, 10_000] {
        let fd = estimate_c(&model, 2, &ExpectationEstimator::finite_difference(n, 3))?;
        println!(
            "C, finite differences at {n:>6} samples: relative error {:.2e}",
            rel_diff(fd.mean.as_dense(), exact.mean.as_dense())
        );
    }

    let model = RangeBearingModel::example2();
    let b = estimate_b(&model, 2, &ExpectationEstimator::analytic())?;
    println!("range-azimuth B is {}x{} blocks", b.mean.rows(), b.mean.cols());
    let c = estimate_c(&model, 10, &ExpectationEstimator::monte_carlo(5_000, 1))?;
    let se = c.std_err.expect("sampled estimate");
    println!("C at k=10:\n{:.3e}standard errors:\n{:.1e}", c.mean.as_dense(), se);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pcrb::Result<()> {
    run_example()
}
