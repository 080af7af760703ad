//! The exact bound next to three approximations: ignoring the correlation,
//! AR(1) state augmentation, and prewhitening the cross term.

use pcrb::baselines::Baseline;
use pcrb::blocks::ExpectationEstimator;
use pcrb::models::MaTrackingModel;
use pcrb::recursion::run;

pub fn run_example() -> pcrb::Result<()> {
    let model = MaTrackingModel::example1();
    let exact = run(&model, &ExpectationEstimator::analytic(), 40)?;
    let others = Baseline::ALL
        .iter()
        .map(|b| b.run(model.params(), 40))
        .collect::<pcrb::Result<Vec<_>>>()?;

    print!("{:>3} {:>10}", "k", "pcrb_t");
    for b in Baseline::ALL {
        print!(" {:>10}", b.column());
    }
    println!();
    for k in [1, 2, 5, 10, 20, 40] {
        print!("{k:>3} {:>10.4}", exact.entries[k - 1].sqrt_bound(0));
        for t in &others {
            print!(" {:>10.4}", t.entries[k - 1].sqrt_bound(0));
        }
        println!();
    }
    let e = exact.last().sqrt_bound(0);
    for (b, t) in Baseline::ALL.iter().zip(&others) {
        let v = t.last().sqrt_bound(0);
        println!("{}: steady-state gap {:+.1}%", b.column(), 100.0 * (v - e) / e);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> pcrb::Result<()> {
    run_example()
}
