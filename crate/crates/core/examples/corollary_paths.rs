//! The specialized recursions for a single kind of correlation give the same
//! bounds as the general one.

use pcrb::blocks::ExpectationEstimator;
use pcrb::linalg::max_rel_elementwise;
use pcrb::models::LinearGaussianModel;
use pcrb::noise::CorrelationProfile;
use pcrb::recursion::{run_with, schedule_for, RecursionPath, RunOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> pcrb::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases = [
        (RecursionPath::Corollary2, CorrelationProfile::new(0, 0, 3, 0)?),
        (RecursionPath::Corollary3, CorrelationProfile::new(0, 2, 0, 0)?),
        (RecursionPath::Corollary4, CorrelationProfile::new(2, 0, 0, 0)?),
    ];
    for (path, profile) in cases {
        let model = LinearGaussianModel::random(profile, 2, 1, &mut rng)?;
        let schedule = schedule_for(&model, &ExpectationEstimator::analytic(), 20)?;
        let unified = run_with(&model, &schedule, 20, RunOptions::default())?;
        let special = run_with(&model, &schedule, 20, RunOptions { path, ..Default::default() })?;
        let dev = unified
            .entries
            .iter()
            .zip(&special.entries)
            .map(|(a, b)| max_rel_elementwise(&a.info, &b.info))
            .fold(0.0, f64::max);
        println!("{path:?} on {profile}: max deviation {dev:.2e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> pcrb::Result<()> {
    run_example()
}
