//! A model read from JSON: a scalar random walk whose measurement also sees
//! the previous state.

use pcrb::blocks::ExpectationEstimator;
use pcrb::config::ModelConfig;
use pcrb::recursion::run;

const CONFIG: &str = r#"{
    "kind": "custom",
    "state_dim": 1,
    "meas_dim": 1,
    "lags": {"l1": 0, "l2": 0, "l3": 2, "l4": 0},
    "transition_state": [[1.0]],
    "process_cov": [1.0],
    "measurement_state": [[1.0], [0.5]],
    "meas_cov": [1.0],
    "prior": {"mean": [0.0], "cov": [1.0]}
}"#;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ModelConfig::from_json(CONFIG)?;
    let loaded = cfg.build()??;
    let est = loaded.estimator.unwrap_or(ExpectationEstimator::analytic());
    let trace = run(&loaded.model, &est, 30)?;
    for e in trace.entries.iter().step_by(5) {
        println!("k={:>2}  J={:.6}  bound={:.6}", e.k, e.info[(0, 0)], e.bound[(0, 0)]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
