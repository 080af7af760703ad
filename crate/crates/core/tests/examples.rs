#[allow(dead_code)]
#[path = "../examples/example1_bounds.rs"]
mod example1_bounds;
#[allow(dead_code)]
#[path = "../examples/example2_range_bearing.rs"]
mod example2_range_bearing;
#[allow(dead_code)]
#[path = "../examples/oracle_check.rs"]
mod oracle_check;
#[allow(dead_code)]
#[path = "../examples/baselines_compare.rs"]
mod baselines_compare;
#[allow(dead_code)]
#[path = "../examples/sensor_selection.rs"]
mod sensor_selection;
#[allow(dead_code)]
#[path = "../examples/corollary_paths.rs"]
mod corollary_paths;
#[allow(dead_code)]
#[path = "../examples/custom_model_config.rs"]
mod custom_model_config;

#[test]
fn example1_bounds_runs() {
    example1_bounds::run_example().unwrap();
}

#[test]
fn example2_range_bearing_runs() {
    example2_range_bearing::run_example().unwrap();
}

#[test]
fn oracle_check_runs() {
    oracle_check::run_example().unwrap();
}

#[test]
fn baselines_compare_runs() {
    baselines_compare::run_example().unwrap();
}

#[test]
fn sensor_selection_runs() {
    sensor_selection::run_example().unwrap();
}

#[test]
fn corollary_paths_runs() {
    corollary_paths::run_example().unwrap();
}

#[test]
fn custom_model_config_runs() {
    custom_model_config::run_example().unwrap();
}

#[test]
fn block_estimators_runs() {
    block_estimators::run_example().unwrap();
}
