//! Average bound as a function of sensor count, and the smallest count that
//! meets an accuracy target.

use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::ExpectationEstimator;
use crate::error::{PcrbError, Result};
use crate::noise::SystemModel;
use crate::recursion::{run, PcrbTrace};

/// Default averaging window, in steps.
pub const AVERAGE_WINDOW: usize = 40;

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub m: usize,
    /// Mean over `k = 1..=K` of `sqrt(bound_k[c, c])`.
    pub avg_bound: f64,
    pub final_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensorSweepResult {
    pub component: usize,
    pub horizon: usize,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorCount {
    Count(usize),
    /// No count up to the swept maximum meets the target.
    Unachievable { m_max: usize },
}

impl SensorSweepResult {
    pub fn m_max(&self) -> usize {
        self.points.last().map_or(0, |p| p.m)
    }

    /// `avg_bound(m + 1) < avg_bound(m)` throughout.
    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].avg_bound < w[0].avg_bound)
    }
}

/// Average of the per-step standard-deviation bound over the whole trace.
pub fn average_bound(trace: &PcrbTrace, component: usize) -> f64 {
    let v = trace.sqrt_bounds(component);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs `family(m)` for `m = 1..=m_max` in parallel; results are in `m` order.
pub fn sweep<M, F>(
    family: F,
    m_max: usize,
    horizon: usize,
    component: usize,
    est: &ExpectationEstimator,
) -> Result<SensorSweepResult>
where
    M: SystemModel,
    F: Fn(usize) -> Result<M> + Sync,
{
    if m_max == 0 {
        return Err(PcrbError::InvalidArgument("max sensor count must be at least 1".into()));
    }
    if horizon == 0 {
        return Err(PcrbError::InvalidArgument("horizon must be at least 1".into()));
    }
    let points = (1..=m_max)
        .into_par_iter()
        .map(|m| {
            let model = family(m)?;
            if component >= model.state_dim() {
                return Err(PcrbError::InvalidArgument(format!(
                    "component {component} out of range for state dimension {}",
                    model.state_dim()
                )));
            }
            let trace = run(&model, est, horizon)?;
            Ok(SweepPoint {
                m,
                avg_bound: average_bound(&trace, component),
                final_bound: trace.last().sqrt_bound(component),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensorSweepResult {
        component,
        horizon,
        points,
    })
}

/// Smallest swept `m` whose average bound is at most `target`.
pub fn min_sensors(result: &SensorSweepResult, target: f64) -> SensorCount {
    result
        .points
        .iter()
        .find(|p| p.avg_bound <= target)
        .map_or(SensorCount::Unachievable { m_max: result.m_max() }, |p| {
            SensorCount::Count(p.m)
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(values: &[f64]) -> SensorSweepResult {
        SensorSweepResult {
            component: 0,
            horizon: 40,
            points: values
                .iter()
                .enumerate()
                .map(|(i, &v)| SweepPoint {
                    m: i + 1,
                    avg_bound: v,
                    final_bound: v,
                })
                .collect(),
        }
    }

    #[test]
    fn threshold_lookup() {
        let r = synthetic(&[10.0, 8.0, 6.0, 5.0]);
        assert_eq!(min_sensors(&r, 6.0), SensorCount::Count(3));
        assert_eq!(min_sensors(&r, 11.0), SensorCount::Count(1));
        assert_eq!(min_sensors(&r, 4.0), SensorCount::Unachievable { m_max: 4 });
        assert!(r.strictly_decreasing());
        assert!(!synthetic(&[3.0, 3.0]).strictly_decreasing());
    }
}
