//! JSON model configuration.
//!
//! Every file names the dimensions, the lags and a `kind`; matrices are given
//! as flat row-major arrays. Fields that do not belong to the chosen kind,
//! and unknown fields, are rejected.
//!
//! ```json
//! {
//!   "kind": "linear_gaussian_ma",
//!   "state_dim": 2,
//!   "meas_dim": 2,
//!   "lags": {"l1": 1, "l2": 1, "l3": 2, "l4": 1},
//!   "f": [1, 2, 0, 1],
//!   "h": [1, 0, 0, 1],
//!   "q": [26.667, 20, 20, 20],
//!   "r": [400, 0, 0, 25],
//!   "ma_coeff": 0.2,
//!   "cross": true,
//!   "prior": {"mean": [0, 10], "cov": [100, 0, 0, 10]},
//!   "estimator": {"mode": "analytic"}
//! }
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::blocks::{EstimatorMode, ExpectationEstimator};
use crate::error::Result as PcrbResult;
use crate::models::{
    AnyModel, LinearGaussianModel, LinearGaussianSpec, MaTrackingModel, MaTrackingParams,
    RangeBearingModel, RangeBearingParams,
};
use crate::noise::{CorrelationProfile, GaussianPrior};

/// A configuration that could not be read or does not match the schema.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearGaussianMa,
    BuiltinExample1,
    BuiltinExample2,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Either one state (replicated over the prior window) or the whole window.
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub state_dim: usize,
    pub meas_dim: usize,
    pub lags: CorrelationProfile,
    #[serde(default)]
    pub prior: Option<PriorConfig>,
    #[serde(default)]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default)]
    pub sensors: Option<usize>,

    // linear_gaussian_ma
    #[serde(default)]
    pub f: Option<Vec<f64>>,
    #[serde(default)]
    pub h: Option<Vec<f64>>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub r: Option<Vec<f64>>,
    #[serde(default)]
    pub ma_coeff: Option<f64>,
    #[serde(default)]
    pub cross: Option<bool>,

    // custom
    #[serde(default)]
    pub transition_state: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub transition_meas: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub process_cov: Option<Vec<f64>>,
    #[serde(default)]
    pub measurement_state: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub measurement_meas: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub meas_cov: Option<Vec<f64>>,
}

const MA_FIELDS: [&str; 6] = ["f", "h", "q", "r", "ma_coeff", "cross"];
const CUSTOM_FIELDS: [&str; 6] = [
    "transition_state",
    "transition_meas",
    "process_cov",
    "measurement_state",
    "measurement_meas",
    "meas_cov",
];

fn matrix(field: &str, values: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>, ConfigError> {
    if values.len() != rows * cols {
        return Err(field_err(
            field,
            format!("expected {rows}x{cols} = {} row-major values, got {}", rows * cols, values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(field_err(field, "values must be finite"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, values))
}

fn matrices(
    field: &str,
    list: &Option<Vec<Vec<f64>>>,
    count: usize,
    rows: usize,
    cols: usize,
) -> Result<Vec<DMatrix<f64>>, ConfigError> {
    let list = list.as_deref().unwrap_or(&[]);
    if list.len() != count {
        return Err(field_err(field, format!("expected {count} matrices for these lags, got {}", list.len())));
    }
    list.iter()
        .enumerate()
        .map(|(i, v)| matrix(&format!("{field}[{i}]"), v, rows, cols))
        .collect()
}

fn required<'a, T>(field: &str, v: &'a Option<T>) -> Result<&'a T, ConfigError> {
    v.as_ref().ok_or_else(|| field_err(field, "required for this kind"))
}

/// A checked configuration: the model plus any estimator settings it carried.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: AnyModel,
    pub estimator: Option<ExpectationEstimator>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ModelConfig = serde_json::from_str(text)?;
        cfg.check_fields()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn present(&self, field: &str) -> bool {
        match field {
            "f" => self.f.is_some(),
            "h" => self.h.is_some(),
            "q" => self.q.is_some(),
            "r" => self.r.is_some(),
            "ma_coeff" => self.ma_coeff.is_some(),
            "cross" => self.cross.is_some(),
            "transition_state" => self.transition_state.is_some(),
            "transition_meas" => self.transition_meas.is_some(),
            "process_cov" => self.process_cov.is_some(),
            "measurement_state" => self.measurement_state.is_some(),
            "measurement_meas" => self.measurement_meas.is_some(),
            "meas_cov" => self.meas_cov.is_some(),
            "prior" => self.prior.is_some(),
            "sensors" => self.sensors.is_some(),
            _ => false,
        }
    }

    fn reject(&self, fields: &[&str]) -> Result<(), ConfigError> {
        match fields.iter().find(|f| self.present(f)) {
            Some(f) => Err(field_err(*f, format!("not allowed for kind {:?}", self.kind))),
            None => Ok(()),
        }
    }

    /// Structural checks that need no numerics.
    fn check_fields(&self) -> Result<(), ConfigError> {
        self.lags
            .validate()
            .map_err(|e| field_err("lags", e.to_string()))?;
        if self.state_dim == 0 {
            return Err(field_err("state_dim", "must be positive"));
        }
        if self.meas_dim == 0 {
            return Err(field_err("meas_dim", "must be positive"));
        }
        if let Some(est) = &self.estimator {
            match (est.mode, est.samples, est.seed) {
                (EstimatorMode::Analytic, None, None) => {}
                (EstimatorMode::Analytic, _, _) => {
                    return Err(field_err("estimator", "analytic mode takes no samples or seed"))
                }
                (_, Some(0), _) => return Err(field_err("estimator.samples", "must be at least 1")),
                (_, None, _) => return Err(field_err("estimator.samples", "required for sampling modes")),
                (_, _, None) => return Err(field_err("estimator.seed", "required for sampling modes")),
                _ => {}
            }
        }
        if self.sensors == Some(0) {
            return Err(field_err("sensors", "must be at least 1"));
        }
        match self.kind {
            ModelKind::LinearGaussianMa => self.reject(&CUSTOM_FIELDS),
            ModelKind::Custom => {
                self.reject(&MA_FIELDS)?;
                self.reject(&["sensors"])
            }
            ModelKind::BuiltinExample1 | ModelKind::BuiltinExample2 => {
                self.reject(&MA_FIELDS)?;
                self.reject(&CUSTOM_FIELDS)?;
                self.reject(&["prior"])
            }
        }
    }

    fn estimator(&self) -> Option<ExpectationEstimator> {
        self.estimator.as_ref().map(|e| ExpectationEstimator {
            mode: e.mode,
            sample_count: e.samples.unwrap_or(1),
            seed: e.seed.unwrap_or(0),
        })
    }

    fn check_dims(&self, profile: CorrelationProfile, r: usize, n: usize) -> Result<(), ConfigError> {
        if self.state_dim != r {
            return Err(field_err("state_dim", format!("this model has state dimension {r}")));
        }
        if self.meas_dim != n {
            return Err(field_err("meas_dim", format!("this model has measurement dimension {n}")));
        }
        if self.lags != profile {
            return Err(field_err("lags", format!("this model has lags {profile}")));
        }
        Ok(())
    }

    fn prior_single(&self, r: usize) -> Result<Option<(DVector<f64>, DMatrix<f64>)>, ConfigError> {
        let Some(p) = &self.prior else { return Ok(None) };
        if p.mean.len() != r {
            return Err(field_err("prior.mean", format!("expected {r} values")));
        }
        let cov = matrix("prior.cov", &p.cov, r, r)?;
        Ok(Some((DVector::from_vec(p.mean.clone()), cov)))
    }

    fn prior_window(&self, r: usize, window: usize) -> Result<GaussianPrior, ConfigError> {
        let p = required("prior", &self.prior)?;
        let build = |res: PcrbResult<GaussianPrior>| res.map_err(|e| field_err("prior", e.to_string()));
        if p.mean.len() == r {
            let cov = matrix("prior.cov", &p.cov, r, r)?;
            build(GaussianPrior::independent(&DVector::from_vec(p.mean.clone()), &cov, window))
        } else if p.mean.len() == r * window {
            let cov = matrix("prior.cov", &p.cov, r * window, r * window)?;
            build(GaussianPrior::new(r, DVector::from_vec(p.mean.clone()), cov))
        } else {
            Err(field_err(
                "prior.mean",
                format!("expected {r} values (one state) or {} (the whole prior window)", r * window),
            ))
        }
    }

    /// Builds the model. Schema problems come back as [`ConfigError`]
    /// (outer `Err`); numerical problems in an otherwise well-formed model
    /// (a covariance that is not positive definite, say) come back as the
    /// inner [`crate::PcrbError`].
    pub fn build(&self) -> Result<PcrbResult<LoadedModel>, ConfigError> {
        let estimator = self.estimator();
        let wrap = |m: PcrbResult<AnyModel>| m.map(|model| LoadedModel { model, estimator });
        match self.kind {
            ModelKind::BuiltinExample1 => {
                let params = MaTrackingParams {
                    sensors: self.sensors.unwrap_or(1),
                    ..MaTrackingParams::example1()
                };
                self.check_dims(params.profile(), 2, 2 * params.sensors)?;
                Ok(wrap(MaTrackingModel::new(params).map(AnyModel::MaTracking)))
            }
            ModelKind::BuiltinExample2 => {
                let params = RangeBearingParams {
                    sensors: self.sensors.unwrap_or(1),
                    ..RangeBearingParams::example2()
                };
                self.check_dims(CorrelationProfile::new(0, 2, 0, 0).expect("valid"), 4, 2 * params.sensors)?;
                Ok(wrap(RangeBearingModel::new(params).map(AnyModel::RangeBearing)))
            }
            ModelKind::LinearGaussianMa => {
                let r = self.state_dim;
                let sensors = self.sensors.unwrap_or(1);
                if self.meas_dim % sensors != 0 {
                    return Err(field_err("meas_dim", format!("not divisible by {sensors} sensors")));
                }
                let n = self.meas_dim / sensors;
                let (prior_mean, prior_cov) = self
                    .prior_single(r)?
                    .ok_or_else(|| field_err("prior", "required for this kind (one state: mean and cov)"))?;
                let params = MaTrackingParams {
                    f: matrix("f", required("f", &self.f)?, r, r)?,
                    h: matrix("h", required("h", &self.h)?, n, r)?,
                    q: matrix("q", required("q", &self.q)?, r, r)?,
                    r: matrix("r", required("r", &self.r)?, n, n)?,
                    ma_coeff: *required("ma_coeff", &self.ma_coeff)?,
                    cross: self.cross.unwrap_or(false),
                    sensors,
                    prior_mean,
                    prior_cov,
                };
                if params.cross && n != r {
                    return Err(field_err("cross", "needs a square measurement matrix h"));
                }
                self.check_dims(params.profile(), r, self.meas_dim)?;
                Ok(wrap(MaTrackingModel::new(params).map(AnyModel::MaTracking)))
            }
            ModelKind::Custom => {
                let p = self.lags;
                let r = self.state_dim;
                let n = self.meas_dim;
                let spec = LinearGaussianSpec {
                    transition_state: matrices("transition_state", &self.transition_state, p.l2_eff(), r, r)?,
                    transition_meas: matrices("transition_meas", &self.transition_meas, p.l4, r, n)?,
                    process_cov: matrix("process_cov", required("process_cov", &self.process_cov)?, r, r)?,
                    measurement_state: matrices("measurement_state", &self.measurement_state, p.l3_eff(), n, r)?,
                    measurement_meas: matrices("measurement_meas", &self.measurement_meas, p.l1, n, n)?,
                    meas_cov: matrix("meas_cov", required("meas_cov", &self.meas_cov)?, n, n)?,
                };
                let prior = self.prior_window(r, p.prior_window())?;
                Ok(wrap(LinearGaussianModel::new("custom", p, spec, prior).map(AnyModel::Linear)))
            }
        }
    }
}
