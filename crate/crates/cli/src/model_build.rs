//! Translate the JSON model block into a concrete model specification
//! against a loaded dataset.

use brbvs_core::margins::{MonotoneSplineConfig, SmoothConfig};
use brbvs_core::{CopulaFamily, ModelSpec, PredictorSpec, SurvivalDataset, SurvivalLink};

use crate::config::{ModelConfig, PredictorConfig};
use crate::errors::AppError;

pub fn parse_copula(code: &str) -> Result<CopulaFamily, AppError> {
    CopulaFamily::parse(code)
        .ok_or_else(|| AppError::Config(format!("unknown copula {:?} (expected N, C0 or PL)", code)))
}

pub fn parse_link(code: &str) -> Result<SurvivalLink, AppError> {
    SurvivalLink::parse(code)
        .ok_or_else(|| AppError::Config(format!("unknown margin link {:?} (expected PH or PO)", code)))
}

fn column_index(ds: &SurvivalDataset, name: &str) -> Result<usize, AppError> {
    ds.covariate_names
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| AppError::Config(format!("covariate {:?} not in the dataset", name)))
}

fn build_predictor(
    cfg: &PredictorConfig,
    ds: &SurvivalDataset,
) -> Result<PredictorSpec, AppError> {
    let linear = cfg
        .linear
        .iter()
        .map(|n| column_index(ds, n))
        .collect::<Result<Vec<_>, _>>()?;
    let smooth = cfg
        .smooth
        .iter()
        .map(|n| column_index(ds, n).map(|j| (j, SmoothConfig::default())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PredictorSpec {
        intercept: true,
        baseline: cfg.baseline.then(MonotoneSplineConfig::default),
        linear_terms: linear,
        smooth_terms: smooth,
    })
}

pub fn build_model_spec(
    model: &ModelConfig,
    ds: &SurvivalDataset,
) -> Result<ModelSpec, AppError> {
    let eta3 = match &model.eta3 {
        Some(cfg) => {
            if cfg.baseline {
                return Err(AppError::Config(
                    "eta3 cannot contain a baseline smooth of time".into(),
                ));
            }
            build_predictor(cfg, ds)?
        }
        None => PredictorSpec::intercept_only(),
    };
    Ok(ModelSpec {
        copula: parse_copula(&model.copula)?,
        links: (parse_link(&model.margins[0])?, parse_link(&model.margins[1])?),
        eta1: build_predictor(&model.eta1, ds)?,
        eta2: build_predictor(&model.eta2, ds)?,
        eta3,
    })
}
