//! Versioned model archive.
//!
//! A model file is one JSON document tagged `"format": "fanova-gp/v1"`. It
//! carries the training data (explanations need it), the content hash of that
//! data, parameters, measures, target scaler, the packed lower Cholesky
//! factor and `alpha`. Floats are written in shortest round-trip form, so a
//! save/load cycle reproduces the model bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dataset, FitConfig, FittedModel, ModelParams, Scaler};
use crate::error::{Error, Result};
use crate::kernels::FeatureMeasure;

pub const MODEL_FORMAT: &str = "fanova-gp/v1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    dataset_hash: String,
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    config: FitConfig,
    params: ModelParams,
    measures: Vec<FeatureMeasure>,
    scaler: Scaler,
    jitter: f64,
    alpha: Vec<f64>,
    /// Row-major lower triangle, row `i` holding `i + 1` entries.
    cholesky_lower: Vec<f64>,
}

#[derive(Deserialize)]
struct FormatProbe {
    format: Option<String>,
}

fn to_file(model: &FittedModel) -> ModelFile {
    let n = model.n();
    let l = model.cholesky_lower();
    let mut packed = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            packed.push(l[(i, j)]);
        }
    }
    ModelFile {
        format: MODEL_FORMAT.to_string(),
        dataset_hash: model.data().content_hash(),
        feature_names: model.data().feature_names().to_vec(),
        rows: model.data().rows().to_vec(),
        targets: model.data().targets().to_vec(),
        config: model.config().clone(),
        params: model.params().clone(),
        measures: model
            .kernel()
            .components()
            .iter()
            .map(|k| k.measure().clone())
            .collect(),
        scaler: model.scaler(),
        jitter: model.jitter(),
        alpha: model.alpha().iter().copied().collect(),
        cholesky_lower: packed,
    }
}

/// Serializes a model to its JSON archive.
pub fn model_to_json(model: &FittedModel) -> Result<String> {
    Ok(serde_json::to_string(&to_file(model))?)
}

/// Parses a model archive, refusing other format tags.
pub fn model_from_json(text: &str) -> Result<FittedModel> {
    let probe: FormatProbe = serde_json::from_str(text)?;
    match probe.format.as_deref() {
        Some(MODEL_FORMAT) => {}
        other => {
            return Err(Error::FormatMismatch {
                expected: MODEL_FORMAT.into(),
                found: other.unwrap_or("<missing>").into(),
            })
        }
    }
    let file: ModelFile = serde_json::from_str(text)?;
    let data = Dataset::new(file.rows, file.targets, file.feature_names)?;
    let hash = data.content_hash();
    if hash != file.dataset_hash {
        return Err(Error::FormatMismatch {
            expected: file.dataset_hash,
            found: hash,
        });
    }
    let n = data.n();
    if file.alpha.len() != n || file.cholesky_lower.len() != n * (n + 1) / 2 {
        return Err(Error::InvalidInput(
            "model arrays do not match the training data size".into(),
        ));
    }
    let mut lower = DMatrix::zeros(n, n);
    let mut it = file.cholesky_lower.into_iter();
    for i in 0..n {
        for j in 0..=i {
            lower[(i, j)] = it.next().expect("length checked");
        }
    }
    if lower.diagonal().iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::InvalidInput(
            "stored Cholesky factor is not positive definite".into(),
        ));
    }
    FittedModel::from_parts(
        data,
        file.params,
        file.config,
        &file.measures,
        file.scaler,
        file.jitter,
        lower,
        DVector::from_vec(file.alpha),
    )
}

pub fn save_model(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel> {
    model_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::OrderVariances;

    fn model() -> FittedModel {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let y = rows.iter().map(|r| r[0] - 2.0 * r[1]).collect();
        let data = Dataset::unnamed(rows, y).unwrap();
        let params = ModelParams::new(vec![0.7, 1.3], OrderVariances::new(vec![0.2, 0.5, 0.1]).unwrap(), 0.03).unwrap();
        FittedModel::fit_params(&data, &params, &FitConfig::default()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let text = model_to_json(&m).unwrap();
        let back = model_from_json(&text).unwrap();
        assert_eq!(back.alpha(), m.alpha());
        assert_eq!(back.cholesky_lower(), m.cholesky_lower());
        let x = [0.2, -0.4];
        assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        assert_eq!(model_to_json(&back).unwrap(), text);
    }

    #[test]
    fn wrong_version_is_refused() {
        let text = model_to_json(&model()).unwrap().replace(MODEL_FORMAT, "fanova-gp/v0");
        assert!(matches!(model_from_json(&text), Err(Error::FormatMismatch { .. })));
        assert!(matches!(model_from_json("{}"), Err(Error::FormatMismatch { .. })));
    }

    #[test]
    fn tampered_data_is_refused() {
        let m = model();
        let mut v: serde_json::Value = serde_json::from_str(&model_to_json(&m).unwrap()).unwrap();
        v["targets"][0] = serde_json::json!(123.0);
        assert!(matches!(
            model_from_json(&v.to_string()),
            Err(Error::FormatMismatch { .. })
        ));
    }
}
