use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Per-feature min and max fitted on one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scaler(ds: &Dataset) -> Result<ScalerParams> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset for scaler fit"));
    }
    let mut min = vec![f64::INFINITY; ds.feature_dim];
    let mut max = vec![f64::NEG_INFINITY; ds.feature_dim];
    for s in &ds.samples {
        for (j, &v) in s.features.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(ScalerParams { min, max })
}

/// `(x − min)/(max − min)`; constant features map to 0.
pub fn apply_scaler(ds: &Dataset, params: &ScalerParams) -> Result<Dataset> {
    if params.min.len() != ds.feature_dim || params.max.len() != ds.feature_dim {
        return Err(Error::shape("apply_scaler", ds.feature_dim, params.min.len()));
    }
    let mut out = ds.clone();
    for s in &mut out.samples {
        for (j, v) in s.features.iter_mut().enumerate() {
            let range = params.max[j] - params.min[j];
            *v = if range > 0.0 { (*v - params.min[j]) / range } else { 0.0 };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> Dataset {
        Dataset::new(
            values
                .iter()
                .map(|&v| Sample {
                    features: vec![v],
                    label: 0,
                })
                .collect(),
            1,
            2,
        )
        .unwrap()
    }

    fn values(ds: &Dataset) -> Vec<f64> {
        ds.samples.iter().map(|s| s.features[0]).collect()
    }

    #[test]
    fn examples() {
        let ds = column(&[0.0, 5.0, 10.0]);
        let p = fit_scaler(&ds).unwrap();
        assert_eq!(values(&apply_scaler(&ds, &p).unwrap()), vec![0.0, 0.5, 1.0]);
        let ds = column(&[7.0, 7.0, 7.0]);
        let p = fit_scaler(&ds).unwrap();
        assert_eq!(values(&apply_scaler(&ds, &p).unwrap()), vec![0.0, 0.0, 0.0]);
        assert!(fit_scaler(&column(&[])).is_err());
    }

    #[test]
    fn idempotent_on_unit_range() {
        let ds = column(&[0.0, 0.3, 1.0]);
        let p = fit_scaler(&ds).unwrap();
        assert_eq!(apply_scaler(&ds, &p).unwrap(), ds);
    }

    proptest! {
        #[test]
        fn scaled_own_data_lies_in_unit_interval(v in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let ds = column(&v);
            let p = fit_scaler(&ds).unwrap();
            prop_assert!(p.min[0] <= p.max[0]);
            for x in values(&apply_scaler(&ds, &p).unwrap()) {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }
}
