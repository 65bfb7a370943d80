//! Datasets of featurized traffic, CSV ingestion, per-device scaling,
//! stratified splitting and a synthetic multi-device generator.

mod csv_io;
mod scale;
mod split;
mod synth;

use serde::{Deserialize, Serialize};

pub use csv_io::{load_csv, load_csv_with_classes, write_csv};
pub use scale::{apply_scaler, fit_scaler, ScalerParams};
pub use split::{split_train_test, stratified_split_indices};
pub use synth::{synth_generate, ShiftMode, SyntheticSpec};

use crate::dm2a::BENIGN;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub feature_dim: usize,
    pub class_count: usize,
    pub feature_names: Vec<String>,
    /// `class_names[0]` is the benign class.
    pub class_names: Vec<String>,
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

pub fn default_class_names(c: usize) -> Vec<String> {
    (0..c)
        .map(|i| {
            if i == BENIGN {
                "benign".to_string()
            } else {
                format!("attack_{i}")
            }
        })
        .collect()
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, feature_dim: usize, class_count: usize) -> Result<Self> {
        Self::with_names(
            samples,
            default_feature_names(feature_dim),
            default_class_names(class_count),
        )
    }

    pub fn with_names(samples: Vec<Sample>, feature_names: Vec<String>, class_names: Vec<String>) -> Result<Self> {
        let feature_dim = feature_names.len();
        let class_count = class_names.len();
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_dim {
                return Err(Error::shape("Dataset sample features", feature_dim, s.features.len()));
            }
            if s.label >= class_count {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    classes: class_count,
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("sample {i} has non-finite features")));
            }
        }
        Ok(Self {
            samples,
            feature_dim,
            class_count,
            feature_names,
            class_names,
        })
    }

    /// Same schema, different samples. Samples must already satisfy it.
    pub fn with_samples(&self, samples: Vec<Sample>) -> Self {
        Self {
            samples,
            feature_dim: self.feature_dim,
            class_count: self.class_count,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        self.with_samples(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }

    /// Exactly the samples labeled benign.
    pub fn benign(&self) -> Self {
        self.with_samples(self.samples.iter().filter(|s| s.label == BENIGN).cloned().collect())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.class_count];
        for s in &self.samples {
            c[s.label] += 1;
        }
        c
    }

    pub fn features(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.len() * self.feature_dim);
        for s in &self.samples {
            data.extend_from_slice(&s.features);
        }
        Matrix::from_vec(self.len(), self.feature_dim, data).expect("homogeneous features")
    }

    pub fn feature_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.feature_dim];
        if self.is_empty() {
            return mean;
        }
        for s in &self.samples {
            for (m, v) in mean.iter_mut().zip(&s.features) {
                *m += v;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}
