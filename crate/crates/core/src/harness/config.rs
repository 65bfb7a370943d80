use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accounting::Algorithm;
use crate::data::{apply_scaler, fit_scaler, load_csv, load_csv_with_classes, synth_generate, Dataset, SyntheticSpec};
use crate::dm2a::Dm2aConfig;
use crate::error::{Error, Result};
use crate::fl::TrainHyper;
use crate::partition::PartitionSpec;

/// Environment variable that overrides `experiment.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "CLAD_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    pub data: DataSection,
    pub partition: PartitionSpec,
    #[serde(default)]
    pub train: TrainHyper,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub algorithms: Vec<Algorithm>,
    pub k: usize,
    pub seeds: Vec<u64>,
    /// Defaults to `results/<name>`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Input width and class count come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub encoder_widths: Vec<usize>,
    /// Defaults to half the latent width.
    #[serde(default)]
    pub classifier_hidden: Option<usize>,
    #[serde(default)]
    pub dropout_p: Option<f64>,
    /// Loss mix for labeled clients.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Per-client loss mix; ignored for clients that end up unlabeled.
    #[serde(default)]
    pub client_alpha: Vec<ClientAlpha>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientAlpha {
    pub client: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSection {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    /// One file per device type; relative paths resolve against the config file.
    pub devices: Vec<PathBuf>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default = "default_benign_label")]
    pub benign_label: String,
    /// Per-device min-max scaling.
    #[serde(default = "default_true")]
    pub scale: bool,
}

fn default_label_column() -> String {
    "label".into()
}

fn default_benign_label() -> String {
    "benign".into()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    BenignFraction,
    DirichletBeta,
    UnlabeledFraction,
    SamplesPerClient,
    ClientsPerDevice,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::BenignFraction => "benign_fraction",
            SweepAxis::DirichletBeta => "dirichlet_beta",
            SweepAxis::UnlabeledFraction => "unlabeled_fraction",
            SweepAxis::SamplesPerClient => "samples_per_client",
            SweepAxis::ClientsPerDevice => "clients_per_device",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, SweepAxis::SamplesPerClient | SweepAxis::ClientsPerDevice)
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &PartitionSpec, value: f64) -> Result<PartitionSpec> {
        let field = format!("sweep.values ({})", self.name());
        if self.is_count() && !(value >= 1.0 && value.fract() == 0.0) {
            return Err(Error::field(field, format!("{value} is not a positive integer")));
        }
        let mut spec = base.clone();
        match self {
            SweepAxis::BenignFraction => spec.benign_fraction = value,
            SweepAxis::DirichletBeta => spec.dirichlet_beta = Some(value),
            SweepAxis::UnlabeledFraction => spec.unlabeled_fraction = value,
            SweepAxis::SamplesPerClient => spec.samples_per_client = value as usize,
            SweepAxis::ClientsPerDevice => spec.clients_per_device = value as usize,
        }
        spec.validate().map_err(|e| Error::field(field, e.to_string()))?;
        Ok(spec)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Device datasets after loading and scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub devices: Vec<Dataset>,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| Error::Toml {
            path: origin.to_path_buf(),
            source,
        })
    }

    /// Parses the file and makes relative CSV paths absolute against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text, path)?;
        if let DataSection::Csv(csv) = &mut config.data {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in &mut csv.devices {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Field-level checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.name.is_empty() || !e.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(Error::field(
                "experiment.name",
                "must be non-empty and use only [A-Za-z0-9._-]",
            ));
        }
        if e.algorithms.is_empty() {
            return Err(Error::field(
                "experiment.algorithms",
                "must list at least one algorithm",
            ));
        }
        let unique: BTreeSet<&str> = e.algorithms.iter().map(|a| a.name()).collect();
        if unique.len() != e.algorithms.len() {
            return Err(Error::field("experiment.algorithms", "contains duplicates"));
        }
        if e.k == 0 {
            return Err(Error::field("experiment.k", "must be at least 1"));
        }
        if e.seeds.is_empty() {
            return Err(Error::field("experiment.seeds", "must not be empty"));
        }
        if e.seeds.iter().collect::<BTreeSet<_>>().len() != e.seeds.len() {
            return Err(Error::field("experiment.seeds", "contains duplicates"));
        }
        match &self.data {
            DataSection::Synthetic(s) => s.validate()?,
            DataSection::Csv(c) => {
                if c.devices.is_empty() {
                    return Err(Error::field("data.devices", "must list at least one CSV file"));
                }
            }
        }
        self.partition.validate()?;
        self.train.validate()?;
        if let Some(a) = self.model.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::field("model.alpha", "must be in [0, 1]"));
            }
        }
        for o in &self.model.client_alpha {
            if !(0.0..=1.0).contains(&o.alpha) {
                return Err(Error::field(
                    "model.client_alpha",
                    format!("client {}: alpha must be in [0, 1]", o.client),
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::field("sweep.values", "must not be empty"));
            }
            for &v in &sweep.values {
                sweep.axis.apply(&self.partition, v)?;
            }
        }
        Ok(())
    }

    /// Sweep points as `(axis, value)`; a single unnamed point without a sweep.
    pub fn sweep_points(&self) -> Vec<Option<(SweepAxis, f64)>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some((s.axis, v))).collect(),
            None => vec![None],
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(dir);
        }
        self.experiment
            .output_dir
            .clone()
            .unwrap_or_else(|| Path::new("results").join(&self.experiment.name))
    }

    /// Device datasets for one run seed. Synthetic data is regenerated from
    /// the run seed; CSV data does not depend on it.
    pub fn load_devices(&self, seed: u64) -> Result<LoadedData> {
        let devices = match &self.data {
            DataSection::Synthetic(s) => synth_generate(&SyntheticSpec { seed, ..s.clone() })?,
            DataSection::Csv(c) => load_csv_devices(c)?,
        };
        let first = devices.first().ok_or(Error::Empty("device list"))?;
        Ok(LoadedData {
            feature_dim: first.feature_dim,
            num_classes: first.class_count,
            devices,
        })
    }

    pub fn model_config(&self, data: &LoadedData) -> Result<Dm2aConfig> {
        let mut m = Dm2aConfig::new(data.feature_dim, self.model.encoder_widths.clone(), data.num_classes);
        if let Some(h) = self.model.classifier_hidden {
            m.classifier_hidden = h;
        }
        if let Some(p) = self.model.dropout_p {
            m.dropout_p = p;
        }
        if let Some(a) = self.model.alpha {
            m.alpha_default = a;
        }
        m.validate()?;
        Ok(m)
    }
}

/// Loads every device with one shared label encoding: benign first, then
/// the union of attack labels in sorted order.
fn load_csv_devices(src: &CsvSource) -> Result<Vec<Dataset>> {
    let mut classes: BTreeSet<String> = BTreeSet::new();
    let mut features: Option<Vec<String>> = None;
    for path in &src.devices {
        let ds = load_csv(path, &src.label_column, &src.benign_label)?;
        match &features {
            None => features = Some(ds.feature_names.clone()),
            Some(f) if *f != ds.feature_names => {
                return Err(Error::Config(format!(
                    "{} has a different feature header",
                    path.display()
                )));
            }
            Some(_) => {}
        }
        classes.extend(ds.class_names.into_iter().skip(1));
    }
    classes.remove(&src.benign_label);
    let mut names = vec![src.benign_label.clone()];
    names.extend(classes);
    src.devices
        .iter()
        .map(|path| {
            let ds = load_csv_with_classes(path, &src.label_column, &names)?;
            if src.scale {
                apply_scaler(&ds, &fit_scaler(&ds)?)
            } else {
                Ok(ds)
            }
        })
        .collect()
}
