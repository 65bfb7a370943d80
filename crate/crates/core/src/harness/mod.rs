//! Config-driven experiment runner: sweeps over partition settings and
//! seeds, result files, and report generation from a results directory.
//!
//! Layout of a results directory:
//!
//! ```text
//! rows/<run id>.csv   one row per round
//! runs.csv            one line per run
//! summary.csv         final-round mean and sample std across seeds
//! config.toml         the effective config
//! metadata.json       timestamps (the only non-deterministic file)
//! report/             written by `report`
//! ```

mod config;
mod report;
mod run;

use std::path::Path;

pub use config::{
    ClientAlpha, CsvSource, DataSection, ExperimentConfig, ExperimentSection, LoadedData, ModelSection, SweepAxis,
    SweepSection, OUTPUT_DIR_ENV,
};
pub use report::{report, BudgetRow, ReportOutput, REPORT_DIR};
pub use run::{
    build_clients, mean_std, result_rows, run, run_id, run_into, write_atomic, ResultRow, RunOutput, RunRecord,
    CONFIG_COPY, METADATA_FILE, ROWS_DIR, RUNS_FILE, SUMMARY_FILE,
};

use crate::data::{synth_generate, write_csv, SyntheticSpec};
use crate::error::{Error, Result};

/// Parses a config and checks that its data loads and every sweep point
/// partitions. Returns the number of runs it would execute.
pub fn validate(path: impl AsRef<Path>) -> Result<usize> {
    let config = ExperimentConfig::load(path)?;
    config.validate()?;
    let seed = config.experiment.seeds[0];
    for point in config.sweep_points() {
        build_clients(&config, point, seed)?;
    }
    Ok(config.sweep_points().len() * config.experiment.seeds.len() * config.experiment.algorithms.len())
}

/// Reads a synthetic spec (a bare spec file, or a full config with a
/// synthetic data section) and writes one CSV per device type.
pub fn synth(spec_path: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let spec_path = spec_path.as_ref();
    if !spec_path.exists() {
        return Err(Error::MissingFile(spec_path.to_path_buf()));
    }
    let text = std::fs::read_to_string(spec_path)?;
    let spec: SyntheticSpec = match ExperimentConfig::from_toml(&text, spec_path) {
        Ok(ExperimentConfig {
            data: DataSection::Synthetic(s),
            ..
        }) => s,
        Ok(_) => return Err(Error::field("data.source", "synth needs a synthetic data section")),
        Err(_) => toml::from_str(&text).map_err(|source| Error::Toml {
            path: spec_path.to_path_buf(),
            source,
        })?,
    };
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let devices = synth_generate(&spec)?;
    let width = devices.len().to_string().len();
    devices
        .iter()
        .enumerate()
        .map(|(i, ds)| {
            let path = out_dir.join(format!("device_{i:0width$}.csv"));
            write_csv(ds, &path, "label")?;
            Ok(path)
        })
        .collect()
}
