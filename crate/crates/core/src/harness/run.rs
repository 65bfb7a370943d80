use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SweepAxis};
use crate::accounting::{Algorithm, BYTES_PER_MB, FLOPS_PER_GFLOP};
use crate::error::{Error, Result};
use crate::fl::{run_experiment, ExperimentResult, ExperimentSpec, RoundLog};
use crate::partition::{partition_devices, ClientDataset, PartitionSpec};

pub const ROWS_DIR: &str = "rows";
pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_COPY: &str = "config.toml";
pub const METADATA_FILE: &str = "metadata.json";

/// One round of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub sweep_axis: String,
    pub sweep_value: Option<f64>,
    pub seed: u64,
    pub round: usize,
    pub stabilized: bool,
    /// Mean cumulative bytes per client.
    pub bytes: f64,
    /// Mean cumulative FLOPs per client.
    pub flops: f64,
    pub cls_f1: Option<f64>,
    pub cls_acc: Option<f64>,
    pub ad_f1: Option<f64>,
    pub mcc: Option<f64>,
    pub purity: Option<f64>,
    pub cls_f1_all: Option<f64>,
    pub ad_f1_classifier: Option<f64>,
    pub ad_f1_threshold: Option<f64>,
}

/// One line of the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub sweep_axis: String,
    pub sweep_value: Option<f64>,
    pub seed: u64,
    pub rounds: usize,
    pub clients: usize,
    /// Training samples summed over clients (unlabeled clients keep only benign ones).
    pub train_samples: usize,
    pub stabilized_at: Option<usize>,
    pub rows_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SummaryRow {
    algorithm: Algorithm,
    sweep_axis: String,
    sweep_value: Option<f64>,
    seeds: usize,
    metric: &'static str,
    n: usize,
    mean: Option<f64>,
    std: Option<f64>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    name: &'a str,
    version: &'static str,
    started_unix: u64,
    finished_unix: u64,
    runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub runs: Vec<RunRecord>,
}

pub fn run_id(algorithm: Algorithm, point: Option<(SweepAxis, f64)>, seed: u64) -> String {
    match point {
        Some((axis, v)) => format!("{}__{}={}__seed{}", algorithm.name(), axis.name(), v, seed),
        None => format!("{}__seed{}", algorithm.name(), seed),
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn result_rows(
    id: &str,
    algorithm: Algorithm,
    point: Option<(SweepAxis, f64)>,
    seed: u64,
    logs: &[RoundLog],
) -> Vec<ResultRow> {
    logs.iter()
        .map(|l| ResultRow {
            run_id: id.to_string(),
            algorithm,
            sweep_axis: point.map_or_else(String::new, |(a, _)| a.name().to_string()),
            sweep_value: point.map(|(_, v)| v),
            seed,
            round: l.round,
            stabilized: l.stabilized,
            bytes: l.bytes,
            flops: l.flops,
            cls_f1: l.cls_f1,
            cls_acc: l.cls_acc,
            ad_f1: l.ad_f1,
            mcc: l.mcc,
            purity: l.purity,
            cls_f1_all: l.cls_f1_all,
            ad_f1_classifier: l.ad_f1_classifier,
            ad_f1_threshold: l.ad_f1_threshold,
        })
        .collect()
}

/// Clients for one (sweep point, seed). The run seed replaces the data and
/// partition seeds of the config.
pub fn build_clients(
    config: &ExperimentConfig,
    point: Option<(SweepAxis, f64)>,
    seed: u64,
) -> Result<(ExperimentSpec, Vec<ClientDataset>)> {
    let data = config.load_devices(seed)?;
    let model = config.model_config(&data)?;
    let base = PartitionSpec {
        seed,
        ..config.partition.clone()
    };
    let part = match point {
        Some((axis, v)) => axis.apply(&base, v)?,
        None => base,
    };
    let mut clients = partition_devices(&data.devices, &part, model.alpha_default)?;
    for o in &config.model.client_alpha {
        match clients.iter_mut().find(|c| c.client_id == o.client) {
            Some(c) if c.labeled => c.alpha = o.alpha,
            Some(_) => log::warn!(
                "client {} is unlabeled under seed {seed}; alpha override ignored",
                o.client
            ),
            None => return Err(Error::field("model.client_alpha", format!("no client {}", o.client))),
        }
    }
    let spec = ExperimentSpec {
        algorithm: Algorithm::Clad,
        model,
        hyper: config.train.clone(),
        k: config.experiment.k,
        seed,
    };
    Ok((spec, clients))
}

/// Sample mean and standard deviation (`n − 1`); the deviation is `None` for one value.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some(var.sqrt()))
}

type GroupKey = (usize, Option<u64>);
type SummaryMetric = (&'static str, fn(&RunRecord, &ResultRow) -> Option<f64>);

fn summarize(config: &ExperimentConfig, runs: &[(RunRecord, Vec<ResultRow>)]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&(RunRecord, Vec<ResultRow>)>> = BTreeMap::new();
    for r in runs {
        let alg = config
            .experiment
            .algorithms
            .iter()
            .position(|a| *a == r.0.algorithm)
            .unwrap_or(0);
        groups
            .entry((alg, r.0.sweep_value.map(f64::to_bits)))
            .or_default()
            .push(r);
    }
    // Sweep values in config order, then algorithms in config order.
    let value_order: Vec<Option<u64>> = config
        .sweep_points()
        .iter()
        .map(|p| p.map(|(_, v)| v.to_bits()))
        .collect();
    let mut keys: Vec<GroupKey> = groups.keys().copied().collect();
    keys.sort_by_key(|(alg, v)| (value_order.iter().position(|x| x == v).unwrap_or(usize::MAX), *alg));

    let metrics: [SummaryMetric; 11] = [
        ("cls_f1", |_, r| r.cls_f1),
        ("cls_acc", |_, r| r.cls_acc),
        ("ad_f1", |_, r| r.ad_f1),
        ("mcc", |_, r| r.mcc),
        ("purity", |_, r| r.purity),
        ("cls_f1_all", |_, r| r.cls_f1_all),
        ("ad_f1_classifier", |_, r| r.ad_f1_classifier),
        ("ad_f1_threshold", |_, r| r.ad_f1_threshold),
        ("mb_per_client", |_, r| Some(r.bytes / BYTES_PER_MB)),
        ("gflop_per_client", |_, r| Some(r.flops / FLOPS_PER_GFLOP)),
        ("stabilized_at", |rec, _| rec.stabilized_at.map(|s| s as f64)),
    ];
    let mut out = Vec::new();
    for key in keys {
        let members = &groups[&key];
        let head = &members[0].0;
        for (name, get) in metrics {
            let values: Vec<f64> = members
                .iter()
                .filter_map(|(rec, rows)| rows.last().and_then(|last| get(rec, last)))
                .collect();
            let (mean, std) = mean_std(&values);
            out.push(SummaryRow {
                algorithm: head.algorithm,
                sweep_axis: head.sweep_axis.clone(),
                sweep_value: head.sweep_value,
                seeds: members.len(),
                metric: name,
                n: values.len(),
                mean,
                std,
            });
        }
    }
    out
}

/// Executes every (sweep point × seed × algorithm) run and writes the
/// result files under the output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    run_into(config, &config.output_dir())
}

pub fn run_into(config: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    let started = unix_now();
    let rows_dir = dir.join(ROWS_DIR);
    std::fs::create_dir_all(&rows_dir)?;

    let mut groups = Vec::new();
    for point in config.sweep_points() {
        for &seed in &config.experiment.seeds {
            groups.push((point, seed));
        }
    }
    let populations: Vec<(ExperimentSpec, Vec<ClientDataset>)> = groups
        .par_iter()
        .map(|&(point, seed)| build_clients(config, point, seed))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, Algorithm)> = (0..groups.len())
        .flat_map(|g| config.experiment.algorithms.iter().map(move |&a| (g, a)))
        .collect();
    let results: Vec<(RunRecord, Vec<ResultRow>)> = jobs
        .par_iter()
        .map(|&(g, algorithm)| -> Result<(RunRecord, Vec<ResultRow>)> {
            let (point, seed) = groups[g];
            let (base, clients) = &populations[g];
            let spec = ExperimentSpec {
                algorithm,
                ..base.clone()
            };
            let id = run_id(algorithm, point, seed);
            log::info!("run {id}: {} clients, {} rounds", clients.len(), spec.hyper.max_rounds);
            let result: ExperimentResult = run_experiment(&spec, clients)?;
            let rows = result_rows(&id, algorithm, point, seed, &result.logs);
            let file = format!("{id}.csv");
            write_atomic(&rows_dir.join(&file), &csv_bytes(&rows)?)?;
            let record = RunRecord {
                run_id: id,
                algorithm,
                sweep_axis: point.map_or_else(String::new, |(a, _)| a.name().to_string()),
                sweep_value: point.map(|(_, v)| v),
                seed,
                rounds: spec.hyper.max_rounds,
                clients: clients.len(),
                train_samples: clients.iter().map(|c| c.train.len()).sum(),
                stabilized_at: result.stabilized_at,
                rows_file: format!("{ROWS_DIR}/{file}"),
            };
            Ok((record, rows))
        })
        .collect::<Result<_>>()?;

    let records: Vec<RunRecord> = results.iter().map(|(r, _)| r.clone()).collect();
    write_atomic(&dir.join(RUNS_FILE), &csv_bytes(&records)?)?;
    write_atomic(&dir.join(SUMMARY_FILE), &csv_bytes(&summarize(config, &results))?)?;
    write_atomic(&dir.join(CONFIG_COPY), config.to_toml()?.as_bytes())?;
    let meta = Metadata {
        name: &config.experiment.name,
        version: env!("CARGO_PKG_VERSION"),
        started_unix: started,
        finished_unix: unix_now(),
        runs: records.len(),
    };
    write_atomic(&dir.join(METADATA_FILE), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        runs: records,
    })
}
