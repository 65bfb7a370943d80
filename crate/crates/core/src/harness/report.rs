use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{csv_bytes, mean_std, write_atomic, ResultRow, RunRecord, RUNS_FILE};
use crate::accounting::{relative_gain, Algorithm, Budget, BYTES_PER_MB, FLOPS_PER_GFLOP};
use crate::error::{Error, Result};

pub const REPORT_DIR: &str = "report";

type MetricFn = fn(&ResultRow) -> Option<f64>;

/// Metrics carried into curves and budget tables.
const METRICS: [(&str, MetricFn); 4] = [
    ("cls_f1", |r| r.cls_f1),
    ("ad_f1", |r| r.ad_f1),
    ("mcc", |r| r.mcc),
    ("purity", |r| r.purity),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CurveAxis {
    Round,
    Megabytes,
    Gigaflops,
}

impl CurveAxis {
    fn column(self) -> &'static str {
        match self {
            CurveAxis::Round => "round",
            CurveAxis::Megabytes => "mb_per_client",
            CurveAxis::Gigaflops => "gflop_per_client",
        }
    }

    fn of(self, r: &ResultRow) -> f64 {
        match self {
            CurveAxis::Round => r.round as f64,
            CurveAxis::Megabytes => r.bytes / BYTES_PER_MB,
            CurveAxis::Gigaflops => r.flops / FLOPS_PER_GFLOP,
        }
    }
}

/// Budget snapshot of one metric for every algorithm at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetRow {
    pub budget: String,
    pub sweep_axis: String,
    pub sweep_value: Option<f64>,
    pub metric: String,
    /// Seed-averaged value per algorithm, in manifest order.
    pub values: Vec<(Algorithm, Option<f64>)>,
    /// `(clad − best baseline) / best baseline`, present only with CLAD and a
    /// baseline. Local is not a baseline under a byte budget, which never
    /// binds it.
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub files: Vec<PathBuf>,
    pub budgets: Vec<BudgetRow>,
    pub has_gain: bool,
}

struct Run {
    record: RunRecord,
    rows: Vec<ResultRow>,
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

fn load_runs(dir: &Path) -> Result<Vec<Run>> {
    let records: Vec<RunRecord> = read_csv(&dir.join(RUNS_FILE))?;
    if records.is_empty() {
        return Err(Error::Empty("run manifest"));
    }
    records
        .into_iter()
        .map(|record| {
            let rows: Vec<ResultRow> = read_csv(&dir.join(&record.rows_file))?;
            if rows.is_empty() {
                return Err(Error::NoRows(dir.join(&record.rows_file)));
            }
            if rows.iter().enumerate().any(|(i, r)| r.round != i) {
                return Err(Error::Config(format!(
                    "{}: rounds are not contiguous from 0",
                    record.rows_file
                )));
            }
            Ok(Run { record, rows })
        })
        .collect()
}

type Grouped<'a> = (Vec<Option<f64>>, Vec<Algorithm>, BTreeMap<(usize, usize), Vec<&'a Run>>);

/// Runs grouped by (sweep value, algorithm), both in manifest order.
fn group(runs: &[Run]) -> Grouped<'_> {
    let mut values: Vec<Option<f64>> = Vec::new();
    let mut algs: Vec<Algorithm> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<&Run>> = BTreeMap::new();
    for run in runs {
        let v = run.record.sweep_value;
        let vi = values
            .iter()
            .position(|x| x.map(f64::to_bits) == v.map(f64::to_bits))
            .unwrap_or_else(|| {
                values.push(v);
                values.len() - 1
            });
        let ai = algs.iter().position(|a| *a == run.record.algorithm).unwrap_or_else(|| {
            algs.push(run.record.algorithm);
            algs.len() - 1
        });
        groups.entry((vi, ai)).or_default().push(run);
    }
    (values, algs, groups)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn curve_file(runs: &[Run], axis: CurveAxis) -> Result<Vec<u8>> {
    let (values, algs, groups) = group(runs);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "algorithm".to_string(),
        "sweep_axis".into(),
        "sweep_value".into(),
        axis.column().into(),
    ];
    header.push("seeds".into());
    for (m, _) in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for (&(vi, ai), members) in &groups {
        let rounds = members.iter().map(|r| r.rows.len()).min().unwrap_or(0);
        for round in 0..rounds {
            let at: Vec<&ResultRow> = members.iter().map(|r| &r.rows[round]).collect();
            let xs: Vec<f64> = at.iter().map(|r| axis.of(r)).collect();
            let mut record = vec![
                algs[ai].name().to_string(),
                members[0].record.sweep_axis.clone(),
                opt(values[vi]),
                opt(mean_std(&xs).0),
                members.len().to_string(),
            ];
            for (_, get) in METRICS {
                let vals: Vec<f64> = at.iter().filter_map(|r| get(r)).collect();
                let (mean, std) = mean_std(&vals);
                record.push(opt(mean));
                record.push(opt(std));
            }
            w.write_record(&record)?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Last row whose mean per-client cost is within budget; row 0 if none is.
fn row_at_budget(rows: &[ResultRow], budget: Budget) -> &ResultRow {
    let i = rows.iter().rposition(|r| budget.admits(r.bytes, r.flops)).unwrap_or(0);
    &rows[i]
}

fn budget_rows(runs: &[Run], budgets: &[Budget]) -> (Vec<BudgetRow>, bool) {
    let (values, algs, groups) = group(runs);
    let clad = algs.iter().position(|a| *a == Algorithm::Clad);
    let has_gain = clad.is_some() && algs.len() > 1;
    let mut out = Vec::new();
    for &budget in budgets {
        for (vi, &value) in values.iter().enumerate() {
            for (m, get) in METRICS {
                let mut cells = Vec::with_capacity(algs.len());
                let mut axis = String::new();
                for (ai, &alg) in algs.iter().enumerate() {
                    let cell = groups.get(&(vi, ai)).and_then(|members| {
                        axis = members[0].record.sweep_axis.clone();
                        let vals: Vec<f64> = members
                            .iter()
                            .filter_map(|r| get(row_at_budget(&r.rows, budget)))
                            .collect();
                        mean_std(&vals).0
                    });
                    cells.push((alg, cell));
                }
                if cells.iter().all(|(_, c)| c.is_none()) {
                    continue;
                }
                let gain = clad.filter(|_| has_gain && m != "purity").and_then(|ci| {
                    let ours = cells[ci].1?;
                    let best = cells
                        .iter()
                        .enumerate()
                        .filter(|(i, (a, _))| {
                            *i != ci && !(*a == Algorithm::Local && matches!(budget, Budget::Bytes(_)))
                        })
                        .filter_map(|(_, (_, c))| *c)
                        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))?;
                    relative_gain(ours, best)
                });
                out.push(BudgetRow {
                    budget: budget.to_string(),
                    sweep_axis: axis,
                    sweep_value: value,
                    metric: m.to_string(),
                    values: cells,
                    gain,
                });
            }
        }
    }
    (out, has_gain)
}

fn budget_file(rows: &[BudgetRow], has_gain: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "budget".to_string(),
        "sweep_axis".into(),
        "sweep_value".into(),
        "metric".into(),
    ];
    if let Some(first) = rows.first() {
        header.extend(first.values.iter().map(|(a, _)| a.name().to_string()));
    }
    if has_gain {
        header.push("gain_pct".into());
    }
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![
            r.budget.clone(),
            r.sweep_axis.clone(),
            opt(r.sweep_value),
            r.metric.clone(),
        ];
        record.extend(r.values.iter().map(|(_, v)| opt(*v)));
        if has_gain {
            record.push(opt(r.gain.map(|g| 100.0 * g)));
        }
        w.write_record(&record)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Serialize)]
struct FinalRow<'a> {
    run_id: &'a str,
    algorithm: Algorithm,
    seed: u64,
    round: usize,
    cls_f1: Option<f64>,
    ad_f1: Option<f64>,
    mcc: Option<f64>,
    purity: Option<f64>,
}

/// Reads a results directory and writes curve and budget files into its
/// `report/` subdirectory.
pub fn report(dir: &Path, budgets: &[Budget]) -> Result<ReportOutput> {
    let runs = load_runs(dir)?;
    let out_dir = dir.join(REPORT_DIR);
    std::fs::create_dir_all(&out_dir)?;
    let mut files = Vec::new();
    for (name, axis) in [
        ("curve_round.csv", CurveAxis::Round),
        ("curve_bytes.csv", CurveAxis::Megabytes),
        ("curve_flops.csv", CurveAxis::Gigaflops),
    ] {
        let path = out_dir.join(name);
        write_atomic(&path, &curve_file(&runs, axis)?)?;
        files.push(path);
    }
    let finals: Vec<FinalRow> = runs
        .iter()
        .map(|r| {
            let last = r.rows.last().expect("non-empty rows");
            FinalRow {
                run_id: &r.record.run_id,
                algorithm: r.record.algorithm,
                seed: r.record.seed,
                round: last.round,
                cls_f1: last.cls_f1,
                ad_f1: last.ad_f1,
                mcc: last.mcc,
                purity: last.purity,
            }
        })
        .collect();
    let path = out_dir.join("final.csv");
    write_atomic(&path, &csv_bytes(&finals)?)?;
    files.push(path);

    let (rows, has_gain) = budget_rows(&runs, budgets);
    if !budgets.is_empty() {
        let path = out_dir.join("budgets.csv");
        write_atomic(&path, &budget_file(&rows, has_gain)?)?;
        files.push(path);
    }
    Ok(ReportOutput {
        files,
        budgets: rows,
        has_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: Algorithm, round: usize, mb: f64, f1: f64) -> ResultRow {
        ResultRow {
            run_id: alg.name().into(),
            algorithm: alg,
            sweep_axis: String::new(),
            sweep_value: None,
            seed: 0,
            round,
            stabilized: false,
            bytes: mb * BYTES_PER_MB,
            flops: 0.0,
            cls_f1: Some(f1),
            cls_acc: None,
            ad_f1: None,
            mcc: None,
            purity: None,
            cls_f1_all: None,
            ad_f1_classifier: None,
            ad_f1_threshold: None,
        }
    }

    fn run(alg: Algorithm, f1s: &[f64]) -> Run {
        Run {
            record: RunRecord {
                run_id: alg.name().into(),
                algorithm: alg,
                sweep_axis: String::new(),
                sweep_value: None,
                seed: 0,
                rounds: f1s.len() - 1,
                clients: 1,
                train_samples: 1,
                stabilized_at: None,
                rows_file: String::new(),
            },
            rows: f1s.iter().enumerate().map(|(i, &f)| row(alg, i, i as f64, f)).collect(),
        }
    }

    #[test]
    fn gain_against_best_baseline() {
        let runs = vec![
            run(Algorithm::Clad, &[0.1, 0.4, 0.656]),
            run(Algorithm::FedAvg, &[0.1, 0.3, 0.5]),
            run(Algorithm::Ifca, &[0.1, 0.2, 0.524]),
        ];
        let (rows, has_gain) = budget_rows(&runs, &["2MB".parse().unwrap()]);
        assert!(has_gain);
        let f1 = rows.iter().find(|r| r.metric == "cls_f1").unwrap();
        let gain = f1.gain.unwrap();
        assert!((gain - (0.656 - 0.524) / 0.524).abs() < 1e-12);
        assert_eq!(format!("{:+.1}%", 100.0 * gain), "+25.2%");
    }

    #[test]
    fn local_is_no_baseline_under_byte_budgets() {
        let runs = vec![
            run(Algorithm::Clad, &[0.1, 0.5]),
            run(Algorithm::FedAvg, &[0.1, 0.4]),
            run(Algorithm::Local, &[0.9, 0.9]),
        ];
        let (rows, _) = budget_rows(&runs, &["5MB".parse().unwrap()]);
        let f1 = rows.iter().find(|r| r.metric == "cls_f1").unwrap();
        assert!((f1.gain.unwrap() - 0.25).abs() < 1e-12);
        let purity = rows.iter().find(|r| r.metric == "purity");
        assert!(purity.is_none_or(|r| r.gain.is_none()));
    }

    #[test]
    fn budget_picks_last_affordable_round() {
        let runs = vec![run(Algorithm::Clad, &[0.1, 0.4, 0.9])];
        let (rows, has_gain) = budget_rows(&runs, &["1.5MB".parse().unwrap()]);
        assert!(!has_gain);
        assert_eq!(rows[0].values[0].1, Some(0.4));
        assert_eq!(rows[0].gain, None);
    }

    #[test]
    fn single_algorithm_omits_gain_column() {
        let runs = vec![run(Algorithm::FedAvg, &[0.1, 0.2])];
        let (rows, has_gain) = budget_rows(&runs, &["13MB".parse().unwrap(), "26MB".parse().unwrap()]);
        let text = String::from_utf8(budget_file(&rows, has_gain).unwrap()).unwrap();
        assert!(!text.lines().next().unwrap().contains("gain"));
        assert!(text.contains("13MB") && text.contains("26MB"));
    }
}
