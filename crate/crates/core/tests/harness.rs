use std::fs;
use std::path::Path;

use clad_core::accounting::Budget;
use clad_core::harness::{report, run_into, ExperimentConfig, METADATA_FILE, ROWS_DIR, RUNS_FILE, SUMMARY_FILE};

const CONFIG: &str = r#"
[experiment]
name = "tiny"
algorithms = ["clad", "fedavg", "local"]
k = 2
seeds = [0, 1, 2]

[model]
encoder_widths = [8, 4]

[data]
source = "synthetic"
num_clusters = 2
feature_dim = 8
attack_classes = 2
cluster_separation = 0.5
intra_noise = 0.02
attack_shift = 0.3
benign_per_device = 300
attack_per_class = 150
seed = 0

[partition]
clients_per_device = 2
samples_per_client = 60
benign_fraction = 0.5

[train]
max_rounds = 3
local_epochs = 1

[sweep]
axis = "benign_fraction"
values = [0.2, 0.5]
"#;

fn config() -> ExperimentConfig {
    ExperimentConfig::from_toml(CONFIG, Path::new("tiny.toml")).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join(ROWS_DIR)] {
        for entry in fs::read_dir(&sub).unwrap() {
            let p = entry.unwrap().path();
            if p.is_file() && p.file_name().unwrap() != METADATA_FILE {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_writes_one_file_per_run_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = run_into(&config(), a.path()).unwrap();
    assert_eq!(out.runs.len(), 2 * 3 * 3);
    run_into(&config(), b.path()).unwrap();

    let fa = files(a.path());
    assert_eq!(fa.iter().filter(|(n, _)| n.starts_with(ROWS_DIR)).count(), 18);
    assert!(fa.iter().any(|(n, _)| n == RUNS_FILE));
    assert!(fa.iter().any(|(n, _)| n == SUMMARY_FILE));
    assert_eq!(fa, files(b.path()));
    assert!(a.path().join(METADATA_FILE).exists());
}

#[test]
fn rows_are_contiguous_and_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(&config(), dir.path()).unwrap();
    for rec in &out.runs {
        let mut reader = csv::Reader::from_path(dir.path().join(&rec.rows_file)).unwrap();
        let rows: Vec<clad_core::harness::ResultRow> = reader.deserialize().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 4);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.round, i);
            assert_eq!(r.run_id, rec.run_id);
            for v in [r.cls_f1, r.cls_acc, r.ad_f1, r.purity].into_iter().flatten() {
                assert!((0.0..=1.0).contains(&v));
            }
            if let Some(m) = r.mcc {
                assert!((-1.0..=1.0).contains(&m));
            }
        }
        assert!(rows
            .windows(2)
            .all(|w| w[0].bytes <= w[1].bytes && w[0].flops <= w[1].flops));
    }
}

#[test]
fn summary_has_three_seed_groups() {
    let dir = tempfile::tempdir().unwrap();
    run_into(&config(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().clone();
    let seeds = header.iter().position(|h| h == "seeds").unwrap();
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| &r[seeds] == "3"));
}

#[test]
fn report_emits_curves_and_budget_tables() {
    let dir = tempfile::tempdir().unwrap();
    run_into(&config(), dir.path()).unwrap();
    let budgets: Vec<Budget> = vec!["0.01MB".parse().unwrap(), "1MB".parse().unwrap()];
    let out = report(dir.path(), &budgets).unwrap();
    assert!(out.has_gain);
    for name in ["curve_round.csv", "curve_bytes.csv", "curve_flops.csv", "budgets.csv"] {
        assert!(out.files.iter().any(|f| f.ends_with(name)), "{name}");
    }
    let table = fs::read_to_string(dir.path().join("report/budgets.csv")).unwrap();
    assert!(table.lines().next().unwrap().ends_with("gain_pct"));
    assert!(table.contains("0.01MB") && table.contains("1MB"));
}

#[test]
fn invalid_config_names_the_field() {
    let bad = CONFIG.replace("k = 2", "k = 0");
    let cfg = ExperimentConfig::from_toml(&bad, Path::new("bad.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_into(&cfg, dir.path()).unwrap_err().to_string();
    assert!(err.contains("experiment.k"), "{err}");
}

#[test]
fn client_alpha_overrides_apply_to_labeled_clients() {
    let text = CONFIG.replace(
        "encoder_widths = [8, 4]",
        "encoder_widths = [8, 4]\nclient_alpha = [{ client = 1, alpha = 0.5 }]",
    );
    let cfg = ExperimentConfig::from_toml(&text, Path::new("alpha.toml")).unwrap();
    cfg.validate().unwrap();
    let (_, clients) = clad_core::harness::build_clients(&cfg, None, 0).unwrap();
    assert_eq!(clients[1].alpha, 0.5);
    assert_eq!(clients[0].alpha, 0.8);

    let missing = text.replace("client = 1", "client = 99");
    let cfg = ExperimentConfig::from_toml(&missing, Path::new("alpha.toml")).unwrap();
    let err = clad_core::harness::build_clients(&cfg, None, 0).unwrap_err().to_string();
    assert!(err.contains("model.client_alpha"), "{err}");
}
