//! Federated orchestration: the clustered protocol, its baselines, local
//! training and per-cluster aggregation.
//!
//! Every random stream is keyed by `(seed, stream, round, client_id)` or
//! `(seed, stream, model index)`, never by algorithm, so two algorithms that
//! make the same decisions produce bit-identical weights.

mod eval;
mod server;
mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use eval::{evaluate_client, AdPath, ClientEval};
pub use server::{
    cfl_round, check_stabilization, clad_round, fingerprint_clients, ifca_round, init_server, stabilized_round,
    RoundContext, RoundCosts, ServerState,
};
pub use train::{aggregate_cluster, local_train, training_mode, ClientUpdate, TrainOutcome};

use crate::accounting::{model_bytes, Algorithm, CostLedger, Phase};
use crate::clustering::assignment_purity;
use crate::dm2a::{Dm2aConfig, Dm2aModel};
use crate::error::{Error, Result};
use crate::metrics::average_over_clients;
use crate::partition::ClientDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub max_rounds: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub stabilization_patience: usize,
    pub kmeans_max_iter: usize,
    /// Principal components kept for weight-similarity clustering.
    pub pca_components: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            local_epochs: 5,
            batch_size: 32,
            max_rounds: 100,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            stabilization_patience: 3,
            kmeans_max_iter: 100,
            pca_components: 8,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("train.batch_size", self.batch_size),
            ("train.max_rounds", self.max_rounds),
            ("train.stabilization_patience", self.stabilization_patience),
            ("train.kmeans_max_iter", self.kmeans_max_iter),
            ("train.pca_components", self.pca_components),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::field(field, "must be positive"));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::field("train.learning_rate", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::field("train.weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

/// Per-round summary, averaged over clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub phase: Phase,
    /// Server state after this round.
    pub stabilized: bool,
    /// Cluster of each client in client order.
    pub assignment: Vec<usize>,
    /// `None` for algorithms without clusters.
    pub purity: Option<f64>,
    /// Mean cumulative bytes per client.
    pub bytes: f64,
    /// Mean cumulative FLOPs per client.
    pub flops: f64,
    /// Classification metrics over labeled clients.
    pub cls_f1: Option<f64>,
    pub cls_acc: Option<f64>,
    pub mcc: Option<f64>,
    /// Classifier macro F1 over every client.
    pub cls_f1_all: Option<f64>,
    /// AD F1 over every client, whichever path each client uses.
    pub ad_f1: Option<f64>,
    pub ad_f1_classifier: Option<f64>,
    pub ad_f1_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub algorithm: Algorithm,
    pub model: Dm2aConfig,
    pub hyper: TrainHyper,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Round 0 (initial models) through the last round.
    pub logs: Vec<RoundLog>,
    /// Cluster models, or one model per client for `Local`.
    pub models: Vec<Dm2aModel>,
    pub assignment: Vec<usize>,
    pub ledger: CostLedger,
    pub stabilized_at: Option<usize>,
    pub final_evals: Vec<ClientEval>,
}

fn validate_inputs(spec: &ExperimentSpec, clients: &[ClientDataset]) -> Result<()> {
    spec.model.validate()?;
    spec.hyper.validate()?;
    if spec.k == 0 {
        return Err(Error::field("experiment.k", "must be at least 1"));
    }
    if clients.is_empty() {
        return Err(Error::Empty("client population"));
    }
    if clients.windows(2).any(|w| w[0].client_id >= w[1].client_id) {
        return Err(Error::Config(
            "clients must be sorted by strictly increasing client_id".into(),
        ));
    }
    for c in clients {
        for ds in [&c.train, &c.test, &c.benign_val] {
            if ds.feature_dim != spec.model.input_dim {
                return Err(Error::shape(
                    "client feature width",
                    spec.model.input_dim,
                    ds.feature_dim,
                ));
            }
            if ds.class_count > spec.model.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: ds.class_count - 1,
                    classes: spec.model.num_classes,
                });
            }
        }
        if c.labeled && !(0.0..=1.0).contains(&c.alpha) || !c.labeled && c.alpha != 0.0 {
            return Err(Error::Config(format!(
                "client {} has an invalid alpha {}",
                c.client_id, c.alpha
            )));
        }
    }
    Ok(())
}

fn summarize(
    round: usize,
    phase: Phase,
    stabilized: bool,
    assignment: Vec<usize>,
    purity: Option<f64>,
    ledger: &CostLedger,
    evals: &[ClientEval],
) -> RoundLog {
    let snap = ledger.snapshots.last().copied().expect("round recorded before summary");
    let labeled: Vec<&ClientEval> = evals.iter().filter(|e| e.labeled).collect();
    let on_path =
        |p: AdPath| -> Vec<Option<f64>> { evals.iter().filter(|e| e.ad_path == p).map(|e| e.ad_f1).collect() };
    RoundLog {
        round,
        phase,
        stabilized,
        assignment,
        purity,
        bytes: snap.mean_bytes,
        flops: snap.mean_flops,
        cls_f1: average_over_clients(&labeled.iter().map(|e| e.cls_f1).collect::<Vec<_>>()),
        cls_acc: average_over_clients(&labeled.iter().map(|e| e.cls_acc).collect::<Vec<_>>()),
        mcc: average_over_clients(&labeled.iter().map(|e| e.mcc).collect::<Vec<_>>()),
        cls_f1_all: average_over_clients(&evals.iter().map(|e| e.cls_f1_any).collect::<Vec<_>>()),
        ad_f1: average_over_clients(&evals.iter().map(|e| e.ad_f1).collect::<Vec<_>>()),
        ad_f1_classifier: average_over_clients(&on_path(AdPath::Classifier)),
        ad_f1_threshold: average_over_clients(&on_path(AdPath::Threshold)),
    }
}

fn evaluate_all(models: &[&Dm2aModel], clients: &[ClientDataset], anomaly_only: bool) -> Result<Vec<ClientEval>> {
    clients
        .par_iter()
        .zip(models.par_iter())
        .map(|(c, m)| evaluate_client(m, c, anomaly_only))
        .collect()
}

/// Runs `spec.hyper.max_rounds` rounds of `spec.algorithm` with full
/// participation and evaluates every client after every round.
pub fn run_experiment(spec: &ExperimentSpec, clients: &[ClientDataset]) -> Result<ExperimentResult> {
    run_experiment_observed(spec, clients, |_, _| {})
}

/// As [`run_experiment`], calling `observer(round, models)` after round 0
/// and after every round.
pub fn run_experiment_observed(
    spec: &ExperimentSpec,
    clients: &[ClientDataset],
    mut observer: impl FnMut(usize, &[Dm2aModel]),
) -> Result<ExperimentResult> {
    validate_inputs(spec, clients)?;
    let algorithm = spec.algorithm;
    let anomaly_only = algorithm == Algorithm::CflAdStandard;
    let clustered = matches!(
        algorithm,
        Algorithm::Clad | Algorithm::Ifca | Algorithm::CflAdStandard | Algorithm::CflAdEnhanced
    );
    let k = if clustered { spec.k } else { 1 };
    let bytes = if anomaly_only {
        model_bytes(spec.model.reconstruction_param_count())
    } else {
        model_bytes(spec.model.param_count())
    };
    let ctx = RoundContext {
        clients,
        hyper: &spec.hyper,
        dropout_p: spec.model.dropout_p,
        seed: spec.seed,
        alpha_override: anomaly_only.then_some(0.0),
    };
    let truth: Vec<usize> = clients.iter().map(|c| c.device_id).collect();
    let purity_of = |a: &[usize]| clustered.then(|| assignment_purity(a, &truth));

    let mut server = init_server(&spec.model, k, spec.seed)?;
    let mut local_models: Vec<Dm2aModel> = if algorithm == Algorithm::Local {
        vec![server.models[0].clone(); clients.len()]
    } else {
        Vec::new()
    };
    let mut ledger = CostLedger::new(clients.len());
    let everyone: Vec<(usize, u64)> = (0..clients.len()).map(|i| (i, 0)).collect();
    ledger.record_round(0, algorithm, Phase::Clustering, k, bytes, &everyone)?;

    let current_models = |server: &ServerState, local: &[Dm2aModel]| -> Vec<Dm2aModel> {
        if algorithm == Algorithm::Local {
            local.to_vec()
        } else {
            server.models.clone()
        }
    };
    let model_refs = |server: &ServerState, local: &[Dm2aModel]| -> Vec<usize> {
        if algorithm == Algorithm::Local {
            (0..local.len()).collect()
        } else {
            server.cluster_of(clients)
        }
    };

    let mut logs = Vec::with_capacity(spec.hyper.max_rounds + 1);
    let assignment0 = model_refs(&server, &local_models);
    let pool = current_models(&server, &local_models);
    observer(0, &pool);
    let mut evals = evaluate_all(
        &assignment0.iter().map(|&j| &pool[j]).collect::<Vec<_>>(),
        clients,
        anomaly_only,
    )?;
    let shown0 = if algorithm == Algorithm::Local {
        vec![0; clients.len()]
    } else {
        assignment0
    };
    logs.push(summarize(
        0,
        Phase::Clustering,
        false,
        shown0.clone(),
        purity_of(&shown0),
        &ledger,
        &evals,
    ));

    let mut stabilized_at = None;
    for round in 1..=spec.hyper.max_rounds {
        let costs = match algorithm {
            Algorithm::Local => {
                let outcomes: Vec<Option<TrainOutcome>> = clients
                    .par_iter()
                    .zip(local_models.par_iter())
                    .map(|(c, m)| {
                        let seed = crate::rng::derive_seed(
                            spec.seed,
                            crate::rng::Stream::LocalTrain,
                            &[round as u64, c.client_id as u64],
                        );
                        local_train(c, m, 0, c.alpha, &spec.hyper, spec.model.dropout_p, seed)
                    })
                    .collect::<Result<_>>()?;
                for (m, o) in local_models.iter_mut().zip(&outcomes) {
                    if let Some(o) = o {
                        m.load_flat(&o.update.weights)?;
                    }
                }
                server.round += 1;
                RoundCosts {
                    flops: outcomes.iter().map(|o| o.as_ref().map_or(0, |o| o.flops)).collect(),
                    participated: outcomes.iter().map(Option::is_some).collect(),
                    clustered: false,
                }
            }
            Algorithm::FedAvg => {
                if server.assignment.is_empty() {
                    for c in clients {
                        server.assignment.insert(c.client_id, 0);
                    }
                }
                stabilized_round(&mut server, &ctx)?
            }
            Algorithm::Clad if server.stabilized => stabilized_round(&mut server, &ctx)?,
            Algorithm::Clad => clad_round(&mut server, &ctx)?,
            Algorithm::Ifca => ifca_round(&mut server, &ctx)?,
            Algorithm::CflAdStandard | Algorithm::CflAdEnhanced => cfl_round(&mut server, &ctx)?,
        };
        let phase = if costs.clustered {
            Phase::Clustering
        } else {
            Phase::Stabilized
        };
        ledger.record_round(round, algorithm, phase, k, bytes, &costs.participants())?;
        if server.stabilized && stabilized_at.is_none() {
            stabilized_at = Some(round);
        }

        let refs = model_refs(&server, &local_models);
        let pool = current_models(&server, &local_models);
        observer(round, &pool);
        evals = evaluate_all(
            &refs.iter().map(|&j| &pool[j]).collect::<Vec<_>>(),
            clients,
            anomaly_only,
        )?;
        let shown = if algorithm == Algorithm::Local {
            vec![0; clients.len()]
        } else {
            refs
        };
        logs.push(summarize(
            round,
            phase,
            server.stabilized,
            shown.clone(),
            purity_of(&shown),
            &ledger,
            &evals,
        ));
    }

    let assignment = if algorithm == Algorithm::Local {
        (0..clients.len()).collect()
    } else {
        server.cluster_of(clients)
    };
    let models = current_models(&server, &local_models);
    Ok(ExperimentResult {
        logs,
        models,
        assignment,
        ledger,
        stabilized_at,
        final_evals: evals,
    })
}
