use rayon::prelude::*;

use super::train::{aggregate_cluster, local_train, TrainOutcome};
use super::TrainHyper;
use crate::clustering::{
    build_match_cost, cluster_loss_vectors, kmeans, min_cost_matching, pca_project, ClusterAssignment, LossVector,
};
use crate::dm2a::{Dm2aConfig, Dm2aModel};
use crate::error::{Error, Result};
use crate::partition::ClientDataset;
use crate::rng::{derive_seed, rng_for, Stream};

/// Server-side state: the K cluster models and the clustering history.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub models: Vec<Dm2aModel>,
    pub assignment: ClusterAssignment,
    pub round: usize,
    /// Assignments produced by clustering rounds, oldest first.
    pub history: Vec<ClusterAssignment>,
    pub stabilized: bool,
}

impl ServerState {
    pub fn k(&self) -> usize {
        self.models.len()
    }

    /// Cluster of each client in `clients` order (0 if never assigned).
    pub fn cluster_of(&self, clients: &[ClientDataset]) -> Vec<usize> {
        clients
            .iter()
            .map(|c| self.assignment.get(c.client_id).unwrap_or(0))
            .collect()
    }
}

/// K independently seeded models; model `j` depends only on `(seed, j)`.
pub fn init_server(config: &Dm2aConfig, k: usize, seed: u64) -> Result<ServerState> {
    if k == 0 {
        return Err(Error::field("experiment.k", "must be at least 1"));
    }
    let models = (0..k)
        .map(|j| Dm2aModel::random(config, &mut rng_for(seed, Stream::ModelInit, &[j as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(ServerState {
        models,
        assignment: ClusterAssignment::default(),
        round: 0,
        history: Vec::new(),
        stabilized: false,
    })
}

/// True when the last `patience` assignments are identical.
pub fn check_stabilization(history: &[ClusterAssignment], patience: usize) -> bool {
    if patience == 0 || history.len() < patience {
        return false;
    }
    let tail = &history[history.len() - patience..];
    tail.iter().all(|a| a == &tail[0])
}

/// Shared inputs of one federated round.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub clients: &'a [ClientDataset],
    pub hyper: &'a TrainHyper,
    pub dropout_p: f64,
    pub seed: u64,
    /// Replaces every client's mode selector (reconstruction-only training).
    pub alpha_override: Option<f64>,
}

impl RoundContext<'_> {
    fn alpha(&self, client: &ClientDataset) -> f64 {
        self.alpha_override.unwrap_or(client.alpha)
    }
}

/// Per-client costs of one round, in `clients` order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundCosts {
    pub flops: Vec<u64>,
    pub participated: Vec<bool>,
    /// Whether this round ran the clustering step.
    pub clustered: bool,
}

impl RoundCosts {
    pub fn participants(&self) -> Vec<(usize, u64)> {
        self.participated
            .iter()
            .zip(&self.flops)
            .enumerate()
            .filter(|(_, (&p, _))| p)
            .map(|(i, (_, &f))| (i, f))
            .collect()
    }
}

fn train_all(
    ctx: &RoundContext<'_>,
    round: usize,
    models: &[Dm2aModel],
    start: &[usize],
) -> Result<Vec<Option<TrainOutcome>>> {
    ctx.clients
        .par_iter()
        .zip(start.par_iter())
        .map(|(client, &j)| {
            let seed = derive_seed(ctx.seed, Stream::LocalTrain, &[round as u64, client.client_id as u64]);
            local_train(client, &models[j], j, ctx.alpha(client), ctx.hyper, ctx.dropout_p, seed)
        })
        .collect()
}

/// Replaces each model by the aggregate of the updates assigned to it;
/// models without updates are carried over.
fn aggregate_into(models: &mut [Dm2aModel], outcomes: &[Option<TrainOutcome>], target: &[usize]) -> Result<()> {
    for (j, model) in models.iter_mut().enumerate() {
        let updates: Vec<_> = outcomes
            .iter()
            .zip(target)
            .filter(|(_, &t)| t == j)
            .filter_map(|(o, _)| o.as_ref().map(|o| &o.update))
            .collect();
        if updates.is_empty() {
            log::debug!("cluster {j} received no updates; model carried over");
            continue;
        }
        model.load_flat(&aggregate_cluster(&updates)?)?;
    }
    Ok(())
}

fn client_feature_mean(client: &ClientDataset) -> Option<Vec<f64>> {
    if !client.train.is_empty() {
        Some(client.train.feature_mean())
    } else if !client.test.is_empty() {
        Some(client.test.feature_mean())
    } else {
        None
    }
}

/// Assigns every client missing from `assignment` to the cluster of the
/// assigned client with the closest feature mean (cluster 0 if none).
fn fill_unassigned(assignment: &mut ClusterAssignment, clients: &[ClientDataset]) {
    let anchors: Vec<(Vec<f64>, usize)> = clients
        .iter()
        .filter_map(|c| Some((client_feature_mean(c)?, assignment.get(c.client_id)?)))
        .collect();
    for c in clients {
        if assignment.get(c.client_id).is_some() {
            continue;
        }
        let cluster = client_feature_mean(c)
            .and_then(|m| {
                anchors
                    .iter()
                    .map(|(a, j)| (a.iter().zip(&m).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(), *j))
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, j)| j)
            })
            .unwrap_or(0);
        log::warn!(
            "client {} could not be fingerprinted; joined cluster {cluster}",
            c.client_id
        );
        assignment.insert(c.client_id, cluster);
    }
}

fn finish_clustering_round(server: &mut ServerState, patience: usize) {
    server.history.push(server.assignment.clone());
    if check_stabilization(&server.history, patience) {
        server.stabilized = true;
    }
}

fn train_assigned(server: &mut ServerState, ctx: &RoundContext<'_>, extra_flops: &[u64]) -> Result<RoundCosts> {
    let target = server.cluster_of(ctx.clients);
    let outcomes = train_all(ctx, server.round, &server.models, &target)?;
    aggregate_into(&mut server.models, &outcomes, &target)?;
    Ok(RoundCosts {
        flops: outcomes
            .iter()
            .zip(extra_flops)
            .map(|(o, e)| o.as_ref().map_or(0, |o| o.flops) + e)
            .collect(),
        participated: outcomes.iter().map(Option::is_some).collect(),
        clustered: false,
    })
}

/// Loss vectors of every client with benign training data, with the FLOPs
/// each spent computing them.
pub fn fingerprint_clients(models: &[Dm2aModel], clients: &[ClientDataset]) -> Result<(Vec<LossVector>, Vec<u64>)> {
    let results: Vec<(Option<LossVector>, u64)> = clients
        .par_iter()
        .map(|c| {
            let benign = c.train.benign();
            if benign.is_empty() {
                return Ok((None, 0));
            }
            let x = benign.features();
            let values = models
                .iter()
                .map(|m| m.reconstruction_fingerprint(&x))
                .collect::<Result<Vec<_>>>()?;
            let flops = models
                .iter()
                .map(|m| m.flops_per_sample(crate::dm2a::InferenceMode::ReconstructionOnly) * x.rows() as u64)
                .sum();
            Ok((
                Some(LossVector {
                    client_id: c.client_id,
                    values,
                }),
                flops,
            ))
        })
        .collect::<Result<_>>()?;
    let flops = results.iter().map(|r| r.1).collect();
    Ok((results.into_iter().filter_map(|r| r.0).collect(), flops))
}

/// One pre-stabilization round: fingerprint against all K models, cluster the
/// loss vectors, match clusters to models, train, aggregate per cluster.
pub fn clad_round(server: &mut ServerState, ctx: &RoundContext<'_>) -> Result<RoundCosts> {
    if server.stabilized {
        return Err(Error::Config("clad_round called on a stabilized server".into()));
    }
    server.round += 1;
    let k = server.k();
    let (vectors, fp_flops) = fingerprint_clients(&server.models, ctx.clients)?;
    let mut assignment = if vectors.is_empty() {
        server.assignment.clone()
    } else {
        let seed = derive_seed(ctx.seed, Stream::KMeans, &[server.round as u64]);
        let (raw, _) = cluster_loss_vectors(&vectors, k, seed, ctx.hyper.kmeans_max_iter)?;
        let cost = build_match_cost(&raw, &vectors, k)?;
        raw.relabel(&min_cost_matching(&cost)?)
    };
    fill_unassigned(&mut assignment, ctx.clients);
    server.assignment = assignment;
    let mut costs = train_assigned(server, ctx, &fp_flops)?;
    costs.clustered = true;
    finish_clustering_round(server, ctx.hyper.stabilization_patience);
    Ok(costs)
}

/// Post-stabilization round: each client trains only its own cluster model.
pub fn stabilized_round(server: &mut ServerState, ctx: &RoundContext<'_>) -> Result<RoundCosts> {
    server.round += 1;
    train_assigned(server, ctx, &vec![0; ctx.clients.len()])
}

/// IFCA round: every client picks the model with the lowest full local loss.
pub fn ifca_round(server: &mut ServerState, ctx: &RoundContext<'_>) -> Result<RoundCosts> {
    if server.stabilized {
        return stabilized_round(server, ctx);
    }
    server.round += 1;
    let choices: Vec<(Option<usize>, u64)> = ctx
        .clients
        .par_iter()
        .map(|c| {
            if c.train.is_empty() {
                return Ok((None, 0));
            }
            let x = c.train.features();
            let labels = c.train.labels();
            let alpha = ctx.alpha(c);
            let y = (alpha > 0.0).then_some(labels.as_slice());
            let mut best = (0, f64::INFINITY);
            let mut flops = 0;
            for (j, m) in server.models.iter().enumerate() {
                let loss = m.evaluate_loss(&x, y, alpha)?;
                flops += m.flops_per_sample(super::train::training_mode(alpha)) * x.rows() as u64;
                if loss < best.1 {
                    best = (j, loss);
                }
            }
            Ok((Some(best.0), flops))
        })
        .collect::<Result<_>>()?;
    let mut assignment = ClusterAssignment::default();
    for (c, (choice, _)) in ctx.clients.iter().zip(&choices) {
        if let Some(j) = choice {
            assignment.insert(c.client_id, *j);
        }
    }
    fill_unassigned(&mut assignment, ctx.clients);
    server.assignment = assignment;
    let extra: Vec<u64> = choices.iter().map(|c| c.1).collect();
    let mut costs = train_assigned(server, ctx, &extra)?;
    costs.clustered = true;
    finish_clustering_round(server, ctx.hyper.stabilization_patience);
    Ok(costs)
}

/// Weight-similarity round: clients train (from the shared model 0 in the
/// first round), the server projects the uploaded weights onto their leading
/// principal components, k-means-clusters them, keeps cluster identities
/// stable by maximum-overlap matching, and aggregates per cluster.
pub fn cfl_round(server: &mut ServerState, ctx: &RoundContext<'_>) -> Result<RoundCosts> {
    if server.stabilized {
        return stabilized_round(server, ctx);
    }
    let first = server.round == 0;
    server.round += 1;
    let k = server.k();
    let start = if first {
        vec![0; ctx.clients.len()]
    } else {
        server.cluster_of(ctx.clients)
    };
    let outcomes = train_all(ctx, server.round, &server.models, &start)?;

    let trained: Vec<(usize, &TrainOutcome)> = ctx
        .clients
        .iter()
        .zip(&outcomes)
        .filter_map(|(c, o)| o.as_ref().map(|o| (c.client_id, o)))
        .collect();
    let mut assignment = ClusterAssignment::default();
    if !trained.is_empty() {
        let weights: Vec<Vec<f64>> = trained.iter().map(|(_, o)| o.update.weights.clone()).collect();
        let projected = pca_project(&weights, ctx.hyper.pca_components)?;
        let seed = derive_seed(ctx.seed, Stream::KMeans, &[server.round as u64]);
        let labels = kmeans(&projected, k, seed, ctx.hyper.kmeans_max_iter)?.labels;
        let sigma = if first {
            (0..k).collect()
        } else {
            let mut overlap = vec![vec![0.0; k]; k];
            for ((id, _), &new) in trained.iter().zip(&labels) {
                if let Some(old) = server.assignment.get(*id) {
                    overlap[new][old] -= 1.0;
                }
            }
            min_cost_matching(&overlap)?
        };
        for ((id, _), &new) in trained.iter().zip(&labels) {
            assignment.insert(*id, sigma[new]);
        }
    }
    for c in ctx.clients {
        if assignment.get(c.client_id).is_none() {
            if let Some(old) = server.assignment.get(c.client_id) {
                assignment.insert(c.client_id, old);
            }
        }
    }
    fill_unassigned(&mut assignment, ctx.clients);
    server.assignment = assignment;
    let target = server.cluster_of(ctx.clients);
    aggregate_into(&mut server.models, &outcomes, &target)?;
    finish_clustering_round(server, ctx.hyper.stabilization_patience);
    Ok(RoundCosts {
        flops: outcomes.iter().map(|o| o.as_ref().map_or(0, |o| o.flops)).collect(),
        participated: outcomes.iter().map(Option::is_some).collect(),
        clustered: true,
    })
}
