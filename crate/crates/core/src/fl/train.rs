use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::TrainHyper;
use crate::dm2a::{Dm2aModel, InferenceMode};
use crate::error::{Error, Result};
use crate::nn::{AdamWConfig, Dropout, OptimizerState};
use crate::partition::ClientDataset;
use crate::rng::SimRng;

/// Weights a client sends back after local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub model_index: usize,
    pub weights: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub update: ClientUpdate,
    pub flops: u64,
    /// Mean batch loss of the last epoch.
    pub final_loss: f64,
}

/// Which heads training with mode selector `alpha` touches.
pub fn training_mode(alpha: f64) -> InferenceMode {
    if alpha <= 0.0 {
        InferenceMode::ReconstructionOnly
    } else if alpha >= 1.0 {
        InferenceMode::ClassificationOnly
    } else {
        InferenceMode::Dual
    }
}

/// `local_epochs` passes of shuffled mini-batch AdamW on the composite loss,
/// starting from `model` with a fresh optimizer. Returns `None` (and logs)
/// when the client has no training data.
pub fn local_train(
    client: &ClientDataset,
    model: &Dm2aModel,
    model_index: usize,
    alpha: f64,
    hyper: &TrainHyper,
    dropout_p: f64,
    seed: u64,
) -> Result<Option<TrainOutcome>> {
    let n = client.train.len();
    if n == 0 {
        log::warn!("client {} has no training data; skipped", client.client_id);
        return Ok(None);
    }
    if hyper.batch_size == 0 {
        return Err(Error::field("train.batch_size", "must be positive"));
    }
    let x = client.train.features();
    let labels = client.train.labels();
    let mut model = model.clone();
    let mut state = OptimizerState::new(
        AdamWConfig {
            learning_rate: hyper.learning_rate,
            weight_decay: hyper.weight_decay,
            ..AdamWConfig::default()
        },
        model.param_count(),
    );
    let mut rng = SimRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut final_loss = 0.0;
    for _ in 0..hyper.local_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(hyper.batch_size) {
            let xb = x.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let y = (alpha > 0.0).then_some(yb.as_slice());
            let mut dropout = Dropout {
                p: dropout_p,
                rng: &mut rng,
            };
            let (loss, grads) = model.loss_and_gradients(&xb, y, alpha, Some(&mut dropout))?;
            model.apply_gradients(&grads, &mut state)?;
            epoch_loss += loss;
            batches += 1;
        }
        final_loss = epoch_loss / batches as f64;
    }
    let flops = hyper.local_epochs as u64 * n as u64 * model.training_flops_per_sample(training_mode(alpha));
    Ok(Some(TrainOutcome {
        update: ClientUpdate {
            client_id: client.client_id,
            model_index,
            weights: model.flatten(),
            n,
        },
        flops,
        final_loss,
    }))
}

/// Sample-weighted mean `Σ (n_i / n) · w_i`, accumulated in ascending
/// client order so the result does not depend on arrival order.
pub fn aggregate_cluster(updates: &[&ClientUpdate]) -> Result<Vec<f64>> {
    let Some(first) = updates.first() else {
        return Err(Error::Empty("cluster update list"));
    };
    let len = first.weights.len();
    if let Some(u) = updates.iter().find(|u| u.weights.len() != len) {
        return Err(Error::shape("client update", len, u.weights.len()));
    }
    let mut sorted: Vec<&ClientUpdate> = updates.to_vec();
    sorted.sort_by_key(|u| u.client_id);
    let total: usize = sorted.iter().map(|u| u.n).sum();
    if total == 0 {
        return Err(Error::Empty("cluster samples"));
    }
    let mut out = vec![0.0; len];
    for u in sorted {
        let coef = u.n as f64 / total as f64;
        for (o, w) in out.iter_mut().zip(&u.weights) {
            *o += coef * w;
        }
    }
    Ok(out)
}
