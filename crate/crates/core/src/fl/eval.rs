use serde::{Deserialize, Serialize};

use crate::dm2a::Dm2aModel;
use crate::error::Result;
use crate::metrics::{self, ConfusionMatrix};
use crate::partition::ClientDataset;

/// How a client's AD F1 was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdPath {
    /// Predicted class ≠ benign.
    Classifier,
    /// Reconstruction error above the calibrated threshold.
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEval {
    pub client_id: usize,
    pub labeled: bool,
    pub cls_f1: Option<f64>,
    pub cls_acc: Option<f64>,
    pub mcc: Option<f64>,
    /// Classifier macro F1 on the test set regardless of label availability.
    pub cls_f1_any: Option<f64>,
    pub ad_f1: Option<f64>,
    pub ad_path: AdPath,
}

/// Test-set metrics for one client. Labeled clients use the classifier for
/// both tasks; unlabeled clients (or all clients when `anomaly_only`) use the
/// reconstruction threshold calibrated on benign validation data, falling
/// back to benign training data when the validation slice is empty.
pub fn evaluate_client(model: &Dm2aModel, client: &ClientDataset, anomaly_only: bool) -> Result<ClientEval> {
    let mut eval = ClientEval {
        client_id: client.client_id,
        labeled: client.labeled,
        cls_f1: None,
        cls_acc: None,
        mcc: None,
        cls_f1_any: None,
        ad_f1: None,
        ad_path: AdPath::Threshold,
    };
    if client.test.is_empty() {
        return Ok(eval);
    }
    let x = client.test.features();
    let truth = client.test.labels();

    if !anomaly_only {
        let predicted = model.infer_labeled(&x)?;
        let cm = ConfusionMatrix::from_predictions(&truth, &predicted, model.num_classes())?;
        let f1 = metrics::macro_f1(&cm)?;
        eval.cls_f1_any = Some(f1);
        if client.labeled {
            eval.cls_f1 = Some(f1);
            eval.cls_acc = Some(metrics::accuracy(&cm)?);
            eval.mcc = Some(metrics::mcc(&cm)?);
            let status: Vec<_> = predicted.iter().map(|&p| metrics::status_from_class(p)).collect();
            eval.ad_f1 = metrics::ad_f1(&truth, &status)?;
            eval.ad_path = AdPath::Classifier;
            return Ok(eval);
        }
    }

    let calibration = if client.benign_val.is_empty() {
        client.train.benign()
    } else {
        client.benign_val.clone()
    };
    if calibration.is_empty() {
        log::warn!(
            "client {} has no benign data for threshold calibration",
            client.client_id
        );
        return Ok(eval);
    }
    let tau = model.calibrate_threshold(&calibration.features())?;
    let status = model.infer_unlabeled(&x, tau)?;
    eval.ad_f1 = metrics::ad_f1(&truth, &status)?;
    Ok(eval)
}
