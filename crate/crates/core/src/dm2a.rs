//! Dual-mode model: a shared encoder feeding a reconstruction head and a
//! classification head.
//!
//! The encoder maps `x ∈ R^d` to a latent `z ∈ R^l`. The decoder mirrors the
//! encoder back to `R^d`; the classifier halves the latent width once and
//! then projects to class logits. Training minimizes
//! `α·CE(y, logits) + (1 − α)·MSE(x, x̂)`; a head whose weight is zero is
//! not evaluated at all, so it receives no update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    self, loss, Activation, Dropout, LayerShape, LayerStack, Matrix, OptimizerState, ShapeSpec, StackGrads, StackSpec,
};
use crate::rng::SimRng;

/// Class index reserved for benign traffic.
pub const BENIGN: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dm2aConfig {
    pub input_dim: usize,
    /// Hidden widths of the encoder; the last entry is the latent width.
    pub encoder_widths: Vec<usize>,
    pub classifier_hidden: usize,
    /// Attack classes plus one benign class.
    pub num_classes: usize,
    pub dropout_p: f64,
    pub alpha_default: f64,
}

impl Dm2aConfig {
    /// Encoder widths given; classifier hidden width derived as half the latent.
    pub fn new(input_dim: usize, encoder_widths: Vec<usize>, num_classes: usize) -> Self {
        let latent = encoder_widths.last().copied().unwrap_or(0);
        Self {
            input_dim,
            encoder_widths,
            classifier_hidden: latent / 2,
            num_classes,
            dropout_p: 0.2,
            alpha_default: 0.8,
        }
    }

    /// 110 features, 96-48-24 encoder, six attack families plus benign.
    pub fn cic() -> Self {
        Self::new(110, vec![96, 48, 24], 7)
    }

    /// 68 features, 64-32-16 encoder, five attack families plus benign.
    pub fn gotham() -> Self {
        Self::new(68, vec![64, 32, 16], 6)
    }

    pub fn unsw(num_classes: usize) -> Self {
        Self::new(138, vec![96, 48, 24], num_classes)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.latent_dim();
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return Err(Error::field(
                "model.encoder_widths",
                "must be non-empty and strictly positive",
            ));
        }
        if l >= self.input_dim {
            return Err(Error::field(
                "model.encoder_widths",
                format!("latent width {l} must be smaller than input_dim {}", self.input_dim),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::field("model.num_classes", "need at least 2 classes"));
        }
        if self.classifier_hidden != l / 2 || self.classifier_hidden == 0 {
            return Err(Error::field(
                "model.classifier_hidden",
                format!("must equal half the latent width ({}), and be positive", l / 2),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::field("model.dropout_p", "must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.alpha_default) {
            return Err(Error::field("model.alpha_default", "must be in [0, 1]"));
        }
        Ok(())
    }

    fn chain(widths: &[usize], last_identity: bool) -> Vec<LayerShape> {
        widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerShape {
                inputs: w[0],
                outputs: w[1],
                activation: if last_identity && i + 2 == widths.len() {
                    Activation::Identity
                } else {
                    Activation::Gelu
                },
            })
            .collect()
    }

    pub fn encoder_shapes(&self) -> Vec<LayerShape> {
        let mut w = vec![self.input_dim];
        w.extend(&self.encoder_widths);
        Self::chain(&w, false)
    }

    pub fn decoder_shapes(&self) -> Vec<LayerShape> {
        let mut w: Vec<usize> = self.encoder_widths.iter().rev().copied().collect();
        w.push(self.input_dim);
        Self::chain(&w, true)
    }

    pub fn classifier_shapes(&self) -> Vec<LayerShape> {
        Self::chain(&[self.latent_dim(), self.classifier_hidden, self.num_classes], true)
    }

    pub fn shape_spec(&self) -> ShapeSpec {
        ShapeSpec {
            stacks: vec![
                StackSpec {
                    name: "encoder".into(),
                    layers: self.encoder_shapes(),
                },
                StackSpec {
                    name: "decoder".into(),
                    layers: self.decoder_shapes(),
                },
                StackSpec {
                    name: "classifier".into(),
                    layers: self.classifier_shapes(),
                },
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.shape_spec().param_count()
    }

    /// Parameters of the encoder and decoder only.
    pub fn reconstruction_param_count(&self) -> usize {
        let spec = self.shape_spec();
        spec.stacks[..2]
            .iter()
            .flat_map(|s| &s.layers)
            .map(LayerShape::param_count)
            .sum()
    }
}

/// Which heads a forward pass evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    ReconstructionOnly,
    Dual,
    ClassificationOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dm2aModel {
    pub encoder: LayerStack,
    pub decoder: LayerStack,
    pub classifier: LayerStack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOutput {
    pub z: Matrix,
    pub x_hat: Matrix,
    pub logits: Matrix,
}

/// Gradients of the composite loss; `None` for a head that was not evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub encoder: StackGrads,
    pub decoder: Option<StackGrads>,
    pub classifier: Option<StackGrads>,
}

impl GradientSet {
    /// Flattened in model order; absent heads contribute zeros.
    pub fn flatten(&self, model: &Dm2aModel) -> Vec<f64> {
        let mut out = self.encoder.flatten();
        out.extend(match &self.decoder {
            Some(g) => g.flatten(),
            None => vec![0.0; model.decoder.param_count()],
        });
        out.extend(match &self.classifier {
            Some(g) => g.flatten(),
            None => vec![0.0; model.classifier.param_count()],
        });
        out
    }
}

/// Per-client anomaly threshold: the largest per-sample reconstruction error
/// seen on benign validation data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyThreshold(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnomalyStatus {
    Normal,
    Anomalous,
}

impl Dm2aModel {
    pub fn random(config: &Dm2aConfig, rng: &mut SimRng) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            encoder: LayerStack::random(&config.encoder_shapes(), rng)?,
            decoder: LayerStack::random(&config.decoder_shapes(), rng)?,
            classifier: LayerStack::random(&config.classifier_shapes(), rng)?,
        })
    }

    pub fn shape_spec(&self) -> ShapeSpec {
        ShapeSpec {
            stacks: vec![
                StackSpec {
                    name: "encoder".into(),
                    layers: self.encoder.shapes(),
                },
                StackSpec {
                    name: "decoder".into(),
                    layers: self.decoder.shapes(),
                },
                StackSpec {
                    name: "classifier".into(),
                    layers: self.classifier.shapes(),
                },
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count() + self.classifier.param_count()
    }

    pub fn flatten(&self) -> Vec<f64> {
        nn::flatten_stacks(&[&self.encoder, &self.decoder, &self.classifier])
    }

    pub fn unflatten(spec: &ShapeSpec, values: &[f64]) -> Result<Self> {
        if spec.stacks.len() != 3 {
            return Err(Error::shape("Dm2aModel::unflatten stacks", 3, spec.stacks.len()));
        }
        let mut stacks = nn::unflatten_stacks(spec, values)?.into_iter();
        Ok(Self {
            encoder: stacks.next().expect("three stacks"),
            decoder: stacks.next().expect("three stacks"),
            classifier: stacks.next().expect("three stacks"),
        })
    }

    /// Overwrites parameters in place from a flat vector of the same layout.
    pub fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::shape("Dm2aModel::load_flat", self.param_count(), values.len()));
        }
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            let n = slice.len();
            slice.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.param_slices_mut();
        v.extend(self.decoder.param_slices_mut());
        v.extend(self.classifier.param_slices_mut());
        v
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.output_dim()
    }

    /// Forward FLOPs per sample for the heads a mode evaluates.
    pub fn flops_per_sample(&self, mode: InferenceMode) -> u64 {
        let enc = self.encoder.forward_flops();
        match mode {
            InferenceMode::ReconstructionOnly => enc + self.decoder.forward_flops(),
            InferenceMode::ClassificationOnly => enc + self.classifier.forward_flops(),
            InferenceMode::Dual => enc + self.decoder.forward_flops() + self.classifier.forward_flops(),
        }
    }

    /// Training FLOPs per sample: forward plus a backward costed at twice the forward.
    pub fn training_flops_per_sample(&self, mode: InferenceMode) -> u64 {
        3 * self.flops_per_sample(mode)
    }

    /// Both heads on `x`. With `dropout` set, runs in training mode.
    pub fn forward_dual(&self, x: &Matrix, dropout: Option<&mut Dropout<'_>>) -> Result<DualOutput> {
        let z = match dropout {
            Some(d) => self.encoder.forward_cached(x, Some(d))?.0,
            None => self.encoder.forward(x)?,
        };
        let x_hat = self.decoder.forward(&z)?;
        let logits = self.classifier.forward(&z)?;
        Ok(DualOutput { z, x_hat, logits })
    }

    /// Inference-mode reconstruction `D(E(x))`; the classifier is not run.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.decoder.forward(&self.encoder.forward(x)?)
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.classifier.forward(&self.encoder.forward(x)?)
    }

    /// Batch MSE of the benign set under the reconstruction path, with the
    /// classifier left out entirely.
    pub fn reconstruction_fingerprint(&self, benign: &Matrix) -> Result<f64> {
        if benign.rows() == 0 {
            return Err(Error::Empty("benign set for fingerprinting"));
        }
        loss::mse_loss(benign, &self.reconstruct(benign)?)
    }

    pub fn reconstruction_errors(&self, x: &Matrix) -> Result<Vec<f64>> {
        loss::per_sample_mse(x, &self.reconstruct(x)?)
    }

    pub fn calibrate_threshold(&self, benign_val: &Matrix) -> Result<AnomalyThreshold> {
        if benign_val.rows() == 0 {
            return Err(Error::Empty("benign validation set"));
        }
        let errors = self.reconstruction_errors(benign_val)?;
        Ok(AnomalyThreshold(errors.into_iter().fold(0.0, f64::max)))
    }

    pub fn infer_labeled(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    pub fn infer_unlabeled(&self, x: &Matrix, tau: AnomalyThreshold) -> Result<Vec<AnomalyStatus>> {
        Ok(self
            .reconstruction_errors(x)?
            .into_iter()
            .map(|e| classify_error(e, tau))
            .collect())
    }

    /// Composite loss in inference mode.
    pub fn evaluate_loss(&self, x: &Matrix, labels: Option<&[usize]>, alpha: f64) -> Result<f64> {
        let out = self.forward_dual(x, None)?;
        composite_loss(x, &out, labels, alpha)
    }

    /// Composite loss and its exact gradient on one batch.
    pub fn loss_and_gradients(
        &self,
        x: &Matrix,
        labels: Option<&[usize]>,
        alpha: f64,
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<(f64, GradientSet)> {
        check_alpha(alpha, labels)?;
        let (z, enc_cache) = self.encoder.forward_cached(x, dropout.as_deref_mut())?;
        let mut loss_value = 0.0;
        let mut dz = Matrix::zeros(z.rows(), z.cols());

        let decoder = if alpha < 1.0 {
            let (x_hat, cache) = self.decoder.forward_cached(&z, dropout.as_deref_mut())?;
            loss_value += (1.0 - alpha) * loss::mse_loss(x, &x_hat)?;
            let mut g = loss::mse_gradient(x, &x_hat)?;
            g.scale_in_place(1.0 - alpha);
            let (grads, dz_dec) = self.decoder.backward(&cache, &g)?;
            dz.add_in_place(&dz_dec)?;
            Some(grads)
        } else {
            None
        };

        let classifier = if alpha > 0.0 {
            let labels = labels.expect("checked above");
            let (logits, cache) = self.classifier.forward_cached(&z, dropout)?;
            loss_value += alpha * loss::cross_entropy(&logits, labels)?;
            let mut g = loss::cross_entropy_gradient(&logits, labels)?;
            g.scale_in_place(alpha);
            let (grads, dz_cls) = self.classifier.backward(&cache, &g)?;
            dz.add_in_place(&dz_cls)?;
            Some(grads)
        } else {
            None
        };

        let (encoder, _) = self.encoder.backward(&enc_cache, &dz)?;
        Ok((
            loss_value,
            GradientSet {
                encoder,
                decoder,
                classifier,
            },
        ))
    }

    /// One AdamW update. Heads without gradients are left untouched.
    pub fn apply_gradients(&mut self, grads: &GradientSet, state: &mut OptimizerState) -> Result<()> {
        let mut segments: Vec<Option<&[f64]>> = grads.encoder.slices().into_iter().map(Some).collect();
        match &grads.decoder {
            Some(g) => segments.extend(g.slices().into_iter().map(Some)),
            None => segments.extend(std::iter::repeat_n(None, 2 * self.decoder.layers.len())),
        }
        match &grads.classifier {
            Some(g) => segments.extend(g.slices().into_iter().map(Some)),
            None => segments.extend(std::iter::repeat_n(None, 2 * self.classifier.layers.len())),
        }
        state.step(self.param_slices_mut(), &segments)
    }
}

fn check_alpha(alpha: f64, labels: Option<&[usize]>) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    if alpha > 0.0 && labels.is_none() {
        return Err(Error::MissingLabels(alpha));
    }
    Ok(())
}

/// `α·CE + (1 − α)·MSE`; a zero-weighted term is not evaluated.
pub fn composite_loss(x: &Matrix, out: &DualOutput, labels: Option<&[usize]>, alpha: f64) -> Result<f64> {
    check_alpha(alpha, labels)?;
    let mut total = 0.0;
    if alpha < 1.0 {
        total += (1.0 - alpha) * loss::mse_loss(x, &out.x_hat)?;
    }
    if alpha > 0.0 {
        total += alpha * loss::cross_entropy(&out.logits, labels.expect("checked"))?;
    }
    Ok(total)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Strictly above the threshold is anomalous.
pub fn classify_error(error: f64, tau: AnomalyThreshold) -> AnomalyStatus {
    if error > tau.0 {
        AnomalyStatus::Anomalous
    } else {
        AnomalyStatus::Normal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, Stream};

    fn small() -> Dm2aConfig {
        Dm2aConfig::new(6, vec![5, 4], 3)
    }

    fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        use rand::Rng;
        let mut rng = rng_for(seed, Stream::Synthetic, &[]);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn cic_parameter_count() {
        let c = Dm2aConfig::cic();
        c.validate().unwrap();
        // encoder 10656+4656+1176, decoder 1200+4704+10670, classifier 300+91
        assert_eq!(c.param_count(), 33_453);
        assert_eq!(c.classifier_hidden, 12);
        assert_eq!(Dm2aConfig::gotham().classifier_hidden, 8);
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.encoder_widths = vec![8, 6];
        assert!(c.validate().is_err());
        let mut c = small();
        c.num_classes = 1;
        assert!(c.validate().is_err());
        let mut c = small();
        c.classifier_hidden = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn decoder_mirrors_encoder() {
        let c = Dm2aConfig::cic();
        let dec: Vec<_> = c.decoder_shapes().iter().map(|s| (s.inputs, s.outputs)).collect();
        assert_eq!(dec, vec![(24, 48), (48, 96), (96, 110)]);
        let enc: Vec<_> = c.encoder_shapes().iter().map(|s| (s.inputs, s.outputs)).collect();
        assert_eq!(enc, vec![(110, 96), (96, 48), (48, 24)]);
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let mut rng = rng_for(1, Stream::ModelInit, &[]);
        let m = Dm2aModel::random(&small(), &mut rng).unwrap();
        let x = batch(4, 6, 2);
        let a = m.forward_dual(&x, None).unwrap();
        let b = m.forward_dual(&x, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x_hat.shape(), (4, 6));
        assert_eq!(a.logits.shape(), (4, 3));
        let empty = m.forward_dual(&Matrix::zeros(0, 6), None).unwrap();
        assert_eq!(empty.x_hat.shape(), (0, 6));
        assert_eq!(empty.logits.shape(), (0, 3));
        assert!(m.forward_dual(&Matrix::zeros(1, 5), None).is_err());
    }

    #[test]
    fn composite_loss_endpoints_and_affinity() {
        let mut rng = rng_for(3, Stream::ModelInit, &[]);
        let m = Dm2aModel::random(&small(), &mut rng).unwrap();
        let x = batch(5, 6, 4);
        let y = [0, 1, 2, 1, 0];
        let out = m.forward_dual(&x, None).unwrap();
        let mse = nn::mse_loss(&x, &out.x_hat).unwrap();
        let ce = nn::cross_entropy(&out.logits, &y).unwrap();
        assert_eq!(composite_loss(&x, &out, None, 0.0).unwrap(), mse);
        assert_eq!(composite_loss(&x, &out, Some(&y), 1.0).unwrap(), ce);
        for a in [0.1, 0.5, 0.8] {
            let l = composite_loss(&x, &out, Some(&y), a).unwrap();
            assert!((l - (a * ce + (1.0 - a) * mse)).abs() < 1e-14);
        }
        assert!(matches!(
            composite_loss(&x, &out, None, 0.8),
            Err(Error::MissingLabels(_))
        ));
        assert!((0.8 * 1.0 + 0.2 * 0.5 - 0.9_f64).abs() < 1e-15);
    }

    #[test]
    fn fingerprint_matches_forward_and_does_not_mutate() {
        let mut rng = rng_for(5, Stream::ModelInit, &[]);
        let m = Dm2aModel::random(&small(), &mut rng).unwrap();
        let before = m.flatten();
        let x = batch(7, 6, 6);
        let fp = m.reconstruction_fingerprint(&x).unwrap();
        let out = m.forward_dual(&x, None).unwrap();
        assert_eq!(fp, nn::mse_loss(&x, &out.x_hat).unwrap());
        assert_eq!(fp, m.reconstruction_fingerprint(&x).unwrap());
        assert_eq!(m.flatten(), before);
        assert!(m.reconstruction_fingerprint(&Matrix::zeros(0, 6)).is_err());
    }

    #[test]
    fn threshold_contract() {
        let mut rng = rng_for(7, Stream::ModelInit, &[]);
        let m = Dm2aModel::random(&small(), &mut rng).unwrap();
        let val = batch(9, 6, 8);
        let tau = m.calibrate_threshold(&val).unwrap();
        let errs = m.reconstruction_errors(&val).unwrap();
        assert_eq!(tau.0, errs.iter().cloned().fold(f64::MIN, f64::max));
        assert!(m
            .infer_unlabeled(&val, tau)
            .unwrap()
            .iter()
            .all(|s| *s == AnomalyStatus::Normal));
        assert!(m.calibrate_threshold(&Matrix::zeros(0, 6)).is_err());
    }

    #[test]
    fn anomaly_rule_is_strict() {
        let tau = AnomalyThreshold(0.2);
        assert_eq!(classify_error(0.2, tau), AnomalyStatus::Normal);
        assert_eq!(classify_error(0.0, AnomalyThreshold(0.0)), AnomalyStatus::Normal);
        assert_eq!(classify_error(0.1, tau), AnomalyStatus::Normal);
        assert_eq!(classify_error(0.3, tau), AnomalyStatus::Anomalous);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.1, 0.9, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[-1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn flops_additivity() {
        let mut rng = rng_for(9, Stream::ModelInit, &[]);
        let m = Dm2aModel::random(&small(), &mut rng).unwrap();
        let rec = m.flops_per_sample(InferenceMode::ReconstructionOnly);
        let dual = m.flops_per_sample(InferenceMode::Dual);
        assert_eq!(dual, rec + m.classifier.forward_flops());
        assert_eq!(m.training_flops_per_sample(InferenceMode::Dual), 3 * dual);
    }

    #[test]
    fn zero_alpha_leaves_classifier_without_gradient() {
        let mut rng = rng_for(11, Stream::ModelInit, &[]);
        let mut m = Dm2aModel::random(&small(), &mut rng).unwrap();
        let before = m.classifier.clone();
        let x = batch(4, 6, 12);
        let (_, g) = m.loss_and_gradients(&x, None, 0.0, None).unwrap();
        assert!(g.classifier.is_none());
        let mut st = OptimizerState::new(Default::default(), m.param_count());
        m.apply_gradients(&g, &mut st).unwrap();
        assert_eq!(m.classifier, before);
    }

    #[test]
    fn shared_encoder_receives_both_heads() {
        // Decoder reproduces nothing useful, so MSE is nonzero; CE alone can be
        // switched off and the encoder still moves.
        let mut rng = rng_for(13, Stream::ModelInit, &[]);
        let m = Dm2aModel::random(&small(), &mut rng).unwrap();
        let x = batch(4, 6, 14);
        let y = [0, 1, 2, 0];
        let (_, g_mix) = m.loss_and_gradients(&x, Some(&y), 0.5, None).unwrap();
        assert!(!g_mix.encoder.is_zero());
        let (_, g_rec) = m.loss_and_gradients(&x, None, 0.0, None).unwrap();
        let (_, g_cls) = m.loss_and_gradients(&x, Some(&y), 1.0, None).unwrap();
        let sum: Vec<f64> = g_rec
            .encoder
            .flatten()
            .iter()
            .zip(g_cls.encoder.flatten())
            .map(|(a, b)| 0.5 * a + 0.5 * b)
            .collect();
        for (a, b) in sum.iter().zip(g_mix.encoder.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
