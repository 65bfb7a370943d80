//! Dense layers, layer stacks, and their forward/backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::rng::SimRng;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU: `x · Φ(x)` with Φ the standard normal CDF.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// d/dx GELU = Φ(x) + x·φ(x).
pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
    cdf + x * pdf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    /// Linear output; softmax, when wanted, is folded into the loss.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Identity => x,
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu_derivative(x),
            Activation::Identity => 1.0,
        }
    }

    /// Hidden layers carry a nonlinearity and, during training, dropout.
    pub fn is_hidden(self) -> bool {
        matches!(self, Activation::Gelu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    /// Forward FLOPs per sample: `2·in·out + out`, plus one per element
    /// for a hidden-layer activation (dropout folded in).
    pub fn forward_flops(&self) -> u64 {
        let base = 2 * self.inputs as u64 * self.outputs as u64 + self.outputs as u64;
        if self.activation.is_hidden() {
            base + self.outputs as u64
        } else {
            base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// (out × in)
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform(−√(1/fan_in), √(1/fan_in)) for weights and bias.
    pub fn random(shape: LayerShape, rng: &mut SimRng) -> Self {
        let bound = (1.0 / shape.inputs as f64).sqrt();
        let weights: Vec<f64> = (0..shape.inputs * shape.outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let bias = (0..shape.outputs).map(|_| rng.random_range(-bound..=bound)).collect();
        Self {
            weights: Matrix::from_vec(shape.outputs, shape.inputs, weights).expect("length matches by construction"),
            bias,
            activation: shape.activation,
        }
    }

    pub fn zeros(shape: LayerShape) -> Self {
        Self {
            weights: Matrix::zeros(shape.outputs, shape.inputs),
            bias: vec![0.0; shape.outputs],
            activation: shape.activation,
        }
    }

    pub fn shape(&self) -> LayerShape {
        LayerShape {
            inputs: self.weights.cols(),
            outputs: self.weights.rows(),
            activation: self.activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.shape().param_count()
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Matrix,
    pre_activation: Matrix,
    /// Per-element multiplier (0 or 1/keep) when dropout was active.
    dropout_mask: Option<Vec<f64>>,
}

/// Activations recorded by [`LayerStack::forward_cached`], consumed by backward.
#[derive(Debug, Clone, Default)]
pub struct StackCache {
    layers: Vec<LayerCache>,
}

impl StackCache {
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Dropout configuration for a training-mode forward pass.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: &'a mut SimRng,
}

/// Gradient of one dense layer, mirroring its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackGrads {
    pub layers: Vec<LayerGrad>,
}

impl StackGrads {
    pub fn zeros_like(stack: &LayerStack) -> Self {
        Self {
            layers: stack
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Slices in flatten order (per layer: weights row-major, then bias).
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

/// A feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub layers: Vec<DenseLayer>,
}

impl LayerStack {
    pub fn random(shapes: &[LayerShape], rng: &mut SimRng) -> Result<Self> {
        validate_chain(shapes)?;
        Ok(Self {
            layers: shapes.iter().map(|&s| DenseLayer::random(s, rng)).collect(),
        })
    }

    pub fn zeros(shapes: &[LayerShape]) -> Result<Self> {
        validate_chain(shapes)?;
        Ok(Self {
            layers: shapes.iter().map(|&s| DenseLayer::zeros(s)).collect(),
        })
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.layers.iter().map(DenseLayer::shape).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.cols())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.rows())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward_flops(&self) -> u64 {
        self.layers.iter().map(|l| l.shape().forward_flops()).sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(
                "LayerStack::forward",
                format!("{} input columns", self.input_dim()),
                format!("{} input columns", input.cols()),
            ));
        }
        Ok(())
    }

    fn layer_forward(layer: &DenseLayer, input: &Matrix) -> Result<Matrix> {
        let mut pre = input.matmul_transposed(&layer.weights)?;
        for r in 0..pre.rows() {
            for (v, b) in pre.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        Ok(pre)
    }

    /// Inference-mode forward: no dropout, no cache.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            let pre = Self::layer_forward(layer, &x)?;
            x = pre.map(|v| layer.activation.apply(v));
        }
        Ok(x)
    }

    /// Forward pass recording what backward needs. Dropout, when given, is
    /// applied after every hidden layer with inverted scaling.
    pub fn forward_cached(
        &self,
        input: &Matrix,
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<(Matrix, StackCache)> {
        self.check_input(input)?;
        let mut cache = StackCache {
            layers: Vec::with_capacity(self.layers.len()),
        };
        let mut x = input.clone();
        for layer in &self.layers {
            let pre = Self::layer_forward(layer, &x)?;
            let mut out = pre.map(|v| layer.activation.apply(v));
            let mut mask = None;
            if let Some(d) = dropout.as_deref_mut() {
                if layer.activation.is_hidden() && d.p > 0.0 {
                    let keep = 1.0 - d.p;
                    let m: Vec<f64> = (0..out.as_slice().len())
                        .map(|_| if d.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    for (v, s) in out.as_mut_slice().iter_mut().zip(&m) {
                        *v *= s;
                    }
                    mask = Some(m);
                }
            }
            cache.layers.push(LayerCache {
                input: x,
                pre_activation: pre,
                dropout_mask: mask,
            });
            x = out;
        }
        Ok((x, cache))
    }

    /// Backpropagates `grad_output` (∂loss/∂output) through the cached pass.
    /// Returns parameter gradients and ∂loss/∂input.
    pub fn backward(&self, cache: &StackCache, grad_output: &Matrix) -> Result<(StackGrads, Matrix)> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::MissingCache);
        }
        let rows = cache.layers.first().map_or(0, |c| c.input.rows());
        if grad_output.shape() != (rows, self.output_dim()) {
            return Err(Error::shape(
                "LayerStack::backward",
                format!("{:?}", (rows, self.output_dim())),
                format!("{:?}", grad_output.shape()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.clone();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            if let Some(mask) = &lc.dropout_mask {
                for (g, m) in upstream.as_mut_slice().iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            // ∂/∂pre = upstream ⊙ act'(pre)
            if layer.activation != Activation::Identity {
                for (g, &p) in upstream.as_mut_slice().iter_mut().zip(lc.pre_activation.as_slice()) {
                    *g *= layer.activation.derivative(p);
                }
            }
            let weights = upstream.transposed_matmul(&lc.input)?;
            let mut bias = vec![0.0; layer.bias.len()];
            for r in 0..upstream.rows() {
                for (b, g) in bias.iter_mut().zip(upstream.row(r)) {
                    *b += g;
                }
            }
            let next = upstream.matmul(&layer.weights)?;
            grads.push(LayerGrad { weights, bias });
            upstream = next;
        }
        grads.reverse();
        Ok((StackGrads { layers: grads }, upstream))
    }
}

fn validate_chain(shapes: &[LayerShape]) -> Result<()> {
    if shapes.is_empty() {
        return Err(Error::Config("layer stack needs at least one layer".into()));
    }
    for s in shapes {
        if s.inputs == 0 || s.outputs == 0 {
            return Err(Error::Config(format!("zero-width layer {s:?}")));
        }
    }
    for w in shapes.windows(2) {
        if w[0].outputs != w[1].inputs {
            return Err(Error::Config(format!(
                "layer widths do not chain: {} -> {}",
                w[0].outputs, w[1].inputs
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, Stream};

    /// Φ by composite Simpson integration of the normal density from -12 to x.
    fn normal_cdf_quadrature(x: f64) -> f64 {
        let a = -12.0;
        let n = 200_000;
        let h = (x - a) / n as f64;
        let pdf = |t: f64| FRAC_1_SQRT_2PI * (-0.5 * t * t).exp();
        let mut s = pdf(a) + pdf(x);
        for i in 1..n {
            let t = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(t);
        }
        s * h / 3.0
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-6);
        assert!(gelu(-10.0).abs() < 1e-6);
        let oracle = 1.0 * normal_cdf_quadrature(1.0);
        assert!((oracle - 0.841345).abs() < 1e-6);
        assert!((gelu(1.0) - oracle).abs() < 1e-9);
        for &x in &[-2.5, -0.75, 0.3, 1.7] {
            assert!((gelu(x) - x * normal_cdf_quadrature(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0, -0.75, 0.0, 0.4, 2.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_derivative(x) - fd).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn single_layer_forward_flops() {
        let s = LayerShape {
            inputs: 2,
            outputs: 3,
            activation: Activation::Identity,
        };
        assert_eq!(s.forward_flops(), 15);
        assert_eq!(s.param_count(), 9);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let mut rng = rng_for(1, Stream::ModelInit, &[]);
        let shapes = [LayerShape {
            inputs: 4,
            outputs: 2,
            activation: Activation::Gelu,
        }];
        let stack = LayerStack::random(&shapes, &mut rng).unwrap();
        assert!(stack.forward(&Matrix::zeros(1, 3)).is_err());
        let bad = [
            shapes[0],
            LayerShape {
                inputs: 3,
                outputs: 1,
                activation: Activation::Identity,
            },
        ];
        assert!(LayerStack::random(&bad, &mut rng).is_err());
    }

    #[test]
    fn zero_seed_gives_zero_gradients() {
        let mut rng = rng_for(2, Stream::ModelInit, &[]);
        let shapes = [
            LayerShape {
                inputs: 3,
                outputs: 4,
                activation: Activation::Gelu,
            },
            LayerShape {
                inputs: 4,
                outputs: 2,
                activation: Activation::Identity,
            },
        ];
        let stack = LayerStack::random(&shapes, &mut rng).unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let (_, cache) = stack.forward_cached(&x, None).unwrap();
        let (g, gin) = stack.backward(&cache, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.is_zero());
        assert!(gin.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_cache_fails() {
        let mut rng = rng_for(3, Stream::ModelInit, &[]);
        let shapes = [LayerShape {
            inputs: 2,
            outputs: 2,
            activation: Activation::Identity,
        }];
        let stack = LayerStack::random(&shapes, &mut rng).unwrap();
        let r = stack.backward(&StackCache::default(), &Matrix::zeros(1, 2));
        assert!(matches!(r, Err(Error::MissingCache)));
    }

    #[test]
    fn inverted_dropout_preserves_mean() {
        let mut rng = rng_for(4, Stream::ModelInit, &[]);
        let shapes = [LayerShape {
            inputs: 1,
            outputs: 1,
            activation: Activation::Gelu,
        }];
        let mut stack = LayerStack::random(&shapes, &mut rng).unwrap();
        stack.layers[0].weights.set(0, 0, 1.0);
        stack.layers[0].bias[0] = 0.0;
        let x = Matrix::from_vec(20_000, 1, vec![2.0; 20_000]).unwrap();
        let mut drng = rng_for(5, Stream::LocalTrain, &[]);
        let mut d = Dropout { p: 0.2, rng: &mut drng };
        let (out, _) = stack.forward_cached(&x, Some(&mut d)).unwrap();
        let mean = out.as_slice().iter().sum::<f64>() / 20_000.0;
        assert!((mean - gelu(2.0)).abs() < 0.03);
    }
}
