//! Minimal dense-network kernel: matrices, layers, losses, backprop, AdamW.

pub mod checkpoint;
pub mod layer;
pub mod loss;
pub mod matrix;
pub mod optim;

use serde::{Deserialize, Serialize};

pub use layer::{
    gelu, gelu_derivative, Activation, DenseLayer, Dropout, LayerShape, LayerStack, StackCache, StackGrads,
};
pub use loss::{cross_entropy, mse_loss, per_sample_mse};
pub use matrix::Matrix;
pub use optim::{AdamWConfig, OptimizerState};

use crate::error::{Error, Result};

/// Layer shapes of one named stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackSpec {
    pub name: String,
    pub layers: Vec<LayerShape>,
}

/// Layout of a multi-stack network. Flatten order is stack order, then layer
/// order, then weights row-major followed by bias.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub stacks: Vec<StackSpec>,
}

impl ShapeSpec {
    pub fn param_count(&self) -> usize {
        self.stacks
            .iter()
            .flat_map(|s| &s.layers)
            .map(LayerShape::param_count)
            .sum()
    }
}

pub fn flatten_stacks(stacks: &[&LayerStack]) -> Vec<f64> {
    let total = stacks.iter().map(|s| s.param_count()).sum();
    let mut out = Vec::with_capacity(total);
    for s in stacks {
        for slice in s.param_slices() {
            out.extend_from_slice(slice);
        }
    }
    out
}

pub fn unflatten_stacks(spec: &ShapeSpec, values: &[f64]) -> Result<Vec<LayerStack>> {
    if values.len() != spec.param_count() {
        return Err(Error::shape("unflatten", spec.param_count(), values.len()));
    }
    let mut offset = 0;
    let mut stacks = Vec::with_capacity(spec.stacks.len());
    for s in &spec.stacks {
        let mut stack = LayerStack::zeros(&s.layers)?;
        for slice in stack.param_slices_mut() {
            let n = slice.len();
            slice.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        stacks.push(stack);
    }
    Ok(stacks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, Stream};
    use proptest::prelude::*;

    fn spec_from_widths(widths: &[usize]) -> Vec<LayerShape> {
        widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerShape {
                inputs: w[0],
                outputs: w[1],
                activation: if i + 2 == widths.len() {
                    Activation::Identity
                } else {
                    Activation::Gelu
                },
            })
            .collect()
    }

    proptest! {
        #[test]
        fn flatten_unflatten_round_trip(
            widths in prop::collection::vec(1usize..7, 2..5),
            widths2 in prop::collection::vec(1usize..7, 2..4),
            seed in any::<u64>(),
        ) {
            let mut rng = rng_for(seed, Stream::ModelInit, &[]);
            let a = LayerStack::random(&spec_from_widths(&widths), &mut rng).unwrap();
            let b = LayerStack::random(&spec_from_widths(&widths2), &mut rng).unwrap();
            let spec = ShapeSpec {
                stacks: vec![
                    StackSpec { name: "a".into(), layers: a.shapes() },
                    StackSpec { name: "b".into(), layers: b.shapes() },
                ],
            };
            let flat = flatten_stacks(&[&a, &b]);
            prop_assert_eq!(flat.len(), spec.param_count());
            let back = unflatten_stacks(&spec, &flat).unwrap();
            prop_assert_eq!(&back[0], &a);
            prop_assert_eq!(&back[1], &b);
        }
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let spec = ShapeSpec {
            stacks: vec![StackSpec {
                name: "x".into(),
                layers: spec_from_widths(&[2, 3]),
            }],
        };
        assert_eq!(spec.param_count(), 9);
        assert!(unflatten_stacks(&spec, &[0.0; 8]).is_err());
    }
}
