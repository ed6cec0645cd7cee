//! Network description, probability maps, and sampled binary ensembles.

mod container;
mod sample;
mod toy;

pub use container::{
    load_ensemble, load_inputs, load_network_spec, load_probability_map, save_ensemble,
    save_inputs, save_network_spec, save_probability_map, CONTAINER_VERSION,
};
pub use sample::{sample_ensembles, sample_ensembles_with_threads};
pub use toy::{
    deep_heavy_targets, generate_toy_model, small_cnn_spec, vgg9_spec, ToyConfig,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Activation tensor shape (channels, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn flat(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Per-channel affine batch-norm parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Max-pooling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub window: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
}

/// One synaptic layer plus its digital post-processing stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default)]
    pub batch_norm: Option<BatchNorm>,
    #[serde(default)]
    pub relu: bool,
    #[serde(default)]
    pub pool: Option<Pool>,
}

impl LayerSpec {
    /// Number of output channels / features.
    pub fn fan_out(&self) -> usize {
        match self.kind {
            LayerKind::Conv { out_channels, .. } => out_channels,
            LayerKind::FullyConnected { out_features, .. } => out_features,
        }
    }

    /// Weight tensor dims: conv [out, in, k, k]; fc [out, in].
    pub fn weight_dims(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv { in_channels, out_channels, kernel, .. } => {
                vec![out_channels, in_channels, kernel, kernel]
            }
            LayerKind::FullyConnected { in_features, out_features } => {
                vec![out_features, in_features]
            }
        }
    }

    /// Dims of the crossbar-lowered weight matrix (rows = fan-in, cols = fan-out).
    pub fn lowered_dims(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Conv { in_channels, out_channels, kernel, .. } => {
                (in_channels * kernel * kernel, out_channels)
            }
            LayerKind::FullyConnected { in_features, out_features } => {
                (in_features, out_features)
            }
        }
    }

    pub fn synapse_count(&self) -> usize {
        self.weight_dims().iter().product()
    }
}

/// Full network architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    pub classes: usize,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

fn default_version() -> u32 {
    1
}

impl NetworkSpec {
    /// Output shape of one layer (after conv/fc, BN, ReLU, pool).
    pub fn layer_output_shape(layer: &LayerSpec, input: Shape) -> Result<Shape> {
        let after = match layer.kind {
            LayerKind::Conv { in_channels, out_channels, kernel, stride, padding } => {
                if in_channels != input.channels {
                    return Err(Error::Shape(format!(
                        "conv expects {in_channels} input channels, got {}",
                        input.channels
                    )));
                }
                let conv_dim = |d: usize| -> Result<usize> {
                    let padded = d + 2 * padding;
                    if padded < kernel {
                        return Err(Error::Shape(format!(
                            "kernel {kernel} exceeds padded input {padded}"
                        )));
                    }
                    Ok((padded - kernel) / stride + 1)
                };
                Shape {
                    channels: out_channels,
                    height: conv_dim(input.height)?,
                    width: conv_dim(input.width)?,
                }
            }
            LayerKind::FullyConnected { in_features, out_features } => {
                if in_features != input.flat() {
                    return Err(Error::Shape(format!(
                        "fc expects {in_features} input features, got {}",
                        input.flat()
                    )));
                }
                Shape { channels: out_features, height: 1, width: 1 }
            }
        };
        if let Some(p) = layer.pool {
            if after.height < p.window || after.width < p.window {
                return Err(Error::Shape("pool window exceeds feature map".into()));
            }
            return Ok(Shape {
                channels: after.channels,
                height: (after.height - p.window) / p.stride + 1,
                width: (after.width - p.window) / p.stride + 1,
            });
        }
        Ok(after)
    }

    /// Per-layer activation shapes, input first; also validates composition.
    pub fn activation_shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = vec![self.input];
        let mut cur = self.input;
        for layer in &self.layers {
            cur = Self::layer_output_shape(layer, cur)?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Shape(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        if self.input.channels < 1 || self.input.height < 1 || self.input.width < 1 {
            return Err(Error::Shape("input dimensions must be >= 1".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let dims_ok = match layer.kind {
                LayerKind::Conv { in_channels, out_channels, kernel, stride, .. } => {
                    in_channels >= 1 && out_channels >= 1 && kernel >= 1 && stride >= 1
                }
                LayerKind::FullyConnected { in_features, out_features } => {
                    in_features >= 1 && out_features >= 1
                }
            };
            if !dims_ok {
                return Err(Error::Shape(format!("layer {}: dimensions must be >= 1", l + 1)));
            }
            if let Some(bn) = &layer.batch_norm {
                if bn.gamma.len() != layer.fan_out() || bn.beta.len() != layer.fan_out() {
                    return Err(Error::Shape(format!(
                        "layer {}: batch-norm length {} does not match {} output channels",
                        l + 1,
                        bn.gamma.len(),
                        layer.fan_out()
                    )));
                }
            }
            if let Some(p) = layer.pool {
                if p.window < 1 || p.stride < 1 {
                    return Err(Error::Shape(format!("layer {}: pool dims must be >= 1", l + 1)));
                }
            }
        }
        let shapes = self.activation_shapes()?;
        let last = shapes.last().unwrap();
        if last.flat() != self.classes {
            return Err(Error::Shape(format!(
                "final layer produces {} outputs but spec declares {} classes",
                last.flat(),
                self.classes
            )));
        }
        Ok(())
    }
}

/// Per-layer Bernoulli parameters p_w = Pr(w = +1), shaped like the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub layers: Vec<Tensor>,
}

impl ProbabilityMap {
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "map has {} layers, spec has {}",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (l, (t, ls)) in self.layers.iter().zip(&spec.layers).enumerate() {
            if t.dims != ls.weight_dims() {
                return Err(Error::Shape(format!(
                    "layer {}: map dims {:?} do not match weight dims {:?}",
                    l + 1,
                    t.dims,
                    ls.weight_dims()
                )));
            }
            if let Some(p) = t.data.iter().find(|p| !(0.0..=1.0).contains(*p) || p.is_nan()) {
                return Err(Error::Range(format!("layer {}: p_w = {p} outside [0,1]", l + 1)));
            }
        }
        Ok(())
    }
}

/// One Monte-Carlo weight sample; entries are exactly -1 or +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryEnsemble {
    /// 1-based ensemble index in [1, N_MC].
    pub index: usize,
    pub layers: Vec<Vec<i8>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fc_layer(inf: usize, outf: usize) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::FullyConnected { in_features: inf, out_features: outf },
            batch_norm: None,
            relu: false,
            pool: None,
        }
    }

    #[test]
    fn minimal_fc_spec_validates() {
        let spec = NetworkSpec {
            version: 1,
            classes: 2,
            input: Shape { channels: 4, height: 1, width: 1 },
            layers: vec![fc_layer(4, 2)],
        };
        spec.validate().unwrap();
        assert_eq!(spec.layers.len(), 1);
    }

    #[test]
    fn non_composing_layers_rejected() {
        let spec = NetworkSpec {
            version: 1,
            classes: 2,
            input: Shape { channels: 4, height: 1, width: 1 },
            layers: vec![fc_layer(4, 3), fc_layer(4, 2)],
        };
        assert!(matches!(spec.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_shape_arithmetic() {
        let layer = LayerSpec {
            kind: LayerKind::Conv {
                in_channels: 3,
                out_channels: 8,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            batch_norm: None,
            relu: true,
            pool: None,
        };
        let out = NetworkSpec::layer_output_shape(
            &layer,
            Shape { channels: 3, height: 8, width: 8 },
        )
        .unwrap();
        assert_eq!(out, Shape { channels: 8, height: 8, width: 8 });
        assert_eq!(layer.lowered_dims(), (27, 8));
    }

    #[test]
    fn map_range_check() {
        let spec = NetworkSpec {
            version: 1,
            classes: 2,
            input: Shape { channels: 2, height: 1, width: 1 },
            layers: vec![fc_layer(2, 2)],
        };
        let map = ProbabilityMap {
            layers: vec![Tensor::from_vec(vec![2, 2], vec![0.0, 1.5, 0.5, 1.0]).unwrap()],
        };
        assert!(matches!(map.validate(&spec), Err(Error::Range(_))));
    }
}
