//! Lowering layers to crossbar matrix form.
//!
//! A layer's weight matrix has rows = fan-in and cols = fan-out, so inputs
//! drive crossbar rows and outputs are column sums. Convolutions are lowered
//! im2col-style: the matrix is (in_ch * k * k) x out_ch and every output
//! position becomes one MVM over a gathered input patch. Patch element order
//! is channel-major: row = ic * k * k + kh * k + kw.

use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec, Shape};
use crate::tensor::{Matrix, Tensor};

/// Flat index into the conventional weight tensor ([out,in,k,k] or [out,in])
/// for lowered-matrix element (row, col).
pub fn weight_flat_index(kind: &LayerKind, row: usize, col: usize) -> usize {
    match *kind {
        // row = ic*k*k + kh*k + kw
        LayerKind::Conv { in_channels, kernel, .. } => {
            col * in_channels * kernel * kernel + row
        }
        LayerKind::FullyConnected { in_features, .. } => col * in_features + row,
    }
}

/// Lower a probability-map layer tensor to matrix form.
pub fn lowered_probabilities(layer: &LayerSpec, tensor: &Tensor) -> Matrix<f32> {
    let (rows, cols) = layer.lowered_dims();
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m.set(r, c, tensor.data[weight_flat_index(&layer.kind, r, c)]);
        }
    }
    m
}

/// Lower a sampled ensemble layer to matrix form.
pub fn lowered_weights(layer: &LayerSpec, weights: &[i8]) -> Matrix<i8> {
    let (rows, cols) = layer.lowered_dims();
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m.set(r, c, weights[weight_flat_index(&layer.kind, r, c)]);
        }
    }
    m
}

/// MVM schedule for a lowered conv layer.
#[derive(Debug, Clone)]
pub struct ConvSchedule {
    pub out_height: usize,
    pub out_width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_shape: Shape,
}

impl ConvSchedule {
    pub fn positions(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Gather the input patch driven for output position (oy, ox).
    /// Out-of-bounds (padding) elements are zero.
    pub fn patch(&self, input: &[i64], oy: usize, ox: usize) -> Vec<i64> {
        let k = self.kernel;
        let Shape { channels, height, width } = self.in_shape;
        let mut x = vec![0i64; channels * k * k];
        for ic in 0..channels {
            for kh in 0..k {
                for kw in 0..k {
                    let iy = (oy * self.stride + kh) as isize - self.padding as isize;
                    let ix = (ox * self.stride + kw) as isize - self.padding as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < height && (ix as usize) < width {
                        x[ic * k * k + kh * k + kw] =
                            input[(ic * height + iy as usize) * width + ix as usize];
                    }
                }
            }
        }
        x
    }
}

/// Build the patch schedule for a conv layer at a given input shape.
pub fn conv_schedule(layer: &LayerSpec, in_shape: Shape) -> Result<ConvSchedule> {
    match layer.kind {
        LayerKind::Conv { in_channels, kernel, stride, padding, .. } => {
            if in_channels != in_shape.channels {
                return Err(Error::Shape(format!(
                    "conv expects {in_channels} channels, got {}",
                    in_shape.channels
                )));
            }
            let dim = |d: usize| (d + 2 * padding - kernel) / stride + 1;
            Ok(ConvSchedule {
                out_height: dim(in_shape.height),
                out_width: dim(in_shape.width),
                kernel,
                stride,
                padding,
                in_shape,
            })
        }
        LayerKind::FullyConnected { .. } => {
            Err(Error::Shape("cannot build conv schedule for fc layer".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerSpec;

    fn conv(in_ch: usize, out_ch: usize, k: usize, s: usize, p: usize) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Conv {
                in_channels: in_ch,
                out_channels: out_ch,
                kernel: k,
                stride: s,
                padding: p,
            },
            batch_norm: None,
            relu: false,
            pool: None,
        }
    }

    #[test]
    fn one_by_one_kernel_schedule() {
        let layer = conv(4, 6, 1, 1, 0);
        let s = conv_schedule(&layer, Shape { channels: 4, height: 5, width: 5 }).unwrap();
        assert_eq!(s.positions(), 25);
        assert_eq!(layer.lowered_dims(), (4, 6));
    }

    #[test]
    fn three_by_three_padded_positions() {
        let layer = conv(3, 8, 3, 1, 1);
        let s = conv_schedule(&layer, Shape { channels: 3, height: 8, width: 8 }).unwrap();
        assert_eq!(s.positions(), 64);
    }

    #[test]
    fn lowered_mvm_equals_direct_convolution() {
        // Direct nested-loop convolution as the oracle.
        let layer = conv(2, 3, 3, 1, 1);
        let in_shape = Shape { channels: 2, height: 4, width: 4 };
        let wlen: usize = layer.weight_dims().iter().product();
        let weights: Vec<i8> = (0..wlen).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
        let input: Vec<i64> = (0..in_shape.flat() as i64).map(|i| i - 10).collect();

        let sched = conv_schedule(&layer, in_shape).unwrap();
        let wm = lowered_weights(&layer, &weights);
        let mut lowered_out = vec![0i64; 3 * sched.positions()];
        for oy in 0..sched.out_height {
            for ox in 0..sched.out_width {
                let x = sched.patch(&input, oy, ox);
                for c in 0..wm.cols {
                    let mut acc = 0i64;
                    for r in 0..wm.rows {
                        acc += wm.get(r, c) as i64 * x[r];
                    }
                    lowered_out[(c * sched.out_height + oy) * sched.out_width + ox] = acc;
                }
            }
        }

        // Oracle: direct convolution over the [out,in,k,k] tensor.
        let (k, pad) = (3usize, 1isize);
        for oc in 0..3 {
            for oy in 0..4 {
                for ox in 0..4 {
                    let mut acc = 0i64;
                    for ic in 0..2 {
                        for kh in 0..k {
                            for kw in 0..k {
                                let iy = oy as isize + kh as isize - pad;
                                let ix = ox as isize + kw as isize - pad;
                                if iy >= 0 && ix >= 0 && iy < 4 && ix < 4 {
                                    let w = weights[((oc * 2 + ic) * k + kh) * k + kw] as i64;
                                    let v = input[(ic * 4 + iy as usize) * 4 + ix as usize];
                                    acc += w * v;
                                }
                            }
                        }
                    }
                    assert_eq!(acc, lowered_out[(oc * 4 + oy) * 4 + ox]);
                }
            }
        }
    }
}
