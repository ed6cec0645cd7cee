//! Shared oracles for the integration suites: a pure-software reference
//! network implemented with direct loops (no im2col, no device model), and
//! helpers for building toy evaluation tasks.

use bbnn_sim::model::{BatchNorm, BinaryEnsemble, LayerKind, LayerSpec, NetworkSpec, Shape};
use bbnn_sim::rng::{domain, KeyedRng, StreamKey};
use bbnn_sim::tensor::Tensor;

fn quantize(v: f64, bits: u32) -> i64 {
    let (lo, hi) = if bits == 1 {
        (0i64, 1i64)
    } else {
        (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
    };
    (v.round() as i64).clamp(lo, hi)
}

/// Direct convolution over raw [out, in, k, k] weights, zero padding.
fn conv_direct(
    weights: &[i8],
    in_ch: usize,
    out_ch: usize,
    k: usize,
    stride: usize,
    padding: usize,
    x: &[i64],
    shape: Shape,
) -> (Vec<i64>, Shape) {
    let oh = (shape.height + 2 * padding - k) / stride + 1;
    let ow = (shape.width + 2 * padding - k) / stride + 1;
    let mut out = vec![0i64; out_ch * oh * ow];
    for oc in 0..out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0i64;
                for ic in 0..in_ch {
                    for kh in 0..k {
                        for kw in 0..k {
                            let iy = (oy * stride + kh) as i64 - padding as i64;
                            let ix = (ox * stride + kw) as i64 - padding as i64;
                            if iy < 0
                                || ix < 0
                                || iy >= shape.height as i64
                                || ix >= shape.width as i64
                            {
                                continue;
                            }
                            let w = weights
                                [((oc * in_ch + ic) * k + kh) * k + kw];
                            let xv = x[(ic * shape.height + iy as usize) * shape.width
                                + ix as usize];
                            acc += w as i64 * xv;
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (out, Shape { channels: out_ch, height: oh, width: ow })
}

fn fc_direct(weights: &[i8], inf: usize, outf: usize, x: &[i64]) -> Vec<i64> {
    (0..outf)
        .map(|o| (0..inf).map(|i| weights[o * inf + i] as i64 * x[i]).sum())
        .collect()
}

fn bn_relu_pool(
    pre: Vec<i64>,
    shape: Shape,
    layer: &LayerSpec,
) -> (Vec<f64>, Shape) {
    let per = shape.height * shape.width;
    let mut v: Vec<f64> = pre.iter().map(|&x| x as f64).collect();
    if let Some(BatchNorm { gamma, beta }) = &layer.batch_norm {
        for c in 0..shape.channels {
            for i in 0..per {
                v[c * per + i] = gamma[c] * v[c * per + i] + beta[c];
            }
        }
    }
    if layer.relu {
        for x in &mut v {
            *x = x.max(0.0);
        }
    }
    match layer.pool {
        None => (v, shape),
        Some(p) => {
            let oh = (shape.height - p.window) / p.stride + 1;
            let ow = (shape.width - p.window) / p.stride + 1;
            let mut out = vec![f64::NEG_INFINITY; shape.channels * oh * ow];
            for c in 0..shape.channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut m = f64::NEG_INFINITY;
                        for ky in 0..p.window {
                            for kx in 0..p.window {
                                m = m.max(
                                    v[(c * shape.height + oy * p.stride + ky) * shape.width
                                        + ox * p.stride
                                        + kx],
                                );
                            }
                        }
                        out[(c * oh + oy) * ow + ox] = m;
                    }
                }
            }
            (out, Shape { channels: shape.channels, height: oh, width: ow })
        }
    }
}

/// Reference logits for one sampled ensemble: exact integer arithmetic
/// through every layer, real-valued final logits.
pub fn reference_logits(
    spec: &NetworkSpec,
    ens: &BinaryEnsemble,
    input: &Tensor,
    bits: u32,
) -> Vec<f64> {
    let mut x: Vec<i64> = input.data.iter().map(|&v| quantize(v as f64, bits)).collect();
    let mut shape = spec.input;
    let last = spec.layers.len() - 1;
    for (l, layer) in spec.layers.iter().enumerate() {
        let w = &ens.layers[l];
        let (pre, pre_shape) = match layer.kind {
            LayerKind::Conv { in_channels, out_channels, kernel, stride, padding } => {
                conv_direct(w, in_channels, out_channels, kernel, stride, padding, &x, shape)
            }
            LayerKind::FullyConnected { in_features, out_features } => {
                let y = fc_direct(w, in_features, out_features, &x);
                (y, Shape { channels: out_features, height: 1, width: 1 })
            }
        };
        let (post, post_shape) = bn_relu_pool(pre, pre_shape, layer);
        if l == last {
            return post;
        }
        x = post.into_iter().map(|v| quantize(v, bits)).collect();
        shape = post_shape;
    }
    unreachable!()
}

/// Random integer-valued inputs in the quantizer's comfortable range.
pub fn random_inputs(spec: &NetworkSpec, count: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = KeyedRng::new(StreamKey::new(seed, domain::TOY).with(0xf00d));
    let flat = spec.input.flat();
    (0..count)
        .map(|_| {
            let data = (0..flat).map(|_| (rng.index(41) as f32) - 20.0).collect();
            Tensor::from_vec(
                vec![spec.input.channels, spec.input.height, spec.input.width],
                data,
            )
            .unwrap()
        })
        .collect()
}
