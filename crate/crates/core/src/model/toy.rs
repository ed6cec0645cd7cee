//! Desk-scale toy model generation.
//!
//! Produces networks and probability maps whose sparsity statistics mimic a
//! trained binary Bayesian network: probabilistic synapses concentrated in
//! the deepest layers, every crossbar row almost entirely deterministic, and
//! a small fraction of rows fully deterministic.

use crate::error::{Error, Result};
use crate::lower::weight_flat_index;
use crate::rng::{domain, KeyedRng, StreamKey};
use crate::tensor::Tensor;

use super::{BatchNorm, LayerKind, LayerSpec, NetworkSpec, Pool, ProbabilityMap, Shape};

/// Targets for the generator.
#[derive(Debug, Clone)]
pub struct ToyConfig {
    /// Target probabilistic fraction n_p^l / n^l per synaptic layer.
    pub target_fracs: Vec<f64>,
    /// Maximum fraction of probabilistic entries per crossbar row.
    pub row_cap: f64,
    /// Fraction of rows forced fully deterministic.
    pub det_row_frac: f64,
}

impl ToyConfig {
    pub fn new(target_fracs: Vec<f64>) -> Self {
        ToyConfig { target_fracs, row_cap: 0.02, det_row_frac: 0.015 }
    }
}

/// Generate a probability map for `spec` matching the target sparsity profile.
///
/// Per-layer probabilistic counts land within rounding of the targets; each
/// row holds at most ceil(row_cap * cols) probabilistic entries.
pub fn generate_toy_model(
    spec: &NetworkSpec,
    cfg: &ToyConfig,
    seed: u64,
) -> Result<ProbabilityMap> {
    if cfg.target_fracs.len() != spec.layers.len() {
        return Err(Error::Shape(format!(
            "{} target fractions for {} layers",
            cfg.target_fracs.len(),
            spec.layers.len()
        )));
    }
    if let Some(f) = cfg.target_fracs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Range(format!("target fraction {f} outside [0,1]")));
    }
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (l, (layer, &frac)) in spec.layers.iter().zip(&cfg.target_fracs).enumerate() {
        let mut rng = KeyedRng::new(StreamKey::new(seed, domain::TOY).with(l as u64));
        let (rows, cols) = layer.lowered_dims();
        let n = rows * cols;
        let want = (frac * n as f64).round() as usize;

        let det_rows = (cfg.det_row_frac * rows as f64).round() as usize;
        let cap = (cfg.row_cap * cols as f64).ceil() as usize;
        let eligible = rows - det_rows.min(rows);
        if want > eligible * cap {
            return Err(Error::Infeasible(format!(
                "layer {}: {want} probabilistic synapses exceed row-cap capacity {}",
                l + 1,
                eligible * cap
            )));
        }

        let mut row_order: Vec<usize> = (0..rows).collect();
        rng.shuffle(&mut row_order);
        let eligible_rows = &row_order[det_rows.min(rows)..];

        // Candidate cells: `cap` distinct columns per eligible row, visited
        // breadth-first so every eligible row fills before any row doubles up.
        let mut per_row_cols: Vec<Vec<usize>> = Vec::with_capacity(eligible_rows.len());
        for _ in eligible_rows {
            let mut cs: Vec<usize> = (0..cols).collect();
            rng.shuffle(&mut cs);
            cs.truncate(cap);
            per_row_cols.push(cs);
        }
        let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(want);
        'fill: for slot in 0..cap {
            for (ri, &r) in eligible_rows.iter().enumerate() {
                if chosen.len() == want {
                    break 'fill;
                }
                if slot < per_row_cols[ri].len() {
                    chosen.push((r, per_row_cols[ri][slot]));
                }
            }
        }

        let mut tensor = Tensor::zeros(layer.weight_dims());
        for r in 0..rows {
            for c in 0..cols {
                let v = if rng.uniform() < 0.5 { 0.0 } else { 1.0 };
                tensor.data[weight_flat_index(&layer.kind, r, c)] = v;
            }
        }
        for &(r, c) in &chosen {
            let p = 0.2 + 0.6 * rng.uniform();
            tensor.data[weight_flat_index(&layer.kind, r, c)] = p as f32;
        }
        layers.push(tensor);
    }
    let map = ProbabilityMap { layers };
    map.validate(spec)?;
    Ok(map)
}

fn bn_for(rng: &mut KeyedRng, fan_in: usize, fan_out: usize) -> BatchNorm {
    // Random +-1 weights grow pre-neuron sums by about sqrt(fan_in), so a
    // 1/sqrt(fan_in) scale keeps activation magnitudes roughly constant
    // through the network and inside the quantizer's range.
    let gamma = (0..fan_out)
        .map(|_| (1.0 + rng.uniform()) / (fan_in as f64).sqrt())
        .collect();
    let beta = (0..fan_out).map(|_| rng.uniform() - 0.5).collect();
    BatchNorm { gamma, beta }
}

fn conv(in_ch: usize, out_ch: usize, pool: bool, rng: &mut KeyedRng) -> LayerSpec {
    LayerSpec {
        kind: LayerKind::Conv {
            in_channels: in_ch,
            out_channels: out_ch,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        batch_norm: Some(bn_for(rng, in_ch * 9, out_ch)),
        relu: true,
        pool: pool.then_some(Pool { window: 2, stride: 2 }),
    }
}

fn fc(inf: usize, outf: usize, relu: bool, rng: &mut KeyedRng) -> LayerSpec {
    LayerSpec {
        kind: LayerKind::FullyConnected { in_features: inf, out_features: outf },
        batch_norm: Some(bn_for(rng, inf, outf)),
        relu,
        pool: None,
    }
}

/// 9-synaptic-layer VGG-style toy network (6 conv + 3 fc), 10 classes.
pub fn vgg9_spec(seed: u64) -> NetworkSpec {
    let mut rng = KeyedRng::new(StreamKey::new(seed, domain::TOY).with(0xbb));
    let spec = NetworkSpec {
        version: 1,
        classes: 10,
        input: Shape { channels: 3, height: 16, width: 16 },
        layers: vec![
            conv(3, 8, false, &mut rng),
            conv(8, 8, true, &mut rng),
            conv(8, 16, false, &mut rng),
            conv(16, 16, true, &mut rng),
            conv(16, 16, false, &mut rng),
            conv(16, 16, true, &mut rng),
            fc(64, 32, true, &mut rng),
            fc(32, 32, true, &mut rng),
            fc(32, 10, false, &mut rng),
        ],
    };
    debug_assert!(spec.validate().is_ok());
    spec
}

/// Per-layer targets concentrating probabilistic mass in layers 7-9,
/// shaped like the measured layer profile of a trained network.
pub fn deep_heavy_targets() -> ToyConfig {
    ToyConfig {
        target_fracs: vec![0.0005, 0.0005, 0.0005, 0.0005, 0.0005, 0.0005, 0.02, 0.03, 0.03],
        row_cap: 0.05,
        det_row_frac: 0.015,
    }
}

/// 4-synaptic-layer toy CNN (2 conv + 2 fc), 4 classes.
pub fn small_cnn_spec(seed: u64) -> NetworkSpec {
    let mut rng = KeyedRng::new(StreamKey::new(seed, domain::TOY).with(0xcc));
    let spec = NetworkSpec {
        version: 1,
        classes: 4,
        input: Shape { channels: 3, height: 8, width: 8 },
        layers: vec![
            conv(3, 8, true, &mut rng),
            conv(8, 8, true, &mut rng),
            fc(32, 16, true, &mut rng),
            fc(16, 4, false, &mut rng),
        ],
    };
    debug_assert!(spec.validate().is_ok());
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lower::lowered_probabilities;

    fn count_probabilistic(t: &Tensor) -> usize {
        t.data.iter().filter(|&&p| p > 0.0 && p < 1.0).count()
    }

    #[test]
    fn deep_heavy_targets_concentrate_mass_in_deep_layers() {
        let spec = vgg9_spec(1);
        let cfg = deep_heavy_targets();
        let map = generate_toy_model(&spec, &cfg, 1).unwrap();
        let per_layer: Vec<usize> = map.layers.iter().map(count_probabilistic).collect();
        let total: usize = per_layer.iter().sum();
        let deep: usize = per_layer[6..].iter().sum();
        assert!(total > 0);
        assert!(
            deep as f64 / total as f64 >= 0.9,
            "deep share {deep}/{total}"
        );
    }

    #[test]
    fn per_layer_counts_near_targets() {
        let spec = vgg9_spec(2);
        let cfg = deep_heavy_targets();
        let map = generate_toy_model(&spec, &cfg, 7).unwrap();
        for (l, (t, &frac)) in map.layers.iter().zip(&cfg.target_fracs).enumerate() {
            let n = t.len();
            let want = (frac * n as f64).round();
            let got = count_probabilistic(t) as f64;
            // Exact placement; only rounding separates target and outcome.
            assert!(
                (got - want).abs() <= (0.1 * want).max(1.0),
                "layer {}: got {got}, want {want}",
                l + 1
            );
        }
    }

    #[test]
    fn zero_targets_give_fully_deterministic_map() {
        let spec = small_cnn_spec(3);
        let cfg = ToyConfig::new(vec![0.0; 4]);
        let map = generate_toy_model(&spec, &cfg, 3).unwrap();
        for t in &map.layers {
            assert!(t.data.iter().all(|&p| p == 0.0 || p == 1.0));
        }
    }

    #[test]
    fn row_cap_bounds_entries_per_row() {
        // 128-column rows with cap 0.02 allow at most 3 probabilistic entries.
        let mut rng = KeyedRng::new(StreamKey::new(0, domain::TOY));
        let spec = NetworkSpec {
            version: 1,
            classes: 128,
            input: Shape { channels: 64, height: 1, width: 1 },
            layers: vec![fc(64, 128, false, &mut rng)],
        };
        spec.validate().unwrap();
        let cfg = ToyConfig { target_fracs: vec![0.02], row_cap: 0.02, det_row_frac: 0.0 };
        let map = generate_toy_model(&spec, &cfg, 11).unwrap();
        let m = lowered_probabilities(&spec.layers[0], &map.layers[0]);
        for r in 0..m.rows {
            let cnt = m.row(r).iter().filter(|&&p| p > 0.0 && p < 1.0).count();
            assert!(cnt <= 3, "row {r} has {cnt} probabilistic entries");
        }
    }

    #[test]
    fn infeasible_targets_rejected() {
        let spec = small_cnn_spec(4);
        let cfg = ToyConfig {
            target_fracs: vec![0.9, 0.0, 0.0, 0.0],
            row_cap: 0.01,
            det_row_frac: 0.0,
        };
        assert!(matches!(
            generate_toy_model(&spec, &cfg, 0),
            Err(Error::Infeasible(_))
        ));
    }
}
