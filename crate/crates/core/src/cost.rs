//! Analytical latency, energy, and area estimation.
//!
//! The model is calibration-driven: per-cycle latency and per-row-cycle
//! energy come from a technology config, and totals are assembled from the
//! mapping geometry (tiles, replicas, packed subarrays) rather than from
//! simulation. Read latency scales linearly with driven rows; energy counts
//! row-cycles plus a peripheral term per active subarray per cycle; area
//! counts subarrays.

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, MappingMode};
use crate::error::{Error, Result};
use crate::lower::{conv_schedule, lowered_probabilities};
use crate::model::{LayerKind, NetworkSpec, ProbabilityMap};
use crate::sparsity::clamp_before_fel;
use crate::split::{map_layer_sp, split_dp_sp};

/// Technology calibration for the cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    /// One bit cycle at `base_rows` driven rows (seconds).
    pub base_latency_s: f64,
    /// Row count the base latency is calibrated at.
    pub base_rows: usize,
    /// Energy per driven row per bit cycle (joules).
    pub energy_per_row_cycle_j: f64,
    /// Converter/driver energy per active subarray per bit cycle (joules).
    pub peripheral_energy_per_cycle_j: f64,
    /// Area of one differential cell pair (m^2).
    pub cell_area_m2: f64,
    /// Converter/driver area per subarray (m^2).
    pub peripheral_area_m2: f64,
    /// Fraction of column tiles evaluated serially; 0 is fully parallel.
    pub tile_serialization: f64,
    pub technology: String,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            base_latency_s: 100e-9,
            base_rows: 128,
            energy_per_row_cycle_j: 10e-15,
            peripheral_energy_per_cycle_j: 2e-12,
            cell_area_m2: 1e-12,
            peripheral_area_m2: 5e-9,
            tile_serialization: 0.0,
            technology: "generic-pcm".into(),
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_latency_s <= 0.0 || self.base_rows == 0 {
            return Err(Error::Range("base latency and rows must be positive".into()));
        }
        if self.energy_per_row_cycle_j < 0.0
            || self.peripheral_energy_per_cycle_j < 0.0
            || self.cell_area_m2 < 0.0
            || self.peripheral_area_m2 < 0.0
        {
            return Err(Error::Range("energies and areas must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.tile_serialization) {
            return Err(Error::Range("tile serialization outside [0, 1]".into()));
        }
        Ok(())
    }

    /// One bit cycle at R driven rows: linear in R.
    pub fn t_cycle(&self, rows: usize) -> f64 {
        self.base_latency_s * rows as f64 / self.base_rows as f64
    }
}

/// Per-layer cost breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    /// 1-based layer index.
    pub layer: usize,
    /// Programmed layer instances (shared = 1, replicated = n_mc, split = 1 DP).
    pub instances: usize,
    /// Total subarrays, packed SP subarrays included.
    pub subarrays: usize,
    /// Per-image latency of this layer alone (seconds).
    pub latency_s: f64,
    /// Per-image energy (joules).
    pub energy_j: f64,
    pub area_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub mode: MappingMode,
    pub n_mc: usize,
    pub technology: String,
    pub layers: Vec<LayerCost>,
    /// Per-image latency with layers run back to back (seconds).
    pub latency_s: f64,
    /// Pipeline initiation interval: time between finished images (seconds).
    pub pipelined_interval_s: f64,
    pub fps: f64,
    pub energy_per_image_j: f64,
    pub area_m2: f64,
    /// 1 / energy-per-image (FPS per watt).
    pub power_efficiency: f64,
    /// power efficiency per area.
    pub total_efficiency: f64,
    /// latency x energy (lower is better).
    pub edp: f64,
    /// latency x energy x area (lower is better).
    pub leap: f64,
}

/// FPS at a given per-image latency.
pub fn fps_from_latency(latency_s: f64) -> f64 {
    1.0 / latency_s
}

/// FPS per watt: frames per joule.
pub fn power_efficiency(energy_per_image_j: f64) -> f64 {
    1.0 / energy_per_image_j
}

pub fn edp(latency_s: f64, energy_j: f64) -> f64 {
    latency_s * energy_j
}

pub fn leap(latency_s: f64, energy_j: f64, area_m2: f64) -> f64 {
    latency_s * energy_j * area_m2
}

struct LayerGeometry {
    rows: usize,
    row_tiles: usize,
    col_tiles: usize,
    invocations: usize,
}

fn geometry(spec: &NetworkSpec, ecfg: &EngineConfig) -> Result<Vec<LayerGeometry>> {
    let shapes = spec.activation_shapes()?;
    spec.layers
        .iter()
        .zip(&shapes)
        .map(|(layer, &in_shape)| {
            let (rows, cols) = layer.lowered_dims();
            let invocations = match layer.kind {
                LayerKind::Conv { .. } => {
                    let s = conv_schedule(layer, in_shape)?;
                    s.out_height * s.out_width
                }
                LayerKind::FullyConnected { .. } => 1,
            };
            Ok(LayerGeometry {
                rows,
                row_tiles: rows.div_ceil(ecfg.subarray_rows),
                col_tiles: cols.div_ceil(ecfg.subarray_cols),
                invocations,
            })
        })
        .collect()
}

/// Estimate per-image latency, energy, and area for one mapping mode.
pub fn estimate(
    spec: &NetworkSpec,
    map: &ProbabilityMap,
    ecfg: &EngineConfig,
    dev_input_bits: u32,
    cost: &CostConfig,
) -> Result<CostReport> {
    spec.validate()?;
    map.validate(spec)?;
    cost.validate()?;
    if ecfg.n_mc == 0 {
        return Err(Error::Range("n_mc must be >= 1".into()));
    }
    let fel0 = match ecfg.mode {
        MappingMode::Dense => 0,
        _ => {
            if ecfg.fel < 1 || ecfg.fel > spec.layers.len() {
                return Err(Error::Range(format!(
                    "fel {} outside 1..={}",
                    ecfg.fel,
                    spec.layers.len()
                )));
            }
            ecfg.fel - 1
        }
    };
    let effective_map = match ecfg.mode {
        MappingMode::Dense => map.clone(),
        _ => clamp_before_fel(map, ecfg.fel),
    };
    let n = dev_input_bits as f64;
    let geo = geometry(spec, ecfg)?;
    let mut layers = Vec::with_capacity(geo.len());
    for (l, g) in geo.iter().enumerate() {
        // worst tile height sets the cycle time; remaining row tiles run in
        // parallel, column tiles partly serialized
        let tile_rows = g.rows.min(ecfg.subarray_rows);
        let serial = 1.0 + cost.tile_serialization * (g.col_tiles as f64 - 1.0);
        let inst_latency = g.invocations as f64 * n * cost.t_cycle(tile_rows) * serial;
        let inst_subarrays = g.row_tiles * g.col_tiles;
        let inst_energy = g.invocations as f64
            * n
            * (g.rows as f64 * cost.energy_per_row_cycle_j
                + inst_subarrays as f64 * cost.peripheral_energy_per_cycle_j);
        let subarray_area = (ecfg.subarray_rows * ecfg.subarray_cols) as f64 * cost.cell_area_m2
            + cost.peripheral_area_m2;
        let inst_area = inst_subarrays as f64 * subarray_area;

        let replicated = ecfg.mode == MappingMode::Dense || l >= fel0;
        let cost_l = if !replicated {
            LayerCost {
                layer: l + 1,
                instances: 1,
                subarrays: inst_subarrays,
                latency_s: inst_latency,
                energy_j: inst_energy,
                area_m2: inst_area,
            }
        } else if ecfg.mode == MappingMode::LsRs {
            let prob = lowered_probabilities(&spec.layers[l], &effective_map.layers[l]);
            let planes = split_dp_sp(&prob);
            let sp = map_layer_sp(&planes, ecfg.subarray_rows, ecfg.subarray_cols, ecfg.n_mc)?;
            let n_sub = sp.subarray_count();
            let retained = sp.retained_rows_per_ensemble();
            // one subarray activation per (subarray, ensemble) pair it holds
            let activations: usize = sp
                .packed
                .iter()
                .flatten()
                .map(|p| {
                    let mut e: Vec<usize> = p.segments.iter().map(|s| s.ensemble).collect();
                    e.dedup();
                    e.len()
                })
                .sum();
            let sp_energy = g.invocations as f64
                * n
                * (ecfg.n_mc as f64 * retained as f64 * cost.energy_per_row_cycle_j
                    + activations as f64 * cost.peripheral_energy_per_cycle_j);
            LayerCost {
                layer: l + 1,
                instances: 1,
                subarrays: inst_subarrays + n_sub,
                // ensembles run sequentially through the shared DP plane
                latency_s: ecfg.n_mc as f64 * inst_latency,
                energy_j: ecfg.n_mc as f64 * inst_energy + sp_energy,
                area_m2: inst_area + n_sub as f64 * subarray_area,
            }
        } else {
            LayerCost {
                layer: l + 1,
                instances: ecfg.n_mc,
                subarrays: ecfg.n_mc * inst_subarrays,
                // spatial copies run in parallel
                latency_s: inst_latency,
                energy_j: ecfg.n_mc as f64 * inst_energy,
                area_m2: ecfg.n_mc as f64 * inst_area,
            }
        };
        layers.push(cost_l);
    }

    let latency_s: f64 = layers.iter().map(|l| l.latency_s).sum();
    let pipelined_interval_s = match ecfg.mode {
        // one pipeline stage per layer
        MappingMode::Dense | MappingMode::Ls => layers
            .iter()
            .map(|l| l.latency_s)
            .fold(0.0, f64::max),
        // two stages: shared prefix, then the sequential ensemble suffix
        MappingMode::LsRs => {
            let stage1: f64 = layers[..fel0].iter().map(|l| l.latency_s).sum();
            let stage2: f64 = layers[fel0..].iter().map(|l| l.latency_s).sum();
            stage1.max(stage2)
        }
    };
    let energy_per_image_j: f64 = layers.iter().map(|l| l.energy_j).sum();
    let area_m2: f64 = layers.iter().map(|l| l.area_m2).sum();
    let fps = fps_from_latency(pipelined_interval_s);
    let pe = power_efficiency(energy_per_image_j);
    Ok(CostReport {
        mode: ecfg.mode,
        n_mc: ecfg.n_mc,
        technology: cost.technology.clone(),
        layers,
        latency_s,
        pipelined_interval_s,
        fps,
        energy_per_image_j,
        area_m2,
        power_efficiency: pe,
        total_efficiency: pe / area_m2,
        edp: edp(latency_s, energy_per_image_j),
        leap: leap(latency_s, energy_per_image_j, area_m2),
    })
}
