//! Full-network inference on simulated PCM crossbars.
//!
//! Layers are lowered to crossbar matrices, programmed cell-by-cell through
//! the device model, and evaluated with bit-streamed MVMs: input bits are
//! driven one cycle at a time and the digitized differential column sums are
//! shift-added over n cycles (MSB carries negative weight, two's complement).
//! BN, ReLU, and pooling run digitally between layers; activations are
//! re-quantized to n-bit signed values at every layer boundary.

use crate::device::{
    self, weight_to_conductance, DeviceConfig,
};
use crate::error::{Error, Result};
use crate::lower::{conv_schedule, lowered_probabilities, lowered_weights, ConvSchedule};
use crate::model::{BatchNorm, BinaryEnsemble, LayerKind, LayerSpec, NetworkSpec, ProbabilityMap, Shape};
use crate::rng::{domain, StreamKey};
use crate::sparsity::clamp_before_fel;
use crate::split::{split_dp_sp, LayerSpMapping, PackedSubarray, TileDesc};
use crate::tensor::{Matrix, Tensor};

use serde::{Deserialize, Serialize};

/// Which sparsity scheme the network is mapped with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingMode {
    /// No LS or RS: every layer replicated N_MC times.
    Dense,
    /// Layer sparsity: layers before the FEL single-instance deterministic,
    /// layers at and after it replicated in space.
    Ls,
    /// Layer + row sparsity: deep layers split into DP and packed SP,
    /// ensembles evaluated sequentially.
    LsRs,
}

impl std::fmt::Display for MappingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MappingMode::Dense => "dense",
            MappingMode::Ls => "ls",
            MappingMode::LsRs => "lsrs",
        };
        f.write_str(s)
    }
}

/// Simulation knobs for programming and inference.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: MappingMode,
    pub n_mc: usize,
    /// 1-based first ensembling layer; ignored in dense mode.
    pub fel: usize,
    pub subarray_rows: usize,
    pub subarray_cols: usize,
    /// Evaluation time t (seconds); t = t0 means no drift.
    pub drift_time: f64,
    pub compensate: bool,
    pub seed: u64,
}

impl EngineConfig {
    pub fn new(mode: MappingMode, n_mc: usize, fel: usize) -> Self {
        EngineConfig {
            mode,
            n_mc,
            fel,
            subarray_rows: 128,
            subarray_cols: 128,
            drift_time: 1.0,
            compensate: false,
            seed: 0,
        }
    }
}

/// N_MC per-ensemble class-probability vectors plus their Eq.-1 marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSet {
    pub predictors: Vec<Vec<f64>>,
    /// Raw per-ensemble logits, kept for diagnostics.
    pub logits: Vec<Vec<f64>>,
}

impl PredictorSet {
    /// Arithmetic mean of the predictors.
    pub fn marginal(&self) -> Vec<f64> {
        let n = self.predictors.len();
        let c = self.predictors[0].len();
        let mut m = vec![0.0; c];
        for p in &self.predictors {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += pi;
            }
        }
        for mi in &mut m {
            *mi /= n as f64;
        }
        m
    }

    pub fn predicted_class(&self) -> usize {
        let m = self.marginal();
        m.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    }
}

/// One programmed differential cell: targets, per-device drift exponents,
/// and the conductances already evaluated at the run's drift time.
#[derive(Debug, Clone, Copy)]
struct Cell {
    gp_t: f64,
    gm_t: f64,
}

#[derive(Debug, Clone)]
struct ProgrammedTile {
    tile: TileDesc,
    cells: Vec<Cell>,
}

#[derive(Debug, Clone)]
struct ProgrammedMatrix {
    rows: usize,
    cols: usize,
    tiles: Vec<ProgrammedTile>,
    /// Unique id feeding the read-noise streams.
    uid: u64,
}

#[derive(Debug, Clone)]
struct SpSubarray {
    tile_index: usize,
    packed: PackedSubarray,
    /// rows x tile.cols cells; unoccupied rows are never driven.
    cells: Vec<Cell>,
    cols: usize,
    uid: u64,
}

#[derive(Debug, Clone)]
enum LayerMapping {
    Shared(ProgrammedMatrix),
    Replicated(Vec<ProgrammedMatrix>),
    SplitPlane {
        dp: ProgrammedMatrix,
        sp_map: LayerSpMapping,
        sp: Vec<SpSubarray>,
    },
}

#[derive(Debug, Clone)]
struct LayerState {
    spec: LayerSpec,
    sched: Option<ConvSchedule>,
    mapping: LayerMapping,
}

/// The programmed chip: every mapped cell has been through the device model.
#[derive(Debug, Clone)]
pub struct AnalogState {
    pub spec: NetworkSpec,
    pub device: DeviceConfig,
    pub cfg: EngineConfig,
    /// Drift-compensation factor applied via BN scaling (1.0 when off).
    pub alpha: f64,
    /// 1-based layers that lack BN and therefore cannot be compensated.
    pub uncompensated: Vec<usize>,
    layers: Vec<LayerState>,
}

impl AnalogState {
    /// Number of programmed layer instances (SP subarrays not included).
    pub fn layer_instance_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match &l.mapping {
                LayerMapping::Shared(_) => 1,
                LayerMapping::Replicated(v) => v.len(),
                LayerMapping::SplitPlane { .. } => 1,
            })
            .sum()
    }

    /// Total packed SP subarrays across all split layers.
    pub fn sp_subarray_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match &l.mapping {
                LayerMapping::SplitPlane { sp, .. } => sp.len(),
                _ => 0,
            })
            .sum()
    }
}

struct Programmer<'a> {
    dev: &'a DeviceConfig,
    seed: u64,
    drift_time: f64,
    next_uid: u64,
}

impl<'a> Programmer<'a> {
    fn program_cell(&self, uid: u64, cell_idx: usize, w: i8) -> Result<Cell> {
        let (tp, tm) = weight_to_conductance(w, self.dev)?;
        let base = StreamKey::new(self.seed, domain::PROGRAM).with(uid).with(cell_idx as u64);
        let nu_base = StreamKey::new(self.seed, domain::DRIFT_NU).with(uid).with(cell_idx as u64);
        let gp = device::program(tp, self.dev, base.with(0))?;
        let gm = device::program(tm, self.dev, base.with(1))?;
        let nup = device::sample_nu(self.dev, nu_base.with(0));
        let num = device::sample_nu(self.dev, nu_base.with(1));
        Ok(Cell {
            gp_t: device::drift(gp, nup, self.drift_time, self.dev.t0)?,
            gm_t: device::drift(gm, num, self.drift_time, self.dev.t0)?,
        })
    }

    fn program_matrix(
        &mut self,
        weights: &Matrix<i8>,
        sub_rows: usize,
        sub_cols: usize,
    ) -> Result<ProgrammedMatrix> {
        let uid = self.next_uid;
        self.next_uid += 1;
        let tiles = crate::split::tile(weights.rows, weights.cols, sub_rows, sub_cols);
        let mut programmed = Vec::with_capacity(tiles.len());
        for t in &tiles {
            let mut cells = Vec::with_capacity(t.rows * t.cols);
            for r in 0..t.rows {
                for c in 0..t.cols {
                    let w = weights.get(t.row0 + r, t.col0 + c);
                    cells.push(self.program_cell(uid, (t.row0 + r) * weights.cols + t.col0 + c, w)?);
                }
            }
            programmed.push(ProgrammedTile { tile: *t, cells });
        }
        Ok(ProgrammedMatrix { rows: weights.rows, cols: weights.cols, tiles: programmed, uid })
    }

    fn program_sp(
        &mut self,
        sp_map: &LayerSpMapping,
        ensembles: &[Matrix<i8>],
        sub_rows: usize,
    ) -> Result<Vec<SpSubarray>> {
        let mut out = Vec::new();
        for (tile_index, (sq, packs)) in sp_map.squeezed.iter().zip(&sp_map.packed).enumerate() {
            for pack in packs {
                let uid = self.next_uid;
                self.next_uid += 1;
                let cols = sq.tile.cols;
                let mut cells = vec![Cell { gp_t: 0.0, gm_t: 0.0 }; sub_rows * cols];
                for seg in &pack.segments {
                    let ens = &ensembles[seg.ensemble - 1];
                    for (off, j) in (seg.gather_lo..seg.gather_hi).enumerate() {
                        let sub_r = seg.subarray_row0 + off;
                        // dense squeezed row: sampled values at template
                        // positions, zero elsewhere
                        let mut row = vec![0i8; cols];
                        for e in &sq.entries[sq.row_ptr[j]..sq.row_ptr[j + 1]] {
                            row[e.local_col] = ens.get(e.abs_row, e.abs_col);
                        }
                        for (c, &w) in row.iter().enumerate() {
                            cells[sub_r * cols + c] =
                                self.program_cell(uid, sub_r * cols + c, w)?;
                        }
                    }
                }
                out.push(SpSubarray { tile_index, packed: pack.clone(), cells, cols, uid });
            }
        }
        Ok(out)
    }
}

/// Map and program the whole network for the chosen mode.
///
/// Dense programs N_MC copies of every layer; LS programs one copy of layers
/// before the FEL and N_MC copies from it onward; LS+RS programs one DP copy
/// plus packed SP subarrays for the deep layers.
pub fn program_network(
    spec: &NetworkSpec,
    map: &ProbabilityMap,
    ensembles: &[BinaryEnsemble],
    cfg: &EngineConfig,
    dev: &DeviceConfig,
) -> Result<AnalogState> {
    spec.validate()?;
    map.validate(spec)?;
    dev.validate()?;
    if ensembles.len() != cfg.n_mc {
        return Err(Error::Shape(format!(
            "{} ensembles supplied for n_mc = {}",
            ensembles.len(),
            cfg.n_mc
        )));
    }
    if cfg.drift_time < dev.t0 {
        return Err(Error::Range("drift time earlier than t0".into()));
    }
    let fel0 = match cfg.mode {
        MappingMode::Dense => 0,
        MappingMode::Ls | MappingMode::LsRs => {
            if cfg.fel < 1 || cfg.fel > spec.layers.len() {
                return Err(Error::Range(format!("fel {} outside 1..={}", cfg.fel, spec.layers.len())));
            }
            cfg.fel - 1
        }
    };
    let effective_map = match cfg.mode {
        MappingMode::Dense => map.clone(),
        _ => clamp_before_fel(map, cfg.fel),
    };

    let alpha = if cfg.compensate {
        device::drift_compensation_factor(cfg.drift_time, dev.t0, dev.nu_mean)?
    } else {
        1.0
    };
    let mut uncompensated = Vec::new();
    if cfg.compensate {
        for (l, layer) in spec.layers.iter().enumerate() {
            if layer.batch_norm.is_none() {
                uncompensated.push(l + 1);
            }
        }
    }

    let shapes = spec.activation_shapes()?;
    let mut prog = Programmer { dev, seed: cfg.seed, drift_time: cfg.drift_time, next_uid: 0 };
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (l, layer) in spec.layers.iter().enumerate() {
        let in_shape = shapes[l];
        let sched = match layer.kind {
            LayerKind::Conv { .. } => Some(conv_schedule(layer, in_shape)?),
            LayerKind::FullyConnected { .. } => None,
        };
        let lowered_ens: Vec<Matrix<i8>> = ensembles
            .iter()
            .map(|e| lowered_weights(layer, &e.layers[l]))
            .collect();
        let mapping = if cfg.mode == MappingMode::Dense || l >= fel0 {
            match cfg.mode {
                MappingMode::LsRs => {
                    let prob = lowered_probabilities(layer, &effective_map.layers[l]);
                    let planes = split_dp_sp(&prob);
                    let sp_map = crate::split::map_layer_sp(
                        &planes,
                        cfg.subarray_rows,
                        cfg.subarray_cols,
                        cfg.n_mc,
                    )?;
                    let dp = prog.program_matrix(&planes.det, cfg.subarray_rows, cfg.subarray_cols)?;
                    let sp = prog.program_sp(&sp_map, &lowered_ens, cfg.subarray_rows)?;
                    LayerMapping::SplitPlane { dp, sp_map, sp }
                }
                _ => {
                    let instances = lowered_ens
                        .iter()
                        .map(|w| prog.program_matrix(w, cfg.subarray_rows, cfg.subarray_cols))
                        .collect::<Result<Vec<_>>>()?;
                    LayerMapping::Replicated(instances)
                }
            }
        } else {
            // pre-FEL: single deterministic instance from the clamped map
            let prob = lowered_probabilities(layer, &effective_map.layers[l]);
            let planes = split_dp_sp(&prob);
            debug_assert!(planes.template.is_empty(), "pre-FEL layer still probabilistic");
            let shared = prog.program_matrix(&planes.det, cfg.subarray_rows, cfg.subarray_cols)?;
            LayerMapping::Shared(shared)
        };
        layers.push(LayerState { spec: layer.clone(), sched, mapping });
    }
    Ok(AnalogState {
        spec: spec.clone(),
        device: dev.clone(),
        cfg: cfg.clone(),
        alpha,
        uncompensated,
        layers,
    })
}

/// Context for one MVM invocation's read-noise streams.
#[derive(Clone, Copy)]
struct ReadCtx {
    key: StreamKey,
    noisy: bool,
}

fn adc_quantize(v: f64, full_scale: f64, bits: Option<u32>) -> f64 {
    match bits {
        None => v,
        Some(b) => {
            let half = ((1u64 << (b - 1)) - 1) as f64;
            let clamped = (v / full_scale).clamp(-1.0, 1.0);
            (clamped * half).round() / half * full_scale
        }
    }
}

/// Bit-streamed MVM over one subarray's cells. `driven` pairs a local row
/// with its n-bit signed input value. Returns column sums in weight units.
fn bitstream_mvm(
    cells: &[Cell],
    cols: usize,
    driven: &[(usize, i64)],
    dev: &DeviceConfig,
    ctx: ReadCtx,
    uid: u64,
) -> Result<Vec<f64>> {
    let n = dev.input_bits;
    let lo = if n == 1 { 0 } else { -(1i64 << (n - 1)) };
    let hi = if n == 1 { 1 } else { (1i64 << (n - 1)) - 1 };
    if let Some(&(_, x)) = driven.iter().find(|(_, x)| *x < lo || *x > hi) {
        return Err(Error::Range(format!("input {x} exceeds {n}-bit signed range")));
    }
    let mask = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut acc = vec![0.0f64; cols];
    let mut col_sum = vec![0.0f64; cols];
    for b in 0..n {
        let bitweight = if n > 1 && b == n - 1 {
            -((1i64 << b) as f64)
        } else {
            (1i64 << b) as f64
        };
        col_sum.iter_mut().for_each(|v| *v = 0.0);
        for &(r, x) in driven {
            if (x as u64 & mask) >> b & 1 == 0 {
                continue;
            }
            let row_cells = &cells[r * cols..(r + 1) * cols];
            if ctx.noisy {
                let row_key = ctx.key.with(uid).with(b as u64).with(r as u64);
                for (c, cell) in row_cells.iter().enumerate() {
                    let k = row_key.with(c as u64);
                    let gp = device::read(cell.gp_t, dev, k.with(0));
                    let gm = device::read(cell.gm_t, dev, k.with(1));
                    col_sum[c] += (gp - gm) / dev.g_max;
                }
            } else {
                // normalized per cell so ideal weights contribute exact units
                for (c, cell) in row_cells.iter().enumerate() {
                    col_sum[c] += (cell.gp_t - cell.gm_t) / dev.g_max;
                }
            }
        }
        let full_scale = driven.len().max(1) as f64;
        for c in 0..cols {
            let v = adc_quantize(col_sum[c], full_scale, dev.adc_bits);
            acc[c] += bitweight * v;
        }
    }
    Ok(acc)
}

fn matrix_mvm(
    m: &ProgrammedMatrix,
    x: &[i64],
    dev: &DeviceConfig,
    ctx: ReadCtx,
) -> Result<Vec<f64>> {
    if x.len() != m.rows {
        return Err(Error::Shape(format!("input length {} for {} rows", x.len(), m.rows)));
    }
    let mut y = vec![0.0f64; m.cols];
    for pt in &m.tiles {
        let driven: Vec<(usize, i64)> =
            (0..pt.tile.rows).map(|r| (r, x[pt.tile.row0 + r])).collect();
        let part = bitstream_mvm(&pt.cells, pt.tile.cols, &driven, dev, ctx, m.uid)?;
        for (c, v) in part.into_iter().enumerate() {
            y[pt.tile.col0 + c] += v;
        }
    }
    Ok(y)
}

fn sp_analog_mvm(
    sp_map: &LayerSpMapping,
    sp: &[SpSubarray],
    x: &[i64],
    ensemble: usize,
    total_cols: usize,
    dev: &DeviceConfig,
    ctx: ReadCtx,
) -> Result<Vec<f64>> {
    let mut y = vec![0.0f64; total_cols];
    for sub in sp {
        let sq = &sp_map.squeezed[sub.tile_index];
        let segs: Vec<_> = sub.packed.segments.iter().filter(|s| s.ensemble == ensemble).collect();
        if segs.is_empty() {
            continue;
        }
        let mut driven = Vec::new();
        for seg in segs {
            for (off, j) in (seg.gather_lo..seg.gather_hi).enumerate() {
                driven.push((seg.subarray_row0 + off, x[sq.tile.row0 + sq.gather[j]]));
            }
        }
        let part = bitstream_mvm(&sub.cells, sub.cols, &driven, dev, ctx, sub.uid)?;
        for (c, v) in part.into_iter().enumerate() {
            y[sq.tile.col0 + c] += v;
        }
    }
    Ok(y)
}

fn quantize_activation(v: f64, bits: u32) -> i64 {
    let (lo, hi) = if bits == 1 {
        (0i64, 1i64)
    } else {
        (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
    };
    (v.round() as i64).clamp(lo, hi)
}

fn max_pool(data: &[f64], shape: Shape, pool: crate::model::Pool) -> (Vec<f64>, Shape) {
    let oh = (shape.height - pool.window) / pool.stride + 1;
    let ow = (shape.width - pool.window) / pool.stride + 1;
    let mut out = vec![f64::NEG_INFINITY; shape.channels * oh * ow];
    for c in 0..shape.channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for ky in 0..pool.window {
                    for kx in 0..pool.window {
                        let iy = oy * pool.stride + ky;
                        let ix = ox * pool.stride + kx;
                        m = m.max(data[(c * shape.height + iy) * shape.width + ix]);
                    }
                }
                out[(c * oh + oy) * ow + ox] = m;
            }
        }
    }
    (out, Shape { channels: shape.channels, height: oh, width: ow })
}

/// Digital post-processing shared by all modes: optional drift compensation
/// folded into BN, then BN, ReLU, pooling. Returns real-valued activations.
fn digital_post(
    pre: Vec<f64>,
    shape: Shape,
    layer: &LayerSpec,
    alpha: f64,
) -> (Vec<f64>, Shape) {
    let bn = layer.batch_norm.as_ref().map(|b| {
        if alpha != 1.0 {
            device::apply_compensation(b, alpha)
        } else {
            b.clone()
        }
    });
    let per_channel = shape.height * shape.width;
    let mut v = pre;
    if let Some(BatchNorm { gamma, beta }) = &bn {
        for c in 0..shape.channels {
            for i in 0..per_channel {
                let idx = c * per_channel + i;
                v[idx] = gamma[c] * v[idx] + beta[c];
            }
        }
    }
    if layer.relu {
        for x in &mut v {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
    }
    match layer.pool {
        Some(p) => max_pool(&v, shape, p),
        None => (v, shape),
    }
}

impl AnalogState {
    /// Analog pre-neuron sums for one layer and ensemble.
    fn layer_pre(
        &self,
        l: usize,
        input: &[i64],
        ensemble: usize,
        input_index: u64,
    ) -> Result<(Vec<f64>, Shape)> {
        let ls = &self.layers[l];
        let ctx_base = StreamKey::new(self.cfg.seed, domain::READ)
            .with(input_index)
            .with(l as u64);
        let noisy = self.device.sigma_read > 0.0;
        let mvm = |x: &[i64], invocation: u64| -> Result<Vec<f64>> {
            let ctx = ReadCtx { key: ctx_base.with(invocation), noisy };
            match &ls.mapping {
                LayerMapping::Shared(m) => matrix_mvm(m, x, &self.device, ctx),
                LayerMapping::Replicated(v) => {
                    let m = v.get(ensemble - 1).ok_or_else(|| {
                        Error::Range(format!("ensemble {ensemble} not programmed"))
                    })?;
                    matrix_mvm(m, x, &self.device, ctx)
                }
                LayerMapping::SplitPlane { dp, sp_map, sp } => {
                    let mut y = matrix_mvm(dp, x, &self.device, ctx)?;
                    let ys =
                        sp_analog_mvm(sp_map, sp, x, ensemble, dp.cols, &self.device, ctx)?;
                    for (a, b) in y.iter_mut().zip(ys) {
                        *a += b;
                    }
                    Ok(y)
                }
            }
        };
        match &ls.sched {
            Some(s) => {
                let (_, cols) = ls.spec.lowered_dims();
                let (oh, ow) = (s.out_height, s.out_width);
                let mut out = vec![0.0f64; cols * oh * ow];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let x = s.patch(input, oy, ox);
                        let y = mvm(&x, (oy * ow + ox) as u64)?;
                        for (c, v) in y.into_iter().enumerate() {
                            out[(c * oh + oy) * ow + ox] = v;
                        }
                    }
                }
                Ok((out, Shape { channels: cols, height: oh, width: ow }))
            }
            None => {
                let y = mvm(input, 0)?;
                let c = y.len();
                Ok((y, Shape { channels: c, height: 1, width: 1 }))
            }
        }
    }

    /// Run one layer end to end (MVM, compensation, BN, ReLU, pool) and
    /// quantize back to n-bit signed activations.
    pub fn run_layer(
        &self,
        l: usize,
        input: &[i64],
        ensemble: usize,
        input_index: u64,
    ) -> Result<Vec<i64>> {
        let (pre, shape) = self.layer_pre(l, input, ensemble, input_index)?;
        let (post, _) = digital_post(pre, shape, &self.layers[l].spec, self.alpha);
        let bits = self.device.input_bits;
        Ok(post.into_iter().map(|v| quantize_activation(v, bits)).collect())
    }

    /// Final-layer logits (real-valued, no re-quantization).
    fn run_last_layer(
        &self,
        l: usize,
        input: &[i64],
        ensemble: usize,
        input_index: u64,
    ) -> Result<Vec<f64>> {
        let (pre, shape) = self.layer_pre(l, input, ensemble, input_index)?;
        let (post, _) = digital_post(pre, shape, &self.layers[l].spec, self.alpha);
        Ok(post)
    }

    /// Full-network inference for one input: N_MC predictors plus marginal.
    /// In LS/LS+RS modes the pre-FEL activations are computed once and
    /// shared across ensembles.
    pub fn run_inference(&self, input: &Tensor, input_index: u64) -> Result<PredictorSet> {
        let bits = self.device.input_bits;
        let x0: Vec<i64> = input.data.iter().map(|&v| quantize_activation(v as f64, bits)).collect();
        if x0.len() != self.spec.input.flat() {
            return Err(Error::Shape("input does not match spec input shape".into()));
        }
        let last = self.layers.len() - 1;
        let fel0 = match self.cfg.mode {
            MappingMode::Dense => 0,
            _ => self.cfg.fel - 1,
        };
        // shared prefix (ensemble-independent by construction)
        let mut prefix = x0;
        for l in 0..fel0.min(last) {
            prefix = self.run_layer(l, &prefix, 1, input_index)?;
        }
        let mut logits = Vec::with_capacity(self.cfg.n_mc);
        for i in 1..=self.cfg.n_mc {
            let mut x = prefix.clone();
            for l in fel0..last {
                x = self.run_layer(l, &x, i, input_index)?;
            }
            logits.push(self.run_last_layer(last, &x, i, input_index)?);
        }
        let predictors = logits.iter().map(|l| softmax(l)).collect();
        Ok(PredictorSet { predictors, logits })
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}
