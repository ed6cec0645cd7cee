//! Layer-wise sparsity statistics, probability clamping, and FEL selection.

use crate::error::{Error, Result};
use crate::model::ProbabilityMap;

/// Per-layer probabilistic-synapse counts and ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityProfile {
    /// n^l: total synapses per layer.
    pub layer_totals: Vec<usize>,
    /// n_p^l: probabilistic synapses per layer (0 < p_w < 1).
    pub layer_probabilistic: Vec<usize>,
    /// n_p over the whole network.
    pub total_probabilistic: usize,
    /// n_d over the whole network.
    pub total_deterministic: usize,
    /// n_p^l / n^l.
    pub frac_of_layer: Vec<f64>,
    /// n_p^l / n_p; all zeros (flagged) when n_p = 0.
    pub frac_of_total: Vec<f64>,
    /// False when the map is fully deterministic and frac_of_total is meaningless.
    pub has_probabilistic: bool,
}

/// First-ensembling-layer choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FelDecision {
    /// 1-based layer index.
    pub fel: usize,
    /// Probabilistic mass at layers >= fel.
    pub cumulative_mass: f64,
    pub mass_threshold: f64,
}

/// Count probabilistic synapses per layer.
pub fn layer_stats(map: &ProbabilityMap) -> SparsityProfile {
    let layer_totals: Vec<usize> = map.layers.iter().map(|t| t.len()).collect();
    let layer_probabilistic: Vec<usize> = map
        .layers
        .iter()
        .map(|t| t.data.iter().filter(|&&p| p > 0.0 && p < 1.0).count())
        .collect();
    let total_probabilistic: usize = layer_probabilistic.iter().sum();
    let total: usize = layer_totals.iter().sum();
    let frac_of_layer = layer_totals
        .iter()
        .zip(&layer_probabilistic)
        .map(|(&n, &np)| if n > 0 { np as f64 / n as f64 } else { 0.0 })
        .collect();
    let frac_of_total = layer_probabilistic
        .iter()
        .map(|&np| {
            if total_probabilistic > 0 {
                np as f64 / total_probabilistic as f64
            } else {
                0.0
            }
        })
        .collect();
    SparsityProfile {
        layer_totals,
        layer_probabilistic,
        total_probabilistic,
        total_deterministic: total - total_probabilistic,
        frac_of_layer,
        frac_of_total,
        has_probabilistic: total_probabilistic > 0,
    }
}

/// Push near-extreme probabilities to 0 or 1: p < tau -> 0, p > 1 - tau -> 1.
pub fn clamp(map: &ProbabilityMap, tau: f64) -> Result<ProbabilityMap> {
    if !(0.0..0.5).contains(&tau) {
        return Err(Error::Range(format!("clamp threshold {tau} outside [0, 0.5)")));
    }
    let mut out = map.clone();
    for t in &mut out.layers {
        for p in &mut t.data {
            if (*p as f64) < tau {
                *p = 0.0;
            } else if (*p as f64) > 1.0 - tau {
                *p = 1.0;
            }
        }
    }
    Ok(out)
}

/// Largest layer l whose suffix mass sum_{l' >= l} n_p^l' / n_p meets the threshold.
pub fn select_fel(profile: &SparsityProfile, mass_threshold: f64) -> Result<FelDecision> {
    if !profile.has_probabilistic {
        return Err(Error::Infeasible(
            "fully deterministic network has no first ensembling layer".into(),
        ));
    }
    let n = profile.frac_of_total.len();
    let mut suffix = 0.0;
    let mut best = (1, 1.0);
    for l in (0..n).rev() {
        suffix += profile.frac_of_total[l];
        if suffix >= mass_threshold {
            best = (l + 1, suffix);
            break;
        }
    }
    Ok(FelDecision { fel: best.0, cumulative_mass: best.1, mass_threshold })
}

/// Round every probability in layers before `fel` to the nearest extreme
/// (ties at 0.5 go to 1). Layers >= fel are untouched.
pub fn clamp_before_fel(map: &ProbabilityMap, fel: usize) -> ProbabilityMap {
    let mut out = map.clone();
    for t in out.layers.iter_mut().take(fel.saturating_sub(1)) {
        for p in &mut t.data {
            *p = if *p >= 0.5 { 1.0 } else { 0.0 };
        }
    }
    out
}
