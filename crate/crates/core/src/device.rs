//! PCM cell physics: conductance mapping, programming/read noise,
//! power-law drift, and drift-compensation factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BatchNorm;
use crate::rng::StreamKey;

/// Device and converter parameters. All fields are calibration inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    /// Conductance ceiling (siemens).
    pub g_max: f64,
    /// Programming-noise std as a fraction of g_max.
    pub sigma_prog: f64,
    /// Read-noise std as a fraction of g_max.
    pub sigma_read: f64,
    /// Nominal drift exponent.
    pub nu_mean: f64,
    /// Device-to-device drift exponent spread.
    pub nu_sigma: f64,
    /// Drift reference time (seconds).
    pub t0: f64,
    /// Input bit-width n for bit-streamed MVM.
    pub input_bits: u32,
    /// ADC bit-width; None means ideal (full-precision column sums).
    pub adc_bits: Option<u32>,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            g_max: 25e-6,
            sigma_prog: 0.03,
            sigma_read: 0.01,
            nu_mean: 0.06,
            nu_sigma: 0.01,
            t0: 1.0,
            input_bits: 8,
            adc_bits: None,
        }
    }
}

impl DeviceConfig {
    /// Noise- and drift-free copy, for digital-equivalence checks.
    pub fn ideal() -> Self {
        DeviceConfig {
            sigma_prog: 0.0,
            sigma_read: 0.0,
            nu_mean: 0.0,
            nu_sigma: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.g_max <= 0.0 {
            return Err(Error::Range("g_max must be positive".into()));
        }
        if self.sigma_prog < 0.0 || self.sigma_read < 0.0 || self.nu_sigma < 0.0 {
            return Err(Error::Range("noise sigmas must be non-negative".into()));
        }
        if self.t0 <= 0.0 {
            return Err(Error::Range("t0 must be positive".into()));
        }
        if self.input_bits < 1 {
            return Err(Error::Range("input bit-width must be >= 1".into()));
        }
        Ok(())
    }
}

/// Differential conductance targets for a ternary weight.
pub fn weight_to_conductance(w: i8, cfg: &DeviceConfig) -> Result<(f64, f64)> {
    match w {
        1 => Ok((cfg.g_max, 0.0)),
        -1 => Ok((0.0, cfg.g_max)),
        0 => Ok((0.0, 0.0)),
        _ => Err(Error::Range(format!("weight {w} is not ternary"))),
    }
}

fn clip(g: f64, cfg: &DeviceConfig) -> f64 {
    g.clamp(0.0, cfg.g_max)
}

/// Program one device: clip(target + N(0, sigma_prog * g_max), 0, g_max).
pub fn program(target: f64, cfg: &DeviceConfig, key: StreamKey) -> Result<f64> {
    if !(0.0..=cfg.g_max).contains(&target) {
        return Err(Error::Range(format!("program target {target} outside [0, g_max]")));
    }
    if cfg.sigma_prog == 0.0 {
        return Ok(target);
    }
    Ok(clip(target + key.normal() * cfg.sigma_prog * cfg.g_max, cfg))
}

/// Drift exponent for one device, drawn once at programming time.
/// Truncated at zero so conductance never drifts upward.
pub fn sample_nu(cfg: &DeviceConfig, key: StreamKey) -> f64 {
    if cfg.nu_sigma == 0.0 {
        return cfg.nu_mean;
    }
    (cfg.nu_mean + key.normal() * cfg.nu_sigma).max(0.0)
}

/// G(t) = G0 * (t / t0)^(-nu).
pub fn drift(g0: f64, nu: f64, t: f64, t0: f64) -> Result<f64> {
    if t < t0 {
        return Err(Error::Range(format!("drift time {t} earlier than reference {t0}")));
    }
    if g0 == 0.0 || nu == 0.0 {
        return Ok(g0);
    }
    Ok(g0 * (t / t0).powf(-nu))
}

/// Read one device: clip(G + N(0, sigma_read * g_max), 0, g_max).
/// Callers derive a fresh key per read cycle.
pub fn read(g: f64, cfg: &DeviceConfig, key: StreamKey) -> f64 {
    if cfg.sigma_read == 0.0 {
        return g;
    }
    clip(g + key.normal() * cfg.sigma_read * cfg.g_max, cfg)
}

/// alpha = (t / t0)^(+nu_mean); scaling pre-neurons by alpha cancels drift
/// exactly when every device has nu = nu_mean and noise is off.
pub fn drift_compensation_factor(t: f64, t0: f64, nu_mean: f64) -> Result<f64> {
    if t < t0 {
        return Err(Error::Range(format!("compensation time {t} earlier than reference {t0}")));
    }
    Ok((t / t0).powf(nu_mean))
}

/// Fold the compensation factor into the BN scale: gamma' = alpha * gamma.
pub fn apply_compensation(bn: &BatchNorm, alpha: f64) -> BatchNorm {
    BatchNorm {
        gamma: bn.gamma.iter().map(|g| g * alpha).collect(),
        beta: bn.beta.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::domain;

    fn key(i: u64) -> StreamKey {
        StreamKey::new(1234, domain::PROGRAM).with(i)
    }

    #[test]
    fn conductance_mapping() {
        let cfg = DeviceConfig::default();
        assert_eq!(weight_to_conductance(1, &cfg).unwrap(), (25e-6, 0.0));
        assert_eq!(weight_to_conductance(-1, &cfg).unwrap(), (0.0, 25e-6));
        assert_eq!(weight_to_conductance(0, &cfg).unwrap(), (0.0, 0.0));
        assert!(weight_to_conductance(2, &cfg).is_err());
    }

    #[test]
    fn zero_sigma_programs_exactly() {
        let cfg = DeviceConfig { sigma_prog: 0.0, ..Default::default() };
        assert_eq!(program(12.5e-6, &cfg, key(0)).unwrap(), 12.5e-6);
    }

    #[test]
    fn programming_clips_at_zero() {
        let cfg = DeviceConfig { sigma_prog: 0.03, ..Default::default() };
        for i in 0..10_000 {
            let g = program(0.0, &cfg, key(i)).unwrap();
            assert!(g >= 0.0);
        }
    }

    #[test]
    fn programmed_mean_matches_clipped_gaussian() {
        // Monte-Carlo oracle for the clipped-Gaussian mean at the top rail.
        let cfg = DeviceConfig { sigma_prog: 0.03, ..Default::default() };
        let n = 100_000u64;
        let sigma = cfg.sigma_prog * cfg.g_max;
        // Oracle: independent estimate from the same distribution family
        // computed directly on clipped normal draws.
        let mut oracle = 0.0;
        for i in 0..n {
            let z = StreamKey::new(999, domain::READ).with(i).normal();
            oracle += (cfg.g_max + z * sigma).clamp(0.0, cfg.g_max);
        }
        let oracle_mean = oracle / n as f64;

        let mut sum = 0.0;
        for i in 0..n {
            sum += program(cfg.g_max, &cfg, key(i)).unwrap();
        }
        let mean = sum / n as f64;
        let bound = 3.0 * sigma / (n as f64).sqrt();
        assert!((mean - oracle_mean).abs() < bound, "{mean} vs {oracle_mean}");
    }

    #[test]
    fn drift_closed_form() {
        assert_eq!(drift(25e-6, 0.0, 1e4, 1.0).unwrap(), 25e-6);
        assert_eq!(drift(25e-6, 0.06, 1.0, 1.0).unwrap(), 25e-6);
        let g = drift(25e-6, 0.06, 1e4, 1.0).unwrap();
        let want = 25e-6 * 10f64.powf(-0.24);
        assert!((g - want).abs() < 1e-18);
        assert!((g - 14.39e-6).abs() < 0.01e-6);
        // zero stays zero; monotone non-increasing
        assert_eq!(drift(0.0, 0.06, 1e9, 1.0).unwrap(), 0.0);
        assert!(drift(25e-6, 0.06, 1e6, 1.0).unwrap() < g);
        assert!(drift(25e-6, 0.06, 0.5, 1.0).is_err());
    }

    #[test]
    fn read_noise_behaviour() {
        let cfg = DeviceConfig { sigma_read: 0.0, ..Default::default() };
        assert_eq!(read(12.5e-6, &cfg, key(0)), 12.5e-6);

        let cfg = DeviceConfig { sigma_read: 0.01, ..Default::default() };
        assert_ne!(read(12.5e-6, &cfg, key(1)), read(12.5e-6, &cfg, key(2)));

        let n = 100_000u64;
        let mut sum = 0.0;
        for i in 0..n {
            sum += read(12.5e-6, &cfg, key(i));
        }
        let mean = sum / n as f64;
        let bound = 3.0 * cfg.sigma_read * cfg.g_max / (n as f64).sqrt();
        assert!((mean - 12.5e-6).abs() < bound);
    }

    #[test]
    fn compensation_cancels_drift_exactly() {
        let alpha = drift_compensation_factor(1e4, 1.0, 0.06).unwrap();
        assert!((alpha - 10f64.powf(0.24)).abs() < 1e-12);
        assert!((alpha - 1.7378).abs() < 1e-3);
        let g = drift(25e-6, 0.06, 1e4, 1.0).unwrap();
        assert!((alpha * g - 25e-6).abs() < 1e-18);
        assert_eq!(drift_compensation_factor(1.0, 1.0, 0.06).unwrap(), 1.0);
        assert_eq!(drift_compensation_factor(1e4, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn compensation_scales_gamma_only() {
        let bn = BatchNorm { gamma: vec![1.0, -2.0], beta: vec![0.5, 0.25] };
        let same = apply_compensation(&bn, 1.0);
        assert_eq!(same, bn);
        let doubled = apply_compensation(&bn, 2.0);
        assert_eq!(doubled.gamma, vec![2.0, -4.0]);
        assert_eq!(doubled.beta, bn.beta);
    }

    #[test]
    fn nu_truncated_at_zero() {
        let cfg = DeviceConfig { nu_mean: 0.0, nu_sigma: 0.5, ..Default::default() };
        for i in 0..1000 {
            assert!(sample_nu(&cfg, key(i)) >= 0.0);
        }
    }
}
