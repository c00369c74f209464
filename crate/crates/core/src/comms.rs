//! Uplink bit counts, the Shannon per-device bit budget, and a simple
//! energy model. Bit counts are exact integers; energies are model-based.

use crate::error::{config, Result};
use crate::nn::Dims;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommsConfig {
    /// Bits used to encode one transmitted real value.
    pub bits_resolution: u64,
    /// Channel uses available per transmission.
    pub channels: u64,
    /// Maximum transmit power, watts.
    pub max_power: f64,
    pub channel_gain: f64,
    /// Joules per transmitted bit.
    pub energy_per_bit: f64,
    /// Joules per parameter per optimizer step.
    pub energy_per_param_update: f64,
}

impl Default for CommsConfig {
    fn default() -> Self {
        Self {
            bits_resolution: 32,
            channels: 100_000,
            max_power: 1.0,
            channel_gain: 1.0,
            energy_per_bit: 50e-9,
            energy_per_param_update: 1e-12,
        }
    }
}

impl CommsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits_resolution == 0 || self.channels == 0 {
            return Err(config("bits_resolution and channels must be positive"));
        }
        for (name, v) in [
            ("max_power", self.max_power),
            ("channel_gain", self.channel_gain),
            ("energy_per_bit", self.energy_per_bit),
            ("energy_per_param_update", self.energy_per_param_update),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Per-device budget when `devices` share the channel.
    pub fn budget_bits(&self, devices: u64) -> f64 {
        shannon_max_bits(self.channels, devices, self.channel_gain, self.max_power)
    }
}

/// `S * No * R`: one R-bit value per (segment, output dimension).
pub fn fd_bits_per_client_round(segments: u64, outputs: u64, resolution: u64) -> u64 {
    segments * outputs * resolution
}

/// `W * R` with `W = Ni*Nh + Nh + Nh*No + No`.
pub fn fl_bits_per_client_round(inputs: u64, hidden: u64, outputs: u64, resolution: u64) -> u64 {
    fl_param_count(inputs, hidden, outputs) * resolution
}

pub fn fl_param_count(inputs: u64, hidden: u64, outputs: u64) -> u64 {
    inputs * hidden + hidden + hidden * outputs + outputs
}

/// Bits needed to transmit `values` reals at `resolution` bits each.
pub fn payload_bits(values: usize, resolution: u64) -> u64 {
    values as u64 * resolution
}

pub fn bit_ratio(numerator: u64, denominator: u64) -> f64 {
    numerator as f64 / denominator as f64
}

/// `(T / C) * log2(1 + C * |h|^2 * P)`.
pub fn shannon_max_bits(channels: u64, devices: u64, channel_gain: f64, power: f64) -> f64 {
    let c = devices as f64;
    (channels as f64 / c) * (1.0 + c * channel_gain * power).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("payload of {payload_bits} bits does not fit the budget of {budget_bits} bits")]
pub struct BudgetViolation {
    pub payload_bits: u64,
    pub budget_bits: f64,
}

/// Passes iff `payload < budget` (strict).
pub fn check_budget(payload_bits: u64, budget_bits: f64) -> Result<(), BudgetViolation> {
    if (payload_bits as f64) < budget_bits {
        Ok(())
    } else {
        Err(BudgetViolation {
            payload_bits,
            budget_bits,
        })
    }
}

/// `(E_C + E_T) * N_T`.
pub fn total_energy(compute_per_round: f64, transmit_per_round: f64, rounds: u64) -> f64 {
    (compute_per_round + transmit_per_round) * rounds as f64
}

/// `E_T`: bits times joules per bit.
pub fn transmit_energy(bits: u64, cfg: &CommsConfig) -> f64 {
    bits as f64 * cfg.energy_per_bit
}

/// `E_C`: parameters times optimizer steps times joules per parameter update.
pub fn compute_energy(params: u64, steps: u64, cfg: &CommsConfig) -> f64 {
    params as f64 * steps as f64 * cfg.energy_per_param_update
}

/// Checks `S * No < W`: the distilled payload must be lighter than the model.
pub fn check_lightweight(dims: Dims, segments: usize) -> Result<()> {
    let fd = segments as u64 * dims.outputs as u64;
    let w = dims.param_count();
    if fd < w {
        Ok(())
    } else {
        Err(config(format!(
            "distilled payload of {fd} values is not smaller than the {w} model parameters"
        )))
    }
}
