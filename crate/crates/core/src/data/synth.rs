//! Log-distance path loss with log-normal shadowing.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{FingerprintDataset, NOT_DETECTED_DBM};
use crate::error::{config, Result};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RssiNetworkConfig {
    /// Area length and width, meters.
    pub area: (f64, f64),
    pub ap_count: usize,
    pub rp_count: usize,
    /// Recordings per reference point.
    pub repetitions: usize,
    pub path_loss_exponent: f64,
    /// Shadowing standard deviation, dB.
    pub shadowing_sigma: f64,
    /// Carrier frequency, Hz.
    pub frequency: f64,
    /// dBm.
    pub tx_power: f64,
    /// Meters.
    pub reference_distance: f64,
    /// Readings below this level (dBm) are reported as not detected.
    pub sensitivity_floor: f64,
    pub seed: u64,
}

impl Default for RssiNetworkConfig {
    fn default() -> Self {
        Self {
            area: (20.0, 20.0),
            ap_count: 10,
            rp_count: 100,
            repetitions: 10,
            path_loss_exponent: 3.23,
            shadowing_sigma: 2.0,
            frequency: 2.4e9,
            tx_power: 20.0,
            reference_distance: 1.0,
            sensitivity_floor: -100.0,
            seed: 200,
        }
    }
}

impl RssiNetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let (l, w) = self.area;
        if !(l > 0.0 && w > 0.0 && l.is_finite() && w.is_finite()) {
            return Err(config(format!("area must be positive, got {l}x{w}")));
        }
        if self.ap_count == 0 || self.rp_count == 0 || self.repetitions == 0 {
            return Err(config("ap_count, rp_count and repetitions must be at least 1"));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(config("path_loss_exponent must be positive"));
        }
        if !(self.shadowing_sigma >= 0.0) {
            return Err(config("shadowing_sigma must be nonnegative"));
        }
        if !(self.reference_distance > 0.0) || !(self.frequency > 0.0) {
            return Err(config("reference_distance and frequency must be positive"));
        }
        if !(self.sensitivity_floor > NOT_DETECTED_DBM) {
            return Err(config(format!(
                "sensitivity_floor must be above the not-detected marker {NOT_DETECTED_DBM} dBm"
            )));
        }
        Ok(())
    }

    /// Grid shape `(columns, rows)` holding `rp_count` points.
    pub fn grid_shape(&self) -> (usize, usize) {
        let cols = (self.rp_count as f64).sqrt().ceil() as usize;
        let rows = self.rp_count.div_ceil(cols);
        (cols, rows)
    }
}

/// Free-space loss at the reference distance, `20log10(4 pi d0 / c) + 20log10(f)`.
pub fn free_space_reference_loss(reference_distance: f64, frequency: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * reference_distance / SPEED_OF_LIGHT).log10()
        + 20.0 * frequency.log10()
}

/// Mean path loss in dB at `distance`, clamped below at the reference distance.
pub fn path_loss_db(distance: f64, cfg: &RssiNetworkConfig) -> f64 {
    let d = distance.max(cfg.reference_distance);
    free_space_reference_loss(cfg.reference_distance, cfg.frequency)
        + 10.0 * cfg.path_loss_exponent * (d / cfg.reference_distance).log10()
}

/// Received power with a given shadowing draw, before the sensitivity floor.
pub fn rssi_dbm(distance: f64, shadowing: f64, cfg: &RssiNetworkConfig) -> f64 {
    cfg.tx_power - (path_loss_db(distance, cfg) + shadowing)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Generates `rp_count * repetitions` rows ordered by reference point, then
/// repetition. APs are placed uniformly at random, RPs at grid-cell centers.
pub fn generate<T: Scalar>(cfg: &RssiNetworkConfig) -> Result<FingerprintDataset<T>> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::Data, 0, 0);
    let (l, w) = cfg.area;
    let ap_positions: Vec<[f64; 2]> = (0..cfg.ap_count)
        .map(|_| [rng.random_range(0.0..=l), rng.random_range(0.0..=w)])
        .collect();
    let (cols, rows) = cfg.grid_shape();
    let rp_positions: Vec<[f64; 2]> = (0..cfg.rp_count)
        .map(|n| {
            let (c, r) = (n % cols, n / cols);
            [
                (c as f64 + 0.5) * l / cols as f64,
                (r as f64 + 0.5) * w / rows as f64,
            ]
        })
        .collect();

    let shadow = Normal::new(0.0, cfg.shadowing_sigma)
        .map_err(|e| config(format!("shadowing distribution: {e}")))?;
    let n_rows = cfg.rp_count * cfg.repetitions;
    let mut ds = FingerprintDataset {
        features: Vec::with_capacity(n_rows),
        targets: Vec::with_capacity(n_rows),
        reference_points: Vec::with_capacity(n_rows),
        ap_positions,
        rp_positions,
    };
    for (n, rp) in ds.rp_positions.iter().enumerate() {
        for _ in 0..cfg.repetitions {
            let row = ds
                .ap_positions
                .iter()
                .map(|ap| {
                    let v = rssi_dbm(distance(*rp, *ap), shadow.sample(&mut rng), cfg);
                    T::of(if v < cfg.sensitivity_floor { NOT_DETECTED_DBM } else { v })
                })
                .collect();
            ds.features.push(row);
            ds.targets.push(vec![T::of(rp[0]), T::of(rp[1])]);
            ds.reference_points.push(n);
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless() -> RssiNetworkConfig {
        RssiNetworkConfig {
            shadowing_sigma: 0.0,
            ..RssiNetworkConfig::default()
        }
    }

    #[test]
    fn reference_loss_at_one_meter() {
        // 20*log10(4*pi*2.4e9 / 299792458) evaluated independently: 40.05201 dB
        let pl0 = free_space_reference_loss(1.0, 2.4e9);
        assert!((pl0 - 40.05201).abs() < 1e-5, "{pl0}");
        let cfg = noiseless();
        assert!((rssi_dbm(1.0, 0.0, &cfg) - (20.0 - pl0)).abs() < 1e-12);
        assert!((rssi_dbm(1.0, 0.0, &cfg) + 20.05).abs() < 0.01);
    }

    #[test]
    fn doubling_distance_costs_ten_beta_log2() {
        let cfg = noiseless();
        let drop = rssi_dbm(3.0, 0.0, &cfg) - rssi_dbm(6.0, 0.0, &cfg);
        assert!((drop - 32.3 * 2f64.log10()).abs() < 1e-9);
        assert!((drop - 9.72).abs() < 0.01);
    }

    #[test]
    fn sub_reference_distances_are_clamped() {
        let cfg = noiseless();
        assert_eq!(rssi_dbm(0.0, 0.0, &cfg), rssi_dbm(1.0, 0.0, &cfg));
    }

    #[test]
    fn generate_shape_and_determinism() {
        let cfg = RssiNetworkConfig::default();
        let a = generate::<f64>(&cfg).unwrap();
        let b = generate::<f64>(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
        assert_eq!(a.input_dim(), 10);
        assert_eq!(a.output_dim(), 2);
        for (x, y) in a.features.iter().zip(&a.targets) {
            assert!(x.iter().all(|v| *v <= cfg.tx_power));
            assert!((0.0..=20.0).contains(&y[0]) && (0.0..=20.0).contains(&y[1]));
        }
        let c = generate::<f64>(&RssiNetworkConfig { seed: 201, ..cfg }).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn grid_layout() {
        let cfg = RssiNetworkConfig::default();
        assert_eq!(cfg.grid_shape(), (10, 10));
        let ds = generate::<f64>(&RssiNetworkConfig { repetitions: 1, ..cfg }).unwrap();
        assert_eq!(ds.rp_positions[0], [1.0, 1.0]);
        assert_eq!(ds.rp_positions[99], [19.0, 19.0]);
        let odd = RssiNetworkConfig { rp_count: 7, ..RssiNetworkConfig::default() };
        assert_eq!(odd.grid_shape(), (3, 3));
    }

    #[test]
    fn floor_maps_to_marker() {
        let cfg = RssiNetworkConfig {
            area: (2000.0, 2000.0),
            shadowing_sigma: 0.0,
            ..RssiNetworkConfig::default()
        };
        let ds = generate::<f64>(&cfg).unwrap();
        assert!(ds.features.iter().flatten().any(|v| *v == NOT_DETECTED_DBM));
        assert!(ds
            .features
            .iter()
            .flatten()
            .all(|v| *v == NOT_DETECTED_DBM || *v >= cfg.sensitivity_floor));
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            RssiNetworkConfig { area: (0.0, 20.0), ..Default::default() },
            RssiNetworkConfig { ap_count: 0, ..Default::default() },
            RssiNetworkConfig { reference_distance: 0.0, ..Default::default() },
            RssiNetworkConfig { shadowing_sigma: -1.0, ..Default::default() },
        ] {
            assert!(generate::<f64>(&cfg).is_err());
        }
    }
}
