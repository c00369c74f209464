//! Fingerprint datasets: synthetic generation, CSV I/O, client partitioning
//! and feature scaling.

mod io;
mod normalize;
mod partition;
mod synth;

pub use io::{load_csv, read_csv, write_csv, write_metadata, CsvSchema, FeatureColumns};
pub use normalize::{normalize, FeatureScaler};
pub use partition::{holdout_per_reference_point, partition, partition_indices, split_fraction, PartitionStrategy};
pub use synth::{
    free_space_reference_loss, generate, path_loss_db, rssi_dbm, RssiNetworkConfig, SPEED_OF_LIGHT,
};

use crate::error::{check_dim, config, Result};
use crate::nn::Sample;
use crate::scalar::Scalar;

/// Internal marker for an access point that was not heard, in dBm.
pub const NOT_DETECTED_DBM: f64 = -200.0;

/// RSSI features (dBm) and position targets (meters), one row per recording.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FingerprintDataset<T> {
    pub features: Vec<Vec<T>>,
    pub targets: Vec<Vec<T>>,
    /// Reference point of every row; empty when unknown (loaded data).
    pub reference_points: Vec<usize>,
    pub ap_positions: Vec<[f64; 2]>,
    pub rp_positions: Vec<[f64; 2]>,
}

impl<T: Scalar> FingerprintDataset<T> {
    pub fn new(features: Vec<Vec<T>>, targets: Vec<Vec<T>>) -> Result<Self> {
        check_dim("target rows", features.len(), targets.len())?;
        let ds = Self {
            features,
            targets,
            ..Self::default()
        };
        ds.check_widths()?;
        Ok(ds)
    }

    fn check_widths(&self) -> Result<()> {
        let (ni, no) = (self.input_dim(), self.output_dim());
        for (x, y) in self.features.iter().zip(&self.targets) {
            check_dim("feature width", ni, x.len())?;
            check_dim("target width", no, y.len())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn output_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn sample(&self, i: usize) -> Sample<'_, T> {
        (&self.features[i], &self.targets[i])
    }

    /// Rows in the given order. Reference-point tags follow their rows.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
            reference_points: if self.reference_points.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| self.reference_points[i]).collect()
            },
            ap_positions: self.ap_positions.clone(),
            rp_positions: self.rp_positions.clone(),
        }
    }

    /// Union of several datasets, in order.
    pub fn concat<'a, I>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Self>,
    {
        let mut out = Self::default();
        let mut tagged = true;
        for p in parts {
            if out.is_empty() {
                out.ap_positions = p.ap_positions.clone();
                out.rp_positions = p.rp_positions.clone();
            }
            tagged &= p.reference_points.len() == p.len();
            out.features.extend(p.features.iter().cloned());
            out.targets.extend(p.targets.iter().cloned());
            out.reference_points.extend(&p.reference_points);
        }
        if !tagged {
            out.reference_points.clear();
        }
        out.check_widths()?;
        Ok(out)
    }

    /// Per-dimension `(min, max)` of the targets.
    pub fn target_bounds(&self) -> Result<(Vec<T>, Vec<T>)> {
        if self.is_empty() {
            return Err(config("target bounds of an empty dataset"));
        }
        let no = self.output_dim();
        let mut lo = vec![T::infinity(); no];
        let mut hi = vec![T::neg_infinity(); no];
        for y in &self.targets {
            for d in 0..no {
                lo[d] = lo[d].min(y[d]);
                hi[d] = hi[d].max(y[d]);
            }
        }
        Ok((lo, hi))
    }
}

/// Scaled training shards and validation set, ready for the trainers.
#[derive(Debug, Clone)]
pub struct PreparedData<T> {
    pub shards: Vec<FingerprintDataset<T>>,
    pub train: FingerprintDataset<T>,
    pub validation: FingerprintDataset<T>,
    pub scaler: FeatureScaler<T>,
}

/// Fits the feature scaler on `train` only, applies it to both sets, and
/// partitions the scaled training rows into `clients` shards.
pub fn prepare<T: Scalar>(
    train: &FingerprintDataset<T>,
    validation: &FingerprintDataset<T>,
    clients: usize,
    strategy: PartitionStrategy,
    seed: u64,
) -> Result<PreparedData<T>> {
    let (train, scaler) = normalize(train)?;
    let validation = scaler.apply(validation)?;
    let shards = partition(&train, clients, strategy, seed)?;
    Ok(PreparedData {
        shards,
        train,
        validation,
        scaler,
    })
}

/// Generates a synthetic network, holds out one recording per reference
/// point for validation, and prepares the rest for `clients` trainers.
pub fn prepare_synthetic<T: Scalar>(
    cfg: &RssiNetworkConfig,
    clients: usize,
    strategy: PartitionStrategy,
    seed: u64,
) -> Result<PreparedData<T>> {
    let ds = generate(cfg)?;
    let (train, validation) = holdout_per_reference_point(&ds)?;
    prepare(&train, &validation, clients, strategy, seed)
}
