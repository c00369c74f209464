use rand::seq::SliceRandom;

use super::FingerprintDataset;
use crate::error::{config, Result};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionStrategy {
    /// Shuffle, then split into near-equal shards (IID).
    #[default]
    Random,
    /// Contiguous stripes along the first target coordinate (non-IID).
    Spatial,
}

/// Row indices of each of `k` disjoint shards covering `0..n`. Shard sizes
/// differ by at most one.
pub fn partition_indices<T: Scalar>(
    ds: &FingerprintDataset<T>,
    k: usize,
    strategy: PartitionStrategy,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let n = ds.len();
    if n == 0 {
        return Err(config("cannot partition an empty dataset"));
    }
    if k == 0 || k > n {
        return Err(config(format!("cannot split {n} rows into {k} shards")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    match strategy {
        PartitionStrategy::Random => {
            order.shuffle(&mut stream_rng(seed, Stream::Partition, 0, 0));
        }
        PartitionStrategy::Spatial => {
            order.sort_by(|&a, &b| ds.targets[a][0].partial_cmp(&ds.targets[b][0]).unwrap_or(std::cmp::Ordering::Equal));
        }
    }
    let (base, extra) = (n / k, n % k);
    let mut shards = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        shards.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(shards)
}

pub fn partition<T: Scalar>(
    ds: &FingerprintDataset<T>,
    k: usize,
    strategy: PartitionStrategy,
    seed: u64,
) -> Result<Vec<FingerprintDataset<T>>> {
    Ok(partition_indices(ds, k, strategy, seed)?
        .iter()
        .map(|idx| ds.subset(idx))
        .collect())
}

/// Train/validation split keeping the last recording of every reference
/// point for validation.
pub fn holdout_per_reference_point<T: Scalar>(
    ds: &FingerprintDataset<T>,
) -> Result<(FingerprintDataset<T>, FingerprintDataset<T>)> {
    if ds.reference_points.len() != ds.len() || ds.is_empty() {
        return Err(config("per-reference-point holdout needs tagged rows"));
    }
    let mut last = std::collections::BTreeMap::new();
    for (i, rp) in ds.reference_points.iter().enumerate() {
        last.insert(*rp, i);
    }
    let mut is_val = vec![false; ds.len()];
    for i in last.values() {
        is_val[*i] = true;
    }
    let train: Vec<usize> = (0..ds.len()).filter(|i| !is_val[*i]).collect();
    let val: Vec<usize> = last.into_values().collect();
    Ok((ds.subset(&train), ds.subset(&val)))
}

/// Seeded random split with `round(len * fraction)` validation rows.
pub fn split_fraction<T: Scalar>(
    ds: &FingerprintDataset<T>,
    validation_fraction: f64,
    seed: u64,
) -> Result<(FingerprintDataset<T>, FingerprintDataset<T>)> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(config("validation fraction must be in [0, 1)"));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Partition, 1, 0));
    let n_val = ((ds.len() as f64) * validation_fraction).round() as usize;
    let (val, train) = order.split_at(n_val);
    Ok((ds.subset(train), ds.subset(val)))
}
