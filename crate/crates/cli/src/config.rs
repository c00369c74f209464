//! Experiment configuration: a TOML document with one table per concern.
//! Every field except the data source and the segment count has a default;
//! [`ExperimentConfig::to_toml`] spells all of them out.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fdreg::comms::CommsConfig;
use fdreg::data::{CsvSchema, FeatureColumns, PartitionStrategy, RssiNetworkConfig};
use fdreg::nn::AdamConfig;
use fdreg::protocol::TrainingSchedule;
use fdreg::segmentation::SplitStrategy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fd,
    Fl,
    Standalone,
    Centralized,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Fd => "fd",
            Scheme::Fl => "fl",
            Scheme::Standalone => "standalone",
            Scheme::Centralized => "centralized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    #[default]
    Random,
    Spatial,
}

impl From<Partition> for PartitionStrategy {
    fn from(p: Partition) -> Self {
        match p {
            Partition::Random => PartitionStrategy::Random,
            Partition::Spatial => PartitionStrategy::Spatial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Uniform,
    Density,
}

impl From<Split> for SplitStrategy {
    fn from(s: Split) -> Self {
        match s {
            Split::Uniform => SplitStrategy::Uniform,
            Split::Density => SplitStrategy::Density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Seeds data generation, partitioning, initialization and shuffling.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub segments: SegmentsConfig,
    #[serde(default)]
    pub comms: CommsSection,
    #[serde(default, skip_serializing_if = "SweepConfig::is_empty")]
    pub sweep: SweepConfig,
}

fn default_scheme() -> Scheme {
    Scheme::Fd
}
fn default_seed() -> u64 {
    200
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_clients")]
    pub clients: usize,
    #[serde(default)]
    pub partition: Partition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvConfig>,
}

fn default_clients() -> usize {
    5
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            clients: default_clients(),
            partition: Partition::default(),
            synthetic: None,
            csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub area_length: f64,
    pub area_width: f64,
    pub ap_count: usize,
    pub rp_count: usize,
    pub repetitions: usize,
    pub path_loss_exponent: f64,
    pub shadowing_sigma: f64,
    pub frequency: f64,
    pub tx_power: f64,
    pub reference_distance: f64,
    pub sensitivity_floor: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let d = RssiNetworkConfig::default();
        Self {
            area_length: d.area.0,
            area_width: d.area.1,
            ap_count: d.ap_count,
            rp_count: d.rp_count,
            repetitions: d.repetitions,
            path_loss_exponent: d.path_loss_exponent,
            shadowing_sigma: d.shadowing_sigma,
            frequency: d.frequency,
            tx_power: d.tx_power,
            reference_distance: d.reference_distance,
            sensitivity_floor: d.sensitivity_floor,
        }
    }
}

impl SyntheticConfig {
    pub fn network(&self, seed: u64) -> RssiNetworkConfig {
        RssiNetworkConfig {
            area: (self.area_length, self.area_width),
            ap_count: self.ap_count,
            rp_count: self.rp_count,
            repetitions: self.repetitions,
            path_loss_exponent: self.path_loss_exponent,
            shadowing_sigma: self.shadowing_sigma,
            frequency: self.frequency,
            tx_power: self.tx_power,
            reference_distance: self.reference_distance,
            sensitivity_floor: self.sensitivity_floor,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvConfig {
    /// Relative paths are taken from the config file's directory.
    pub train: PathBuf,
    /// Without a validation file, a random fraction of `train` is held out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PathBuf>,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_prefix: Option<String>,
    #[serde(default = "default_targets")]
    pub target_columns: Vec<String>,
    /// Raw feature value meaning "access point not heard".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_detected: Option<f64>,
}

fn default_validation_fraction() -> f64 {
    0.2
}
fn default_targets() -> Vec<String> {
    vec!["x".into(), "y".into()]
}

impl CsvConfig {
    pub fn schema(&self) -> CsvSchema {
        let feature_columns = match (&self.feature_columns, &self.feature_prefix) {
            (Some(names), _) => FeatureColumns::Named(names.clone()),
            (None, Some(p)) => FeatureColumns::Prefix(p.clone()),
            (None, None) => FeatureColumns::Prefix("rssi_".into()),
        };
        CsvSchema {
            feature_columns,
            target_columns: self.target_columns.clone(),
            not_detected: self.not_detected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Inferred from the data when absent; checked against it when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<usize>,
}

fn default_hidden() -> usize {
    1000
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            inputs: None,
            outputs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let s = TrainingSchedule::<f64>::default();
        Self {
            rounds: s.rounds,
            local_epochs: s.local_epochs,
            warmup_epochs: s.warmup_epochs,
            batch_size: s.batch_size,
            lambda: s.lambda,
            learning_rate: s.optimizer.learning_rate,
            beta1: s.optimizer.beta1,
            beta2: s.optimizer.beta2,
            epsilon: s.optimizer.epsilon,
        }
    }
}

impl TrainingConfig {
    pub fn schedule(&self, seed: u64) -> TrainingSchedule<f64> {
        TrainingSchedule {
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            warmup_epochs: self.warmup_epochs,
            batch_size: self.batch_size,
            lambda: self.lambda,
            seed,
            optimizer: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentsConfig {
    /// Segments per target dimension. Exactly one of `count` and `resolution`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Segment width in target units; the count is derived from the bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(default)]
    pub strategy: Split,
    /// Server-configured target bounds; default to the training targets' range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_max: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommsSection {
    pub bits_resolution: u64,
    pub channels: u64,
    pub max_power: f64,
    pub channel_gain: f64,
    pub energy_per_bit: f64,
    pub energy_per_param_update: f64,
}

impl Default for CommsSection {
    fn default() -> Self {
        let c = CommsConfig::default();
        Self {
            bits_resolution: c.bits_resolution,
            channels: c.channels,
            max_power: c.max_power,
            channel_gain: c.channel_gain,
            energy_per_bit: c.energy_per_bit,
            energy_per_param_update: c.energy_per_param_update,
        }
    }
}

impl From<&CommsSection> for CommsConfig {
    fn from(c: &CommsSection) -> Self {
        CommsConfig {
            bits_resolution: c.bits_resolution,
            channels: c.channels,
            max_power: c.max_power,
            channel_gain: c.channel_gain,
            energy_per_bit: c.energy_per_bit,
            energy_per_param_update: c.energy_per_param_update,
        }
    }
}

/// Axes of a sweep; absent axes keep the base config's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<Scheme>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clients: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<usize>>,
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        self.schemes.is_none() && self.clients.is_none() && self.lambda.is_none() && self.segments.is_none()
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates a config file; relative CSV paths are anchored
    /// at the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(csv) = cfg.data.csv.as_mut() {
            csv.train = anchor(base, &csv.train);
            csv.validation = csv.validation.as_ref().map(|v| anchor(base, v));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.synthetic, &self.data.csv) {
            (Some(_), Some(_)) => bail!("`data.synthetic` and `data.csv` are mutually exclusive"),
            (None, None) => bail!("missing key `data.synthetic` or `data.csv`: exactly one data source is required"),
            _ => {}
        }
        if self.data.clients == 0 {
            bail!("`data.clients` must be at least 1");
        }
        if let Some(csv) = &self.data.csv {
            if csv.feature_columns.is_some() && csv.feature_prefix.is_some() {
                bail!("`data.csv.feature_columns` and `data.csv.feature_prefix` are mutually exclusive");
            }
            if csv.target_columns.is_empty() {
                bail!("`data.csv.target_columns` must name at least one column");
            }
            if !(0.0..1.0).contains(&csv.validation_fraction) {
                bail!("`data.csv.validation_fraction` must lie in [0, 1)");
            }
        }
        if self.model.hidden == 0 {
            bail!("`model.hidden` must be at least 1");
        }
        let seg = &self.segments;
        match (seg.count, seg.resolution) {
            (None, None) => bail!("missing key `segments.count` (or `segments.resolution`)"),
            (Some(_), Some(_)) => bail!("`segments.count` and `segments.resolution` are mutually exclusive"),
            (Some(0), _) => bail!("`segments.count` must be at least 1"),
            (_, Some(r)) if !(r > 0.0 && r.is_finite()) => bail!("`segments.resolution` must be positive"),
            _ => {}
        }
        if seg.y_min.is_some() != seg.y_max.is_some() {
            bail!("`segments.y_min` and `segments.y_max` must be given together");
        }
        self.training
            .schedule(self.seed)
            .validate()
            .context("in [training]")?;
        CommsConfig::from(&self.comms).validate().context("in [comms]")?;
        let sw = &self.sweep;
        let empty_axis = [
            ("schemes", sw.schemes.as_ref().map(Vec::len)),
            ("clients", sw.clients.as_ref().map(Vec::len)),
            ("lambda", sw.lambda.as_ref().map(Vec::len)),
            ("segments", sw.segments.as_ref().map(Vec::len)),
        ]
        .into_iter()
        .find(|(_, n)| *n == Some(0));
        if let Some((axis, _)) = empty_axis {
            bail!("`sweep.{axis}` is empty: the sweep grid would have no points");
        }
        Ok(())
    }

    /// Copy with every default spelled out, suitable for reproducing a run.
    pub fn to_toml(&self) -> Result<String> {
        let mut full = self.clone();
        if let Some(csv) = full.data.csv.as_mut() {
            if csv.feature_columns.is_none() && csv.feature_prefix.is_none() {
                csv.feature_prefix = Some("rssi_".into());
            }
        }
        Ok(toml::to_string(&full)?)
    }
}

fn anchor(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
