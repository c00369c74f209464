//! Turns a validated config into artifacts on disk.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use fdreg::comms::{self, CommsConfig};
use fdreg::data::{self, generate, load_csv, split_fraction, write_csv, write_metadata, PreparedData};
use fdreg::metrics::write_errors_csv;
use fdreg::nn::{Dims, MlpModel};
use fdreg::protocol::{run_centralized, run_fd, run_fl, run_standalone, write_reports_csv, ClientState};
use fdreg::segmentation::{segments_for_resolution, SegmentScheme};
use fdreg::{Dataset64, RoundReport64};

use crate::config::{ExperimentConfig, Scheme, Split};

/// What one run produced, kept for sweep summaries.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub reports: Vec<RoundReport64>,
    pub dims: Dims,
    pub segments: usize,
}

impl RunOutcome {
    fn last(&self) -> &RoundReport64 {
        self.reports.last().expect("at least one round")
    }

    /// Mean over clients of the last round's validation MAE.
    pub fn final_mae(&self) -> f64 {
        let c = &self.last().clients;
        c.iter().map(|m| m.val_mae).sum::<f64>() / c.len() as f64
    }

    pub fn final_rmse(&self) -> f64 {
        let c = &self.last().clients;
        c.iter().map(|m| m.val_rmse).sum::<f64>() / c.len() as f64
    }

    pub fn total_bits(&self) -> u64 {
        self.last().cum_bits
    }
}

/// Creates `<parent>/<UTC timestamp>-<label>`, suffixing a counter on collision.
pub fn timestamped_dir(parent: &Path, label: &str) -> Result<PathBuf> {
    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    for n in 0.. {
        let name = match n {
            0 => format!("{stamp}-{label}"),
            n => format!("{stamp}-{label}-{n}"),
        };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData<f64>> {
    let clients = cfg.data.clients;
    let strategy = cfg.data.partition.into();
    if let Some(syn) = &cfg.data.synthetic {
        return Ok(data::prepare_synthetic(&syn.network(cfg.seed), clients, strategy, cfg.seed)?);
    }
    let csv = cfg.data.csv.as_ref().expect("validated: one data source");
    let schema = csv.schema();
    let all: Dataset64 = load_csv(&csv.train, &schema).with_context(|| format!("loading {}", csv.train.display()))?;
    let (train, validation) = match &csv.validation {
        Some(p) => (all, load_csv(p, &schema).with_context(|| format!("loading {}", p.display()))?),
        None => split_fraction(&all, csv.validation_fraction, cfg.seed)?,
    };
    ensure!(!validation.is_empty(), "validation set is empty; set `data.csv.validation` or raise `data.csv.validation_fraction`");
    Ok(data::prepare(&train, &validation, clients, strategy, cfg.seed)?)
}

/// Per-dimension `(y_min, y_max)`.
type Bounds = (Vec<f64>, Vec<f64>);

fn build_scheme(cfg: &ExperimentConfig, train: &Dataset64) -> Result<(SegmentScheme<f64>, Bounds)> {
    let seg = &cfg.segments;
    let (lo, hi) = match (&seg.y_min, &seg.y_max) {
        (Some(lo), Some(hi)) => (lo.clone(), hi.clone()),
        _ => train.target_bounds()?,
    };
    ensure!(
        lo.len() == train.output_dim(),
        "`segments.y_min` has {} entries but the targets have {} dimensions",
        lo.len(),
        train.output_dim()
    );
    let count = match (seg.count, seg.resolution) {
        (Some(c), _) => c,
        (None, Some(eps)) => segments_for_resolution(&lo, &hi, eps)?,
        (None, None) => bail!("missing key `segments.count` (or `segments.resolution`)"),
    };
    let scheme = match seg.strategy {
        Split::Uniform => SegmentScheme::uniform(&lo, &hi, count)?,
        Split::Density => SegmentScheme::density(train.targets.iter().map(Vec::as_slice), count)?,
    };
    Ok((scheme, (lo, hi)))
}

/// The config with data-derived values pinned: model widths and, for an
/// equal-width split, the target bounds the scheme was built from.
fn resolved(cfg: &ExperimentConfig, dims: Dims, bounds: Bounds) -> ExperimentConfig {
    let mut r = cfg.clone();
    r.model.inputs = Some(dims.inputs);
    r.model.outputs = Some(dims.outputs);
    if cfg.segments.strategy == Split::Uniform {
        r.segments.y_min = Some(bounds.0);
        r.segments.y_max = Some(bounds.1);
    }
    r
}

/// Runs one experiment into `dir`: `metrics.csv`, `errors.csv`, `config.toml`.
pub fn run_into(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    let prepared = prepare(cfg)?;
    let train = &prepared.train;
    let dims = Dims::new(train.input_dim(), cfg.model.hidden, train.output_dim());
    if let Some(ni) = cfg.model.inputs {
        ensure!(ni == dims.inputs, "`model.inputs` is {ni} but the data has {} features", dims.inputs);
    }
    if let Some(no) = cfg.model.outputs {
        ensure!(no == dims.outputs, "`model.outputs` is {no} but the data has {} targets", dims.outputs);
    }
    let (scheme, bounds) = build_scheme(cfg, train)?;
    fs::write(dir.join("config.toml"), resolved(cfg, dims, bounds).to_toml()?)?;
    let schedule = cfg.training.schedule(cfg.seed);
    let comms_cfg = CommsConfig::from(&cfg.comms);
    let val = &prepared.validation;
    let mut clients = prepared
        .shards
        .iter()
        .enumerate()
        .map(|(id, shard)| ClientState::new(id, shard.clone(), dims.hidden, &schedule))
        .collect::<fdreg::Result<Vec<_>>>()?;

    // The error table describes the lowest-id client's final model (the
    // global model for FedAvg, the single model when centralized).
    let (reports, model): (_, MlpModel<f64>) = match cfg.scheme {
        Scheme::Fd => {
            comms::check_lightweight(dims, scheme.segment_count())?;
            let r = run_fd(&mut clients, &scheme, &schedule, &comms_cfg, val)?;
            (r, clients[0].model.clone())
        }
        Scheme::Fl => {
            let r = run_fl(&mut clients, &schedule, &comms_cfg, val)?;
            (r, clients[0].model.clone())
        }
        Scheme::Standalone => {
            let r = run_standalone(&mut clients, &schedule, &comms_cfg, val)?;
            (r, clients[0].model.clone())
        }
        Scheme::Centralized => {
            let (trainer, r) = run_centralized(train, dims.hidden, &schedule, &comms_cfg, val)?;
            (r, trainer.model)
        }
    };

    write_reports_csv(BufWriter::new(File::create(dir.join("metrics.csv"))?), &reports)?;
    let preds = model.predict_all(val.features.iter().map(Vec::as_slice))?;
    write_errors_csv(BufWriter::new(File::create(dir.join("errors.csv"))?), &val.targets, &preds)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        reports,
        dims,
        segments: scheme.segment_count(),
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let dir = timestamped_dir(&cfg.out_dir, cfg.scheme.name())?;
    run_into(cfg, &dir)
}

/// Expected cumulative uplink bits after the last round.
fn expected_bits(scheme: Scheme, out: &RunOutcome, clients: usize, rounds: usize, resolution: u64) -> u64 {
    let per_client = match scheme {
        Scheme::Fd => comms::fd_bits_per_client_round(out.segments as u64, out.dims.outputs as u64, resolution),
        Scheme::Fl => {
            comms::fl_bits_per_client_round(out.dims.inputs as u64, out.dims.hidden as u64, out.dims.outputs as u64, resolution)
        }
        Scheme::Standalone | Scheme::Centralized => 0,
    };
    rounds as u64 * clients as u64 * per_client
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "point",
    "scheme",
    "clients",
    "lambda",
    "segments",
    "rounds",
    "final_mae",
    "final_rmse",
    "total_bits",
];

/// One run per point of the Cartesian product of the sweep axes, each in
/// its own subdirectory, plus `summary.csv`.
pub fn sweep(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let sw = &cfg.sweep;
    ensure!(!sw.is_empty(), "`[sweep]` needs at least one axis (schemes, clients, lambda or segments)");
    let schemes = sw.schemes.clone().unwrap_or_else(|| vec![cfg.scheme]);
    let clients = sw.clients.clone().unwrap_or_else(|| vec![cfg.data.clients]);
    let lambdas = sw.lambda.clone().unwrap_or_else(|| vec![cfg.training.lambda]);
    let segments: Vec<Option<usize>> = match &sw.segments {
        Some(s) => s.iter().copied().map(Some).collect(),
        None => vec![None],
    };

    let root = timestamped_dir(&cfg.out_dir, "sweep")?;
    fs::write(root.join("config.toml"), cfg.to_toml()?)?;
    let mut summary = csv::Writer::from_path(root.join("summary.csv"))?;
    summary.write_record(SUMMARY_HEADER)?;
    let mut point = 0usize;
    for &scheme in &schemes {
        for &k in &clients {
            for &lambda in &lambdas {
                for &s in &segments {
                    let mut p = cfg.clone();
                    p.sweep = Default::default();
                    p.scheme = scheme;
                    p.data.clients = k;
                    p.training.lambda = lambda;
                    if let Some(s) = s {
                        p.segments.count = Some(s);
                        p.segments.resolution = None;
                    }
                    p.validate().with_context(|| format!("sweep point {point}"))?;
                    let name = format!("{point:03}-{}-k{k}-lambda{lambda}-s{}", scheme.name(), s.map_or("cfg".into(), |s| s.to_string()));
                    let dir = root.join(name);
                    fs::create_dir(&dir)?;
                    let out = run_into(&p, &dir).with_context(|| format!("sweep point {point}"))?;
                    let expected = expected_bits(scheme, &out, k, p.training.rounds, p.comms.bits_resolution);
                    ensure!(
                        out.total_bits() == expected,
                        "sweep point {point}: {} cumulative bits, expected {expected}",
                        out.total_bits()
                    );
                    summary.write_record([
                        point.to_string(),
                        scheme.name().to_string(),
                        k.to_string(),
                        lambda.to_string(),
                        out.segments.to_string(),
                        p.training.rounds.to_string(),
                        out.final_mae().to_string(),
                        out.final_rmse().to_string(),
                        out.total_bits().to_string(),
                    ])?;
                    point += 1;
                }
            }
        }
    }
    summary.flush()?;
    Ok(root)
}

/// Writes the full synthetic dataset as `fingerprints.csv` plus a
/// `fingerprints.meta` sidecar into `dir`.
pub fn gen_data(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    let Some(syn) = &cfg.data.synthetic else {
        bail!("gen-data needs a `[data.synthetic]` section");
    };
    let net = syn.network(cfg.seed);
    let ds: Dataset64 = generate(&net)?;
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("fingerprints.csv");
    write_csv(&ds, BufWriter::new(File::create(&csv_path)?))?;
    write_metadata(&net, BufWriter::new(File::create(dir.join("fingerprints.meta"))?))?;
    Ok(csv_path)
}
