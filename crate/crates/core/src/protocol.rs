//! Training orchestration: federated distillation, FedAvg, standalone and
//! centralized baselines over the same model, optimizer and data shards.
//!
//! Every trainer draws its initialization from the `(seed, Init, id)` stream
//! and the shuffle of its `e`-th epoch from `(seed, Shuffle, id, e)`, so runs
//! are reproducible and independent of the order clients are listed in.
//!
//! Communication accounting (uplink only): in federated distillation, round
//! `r` opens with every client uploading the segment averages of its previous
//! training phase (the warm-up for `r = 1`) and downloading its teacher table.
//! After round `r` the network has sent exactly `r * K * S * No * R` bits.

use rand::seq::SliceRandom;

use crate::comms::{self, CommsConfig};
use crate::data::FingerprintDataset;
use crate::error::{config, Error, Result};
use crate::metrics;
use crate::nn::{self, AdamConfig, AdamState, Dims, LossConfig, MlpModel, Sample};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;
use crate::segmentation::{server_distill, SegmentScheme, SegmentStats, TeacherTable};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSchedule<T> {
    pub rounds: usize,
    pub local_epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lambda: T,
    pub seed: u64,
    pub optimizer: AdamConfig<T>,
}

impl<T: Scalar> Default for TrainingSchedule<T> {
    fn default() -> Self {
        Self {
            rounds: 100,
            local_epochs: 1,
            warmup_epochs: 1,
            batch_size: 32,
            lambda: T::of(0.1),
            seed: 200,
            optimizer: AdamConfig::default(),
        }
    }
}

impl<T: Scalar> TrainingSchedule<T> {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return Err(config("rounds, local_epochs and batch_size must be positive"));
        }
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > T::zero()) || !(o.epsilon > T::zero()) {
            return Err(config("learning_rate and epsilon must be positive"));
        }
        for b in [o.beta1, o.beta2] {
            if !(b >= T::zero() && b < T::one()) {
                return Err(config(format!("Adam decay rates must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }

    /// Epochs a centralized or standalone trainer runs to match the federated budget.
    pub fn total_epochs(&self) -> usize {
        self.warmup_epochs + self.rounds * self.local_epochs
    }
}

/// One participant: its private shard, local model and optimizer.
#[derive(Debug, Clone)]
pub struct ClientState<T> {
    pub id: usize,
    pub shard: FingerprintDataset<T>,
    pub model: MlpModel<T>,
    pub optimizer: AdamState<T>,
    pub stats: Option<SegmentStats<T>>,
    pub teacher: Option<TeacherTable<T>>,
    epochs_done: u64,
}

impl<T: Scalar> ClientState<T> {
    /// Fresh client with a model drawn from the `(seed, Init, id)` stream.
    pub fn new(id: usize, shard: FingerprintDataset<T>, hidden: usize, schedule: &TrainingSchedule<T>) -> Result<Self> {
        if shard.is_empty() {
            return Err(config(format!("client {id} has an empty shard")));
        }
        let dims = Dims::new(shard.input_dim(), hidden, shard.output_dim());
        let model = MlpModel::init_uniform(dims, &mut stream_rng(schedule.seed, Stream::Init, id as u64, 0))?;
        Ok(Self {
            id,
            shard,
            model,
            optimizer: AdamState::new(dims, schedule.optimizer),
            stats: None,
            teacher: None,
            epochs_done: 0,
        })
    }

    pub fn epochs_done(&self) -> u64 {
        self.epochs_done
    }

    /// One pass over the shard in a freshly shuffled order. Predictions made
    /// during the pass are accumulated into `self.stats` when present.
    fn train_epoch(
        &mut self,
        loss: &LossConfig<T>,
        scheme: Option<&SegmentScheme<T>>,
        schedule: &TrainingSchedule<T>,
    ) -> Result<EpochOutcome<T>> {
        let mut order: Vec<usize> = (0..self.shard.len()).collect();
        order.shuffle(&mut stream_rng(schedule.seed, Stream::Shuffle, self.id as u64, self.epochs_done));
        self.epochs_done += 1;

        let mut outcome = EpochOutcome::default();
        for chunk in order.chunks(schedule.batch_size) {
            let batch: Vec<Sample<'_, T>> = chunk.iter().map(|&i| self.shard.sample(i)).collect();
            let eval = nn::evaluate_batch(&self.model, &batch, loss, scheme, self.teacher.as_ref())?;
            if let (Some(stats), Some(scheme)) = (self.stats.as_mut(), scheme) {
                for ((_, y), pred) in batch.iter().zip(&eval.predictions) {
                    stats.accumulate(y, pred, scheme)?;
                }
            }
            nn::adam_step(&mut self.model, &mut self.optimizer, &eval.gradients)?;
            outcome.loss += eval.loss;
            outcome.samples += batch.len();
            outcome.steps += 1;
        }
        Ok(outcome)
    }

    fn train_epochs(
        &mut self,
        epochs: usize,
        loss: &LossConfig<T>,
        scheme: Option<&SegmentScheme<T>>,
        schedule: &TrainingSchedule<T>,
    ) -> Result<EpochOutcome<T>> {
        let mut total = EpochOutcome::default();
        for _ in 0..epochs {
            let o = self.train_epoch(loss, scheme, schedule)?;
            total.loss += o.loss;
            total.samples += o.samples;
            total.steps += o.steps;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct EpochOutcome<T> {
    loss: T,
    samples: usize,
    steps: u64,
}

impl<T: Scalar> EpochOutcome<T> {
    fn mean_loss(&self) -> T {
        if self.samples == 0 {
            T::zero()
        } else {
            self.loss / T::of_usize(self.samples)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoundMetrics<T> {
    pub client_id: usize,
    /// Mean per-sample training loss over the round's epochs.
    pub train_loss: T,
    pub val_mae: T,
    pub val_rmse: T,
    pub param_checksum: u64,
}

/// Network-wide metrics after one communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport<T> {
    pub round: usize,
    /// Sorted by client id.
    pub clients: Vec<ClientRoundMetrics<T>>,
    /// Uplink bits sent by all clients so far.
    pub cum_bits: u64,
    /// Model-based joules spent by all clients so far.
    pub cum_energy: f64,
}

fn check_eval<T: Scalar>(eval_set: &FingerprintDataset<T>, dims: Dims) -> Result<()> {
    if eval_set.is_empty() {
        return Err(config("evaluation set is empty"));
    }
    crate::error::check_dim("evaluation features", dims.inputs, eval_set.input_dim())?;
    crate::error::check_dim("evaluation targets", dims.outputs, eval_set.output_dim())
}

fn evaluate_model<T: Scalar>(model: &MlpModel<T>, eval_set: &FingerprintDataset<T>) -> Result<(T, T)> {
    let preds = model.predict_all(eval_set.features.iter().map(Vec::as_slice))?;
    let r = metrics::evaluate(&eval_set.targets, &preds)?;
    Ok((r.mae, r.rmse))
}

fn client_metrics<T: Scalar>(
    client: &ClientState<T>,
    model: &MlpModel<T>,
    outcome: &EpochOutcome<T>,
    eval_set: &FingerprintDataset<T>,
    round: usize,
) -> Result<ClientRoundMetrics<T>> {
    let train_loss = outcome.mean_loss();
    if !train_loss.is_finite() || !model.is_finite() {
        return Err(Error::Diverged { round });
    }
    let (val_mae, val_rmse) = evaluate_model(model, eval_set)?;
    Ok(ClientRoundMetrics {
        client_id: client.id,
        train_loss,
        val_mae,
        val_rmse,
        param_checksum: model.checksum(),
    })
}

/// Indices of `clients` in ascending id order; ids must be distinct.
fn id_order<T>(clients: &[ClientState<T>]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..clients.len()).collect();
    order.sort_by_key(|&i| clients[i].id);
    if order.windows(2).any(|w| clients[w[0]].id == clients[w[1]].id) {
        return Err(config("client ids must be distinct"));
    }
    Ok(order)
}

fn common_dims<T: Scalar>(clients: &[ClientState<T>]) -> Result<Dims> {
    let Some(first) = clients.first() else {
        return Err(config("at least one client is required"));
    };
    let dims = first.model.dims();
    if clients.iter().any(|c| c.model.dims() != dims) {
        return Err(config("all clients must share the model architecture"));
    }
    Ok(dims)
}

/// Federated distillation: warm-up, then per round upload segment averages,
/// receive leave-one-out teachers and train with the distillation loss.
pub fn run_fd<T: Scalar>(
    clients: &mut [ClientState<T>],
    scheme: &SegmentScheme<T>,
    schedule: &TrainingSchedule<T>,
    comms_cfg: &CommsConfig,
    eval_set: &FingerprintDataset<T>,
) -> Result<Vec<RoundReport<T>>> {
    schedule.validate()?;
    if clients.len() < 2 {
        return Err(config(format!(
            "federated distillation needs at least two clients, got {}",
            clients.len()
        )));
    }
    let dims = common_dims(clients)?;
    check_eval(eval_set, dims)?;
    crate::error::check_dim("scheme dimensions", dims.outputs, scheme.dimensions())?;
    let order = id_order(clients)?;
    let k = clients.len() as u64;
    let params = dims.param_count();
    let upload_bits = comms::fd_bits_per_client_round(
        scheme.segment_count() as u64,
        dims.outputs as u64,
        comms_cfg.bits_resolution,
    );
    let plain = LossConfig::plain();
    let distill = LossConfig::distill(schedule.lambda);

    let mut warmup_steps = 0u64;
    for c in clients.iter_mut() {
        c.stats = Some(SegmentStats::for_scheme(scheme));
        c.teacher = None;
        let o = c.train_epochs(schedule.warmup_epochs, &plain, Some(scheme), schedule)?;
        if !o.mean_loss().is_finite() {
            return Err(Error::Diverged { round: 0 });
        }
        warmup_steps += o.steps;
    }

    let mut reports = Vec::with_capacity(schedule.rounds);
    let mut cum_bits = 0u64;
    let mut cum_energy = comms::compute_energy(params, warmup_steps, comms_cfg);
    for round in 1..=schedule.rounds {
        let uploads: Vec<_> = order
            .iter()
            .map(|&i| clients[i].stats.as_ref().expect("stats set above").finalize())
            .collect();
        debug_assert!(uploads
            .iter()
            .all(|u| comms::payload_bits(u.len(), comms_cfg.bits_resolution) == upload_bits));
        let teachers = server_distill(&uploads, round)?;
        for (&i, t) in order.iter().zip(teachers) {
            clients[i].teacher = Some(t);
        }
        let round_bits = k * upload_bits;
        cum_bits += round_bits;

        let mut steps = 0u64;
        let mut metrics = Vec::with_capacity(clients.len());
        for &i in &order {
            let c = &mut clients[i];
            c.stats.as_mut().expect("stats set above").reset();
            let o = c.train_epochs(schedule.local_epochs, &distill, Some(scheme), schedule)?;
            steps += o.steps;
            metrics.push(client_metrics(c, &c.model, &o, eval_set, round)?);
        }
        cum_energy += comms::compute_energy(params, steps, comms_cfg)
            + comms::transmit_energy(round_bits, comms_cfg);
        reports.push(RoundReport {
            round,
            clients: metrics,
            cum_bits,
            cum_energy,
        });
    }
    Ok(reports)
}

/// Shard-size-weighted parameter average, `sum_k (n_k / N) * theta_k`.
pub fn weighted_average<T: Scalar>(models: &[(&MlpModel<T>, usize)]) -> Result<MlpModel<T>> {
    let Some(&(first, _)) = models.first() else {
        return Err(config("nothing to average"));
    };
    let total: usize = models.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(config("shard sizes sum to zero"));
    }
    let dims = first.dims();
    if models.iter().any(|(m, _)| m.dims() != dims) {
        return Err(config("cannot average models of different shapes"));
    }
    let weight = |n: usize| T::of(n as f64 / total as f64);
    let mut avg = first.clone();
    let w0 = weight(models[0].1);
    for buf in avg.params.buffers_mut() {
        for v in buf.iter_mut() {
            *v *= w0;
        }
    }
    for (m, n) in &models[1..] {
        let w = weight(*n);
        for (dst, src) in avg.params.buffers_mut().into_iter().zip(m.params.buffers()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * *s;
            }
        }
    }
    Ok(avg)
}

/// FedAvg with full participation. Clients keep their own Adam state across
/// rounds; the global model is drawn from the `(seed, Init, 0)` stream.
pub fn run_fl<T: Scalar>(
    clients: &mut [ClientState<T>],
    schedule: &TrainingSchedule<T>,
    comms_cfg: &CommsConfig,
    eval_set: &FingerprintDataset<T>,
) -> Result<Vec<RoundReport<T>>> {
    schedule.validate()?;
    let dims = common_dims(clients)?;
    check_eval(eval_set, dims)?;
    let order = id_order(clients)?;
    let params = dims.param_count();
    let upload_bits = params * comms_cfg.bits_resolution;
    let k = clients.len() as u64;
    let plain = LossConfig::plain();
    let mut global = MlpModel::init_uniform(dims, &mut stream_rng(schedule.seed, Stream::Init, 0, 0))?;

    let mut reports = Vec::with_capacity(schedule.rounds);
    let (mut cum_bits, mut cum_energy) = (0u64, 0.0);
    for round in 1..=schedule.rounds {
        let mut outcomes = Vec::with_capacity(clients.len());
        let mut steps = 0;
        for &i in &order {
            let c = &mut clients[i];
            c.model = global.clone();
            let o = c.train_epochs(schedule.local_epochs, &plain, None, schedule)?;
            if !o.mean_loss().is_finite() {
                return Err(Error::Diverged { round });
            }
            steps += o.steps;
            outcomes.push(o);
        }
        let weighted: Vec<_> = order
            .iter()
            .map(|&i| (&clients[i].model, clients[i].shard.len()))
            .collect();
        global = weighted_average(&weighted)?;

        let round_bits = k * upload_bits;
        cum_bits += round_bits;
        cum_energy += comms::compute_energy(params, steps, comms_cfg)
            + comms::transmit_energy(round_bits, comms_cfg);
        let metrics = order
            .iter()
            .zip(&outcomes)
            .map(|(&i, o)| client_metrics(&clients[i], &global, o, eval_set, round))
            .collect::<Result<Vec<_>>>()?;
        reports.push(RoundReport {
            round,
            clients: metrics,
            cum_bits,
            cum_energy,
        });
    }
    for c in clients.iter_mut() {
        c.model = global.clone();
    }
    Ok(reports)
}

/// Independent local training with the same epoch budget as federated
/// distillation (warm-up plus `rounds * local_epochs`); no communication.
pub fn run_standalone<T: Scalar>(
    clients: &mut [ClientState<T>],
    schedule: &TrainingSchedule<T>,
    comms_cfg: &CommsConfig,
    eval_set: &FingerprintDataset<T>,
) -> Result<Vec<RoundReport<T>>> {
    schedule.validate()?;
    let dims = common_dims(clients)?;
    check_eval(eval_set, dims)?;
    let order = id_order(clients)?;
    let params = dims.param_count();
    let plain = LossConfig::plain();

    let mut cum_energy = 0.0;
    for c in clients.iter_mut() {
        c.stats = None;
        let o = c.train_epochs(schedule.warmup_epochs, &plain, None, schedule)?;
        if !o.mean_loss().is_finite() {
            return Err(Error::Diverged { round: 0 });
        }
        cum_energy += comms::compute_energy(params, o.steps, comms_cfg);
    }
    let mut reports = Vec::with_capacity(schedule.rounds);
    for round in 1..=schedule.rounds {
        let mut metrics = Vec::with_capacity(clients.len());
        let mut steps = 0;
        for &i in &order {
            let c = &mut clients[i];
            let o = c.train_epochs(schedule.local_epochs, &plain, None, schedule)?;
            steps += o.steps;
            metrics.push(client_metrics(c, &c.model, &o, eval_set, round)?);
        }
        cum_energy += comms::compute_energy(params, steps, comms_cfg);
        reports.push(RoundReport {
            round,
            clients: metrics,
            cum_bits: 0,
            cum_energy,
        });
    }
    Ok(reports)
}

/// One model (trainer id 0) on the union of all data, reported per round of
/// the matched federated budget.
pub fn run_centralized<T: Scalar>(
    all_data: &FingerprintDataset<T>,
    hidden: usize,
    schedule: &TrainingSchedule<T>,
    comms_cfg: &CommsConfig,
    eval_set: &FingerprintDataset<T>,
) -> Result<(ClientState<T>, Vec<RoundReport<T>>)> {
    if all_data.is_empty() {
        return Err(config("centralized training needs data"));
    }
    let mut trainer = [ClientState::new(0, all_data.clone(), hidden, schedule)?];
    let reports = run_standalone(&mut trainer, schedule, comms_cfg, eval_set)?;
    let [trainer] = trainer;
    Ok((trainer, reports))
}

pub const REPORT_CSV_HEADER: [&str; 7] = [
    "round",
    "client_id",
    "train_loss",
    "val_mae",
    "val_rmse",
    "cum_bits",
    "cum_energy",
];

/// One row per (round, client).
pub fn write_reports_csv<T: Scalar, W: std::io::Write>(out: W, reports: &[RoundReport<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        for c in &r.clients {
            w.write_record([
                r.round.to_string(),
                c.client_id.to_string(),
                c.train_loss.to_string(),
                c.val_mae.to_string(),
                c.val_rmse.to_string(),
                r.cum_bits.to_string(),
                r.cum_energy.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
