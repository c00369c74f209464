use fdreg::comms::{self, CommsConfig};
use fdreg::data::{prepare_synthetic, FingerprintDataset, PartitionStrategy, PreparedData, RssiNetworkConfig};
use fdreg::nn::{adam_step, evaluate_batch, AdamConfig, LossConfig, MlpModel, Sample};
use fdreg::protocol::{run_centralized, run_fd, run_fl, run_standalone, ClientState, RoundReport, TrainingSchedule};
use fdreg::rng::{stream_rng, Stream};
use fdreg::segmentation::{SegmentScheme, SplitStrategy};

fn small_data(clients: usize) -> PreparedData<f64> {
    let cfg = RssiNetworkConfig {
        rp_count: 25,
        repetitions: 5,
        ..RssiNetworkConfig::default()
    };
    prepare_synthetic(&cfg, clients, PartitionStrategy::Random, 7).unwrap()
}

fn schedule(rounds: usize, lambda: f64) -> TrainingSchedule<f64> {
    TrainingSchedule {
        rounds,
        lambda,
        batch_size: 8,
        optimizer: AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        },
        ..TrainingSchedule::default()
    }
}

fn clients(data: &PreparedData<f64>, ids: &[usize], hidden: usize, s: &TrainingSchedule<f64>) -> Vec<ClientState<f64>> {
    ids.iter()
        .zip(&data.shards)
        .map(|(&id, shard)| ClientState::new(id, shard.clone(), hidden, s).unwrap())
        .collect()
}

fn scheme_for(data: &PreparedData<f64>, segments: usize) -> SegmentScheme<f64> {
    let (lo, hi) = data.train.target_bounds().unwrap();
    SegmentScheme::uniform(&lo, &hi, segments).unwrap()
}

fn checksums(reports: &[RoundReport<f64>]) -> Vec<Vec<u64>> {
    reports
        .iter()
        .map(|r| r.clients.iter().map(|c| c.param_checksum).collect())
        .collect()
}

#[test]
fn zero_lambda_fd_is_bitwise_standalone() {
    let data = small_data(3);
    let s = schedule(10, 0.0);
    let scheme = scheme_for(&data, 10);
    let mut fd = clients(&data, &[0, 1, 2], 16, &s);
    let mut sl = fd.clone();
    let a = run_fd(&mut fd, &scheme, &s, &CommsConfig::default(), &data.validation).unwrap();
    let b = run_standalone(&mut sl, &s, &CommsConfig::default(), &data.validation).unwrap();
    assert_eq!(checksums(&a), checksums(&b));
    for (x, y) in fd.iter().zip(&sl) {
        assert_eq!(x.model, y.model);
    }
}

#[test]
fn fd_is_reproducible_and_order_independent() {
    let data = small_data(4);
    let s = schedule(5, 0.5);
    let scheme = scheme_for(&data, 6);
    let base = clients(&data, &[3, 1, 4, 2], 12, &s);
    let comms_cfg = CommsConfig::default();

    let first = run_fd(&mut base.clone(), &scheme, &s, &comms_cfg, &data.validation).unwrap();
    let again = run_fd(&mut base.clone(), &scheme, &s, &comms_cfg, &data.validation).unwrap();
    assert_eq!(first, again);

    let mut reversed = base.clone();
    reversed.reverse();
    let rev = run_fd(&mut reversed, &scheme, &s, &comms_cfg, &data.validation).unwrap();
    assert_eq!(first, rev);
    assert!(first.iter().all(|r| r.clients.windows(2).all(|w| w[0].client_id < w[1].client_id)));
}

#[test]
fn distillation_changes_training() {
    let data = small_data(3);
    let s = schedule(3, 1.0);
    let scheme = scheme_for(&data, 4);
    let mut fd = clients(&data, &[0, 1, 2], 8, &s);
    let mut sl = fd.clone();
    let a = run_fd(&mut fd, &scheme, &s, &CommsConfig::default(), &data.validation).unwrap();
    let b = run_standalone(&mut sl, &s, &CommsConfig::default(), &data.validation).unwrap();
    assert_ne!(checksums(&a), checksums(&b));
}

#[test]
fn single_client_fedavg_matches_centralized() {
    let data = small_data(1);
    let s = TrainingSchedule {
        warmup_epochs: 0,
        ..schedule(6, 0.1)
    };
    // The single shard holds every training row, in partition order.
    let mut fl = clients(&data, &[0], 10, &s);
    let a = run_fl(&mut fl, &s, &CommsConfig::default(), &data.validation).unwrap();
    let (trainer, b) = run_centralized(&data.shards[0], 10, &s, &CommsConfig::default(), &data.validation).unwrap();
    assert_eq!(checksums(&a), checksums(&b));
    assert_eq!(fl[0].model, trainer.model);
}

#[test]
fn cumulative_bits_follow_payload_formulas() {
    let data = small_data(3);
    let s = schedule(4, 0.1);
    let segments = 5;
    let scheme = scheme_for(&data, segments);
    let cfg = CommsConfig::default();
    let hidden = 6;

    let fd = run_fd(&mut clients(&data, &[0, 1, 2], hidden, &s), &scheme, &s, &cfg, &data.validation).unwrap();
    let fl = run_fl(&mut clients(&data, &[0, 1, 2], hidden, &s), &s, &cfg, &data.validation).unwrap();
    let sl = run_standalone(&mut clients(&data, &[0, 1, 2], hidden, &s), &s, &cfg, &data.validation).unwrap();

    let inputs = data.train.input_dim() as u64;
    let per_fd = (segments * 2 * 32) as u64;
    let per_fl = (inputs * hidden as u64 + hidden as u64 + hidden as u64 * 2 + 2) * 32;
    assert_eq!(per_fd, comms::fd_bits_per_client_round(segments as u64, 2, 32));
    assert_eq!(per_fl, comms::fl_bits_per_client_round(inputs, hidden as u64, 2, 32));
    for (r, rep) in fd.iter().enumerate() {
        assert_eq!(rep.cum_bits, (r as u64 + 1) * 3 * per_fd);
    }
    for (r, rep) in fl.iter().enumerate() {
        assert_eq!(rep.cum_bits, (r as u64 + 1) * 3 * per_fl);
    }
    assert!(sl.iter().all(|r| r.cum_bits == 0));
    for reps in [&fd, &fl, &sl] {
        assert!(reps.windows(2).all(|w| w[0].cum_energy < w[1].cum_energy));
    }
    // Same compute, plus transmission.
    let tx = comms::transmit_energy(fd[3].cum_bits, &cfg);
    assert!((fd[3].cum_energy - sl[3].cum_energy - tx).abs() < 1e-15);
}

#[test]
fn round_one_trace_with_single_segment() {
    // Two clients, one segment, batch larger than the shards: warm-up is a
    // single full-batch step, the teacher of each client is the other's mean
    // warm-up prediction, and round 1 is one full-batch distillation step.
    let data = small_data(2);
    let s = TrainingSchedule {
        rounds: 1,
        batch_size: 1000,
        lambda: 0.7,
        ..TrainingSchedule::default()
    };
    let scheme = SegmentScheme::uniform(&[-1e6, -1e6], &[1e6, 1e6], 1).unwrap();
    let start = clients(&data, &[0, 1], 5, &s);
    let mut run = start.clone();
    run_fd(&mut run, &scheme, &s, &CommsConfig::default(), &data.validation).unwrap();

    let samples = |ds: &FingerprintDataset<f64>| -> Vec<(Vec<f64>, Vec<f64>)> {
        ds.features.iter().cloned().zip(ds.targets.iter().cloned()).collect()
    };
    let mut models = Vec::new();
    let mut means = Vec::new();
    for c in &start {
        let mut model = MlpModel::init_uniform(c.model.dims(), &mut stream_rng(s.seed, Stream::Init, c.id as u64, 0)).unwrap();
        assert_eq!(model, c.model);
        let rows = samples(&c.shard);
        let batch: Vec<Sample<'_, f64>> = rows.iter().map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
        let mut mean = [0.0; 2];
        for (x, _) in &rows {
            let p = model.forward(x).unwrap();
            mean[0] += p[0] / rows.len() as f64;
            mean[1] += p[1] / rows.len() as f64;
        }
        let eval = evaluate_batch(&model, &batch, &LossConfig::plain(), None, None).unwrap();
        let mut opt = c.optimizer.clone();
        adam_step(&mut model, &mut opt, &eval.gradients).unwrap();
        models.push((model, opt));
        means.push(mean);
    }
    for (k, c) in start.iter().enumerate() {
        let (mut model, mut opt) = models[k].clone();
        let other = means[1 - k];
        let mut teacher = fdreg::segmentation::TeacherTable::empty(2, 1, 1);
        teacher.set(0, 0, Some(other[0]));
        teacher.set(1, 0, Some(other[1]));
        assert!((run[k].teacher.as_ref().unwrap().value(0, 0).unwrap() - other[0]).abs() < 1e-12);
        assert!((run[k].teacher.as_ref().unwrap().value(1, 0).unwrap() - other[1]).abs() < 1e-12);

        let rows = samples(&c.shard);
        let batch: Vec<Sample<'_, f64>> = rows.iter().map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
        let eval = evaluate_batch(&model, &batch, &LossConfig::distill(0.7), Some(&scheme), Some(&teacher)).unwrap();
        adam_step(&mut model, &mut opt, &eval.gradients).unwrap();
        for (a, b) in model.params.iter().zip(run[k].model.params.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn density_scheme_drives_fd() {
    let data = small_data(3);
    let s = schedule(2, 0.1);
    let scheme = SegmentScheme::density(data.train.targets.iter().map(Vec::as_slice), 5).unwrap();
    assert_eq!(scheme.strategy(), SplitStrategy::Density);
    let reps = run_fd(&mut clients(&data, &[0, 1, 2], 8, &s), &scheme, &s, &CommsConfig::default(), &data.validation).unwrap();
    assert_eq!(reps.len(), 2);
}

#[test]
fn runs_in_single_precision() {
    let cfg = RssiNetworkConfig {
        rp_count: 16,
        repetitions: 4,
        ..RssiNetworkConfig::default()
    };
    let data = prepare_synthetic::<f32>(&cfg, 2, PartitionStrategy::Spatial, 3).unwrap();
    let s = TrainingSchedule::<f32> {
        rounds: 3,
        batch_size: 8,
        ..TrainingSchedule::default()
    };
    let (lo, hi) = data.train.target_bounds().unwrap();
    let scheme = SegmentScheme::uniform(&lo, &hi, 4).unwrap();
    let mut cs: Vec<_> = data
        .shards
        .iter()
        .enumerate()
        .map(|(i, sh)| ClientState::new(i, sh.clone(), 8, &s).unwrap())
        .collect();
    let reps = run_fd(&mut cs, &scheme, &s, &CommsConfig::default(), &data.validation).unwrap();
    assert!(reps.iter().flat_map(|r| &r.clients).all(|c| c.val_mae.is_finite()));
}
