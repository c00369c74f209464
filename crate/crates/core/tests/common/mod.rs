//! Oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code, clippy::needless_range_loop)]

use fdreg::nn::{gradient, loss, Dims, LossConfig, MlpModel, Sample};
use fdreg::segmentation::{server_distill, SegmentScheme, SegmentStats, SegmentTable, TeacherTable};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Direct evaluation of the per-sample loss from the model's raw buffers.
pub fn reference_loss(
    model: &MlpModel<f64>,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    lambda: f64,
    ctx: Option<(&SegmentScheme<f64>, &TeacherTable<f64>)>,
) -> f64 {
    let d = model.dims();
    let p = &model.params;
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let mut h = vec![0.0; d.hidden];
        for j in 0..d.hidden {
            let mut z = p.hidden_bias[j];
            for i in 0..d.inputs {
                z += x[i] * p.input_weights[i * d.hidden + j];
            }
            h[j] = if z > 0.0 { z } else { 0.0 };
        }
        for o in 0..d.outputs {
            let mut out = p.output_bias[o];
            for j in 0..d.hidden {
                out += h[j] * p.output_weights[j * d.outputs + o];
            }
            total += (y[o] - out).powi(2);
            if let Some((scheme, teacher)) = ctx {
                let seg = scheme.boundaries(o).iter().filter(|b| **b <= y[o]).count();
                if let Some(t) = teacher.value(o, seg) {
                    total += lambda * (t - out).powi(2);
                }
            }
        }
    }
    total
}

pub struct Instance {
    pub model: MlpModel<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub lambda: f64,
    pub scheme: SegmentScheme<f64>,
    pub teacher: TeacherTable<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let dims = Dims::new(rng.random_range(1..=8), rng.random_range(1..=16), rng.random_range(1..=2));
    let model = MlpModel::init_uniform(dims, rng).unwrap();
    let n = rng.random_range(1..=6);
    let xs = (0..n)
        .map(|_| (0..dims.inputs).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ys = (0..n)
        .map(|_| (0..dims.outputs).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let segments = rng.random_range(1..=5);
    let scheme = SegmentScheme::uniform(&vec![-1.0; dims.outputs], &vec![1.0; dims.outputs], segments).unwrap();
    let mut teacher = TeacherTable::empty(dims.outputs, segments, 1);
    for o in 0..dims.outputs {
        for s in 0..segments {
            if rng.random_bool(0.7) {
                teacher.set(o, s, Some(rng.random_range(-1.0..1.0)));
            }
        }
    }
    Instance {
        model,
        xs,
        ys,
        lambda: rng.random_range(0.0..2.0),
        scheme,
        teacher,
    }
}

pub fn batch<'a>(xs: &'a [Vec<f64>], ys: &'a [Vec<f64>]) -> Vec<Sample<'a, f64>> {
    xs.iter().zip(ys).map(|(x, y)| (x.as_slice(), y.as_slice())).collect()
}

/// Max violation of `|a - n| <= max(1e-4 * max(|a|, |n|), 1e-6)` over all components.
pub fn check_against_central_differences(inst: &Instance) -> Result<(), String> {
    let cfg = LossConfig::distill(inst.lambda);
    let b = batch(&inst.xs, &inst.ys);
    let ctx = Some((&inst.scheme, &inst.teacher));
    let analytic = gradient(&inst.model, &b, &cfg, Some(&inst.scheme), Some(&inst.teacher)).unwrap();
    let l = loss(&inst.model, &b, &cfg, Some(&inst.scheme), Some(&inst.teacher)).unwrap();
    let r = reference_loss(&inst.model, &inst.xs, &inst.ys, inst.lambda, ctx);
    if (l - r).abs() > 1e-10 * (1.0 + r.abs()) {
        return Err(format!("loss {l} != reference {r}"));
    }

    let h = 1e-5;
    let mut probe = inst.model.clone();
    let grads: Vec<f64> = analytic.iter().collect();
    let mut idx = 0;
    for buf in 0..4 {
        let len = probe.params.buffers()[buf].len();
        for k in 0..len {
            let orig = probe.params.buffers()[buf][k];
            probe.params.buffers_mut()[buf][k] = orig + h;
            let up = reference_loss(&probe, &inst.xs, &inst.ys, inst.lambda, ctx);
            probe.params.buffers_mut()[buf][k] = orig - h;
            let down = reference_loss(&probe, &inst.xs, &inst.ys, inst.lambda, ctx);
            probe.params.buffers_mut()[buf][k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grads[idx];
            let tol = (1e-4 * a.abs().max(numeric.abs())).max(1e-6);
            if (a - numeric).abs() > tol {
                return Err(format!("component {idx}: analytic {a} vs numeric {numeric}"));
            }
            idx += 1;
        }
    }
    Ok(())
}

pub fn brute_force_teacher(reports: &[SegmentTable<f64>], k: usize, d: usize, s: usize) -> Option<f64> {
    let others: Vec<f64> = reports
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .filter_map(|(_, r)| r.value(d, s))
        .collect();
    (!others.is_empty()).then(|| others.iter().sum::<f64>() / others.len() as f64)
}

pub fn random_reports(rng: &mut ChaCha8Rng) -> Vec<SegmentTable<f64>> {
    let k = rng.random_range(2..=10);
    let (dims, segments) = (rng.random_range(1..=3), rng.random_range(1..=6));
    let sparsity = rng.random_range(0.0..1.0);
    (0..k)
        .map(|_| {
            let mut t = SegmentTable::empty(dims, segments);
            for d in 0..dims {
                for s in 0..segments {
                    if !rng.random_bool(sparsity) {
                        t.set(d, s, Some(rng.random_range(-2.0..2.0)));
                    }
                }
            }
            t
        })
        .collect()
}

/// Compares every teacher cell with the brute-force mean over the other reporters.
pub fn check_leave_one_out(reports: &[SegmentTable<f64>]) -> Result<(), String> {
    let teachers = server_distill(reports, 1).map_err(|e| e.to_string())?;
    for (k, t) in teachers.iter().enumerate() {
        for d in 0..t.dimensions() {
            for s in 0..t.segment_count() {
                match (t.value(d, s), brute_force_teacher(reports, k, d, s)) {
                    (None, None) => {}
                    (Some(a), Some(b)) if (a - b).abs() <= 1e-12 => {}
                    other => return Err(format!("client {k} cell ({d},{s}): {other:?}")),
                }
            }
        }
    }
    Ok(())
}

/// Feeds a random (label, prediction) trace through `SegmentStats` and
/// compares the finalized averages with per-cell means computed directly.
pub fn check_random_trace(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let segments = rng.random_range(1..=8);
    let scheme = SegmentScheme::uniform(&[0.0, 0.0], &[10.0, 5.0], segments).map_err(|e| e.to_string())?;
    let mut stats = SegmentStats::for_scheme(&scheme);
    let n = rng.random_range(0..40);
    let mut trace = Vec::new();
    for _ in 0..n {
        let y = [rng.random_range(-1.0..11.0), rng.random_range(-1.0..6.0)];
        let p = [rng.random_range(-5.0..15.0), rng.random_range(-5.0..15.0)];
        stats.accumulate(&y, &p, &scheme).map_err(|e| e.to_string())?;
        trace.push((y, p));
    }
    let avg = stats.finalize();
    for d in 0..2 {
        if stats.total_count(d) != n as u64 {
            return Err(format!("dimension {d} counted {} of {n}", stats.total_count(d)));
        }
        for s in 0..segments {
            let cell: Vec<f64> = trace
                .iter()
                .filter(|(y, _)| scheme.boundaries(d).iter().filter(|b| **b <= y[d]).count() == s)
                .map(|(_, p)| p[d])
                .collect();
            let ok = match avg.value(d, s) {
                None => cell.is_empty(),
                Some(v) => {
                    let mean = cell.iter().sum::<f64>() / cell.len() as f64;
                    !cell.is_empty() && (v - mean).abs() <= 1e-12 * (1.0 + mean.abs())
                }
            };
            if !ok {
                return Err(format!("cell ({d},{s}): {:?} vs {} samples", avg.value(d, s), cell.len()));
            }
        }
    }
    Ok(())
}
