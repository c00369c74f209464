//! Dense `Ni -> Nh -> No` perceptron, its distillation-regularized squared
//! loss with analytic gradients, and the Adam optimizer.
//!
//! Losses and gradients are *summed* over a batch, never averaged. Adam is
//! invariant to a constant gradient scale, so the choice only matters for
//! the magnitude of reported losses.

use std::hash::{DefaultHasher, Hasher};

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::segmentation::{SegmentScheme, TeacherTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
        }
    }

    #[inline]
    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Layer widths of the perceptron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl Dims {
    pub fn new(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            inputs,
            hidden,
            outputs,
        }
    }

    /// `W = Ni*Nh + Nh + Nh*No + No`.
    pub fn param_count(&self) -> u64 {
        let (i, h, o) = (self.inputs as u64, self.hidden as u64, self.outputs as u64);
        i * h + h + h * o + o
    }

    fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.hidden == 0 || self.outputs == 0 {
            return Err(Error::Config(format!(
                "layer widths must be positive, got {}x{}x{}",
                self.inputs, self.hidden, self.outputs
            )));
        }
        Ok(())
    }
}

/// Parameter buffers shared by the model, its gradients and Adam's moments.
///
/// `input_weights` is row-major `[input][hidden]`, `output_weights` is
/// row-major `[hidden][output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub input_weights: Vec<T>,
    pub hidden_bias: Vec<T>,
    pub output_weights: Vec<T>,
    pub output_bias: Vec<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            input_weights: vec![T::zero(); dims.inputs * dims.hidden],
            hidden_bias: vec![T::zero(); dims.hidden],
            output_weights: vec![T::zero(); dims.hidden * dims.outputs],
            output_bias: vec![T::zero(); dims.outputs],
        }
    }

    pub fn buffers(&self) -> [&[T]; 4] {
        [
            &self.input_weights,
            &self.hidden_bias,
            &self.output_weights,
            &self.output_bias,
        ]
    }

    pub fn buffers_mut(&mut self) -> [&mut Vec<T>; 4] {
        [
            &mut self.input_weights,
            &mut self.hidden_bias,
            &mut self.output_weights,
            &mut self.output_bias,
        ]
    }

    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.buffers().into_iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        let names = [
            "input_weights",
            "hidden_bias",
            "output_weights",
            "output_bias",
        ];
        for ((a, b), what) in self.buffers().iter().zip(other.buffers()).zip(names) {
            check_dim(what, a.len(), b.len())?;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Gradient of the loss with respect to every model parameter.
pub type Gradients<T> = Params<T>;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    dims: Dims,
    pub params: Params<T>,
    pub hidden_activation: Activation,
}

impl<T: Scalar> MlpModel<T> {
    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            params: Params::zeros(dims),
            hidden_activation: Activation::Relu,
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for every weight and bias of a layer.
    pub fn init_uniform<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        let in_bound = 1.0 / (dims.inputs as f64).sqrt();
        let out_bound = 1.0 / (dims.hidden as f64).sqrt();
        let [w, b, v, c] = model.params.buffers_mut();
        for (buf, bound) in [(w, in_bound), (b, in_bound), (v, out_bound), (c, out_bound)] {
            for p in buf.iter_mut() {
                *p = T::of(rng.random_range(-bound..=bound));
            }
        }
        Ok(model)
    }

    /// Build from explicit buffers; lengths must agree with `dims`.
    pub fn from_params(dims: Dims, params: Params<T>) -> Result<Self> {
        dims.validate()?;
        Params::<T>::zeros(dims).same_shape(&params)?;
        Ok(Self {
            dims,
            params,
            hidden_activation: Activation::Relu,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn param_count(&self) -> u64 {
        self.params.len() as u64
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    /// Order-sensitive hash over the raw bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in self.params.iter() {
            h.write_u64(v.bits());
        }
        h.finish()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        check_dim("input features", self.dims.inputs, x.len())
    }

    /// Pre-activations of the hidden layer.
    fn hidden_pre(&self, x: &[T], z: &mut [T]) {
        let nh = self.dims.hidden;
        z.copy_from_slice(&self.params.hidden_bias);
        for (xi, row) in x.iter().zip(self.params.input_weights.chunks_exact(nh)) {
            if *xi == T::zero() {
                continue;
            }
            for (zj, wij) in z.iter_mut().zip(row) {
                *zj += *xi * *wij;
            }
        }
    }

    fn output_from_hidden(&self, h: &[T], out: &mut [T]) {
        let no = self.dims.outputs;
        out.copy_from_slice(&self.params.output_bias);
        for (hj, row) in h.iter().zip(self.params.output_weights.chunks_exact(no)) {
            if *hj == T::zero() {
                continue;
            }
            for (od, vjd) in out.iter_mut().zip(row) {
                *od += *hj * *vjd;
            }
        }
    }

    /// Linear read-out of the activated hidden layer.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut z = vec![T::zero(); self.dims.hidden];
        self.hidden_pre(x, &mut z);
        for v in z.iter_mut() {
            *v = self.hidden_activation.apply(*v);
        }
        let mut out = vec![T::zero(); self.dims.outputs];
        self.output_from_hidden(&z, &mut out);
        Ok(out)
    }

    pub fn predict_all<'a, I>(&self, inputs: I) -> Result<Vec<Vec<T>>>
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        inputs.into_iter().map(|x| self.forward(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    /// Squared error only.
    #[default]
    Plain,
    /// Squared error plus `lambda` times the squared distance to the teacher.
    Distill,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig<T> {
    pub lambda: T,
    pub mode: LossMode,
}

impl<T: Scalar> LossConfig<T> {
    pub fn plain() -> Self {
        Self {
            lambda: T::zero(),
            mode: LossMode::Plain,
        }
    }

    pub fn distill(lambda: T) -> Self {
        Self {
            lambda,
            mode: LossMode::Distill,
        }
    }

    /// A distillation loss with `lambda == 0` is evaluated as `Plain`, so both
    /// paths produce bit-identical gradients.
    fn regularized(&self) -> bool {
        self.mode == LossMode::Distill && self.lambda != T::zero()
    }
}

/// One training example.
pub type Sample<'a, T> = (&'a [T], &'a [T]);

/// Loss, gradient and per-sample predictions of one batch.
#[derive(Debug, Clone)]
pub struct BatchEval<T> {
    pub loss: T,
    pub gradients: Gradients<T>,
    /// Predictions made by the model *before* any update, one per sample.
    pub predictions: Vec<Vec<T>>,
}

fn teacher_context<'t, T: Scalar>(
    model: &MlpModel<T>,
    config: &LossConfig<T>,
    scheme: Option<&'t SegmentScheme<T>>,
    teacher: Option<&'t TeacherTable<T>>,
) -> Result<Option<(&'t SegmentScheme<T>, &'t TeacherTable<T>)>> {
    if config.mode != LossMode::Distill {
        return Ok(None);
    }
    if config.lambda < T::zero() || !config.lambda.is_finite() {
        return Err(Error::Config(format!(
            "lambda must be finite and nonnegative, got {}",
            config.lambda
        )));
    }
    let (Some(scheme), Some(teacher)) = (scheme, teacher) else {
        return Err(Error::Usage(
            "distillation loss requires a segment scheme and a teacher table".into(),
        ));
    };
    let no = model.dims().outputs;
    check_dim("scheme dimensions", no, scheme.dimensions())?;
    check_dim("teacher dimensions", no, teacher.dimensions())?;
    check_dim(
        "teacher segments",
        scheme.segment_count(),
        teacher.segment_count(),
    )?;
    if !config.regularized() {
        return Ok(None);
    }
    Ok(Some((scheme, teacher)))
}

/// Loss, analytic gradient and predictions for a batch.
///
/// Per sample the loss is `|y - y_hat|^2 + lambda * sum_d (L[d][s(y_d)] - y_hat_d)^2`,
/// where `s(y_d)` is the label's segment in dimension `d`. Absent teacher
/// cells contribute nothing.
pub fn evaluate_batch<T: Scalar>(
    model: &MlpModel<T>,
    batch: &[Sample<'_, T>],
    config: &LossConfig<T>,
    scheme: Option<&SegmentScheme<T>>,
    teacher: Option<&TeacherTable<T>>,
) -> Result<BatchEval<T>> {
    let ctx = teacher_context(model, config, scheme, teacher)?;
    let dims = model.dims();
    let (nh, no) = (dims.hidden, dims.outputs);
    let two = T::of(2.0);
    let act = model.hidden_activation;

    let mut grads = Params::zeros(dims);
    let mut predictions = Vec::with_capacity(batch.len());
    let mut total = T::zero();
    let mut z = vec![T::zero(); nh];
    let mut h = vec![T::zero(); nh];
    let mut out = vec![T::zero(); no];
    let mut g_out = vec![T::zero(); no];
    let mut g_hidden = vec![T::zero(); nh];

    for &(x, y) in batch {
        model.check_input(x)?;
        check_dim("targets", no, y.len())?;

        model.hidden_pre(x, &mut z);
        for (hj, zj) in h.iter_mut().zip(&z) {
            *hj = act.apply(*zj);
        }
        model.output_from_hidden(&h, &mut out);

        for d in 0..no {
            let err = out[d] - y[d];
            total += err * err;
            g_out[d] = two * err;
        }
        if let Some((scheme, teacher)) = ctx {
            for d in 0..no {
                let seg = scheme.segment_of(d, y[d]);
                if let Some(target) = teacher.value(d, seg) {
                    let diff = out[d] - target;
                    total += config.lambda * diff * diff;
                    g_out[d] += two * config.lambda * diff;
                }
            }
        }

        for (gc, gd) in grads.output_bias.iter_mut().zip(&g_out) {
            *gc += *gd;
        }
        let rows = grads
            .output_weights
            .chunks_exact_mut(no)
            .zip(model.params.output_weights.chunks_exact(no));
        for (j, (grow, vrow)) in rows.enumerate() {
            let mut back = T::zero();
            for d in 0..no {
                grow[d] += h[j] * g_out[d];
                back += vrow[d] * g_out[d];
            }
            g_hidden[j] = back * act.derivative(z[j]);
        }
        for (gb, gz) in grads.hidden_bias.iter_mut().zip(&g_hidden) {
            *gb += *gz;
        }
        for (xi, grow) in x.iter().zip(grads.input_weights.chunks_exact_mut(nh)) {
            if *xi == T::zero() {
                continue;
            }
            for (g, gz) in grow.iter_mut().zip(&g_hidden) {
                *g += *xi * *gz;
            }
        }
        predictions.push(out.clone());
    }

    Ok(BatchEval {
        loss: total,
        gradients: grads,
        predictions,
    })
}

pub fn loss<T: Scalar>(
    model: &MlpModel<T>,
    batch: &[Sample<'_, T>],
    config: &LossConfig<T>,
    scheme: Option<&SegmentScheme<T>>,
    teacher: Option<&TeacherTable<T>>,
) -> Result<T> {
    evaluate_batch(model, batch, config, scheme, teacher).map(|e| e.loss)
}

pub fn gradient<T: Scalar>(
    model: &MlpModel<T>,
    batch: &[Sample<'_, T>],
    config: &LossConfig<T>,
    scheme: Option<&SegmentScheme<T>>,
    teacher: Option<&TeacherTable<T>>,
) -> Result<Gradients<T>> {
    evaluate_batch(model, batch, config, scheme, teacher).map(|e| e.gradients)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    /// Learning rate 1e-4 and decay rates (0.1, 0.99), epsilon 1e-8.
    fn default() -> Self {
        Self {
            learning_rate: T::of(1e-4),
            beta1: T::of(0.1),
            beta2: T::of(0.99),
            epsilon: T::of(1e-8),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig<T>,
    pub first_moment: Params<T>,
    pub second_moment: Params<T>,
    pub step_count: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(dims: Dims, config: AdamConfig<T>) -> Self {
        Self {
            config,
            first_moment: Params::zeros(dims),
            second_moment: Params::zeros(dims),
            step_count: 0,
        }
    }
}

/// Bias-corrected Adam update applied in place.
pub fn adam_step<T: Scalar>(
    model: &mut MlpModel<T>,
    state: &mut AdamState<T>,
    grads: &Gradients<T>,
) -> Result<()> {
    model.params.same_shape(grads)?;
    model.params.same_shape(&state.first_moment)?;
    model.params.same_shape(&state.second_moment)?;

    state.step_count += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = i32::try_from(state.step_count).unwrap_or(i32::MAX);
    let c1 = T::one() - beta1.powi(t);
    let c2 = T::one() - beta2.powi(t);

    let params = model.params.buffers_mut();
    let m = state.first_moment.buffers_mut();
    let v = state.second_moment.buffers_mut();
    for (((p, m), v), g) in params.into_iter().zip(m).zip(v).zip(grads.buffers()) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = beta1 * m[i] + (T::one() - beta1) * gi;
            v[i] = beta2 * v[i] + (T::one() - beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
