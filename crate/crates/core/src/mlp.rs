//! Multilayer perceptrons with hand-written backpropagation, temperature
//! distillation losses and K-priors for deep models.
//!
//! Parameters are stored as one flat vector. Layer `l` occupies a
//! contiguous block: its `n_out × n_in` weight matrix in row-major order,
//! followed by its `n_out` biases.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledData;
use crate::error::{check_dim, Error, Result};
use crate::family::sigmoid;
use crate::model::Predictor;
use crate::objective::FiniteSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    // relu'(0) = 0
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Output head: a scalar Bernoulli logit or `K` softmax logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputKind {
    Sigmoid,
    Softmax(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
    output: OutputKind,
}

impl MlpSpec {
    /// `layer_sizes` runs input → hidden… → output and needs at least one
    /// hidden layer.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, output: OutputKind) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::InvalidArgument(
                "an MLP needs input, at least one hidden, and output sizes".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        let out = *layer_sizes.last().unwrap();
        match output {
            OutputKind::Sigmoid if out != 1 => {
                return Err(Error::InvalidArgument(format!(
                    "sigmoid output needs 1 unit, got {out}"
                )))
            }
            OutputKind::Softmax(k) if k < 2 || k != out => {
                return Err(Error::InvalidArgument(format!(
                    "softmax({k}) output needs {k} ≥ 2 units, got {out}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            layer_sizes,
            activation,
            output,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output(&self) -> OutputKind {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layer_offset(&self, l: usize) -> usize {
        self.layer_sizes[..=l]
            .windows(2)
            .take(l)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Mean-space output `h(f)`: sigmoid or softmax.
    pub fn output_mean(&self, logits: &[f64]) -> Vec<f64> {
        match self.output {
            OutputKind::Sigmoid => vec![sigmoid(logits[0])],
            OutputKind::Softmax(_) => softmax(logits, 1.0),
        }
    }

    /// Log-partition of the output head: `log(1+e^f)` or `logsumexp(f)`.
    pub fn output_log_partition(&self, logits: &[f64]) -> f64 {
        match self.output {
            OutputKind::Sigmoid => {
                let f = logits[0];
                f.max(0.0) + (-f.abs()).exp().ln_1p()
            }
            OutputKind::Softmax(_) => log_sum_exp(logits),
        }
    }

    /// Encodes a label as a mean-space target row.
    pub fn label_target(&self, y: f64) -> Vec<f64> {
        match self.output {
            OutputKind::Sigmoid => vec![y],
            OutputKind::Softmax(k) => {
                let mut t = vec![0.0; k];
                t[y as usize] = 1.0;
                t
            }
        }
    }

    pub fn check_labels(&self, data: &LabeledData) -> Result<()> {
        for (i, &y) in data.labels.iter().enumerate() {
            let ok = match self.output {
                OutputKind::Sigmoid => y == 0.0 || y == 1.0,
                OutputKind::Softmax(k) => y >= 0.0 && y.fract() == 0.0 && (y as usize) < k,
            };
            if !ok {
                return Err(Error::InvalidLabel {
                    row: i,
                    label: y,
                    family: "mlp output",
                });
            }
        }
        Ok(())
    }

    /// Mean-space label targets (N×K).
    pub fn label_targets(&self, data: &LabeledData) -> Result<DMatrix<f64>> {
        self.check_labels(data)?;
        let k = self.output_dim();
        let mut t = DMatrix::zeros(data.len(), k);
        for i in 0..data.len() {
            for (j, v) in self.label_target(data.labels[i]).into_iter().enumerate() {
                t[(i, j)] = v;
            }
        }
        Ok(t)
    }

    /// Mean-space targets `h(f/T)` for stored logits (N×K).
    pub fn soft_targets(&self, logits: &DMatrix<f64>, temperature: f64) -> Result<DMatrix<f64>> {
        check_dim("soft target logits", self.output_dim(), logits.ncols())?;
        let mut t = DMatrix::zeros(logits.nrows(), logits.ncols());
        let mut row = vec![0.0; logits.ncols()];
        for i in 0..logits.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = logits[(i, j)] / temperature;
            }
            for (j, v) in self.output_mean(&row).into_iter().enumerate() {
                t[(i, j)] = v;
            }
        }
        Ok(t)
    }
}

/// Softmax of `z / T`.
pub fn softmax(z: &[f64], temperature: f64) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b / temperature));
    let e: Vec<f64> = z.iter().map(|&v| (v / temperature - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Flat parameter vector for an [`MlpSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    flat: DVector<f64>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            flat: DVector::zeros(spec.num_params()),
        }
    }

    /// Uniform `±sqrt(6/(fan_in+fan_out))` weights and zero biases, drawn
    /// from ChaCha8 seeded with `seed`.
    pub fn init(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flat = Vec::with_capacity(spec.num_params());
        for w in spec.layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                flat.push(rng.random_range(-bound..bound));
            }
            flat.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self {
            flat: DVector::from_vec(flat),
        }
    }

    pub fn unflatten(spec: &MlpSpec, flat: DVector<f64>) -> Result<Self> {
        check_dim("mlp parameters", spec.num_params(), flat.len())?;
        Ok(Self { flat })
    }

    /// Builds parameters from per-layer `(W, b)` with `W` of shape n_out×n_in.
    pub fn from_layers(spec: &MlpSpec, layers: &[(DMatrix<f64>, DVector<f64>)]) -> Result<Self> {
        check_dim("mlp layers", spec.num_layers(), layers.len())?;
        let mut flat = Vec::with_capacity(spec.num_params());
        for (l, (w, b)) in layers.iter().enumerate() {
            let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
            check_dim("layer rows", n_out, w.nrows())?;
            check_dim("layer cols", n_in, w.ncols())?;
            check_dim("layer bias", n_out, b.len())?;
            for r in 0..n_out {
                for c in 0..n_in {
                    flat.push(w[(r, c)]);
                }
            }
            flat.extend(b.iter());
        }
        Ok(Self {
            flat: DVector::from_vec(flat),
        })
    }

    pub fn layer(&self, spec: &MlpSpec, l: usize) -> (DMatrix<f64>, DVector<f64>) {
        let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let off = spec.layer_offset(l);
        let w = DMatrix::from_row_slice(n_out, n_in, &self.flat.as_slice()[off..off + n_in * n_out]);
        let b = DVector::from_column_slice(&self.flat.as_slice()[off + n_in * n_out..off + n_in * n_out + n_out]);
        (w, b)
    }

    pub fn flatten(&self) -> &DVector<f64> {
        &self.flat
    }

    pub fn into_flat(self) -> DVector<f64> {
        self.flat
    }
}

/// Intermediate values of one forward pass.
struct Trace {
    // activations[0] is the input; activations[l + 1] is the output of layer l
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

fn forward_trace(spec: &MlpSpec, p: &[f64], x: &[f64]) -> Trace {
    let mut activations = Vec::with_capacity(spec.layer_sizes.len());
    let mut pre = Vec::with_capacity(spec.num_layers());
    activations.push(x.to_vec());
    let mut off = 0;
    for l in 0..spec.num_layers() {
        let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let w = &p[off..off + n_in * n_out];
        let b = &p[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let a = &activations[l];
        let z: Vec<f64> = (0..n_out)
            .map(|r| {
                let row = &w[r * n_in..(r + 1) * n_in];
                b[r] + row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>()
            })
            .collect();
        let out = if l + 1 < spec.num_layers() {
            z.iter().map(|&v| spec.activation.apply(v)).collect()
        } else {
            z.clone()
        };
        pre.push(z);
        activations.push(out);
    }
    Trace { activations, pre }
}

/// Accumulates `∂(dlogitsᵀ f)/∂w` into `grad`.
fn backward(spec: &MlpSpec, p: &[f64], trace: &Trace, dlogits: &[f64], grad: &mut [f64]) {
    let nl = spec.num_layers();
    let mut delta = dlogits.to_vec();
    for l in (0..nl).rev() {
        let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let off = spec.layer_offset(l);
        let a = &trace.activations[l];
        for r in 0..n_out {
            let d = delta[r];
            if d != 0.0 {
                let g = &mut grad[off + r * n_in..off + (r + 1) * n_in];
                for (gi, ai) in g.iter_mut().zip(a) {
                    *gi += d * ai;
                }
            }
            grad[off + n_in * n_out + r] += d;
        }
        if l > 0 {
            let w = &p[off..off + n_in * n_out];
            let z = &trace.pre[l - 1];
            delta = (0..n_in)
                .map(|c| {
                    let s: f64 = (0..n_out).map(|r| w[r * n_in + c] * delta[r]).sum();
                    s * spec.activation.derivative(z[c])
                })
                .collect();
        }
    }
}

fn row_of(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// Logits for one input.
pub fn mlp_forward(params: &MlpParams, spec: &MlpSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_dim("mlp parameters", spec.num_params(), params.flat.len())?;
    check_dim("mlp input", spec.input_dim(), x.len())?;
    let mut t = forward_trace(spec, params.flat.as_slice(), x);
    Ok(t.activations.pop().unwrap())
}

/// Logits for every input row (N×K).
pub fn mlp_forward_batch(params: &MlpParams, spec: &MlpSpec, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("mlp parameters", spec.num_params(), params.flat.len())?;
    check_dim("mlp input", spec.input_dim(), inputs.ncols())?;
    let k = spec.output_dim();
    let mut out = DMatrix::zeros(inputs.nrows(), k);
    for i in 0..inputs.nrows() {
        let mut t = forward_trace(spec, params.flat.as_slice(), &row_of(inputs, i));
        let f = t.activations.pop().unwrap();
        for j in 0..k {
            out[(i, j)] = f[j];
        }
    }
    Ok(out)
}

/// Runs forward/backward over `rows`, with `per_row(i, logits)` returning
/// the row's loss and its gradient with respect to the logits.
fn accumulate<F>(spec: &MlpSpec, p: &[f64], inputs: &DMatrix<f64>, rows: &[usize], grad: &mut [f64], mut per_row: F) -> f64
where
    F: FnMut(usize, &[f64]) -> (f64, Vec<f64>),
{
    let mut total = 0.0;
    for &i in rows {
        let trace = forward_trace(spec, p, &row_of(inputs, i));
        let logits = trace.activations.last().unwrap();
        let (v, dlogits) = per_row(i, logits);
        total += v;
        backward(spec, p, &trace, &dlogits, grad);
    }
    total
}

/// `scale · T² · [A(f/T) − ⟨t, f/T⟩]` and its logit gradient
/// `scale · T · (h(f/T) − t)`.
fn tempered_cross_entropy(spec: &MlpSpec, logits: &[f64], target: &[f64], temperature: f64, scale: f64) -> (f64, Vec<f64>) {
    let z: Vec<f64> = logits.iter().map(|f| f / temperature).collect();
    let a = spec.output_log_partition(&z);
    let dot: f64 = z.iter().zip(target).map(|(a, b)| a * b).sum();
    let h = spec.output_mean(&z);
    let t2 = temperature * temperature;
    let grad = h.iter().zip(target).map(|(hi, ti)| scale * temperature * (hi - ti)).collect();
    (scale * t2 * (a - dot), grad)
}

/// Targets for [`mlp_loss_grad`].
#[derive(Debug, Clone, Copy)]
pub enum TargetMode<'a> {
    /// Data loss on the batch labels only.
    Hard,
    /// Distillation against teacher logits (N×K) at a temperature, both
    /// teacher and student logits divided by `T` and the soft term scaled by `T²`.
    Soft {
        teacher_logits: &'a DMatrix<f64>,
        temperature: f64,
    },
}

/// `λ·Σ ℓ(y, h(f)) + (δ/2)‖w‖² + (1−λ)·T²·Σ ℓ(h(f*/T), h(f/T))`.
///
/// [`TargetMode::Hard`] drops the soft term and uses the data loss with
/// weight one.
pub fn mlp_loss_grad(
    params: &MlpParams,
    spec: &MlpSpec,
    batch: &LabeledData,
    target: TargetMode<'_>,
    lambda: f64,
    delta: f64,
) -> Result<(f64, DVector<f64>)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
    }
    check_dim("mlp parameters", spec.num_params(), params.flat.len())?;
    check_dim("mlp input", spec.input_dim(), batch.input_dim())?;
    let labels = spec.label_targets(batch)?;
    let (soft, temperature, hard_weight) = match target {
        TargetMode::Hard => (None, 1.0, 1.0),
        TargetMode::Soft {
            teacher_logits,
            temperature,
        } => {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::InvalidArgument(format!("temperature {temperature} must be positive")));
            }
            check_dim("teacher logits", batch.len(), teacher_logits.nrows())?;
            (Some(spec.soft_targets(teacher_logits, temperature)?), temperature, lambda)
        }
    };
    let p = params.flat.as_slice();
    let mut grad = vec![0.0; p.len()];
    let rows: Vec<usize> = (0..batch.len()).collect();
    let mut value = accumulate(spec, p, &batch.inputs, &rows, &mut grad, |i, f| {
        let (mut v, mut g) = tempered_cross_entropy(spec, f, &row_of(&labels, i), 1.0, hard_weight);
        if let Some(soft) = &soft {
            let (vs, gs) = tempered_cross_entropy(spec, f, &row_of(soft, i), temperature, 1.0 - lambda);
            v += vs;
            for (a, b) in g.iter_mut().zip(gs) {
                *a += b;
            }
        }
        (v, g)
    });
    let mut grad = DVector::from_vec(grad);
    if delta != 0.0 {
        value += 0.5 * delta * params.flat.norm_squared();
        grad.axpy(delta, &params.flat, 1.0);
    }
    Ok((value, grad))
}

/// Gradient of the distillation objective (T = 1, δ = 0) computed two
/// ways: by backpropagating the objective, and as
/// `Σ ∇f[h(f) − y] − (1−λ)·Σ ∇f·r*` with teacher residuals
/// `r* = h(f*) − y`. Returns `‖a − b‖ / max(‖a‖, 1e-300)`.
pub fn kd_leftover_identity_check(
    student: &MlpParams,
    teacher: &MlpParams,
    spec: &MlpSpec,
    data: &LabeledData,
    lambda: f64,
) -> Result<f64> {
    let teacher_logits = mlp_forward_batch(teacher, spec, &data.inputs)?;
    let (_, direct) = mlp_loss_grad(
        student,
        spec,
        data,
        TargetMode::Soft {
            teacher_logits: &teacher_logits,
            temperature: 1.0,
        },
        lambda,
        0.0,
    )?;

    let labels = spec.label_targets(data)?;
    let teacher_means = spec.soft_targets(&teacher_logits, 1.0)?;
    let p = student.flat.as_slice();
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut data_grad = vec![0.0; p.len()];
    accumulate(spec, p, &data.inputs, &rows, &mut data_grad, |i, f| {
        let h = spec.output_mean(f);
        let y = row_of(&labels, i);
        (0.0, h.iter().zip(&y).map(|(a, b)| a - b).collect())
    });
    let mut residual_grad = vec![0.0; p.len()];
    accumulate(spec, p, &data.inputs, &rows, &mut residual_grad, |i, _| {
        let y = row_of(&labels, i);
        let hs = row_of(&teacher_means, i);
        (0.0, hs.iter().zip(&y).map(|(a, b)| a - b).collect())
    });
    let rebuilt = DVector::from_vec(data_grad) - DVector::from_vec(residual_grad) * (1.0 - lambda);
    Ok((&direct - rebuilt).norm() / direct.norm().max(1e-300))
}

/// Value of the deep K-prior
/// `Σ_{i∈𝓜} B_A(f_w^i ‖ f*^i) + τ(δ/2)‖w − w*‖²`, zero at `w = w*`.
pub fn dl_kprior_value(
    params: &MlpParams,
    spec: &MlpSpec,
    base_soft_logits: &DMatrix<f64>,
    memory_inputs: &DMatrix<f64>,
    w_star: &DVector<f64>,
    delta: f64,
    tau: f64,
) -> Result<f64> {
    check_dim("memory logits", memory_inputs.nrows(), base_soft_logits.nrows())?;
    check_dim("base weights", spec.num_params(), w_star.len())?;
    let logits = mlp_forward_batch(params, spec, memory_inputs)?;
    let mut v = 0.0;
    for i in 0..logits.nrows() {
        let f = row_of(&logits, i);
        let fs = row_of(base_soft_logits, i);
        let hs = spec.output_mean(&fs);
        let diff: f64 = f.iter().zip(&fs).zip(&hs).map(|((a, b), h)| h * (a - b)).sum();
        v += spec.output_log_partition(&f) - spec.output_log_partition(&fs) - diff;
    }
    Ok(v + 0.5 * tau * delta * (&params.flat - w_star).norm_squared())
}

/// `Σ_{i∈𝓜} ∇f_w^i [h(f_w^i) − h(f*^i)] + τδ(w − w*)`.
pub fn dl_kprior_grad(
    params: &MlpParams,
    spec: &MlpSpec,
    base_soft_logits: &DMatrix<f64>,
    memory_inputs: &DMatrix<f64>,
    w_star: &DVector<f64>,
    delta: f64,
    tau: f64,
) -> Result<DVector<f64>> {
    check_dim("mlp parameters", spec.num_params(), params.flat.len())?;
    check_dim("base weights", spec.num_params(), w_star.len())?;
    check_dim("memory logits", memory_inputs.nrows(), base_soft_logits.nrows())?;
    check_dim("memory logits width", spec.output_dim(), base_soft_logits.ncols())?;
    check_dim("memory inputs", spec.input_dim(), memory_inputs.ncols())?;
    let p = params.flat.as_slice();
    let mut grad = vec![0.0; p.len()];
    let rows: Vec<usize> = (0..memory_inputs.nrows()).collect();
    accumulate(spec, p, memory_inputs, &rows, &mut grad, |i, f| {
        let h = spec.output_mean(f);
        let hs = spec.output_mean(&row_of(base_soft_logits, i));
        (0.0, h.iter().zip(&hs).map(|(a, b)| a - b).collect())
    });
    let mut grad = DVector::from_vec(grad);
    grad += (&params.flat - w_star) * (tau * delta);
    Ok(grad)
}

/// Row loss `sign · scale · T² · Σ_i [A(f_i/T) − ⟨t_i, f_i/T⟩]` for an MLP.
#[derive(Debug, Clone)]
pub struct MlpLoss {
    spec: MlpSpec,
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    temperature: f64,
    scale: f64,
}

impl MlpLoss {
    pub fn new(spec: MlpSpec, inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        check_dim("mlp loss inputs", spec.input_dim(), inputs.ncols())?;
        check_dim("mlp loss targets", inputs.nrows(), targets.nrows())?;
        check_dim("mlp loss target width", spec.output_dim(), targets.ncols())?;
        Ok(Self {
            spec,
            inputs,
            targets,
            temperature: 1.0,
            scale: 1.0,
        })
    }

    pub fn labels(spec: MlpSpec, data: &LabeledData) -> Result<Self> {
        let t = spec.label_targets(data)?;
        Self::new(spec, data.inputs.clone(), t)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.scale *= s;
        self
    }
}

impl FiniteSum for MlpLoss {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn num_rows(&self) -> usize {
        self.inputs.nrows()
    }

    fn rows_value_grad(&self, w: &DVector<f64>, rows: &[usize], grad: &mut DVector<f64>) -> f64 {
        let spec = &self.spec;
        accumulate(spec, w.as_slice(), &self.inputs, rows, grad.as_mut_slice(), |i, f| {
            tempered_cross_entropy(spec, f, &row_of(&self.targets, i), self.temperature, self.scale)
        })
    }
}

/// An MLP bound to concrete parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new(spec: MlpSpec, params: MlpParams) -> Result<Self> {
        check_dim("mlp parameters", spec.num_params(), params.flat.len())?;
        Ok(Self { spec, params })
    }
}

impl Predictor for Mlp {
    fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn predict_logits(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        mlp_forward_batch(&self.params, &self.spec, inputs)
    }

    fn memorability(&self, logits: &[f64]) -> f64 {
        match self.spec.output {
            OutputKind::Sigmoid => {
                let h = sigmoid(logits[0]);
                h * (1.0 - h)
            }
            OutputKind::Softmax(_) => {
                let p = softmax(logits, 1.0);
                1.0 - p.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    fn hard_label(&self, logits: &[f64]) -> f64 {
        match self.spec.output {
            OutputKind::Sigmoid => {
                if sigmoid(logits[0]) > 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            // first maximal index wins ties
            OutputKind::Softmax(_) => {
                let mut best = 0;
                for (k, &v) in logits.iter().enumerate() {
                    if v > logits[best] {
                        best = k;
                    }
                }
                best as f64
            }
        }
    }
}
