//! Two-tower feedforward relevance classifier.
//!
//! The report vector and the method vector each pass through their own stack
//! of dense layers; the two tower outputs are concatenated and fed to a
//! single logistic unit. Everything (forward, backprop, optimizers) is
//! implemented here on top of `ndarray`.

mod checkpoint;
pub mod joint;
mod loss;
mod train;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imbalance::Instance;
use crate::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use loss::{LossKind, LossSpec, EPS};
pub use train::{train, EpochRecord, Model, OptimizerKind, OptimizerState, TrainConfig, TrainOutcome};

/// Both towers end in this width; the head sees twice as many inputs.
pub const TOWER_OUT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            // NaN must propagate so training can detect it
            Activation::Relu => {
                if z > 0.0 || z.is_nan() {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Layer widths (input first) and the hidden activation of one tower.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
}

impl TowerConfig {
    pub fn new(layer_dims: Vec<usize>, activation: Activation) -> Result<Self> {
        let cfg = Self { layer_dims, activation };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `input → 2^k → … → 32` where `2^k` is the largest power of two below
    /// the input width. Gives 384→256→128→64→32, 768→512→…→32,
    /// 300→256→…→32 and 100→64→32.
    pub fn halving(input_dim: usize) -> Self {
        let mut dims = vec![input_dim];
        let mut width = if input_dim <= TOWER_OUT {
            TOWER_OUT
        } else {
            1 << (usize::BITS - 1 - (input_dim - 1).leading_zeros())
        };
        while width > TOWER_OUT {
            dims.push(width);
            width /= 2;
        }
        dims.push(TOWER_OUT);
        Self {
            layer_dims: dims,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "tower needs at least two positive widths, got {:?}",
                self.layer_dims
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            biases: Array1::zeros(output),
            activation,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(input: usize, output: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        Self {
            weights: Array2::from_shape_simple_fn((output, input), || dist.sample(rng)),
            biases: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn pre_activation(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.biases
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let act = self.activation;
        self.pre_activation(x).mapv_into(|z| act.apply(z))
    }
}

fn build_tower(cfg: &TowerConfig, rng: &mut ChaCha8Rng) -> Vec<DenseLayer> {
    cfg.layer_dims
        .windows(2)
        .map(|w| DenseLayer::glorot(w[0], w[1], cfg.activation, rng))
        .collect()
}

/// Two towers plus a logistic head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub report_tower: Vec<DenseLayer>,
    pub method_tower: Vec<DenseLayer>,
    /// `1 × (report_out + method_out)`, sigmoid.
    pub head: DenseLayer,
}

/// Per-layer activations of a batch forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct TowerCache {
    acts: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    report: TowerCache,
    method: TowerCache,
    joined: Array2<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Gradients shaped like a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub report_tower: Vec<LayerGrads>,
    pub method_tower: Vec<LayerGrads>,
    pub head: LayerGrads,
}

impl NetworkGrads {
    /// Flat views in the same order as [`Network::slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.report_tower
            .iter()
            .chain(&self.method_tower)
            .chain(std::iter::once(&self.head))
            .flat_map(|g| [g.weights.as_slice().unwrap(), g.biases.as_slice().unwrap()])
            .collect()
    }
}

/// Row-major copy if needed; `dot` may return column-major results for
/// degenerate shapes, and flat slices must follow the parameter layout.
fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn tower_forward(tower: &[DenseLayer], input: Array2<f64>) -> TowerCache {
    let mut acts = Vec::with_capacity(tower.len() + 1);
    acts.push(input);
    for layer in tower {
        let next = layer.forward(acts.last().unwrap().view());
        acts.push(next);
    }
    TowerCache { acts }
}

/// Returns the layer gradients and dL/d(input).
fn tower_backward(tower: &[DenseLayer], cache: &TowerCache, mut grad: Array2<f64>) -> (Vec<LayerGrads>, Array2<f64>) {
    let mut grads = Vec::with_capacity(tower.len());
    for (i, layer) in tower.iter().enumerate().rev() {
        let out = &cache.acts[i + 1];
        let act = layer.activation;
        grad.zip_mut_with(out, |g, &a| *g *= act.derivative_from_output(a));
        let input = &cache.acts[i];
        grads.push(LayerGrads {
            weights: standard(grad.t().dot(input)),
            biases: grad.sum_axis(Axis(0)),
        });
        grad = grad.dot(&layer.weights);
    }
    grads.reverse();
    (grads, grad)
}

impl Network {
    /// Glorot-initialized network; the head is sized from the tower outputs.
    pub fn new(report: &TowerConfig, method: &TowerConfig, seed: u64) -> Result<Self> {
        report.validate()?;
        method.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report_tower = build_tower(report, &mut rng);
        let method_tower = build_tower(method, &mut rng);
        let head = DenseLayer::glorot(
            report.output_dim() + method.output_dim(),
            1,
            Activation::Sigmoid,
            &mut rng,
        );
        Ok(Self {
            report_tower,
            method_tower,
            head,
        })
    }

    pub fn report_dim(&self) -> usize {
        self.report_tower[0].input_dim()
    }

    pub fn method_dim(&self) -> usize {
        self.method_tower[0].input_dim()
    }

    pub fn report_config(&self) -> TowerConfig {
        tower_config(&self.report_tower)
    }

    pub fn method_config(&self) -> TowerConfig {
        tower_config(&self.method_tower)
    }

    pub fn check_dims(&self, report_dim: usize, method_dim: usize) -> Result<()> {
        if report_dim != self.report_dim() {
            return Err(Error::dim(self.report_dim(), report_dim, "report vector"));
        }
        if method_dim != self.method_dim() {
            return Err(Error::dim(self.method_dim(), method_dim, "method vector"));
        }
        Ok(())
    }

    /// Batch forward over row-stacked inputs.
    pub fn forward_batch(&self, reports: Array2<f64>, methods: Array2<f64>) -> Result<ForwardCache> {
        self.check_dims(reports.ncols(), methods.ncols())?;
        if reports.nrows() != methods.nrows() {
            return Err(Error::dim(reports.nrows(), methods.nrows(), "batch rows"));
        }
        let report = tower_forward(&self.report_tower, reports);
        let method = tower_forward(&self.method_tower, methods);
        let joined = concatenate(
            Axis(1),
            &[report.acts.last().unwrap().view(), method.acts.last().unwrap().view()],
        )
        .expect("tower outputs share the batch dimension");
        let logits = self.head.pre_activation(joined.view()).index_axis_move(Axis(1), 0);
        let probs = logits.mapv(sigmoid);
        Ok(ForwardCache {
            report,
            method,
            joined,
            logits,
            probs,
        })
    }

    /// Backprop from dL/dlogit per row. Returns parameter gradients and
    /// dL/d(method input), which joint training feeds into the code encoder.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &Array1<f64>) -> (NetworkGrads, Array2<f64>) {
        let d_logits_col = d_logits.view().insert_axis(Axis(1));
        let head = LayerGrads {
            weights: standard(d_logits_col.t().dot(&cache.joined)),
            biases: Array1::from_elem(1, d_logits.sum()),
        };
        let d_joined = d_logits_col.dot(&self.head.weights);
        let split = self.report_tower.last().unwrap().output_dim();
        let d_report = d_joined.slice(ndarray::s![.., ..split]).to_owned();
        let d_method = d_joined.slice(ndarray::s![.., split..]).to_owned();
        let (report_tower, _) = tower_backward(&self.report_tower, &cache.report, d_report);
        let (method_tower, d_method_input) = tower_backward(&self.method_tower, &cache.method, d_method);
        (
            NetworkGrads {
                report_tower,
                method_tower,
                head,
            },
            d_method_input,
        )
    }

    /// Relevance probability for one (report, method) pair.
    pub fn forward(&self, report_vec: &[f64], method_vec: &[f64]) -> Result<f64> {
        Ok(sigmoid_open(self.logit(report_vec, method_vec)?))
    }

    /// Inference alias of [`Network::forward`].
    pub fn predict_score(&self, report_vec: &[f64], method_vec: &[f64]) -> Result<f64> {
        self.forward(report_vec, method_vec)
    }

    /// Pre-sigmoid head output; ranks identically to the probability but
    /// does not saturate.
    pub fn logit(&self, report_vec: &[f64], method_vec: &[f64]) -> Result<f64> {
        self.check_dims(report_vec.len(), method_vec.len())?;
        let r = Array2::from_shape_vec((1, report_vec.len()), report_vec.to_vec()).unwrap();
        let m = Array2::from_shape_vec((1, method_vec.len()), method_vec.to_vec()).unwrap();
        Ok(self.forward_batch(r, m)?.logits[0])
    }

    /// Mean loss and gradients over a nonempty batch.
    pub fn gradient(&self, batch: &[&Instance], spec: &LossSpec) -> Result<(f64, NetworkGrads)> {
        if batch.is_empty() {
            return Err(Error::Config("gradient of an empty batch".into()));
        }
        let (reports, methods) = stack_inputs(batch, self.report_dim(), self.method_dim())?;
        let cache = self.forward_batch(reports, methods)?;
        let n = batch.len() as f64;
        let mut total = 0.0;
        let d_logits = Array1::from_iter(batch.iter().zip(&cache.probs).map(|(inst, &p)| {
            total += spec.loss(p, inst.label);
            spec.dloss_dlogit(p, inst.label) / n
        }));
        let (grads, _) = self.backward(&cache, &d_logits);
        Ok((total / n, grads))
    }

    /// Mean loss over a set, evaluated in chunks.
    pub fn mean_loss(&self, samples: &[Instance], spec: &LossSpec) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for chunk in samples.chunks(256) {
            let refs: Vec<&Instance> = chunk.iter().collect();
            let (reports, methods) = stack_inputs(&refs, self.report_dim(), self.method_dim())?;
            let cache = self.forward_batch(reports, methods)?;
            total += chunk
                .iter()
                .zip(&cache.probs)
                .map(|(inst, &p)| spec.loss(p, inst.label))
                .sum::<f64>();
        }
        Ok(total / samples.len() as f64)
    }

    /// Every parameter tensor as a flat slice: report layers, method layers,
    /// head; weights before biases.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.report_tower
            .iter_mut()
            .chain(&mut self.method_tower)
            .chain(std::iter::once(&mut self.head))
            .flat_map(|l| [l.weights.as_slice_mut().unwrap(), l.biases.as_slice_mut().unwrap()])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.report_tower
            .iter()
            .chain(&self.method_tower)
            .chain(std::iter::once(&self.head))
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.report_tower
            .iter()
            .chain(&self.method_tower)
            .chain(std::iter::once(&self.head))
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }
}

fn tower_config(tower: &[DenseLayer]) -> TowerConfig {
    let mut dims = vec![tower[0].input_dim()];
    dims.extend(tower.iter().map(DenseLayer::output_dim));
    TowerConfig {
        layer_dims: dims,
        activation: tower[0].activation,
    }
}

/// Sigmoid kept strictly inside (0, 1).
fn sigmoid_open(z: f64) -> f64 {
    sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub(crate) fn stack_inputs(
    batch: &[&Instance],
    report_dim: usize,
    method_dim: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut reports = Array2::zeros((batch.len(), report_dim));
    let mut methods = Array2::zeros((batch.len(), method_dim));
    for (i, inst) in batch.iter().enumerate() {
        if inst.report_vec.len() != report_dim {
            return Err(Error::dim(
                report_dim,
                inst.report_vec.len(),
                format!("report vector of {}", inst.bug_id),
            ));
        }
        if inst.method_vec.len() != method_dim {
            return Err(Error::dim(
                method_dim,
                inst.method_vec.len(),
                format!("method vector of {}/{}", inst.bug_id, inst.method_id),
            ));
        }
        reports.row_mut(i).assign(&ndarray::aview1(&inst.report_vec));
        methods.row_mut(i).assign(&ndarray::aview1(&inst.method_vec));
    }
    Ok((reports, methods))
}
