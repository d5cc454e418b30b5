//! Small feed-forward classifier with exact manual backpropagation and
//! momentum SGD. Training is single-threaded and bit-deterministic per seed.

use crate::error::{CalError, Result};
use crate::loss::softmax;
use crate::matrix::Matrix;
use crate::rng::{self, substream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    /// out×in weight matrix.
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    /// Layer sizes from input dim to number of classes.
    pub sizes: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// He-uniform initialization, biases zero, seeded.
    pub fn init(input_dim: usize, hidden: &[usize], num_classes: usize, seed: u64) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(num_classes);
        let mut rng = substream(seed, rng::stream::MODEL_INIT);
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let mut w = Matrix::zeros(fan_out, fan_in);
                for v in w.data_mut() {
                    *v = rng.random_range(-limit..limit);
                }
                Layer {
                    w,
                    b: vec![0.0; fan_out],
                }
            })
            .collect();
        MlpParams { sizes, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.is_finite() && l.b.iter().all(|v| v.is_finite()))
    }

    /// Zero-filled gradients/velocity with matching shapes.
    pub fn zeros_like(&self) -> Vec<Layer> {
        self.layers
            .iter()
            .map(|l| Layer {
                w: Matrix::zeros(l.w.rows(), l.w.cols()),
                b: vec![0.0; l.b.len()],
            })
            .collect()
    }
}

/// Post-activation values of every layer for one batch; `activations[0]` is
/// the input batch itself and the last entry holds the softmax output.
pub struct ForwardCache {
    pub activations: Vec<Matrix>,
    pub probs: Matrix,
}

/// Forward pass over a batch (rows are samples). ReLU hidden layers, softmax
/// head.
pub fn forward_batch(params: &MlpParams, x: &Matrix) -> Result<ForwardCache> {
    if x.cols() != params.input_dim() {
        return Err(CalError::invalid(format!(
            "input dim {} does not match model dim {}",
            x.cols(),
            params.input_dim()
        )));
    }
    let depth = params.layers.len();
    let mut activations = Vec::with_capacity(depth + 1);
    activations.push(x.clone());
    for (li, layer) in params.layers.iter().enumerate() {
        let prev = activations.last().unwrap();
        let mut z = prev.matmul_nt(&layer.w);
        for i in 0..z.rows() {
            let row = z.row_mut(i);
            for (v, b) in row.iter_mut().zip(&layer.b) {
                *v += b;
            }
            if li + 1 < depth {
                for v in row.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        activations.push(z);
    }
    let logits = activations.last().unwrap();
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let p = softmax(logits.row(i));
        probs.row_mut(i).copy_from_slice(&p);
    }
    Ok(ForwardCache { activations, probs })
}

/// Convenience single-sample probabilities.
pub fn predict_probs(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    let m = Matrix::from_rows(vec![x.to_vec()]);
    let cache = forward_batch(params, &m)?;
    Ok(cache.probs.row(0).to_vec())
}

/// Batched probability matrix for a whole feature matrix, computed in chunks.
pub fn predict_probs_matrix(params: &MlpParams, x: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(x.rows(), params.num_classes());
    let chunk = 256;
    let mut start = 0;
    while start < x.rows() {
        let end = (start + chunk).min(x.rows());
        let block = Matrix::from_rows((start..end).map(|i| x.row(i).to_vec()).collect());
        let cache = forward_batch(params, &block)?;
        for i in start..end {
            out.row_mut(i).copy_from_slice(cache.probs.row(i - start));
        }
        start = end;
    }
    Ok(out)
}

/// Exact chain-rule gradients for a batch given upstream `dL/dlogits`
/// (same shape as the logits). Returns per-layer gradients summed over the
/// batch rows; scale the upstream if a mean is wanted.
pub fn backward_batch(
    params: &MlpParams,
    cache: &ForwardCache,
    dlogits: &Matrix,
) -> Result<Vec<Layer>> {
    let depth = params.layers.len();
    let batch = dlogits.rows();
    if cache.activations[0].rows() != batch {
        return Err(CalError::invalid("cache/batch size mismatch"));
    }
    let mut grads = params.zeros_like();
    let mut delta = dlogits.clone();
    for li in (0..depth).rev() {
        let prev = &cache.activations[li];
        // dW = delta^T * prev, db = column sums of delta
        let g = &mut grads[li];
        for b in 0..batch {
            let drow = delta.row(b);
            let arow = prev.row(b);
            for (o, &d) in drow.iter().enumerate() {
                if d != 0.0 {
                    let wrow = g.w.row_mut(o);
                    for (wi, &a) in wrow.iter_mut().zip(arow) {
                        *wi += d * a;
                    }
                }
            }
            for (bo, &d) in g.b.iter_mut().zip(drow) {
                *bo += d;
            }
        }
        if li > 0 {
            // d(prev) = delta * W, masked by the ReLU derivative.
            let mut next = delta.matmul_nt_transposed(&params.layers[li].w);
            for b in 0..batch {
                let arow = prev.row(b);
                let nrow = next.row_mut(b);
                for (v, &a) in nrow.iter_mut().zip(arow) {
                    if a <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = next;
        }
    }
    Ok(grads)
}

impl Matrix {
    /// `self (n×o) * other (o×i)`: used for propagating deltas through a
    /// layer whose weights are stored out×in.
    pub fn matmul_nt_transposed(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols(), other.rows(), "inner dimension mismatch");
        let mut out = Matrix::zeros(self.rows(), other.cols());
        for i in 0..self.rows() {
            let a = self.row(i);
            let orow = out.row_mut(i);
            for (o, &av) in a.iter().enumerate() {
                if av != 0.0 {
                    let brow = other.row(o);
                    for (ov, &bv) in orow.iter_mut().zip(brow) {
                        *ov += av * bv;
                    }
                }
            }
        }
        out
    }
}

/// Momentum SGD state. Velocity update `v <- m*v + g + wd*theta`,
/// parameter update `theta <- theta - lr*v`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimState {
    pub velocity: Vec<Layer>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimState {
    pub fn new(params: &MlpParams, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        OptimState {
            velocity: params.zeros_like(),
            lr,
            momentum,
            weight_decay,
        }
    }
}

pub fn sgd_step(params: &mut MlpParams, grads: &[Layer], state: &mut OptimState) -> Result<()> {
    for (li, g) in grads.iter().enumerate() {
        if !g.w.is_finite() || g.b.iter().any(|v| !v.is_finite()) {
            return Err(CalError::Divergence(format!(
                "non-finite gradient in layer {li}"
            )));
        }
    }
    for ((layer, g), v) in params
        .layers
        .iter_mut()
        .zip(grads)
        .zip(state.velocity.iter_mut())
    {
        for i in 0..layer.w.rows() {
            let wrow = layer.w.row_mut(i);
            let grow = g.w.row(i);
            let vrow = v.w.row_mut(i);
            for j in 0..wrow.len() {
                vrow[j] = state.momentum * vrow[j] + grow[j] + state.weight_decay * wrow[j];
                wrow[j] -= state.lr * vrow[j];
            }
        }
        for j in 0..layer.b.len() {
            v.b[j] = state.momentum * v.b[j] + g.b[j] + state.weight_decay * layer.b[j];
            layer.b[j] -= state.lr * v.b[j];
        }
    }
    Ok(())
}

/// Step schedule: divide the initial rate by `drop_factor` at each listed
/// epoch boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub drop_factor: f64,
    pub drop_epochs: Vec<usize>,
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.drop_epochs.iter().filter(|&&e| epoch >= e).count();
        self.initial / self.drop_factor.powi(drops as i32)
    }
}

/// Versioned training checkpoint; JSON round-trips every f64 exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub params: MlpParams,
    pub optim: OptimState,
    /// Epochs completed so far.
    pub epoch: usize,
    /// Master seed; together with `epoch` this reproduces the RNG state of
    /// every named substream.
    pub seed: u64,
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(CalError::invalid(format!(
                "unsupported checkpoint schema {}",
                ck.schema_version
            )));
        }
        Ok(ck)
    }
}
