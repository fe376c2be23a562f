//! Windowed denoising autoencoder for contextual (inter-sensor) anomaly
//! detection, trained from scratch with exact analytic gradients.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{extract_windows, fit_normalization_multi, normalize, NormStats, TimeSeriesFrame};
use crate::error::{Error, Result};

/// Hidden layers use tanh, the output layer is identity. Stored as a tag so
/// the model file stays self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    TanhIdentity,
}

/// Dense windowed autoencoder over flattened W x S windows.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    /// input W*S -> hidden... -> latent -> hidden... -> output W*S
    pub layer_dims: Vec<usize>,
    /// Weight matrices, shape [in_dim, out_dim].
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
    pub norm_stats: NormStats,
    pub window_len: usize,
    pub input_dropout_rate: f64,
}

impl AutoencoderModel {
    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn sensor_count(&self) -> usize {
        self.norm_stats.sensor_count()
    }

    fn check_shapes(&self) -> Result<()> {
        let l = self.layer_dims.len();
        if l < 2 {
            return Err(Error::Shape("model needs at least 2 layer dims".into()));
        }
        if self.layer_dims[0] != self.layer_dims[l - 1] {
            return Err(Error::Shape("input and output dims differ".into()));
        }
        if self.weights.len() != l - 1 || self.biases.len() != l - 1 {
            return Err(Error::Shape("weight/bias count does not chain".into()));
        }
        for i in 0..l - 1 {
            if self.weights[i].dim() != (self.layer_dims[i], self.layer_dims[i + 1]) {
                return Err(Error::Shape(format!("weight {i} has wrong shape")));
            }
            if self.biases[i].len() != self.layer_dims[i + 1] {
                return Err(Error::Shape(format!("bias {i} has wrong length")));
            }
        }
        if self.window_len * self.sensor_count() != self.layer_dims[0] {
            return Err(Error::Shape("window_len * sensors != input dim".into()));
        }
        Ok(())
    }

    /// Normalized value a dead sensor (raw reading 0) maps to; this is also
    /// the training-time dropout fill for that channel.
    pub fn dropout_fill(&self, sensor: usize) -> f64 {
        -self.norm_stats.train_min[sensor] / self.norm_stats.range(sensor)
    }
}

/// Per-layer activations of one forward pass; `values[0]` is the input.
#[derive(Debug, Clone)]
pub struct Activations {
    pub values: Vec<Array1<f64>>,
}

impl Activations {
    pub fn output(&self) -> &Array1<f64> {
        self.values.last().expect("non-empty activations")
    }
}

/// Gradients of the MSE loss with respect to every weight and bias.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Affine-plus-activation pass for one flattened window; window values are
/// expected in normalized units.
pub fn forward(model: &AutoencoderModel, window_flat: &[f64]) -> Result<Activations> {
    if window_flat.len() != model.input_dim() {
        return Err(Error::Shape(format!(
            "input length {} != model input dim {}",
            window_flat.len(),
            model.input_dim()
        )));
    }
    let n_layers = model.weights.len();
    let mut values = Vec::with_capacity(n_layers + 1);
    values.push(Array1::from(window_flat.to_vec()));
    for l in 0..n_layers {
        let mut z = values[l].dot(&model.weights[l]) + &model.biases[l];
        if l != n_layers - 1 {
            z.mapv_inplace(f64::tanh);
        }
        values.push(z);
    }
    Ok(Activations { values })
}

/// Mean squared error between a reconstruction and its target.
pub fn mse(reconstruction: &Array1<f64>, target: &[f64]) -> f64 {
    let n = target.len() as f64;
    reconstruction
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// Exact analytic gradient of L = (1/(W*S)) * sum (xhat - target)^2 by
/// reverse accumulation. `activations` must come from a matching forward
/// call; under the denoising objective the target is the uncorrupted window
/// while `activations.values[0]` holds the corrupted input.
pub fn backward(
    model: &AutoencoderModel,
    target: &[f64],
    activations: &Activations,
) -> Result<Gradients> {
    let n_layers = model.weights.len();
    if activations.values.len() != n_layers + 1 {
        return Err(Error::Shape("activations do not match model depth".into()));
    }
    if target.len() != model.input_dim() {
        return Err(Error::Shape("target length != model input dim".into()));
    }
    for (l, a) in activations.values.iter().enumerate() {
        if a.len() != model.layer_dims[l] {
            return Err(Error::Shape(format!("activation {l} has stale shape")));
        }
    }
    let n = model.input_dim() as f64;
    let mut delta: Array1<f64> = activations
        .output()
        .iter()
        .zip(target)
        .map(|(a, t)| 2.0 * (a - t) / n)
        .collect();

    let mut w_grads = vec![Array2::zeros((0, 0)); n_layers];
    let mut b_grads = vec![Array1::zeros(0); n_layers];
    for l in (0..n_layers).rev() {
        let prev = &activations.values[l];
        let mut wg = Array2::zeros((prev.len(), delta.len()));
        for (i, &p) in prev.iter().enumerate() {
            for (j, &d) in delta.iter().enumerate() {
                wg[(i, j)] = p * d;
            }
        }
        w_grads[l] = wg;
        b_grads[l] = delta.clone();
        if l > 0 {
            let back = model.weights[l].dot(&delta);
            // prev is a tanh output for every hidden layer.
            delta = back
                .iter()
                .zip(prev.iter())
                .map(|(&b, &a)| b * (1.0 - a * a))
                .collect();
        }
    }
    Ok(Gradients {
        weights: w_grads,
        biases: b_grads,
    })
}

/// Training configuration; defaults are tuned for the synthetic coupled
/// process at desk scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub window_len: usize,
    pub latent: usize,
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub input_dropout_rate: f64,
    /// Stride of the training window extraction.
    pub stride: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window_len: 32,
            latent: 8,
            hidden_dims: vec![96],
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            input_dropout_rate: 0.3,
            stride: 1,
            seed: 0,
        }
    }
}

/// Model plus the per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AutoencoderModel,
    pub loss_curve: Vec<f64>,
    pub final_loss: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: u64,
}

impl AdamState {
    fn new(model: &AutoencoderModel) -> Self {
        Self {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut AutoencoderModel, grads: &BatchGradients, lr: f64) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - ADAM_BETA1.powf(t);
        let bc2 = 1.0 - ADAM_BETA2.powf(t);
        for l in 0..model.weights.len() {
            adam_tensor(
                model.weights[l].as_slice_mut().unwrap(),
                grads.weights[l].as_slice().unwrap(),
                self.m_w[l].as_slice_mut().unwrap(),
                self.v_w[l].as_slice_mut().unwrap(),
                lr,
                bc1,
                bc2,
            );
            adam_tensor(
                model.biases[l].as_slice_mut().unwrap(),
                grads.biases[l].as_slice().unwrap(),
                self.m_b[l].as_slice_mut().unwrap(),
                self.v_b[l].as_slice_mut().unwrap(),
                lr,
                bc1,
                bc2,
            );
        }
    }
}

fn adam_tensor(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, bc1: f64, bc2: f64) {
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
    }
}

struct BatchGradients {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Batched forward: rows are samples.
fn forward_batch(model: &AutoencoderModel, input: &Array2<f64>) -> Vec<Array2<f64>> {
    let n_layers = model.weights.len();
    let mut acts = Vec::with_capacity(n_layers + 1);
    acts.push(input.clone());
    for l in 0..n_layers {
        let mut z = acts[l].dot(&model.weights[l]) + &model.biases[l];
        if l != n_layers - 1 {
            z.mapv_inplace(f64::tanh);
        }
        acts.push(z);
    }
    acts
}

/// Batched reverse pass; gradients are averaged over the batch so the loss
/// is the mean per-sample MSE.
fn backward_batch(
    model: &AutoencoderModel,
    target: &Array2<f64>,
    acts: &[Array2<f64>],
) -> (f64, BatchGradients) {
    let n_layers = model.weights.len();
    let batch = target.nrows() as f64;
    let n = model.input_dim() as f64;
    let output = &acts[n_layers];
    let diff = output - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / (n * batch);
    let mut delta = diff.mapv(|d| 2.0 * d / (n * batch));

    let mut w_grads = vec![Array2::zeros((0, 0)); n_layers];
    let mut b_grads = vec![Array1::zeros(0); n_layers];
    for l in (0..n_layers).rev() {
        w_grads[l] = acts[l].t().dot(&delta);
        b_grads[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let back = delta.dot(&model.weights[l].t());
            delta = &back * &acts[l].mapv(|a| 1.0 - a * a);
        }
    }
    (
        loss,
        BatchGradients {
            weights: w_grads,
            biases: b_grads,
        },
    )
}

/// Glorot-uniform initialized model with the configured bottleneck.
pub fn init_model(
    cfg: &TrainConfig,
    norm_stats: NormStats,
    rng: &mut ChaCha8Rng,
) -> Result<AutoencoderModel> {
    let s = norm_stats.sensor_count();
    let input_dim = cfg.window_len * s;
    if cfg.latent >= input_dim {
        return Err(Error::InvalidArgument(format!(
            "latent dim {} must be < input dim {} (bottleneck)",
            cfg.latent, input_dim
        )));
    }
    let mut dims = vec![input_dim];
    dims.extend(&cfg.hidden_dims);
    dims.push(cfg.latent);
    dims.extend(cfg.hidden_dims.iter().rev());
    dims.push(input_dim);

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit));
        weights.push(w);
        biases.push(Array1::zeros(fan_out));
    }
    let model = AutoencoderModel {
        layer_dims: dims,
        weights,
        biases,
        activation: Activation::TanhIdentity,
        norm_stats,
        window_len: cfg.window_len,
        input_dropout_rate: cfg.input_dropout_rate,
    };
    model.check_shapes()?;
    Ok(model)
}

/// Trains the denoising window autoencoder by Adam on mini-batches.
/// Channel corruption either replaces a channel with its dead-sensor fill
/// value (raw reading 0, normalized) or biases it by a constant offset,
/// across the whole window or a contiguous segment of it; the loss target
/// stays the uncorrupted window. Fully deterministic given the seed.
pub fn train(frames: &[TimeSeriesFrame], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let stats = fit_normalization_multi(frames)?;
    let s = stats.sensor_count();
    let input_dim = cfg.window_len * s;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for frame in frames {
        let normed = normalize(frame, &stats)?;
        for w in extract_windows(&normed, cfg.window_len, cfg.stride)? {
            rows.push(w.flatten());
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("no complete training windows".into()));
    }
    let n_windows = rows.len();
    let mut data = Array2::zeros((n_windows, input_dim));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            data[(i, j)] = v;
        }
    }

    let fills: Vec<f64> = (0..s)
        .map(|j| -stats.train_min[j] / stats.range(j))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(cfg, stats, &mut rng)?;
    let mut adam = AdamState::new(&model);

    let mut order: Vec<usize> = (0..n_windows).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        // Fisher-Yates on the fixed RNG stream keeps runs bit-identical.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut target = Array2::zeros((b, input_dim));
            for (r, &idx) in chunk.iter().enumerate() {
                target.row_mut(r).assign(&data.row(idx));
            }
            let mut input = target.clone();
            if cfg.input_dropout_rate > 0.0 {
                for r in 0..b {
                    for (ch, &fill) in fills.iter().enumerate() {
                        if rng.gen_range(0.0..1.0) < cfg.input_dropout_rate {
                            // Half the corruptions span the whole window,
                            // half a contiguous segment, so fault onsets and
                            // offsets inside a window are also on the
                            // training manifold.
                            let (from, to) = if rng.gen_range(0.0..1.0) < 0.5 {
                                (0, cfg.window_len)
                            } else {
                                let a = rng.gen_range(0..cfg.window_len);
                                let b = rng.gen_range(0..cfg.window_len);
                                (a.min(b), a.max(b) + 1)
                            };
                            if rng.gen_range(0.0..1.0) < 0.7 {
                                // Dead sensor: raw reading 0.
                                for t in from..to {
                                    input[(r, t * s + ch)] = fill;
                                }
                            } else {
                                // Biased sensor: constant additive offset in
                                // normalized units; teaches the model to pull
                                // a drifted channel back to the consensus of
                                // the others instead of tracking it.
                                let delta = rng.gen_range(-0.4..0.4);
                                for t in from..to {
                                    input[(r, t * s + ch)] += delta;
                                }
                            }
                        }
                    }
                }
            }
            let acts = forward_batch(&model, &input);
            let (loss, grads) = backward_batch(&model, &target, &acts);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            adam.update(&mut model, &grads, cfg.learning_rate);
            epoch_loss += loss;
            batches += 1;
        }
        loss_curve.push(epoch_loss / batches as f64);
    }
    let final_loss = loss_curve.last().copied().unwrap_or(f64::NAN);
    Ok(TrainOutcome {
        model,
        loss_curve,
        final_loss,
    })
}

const MODEL_MAGIC: &[u8; 8] = b"TSVALAE1";
const MODEL_VERSION: u32 = 1;

/// Writes the model to a self-describing binary file; round trips bit-exact.
pub fn save_model(model: &AutoencoderModel, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.push(match model.activation {
        Activation::TanhIdentity => 0u8,
    });
    buf.extend_from_slice(&(model.window_len as u64).to_le_bytes());
    buf.extend_from_slice(&model.input_dropout_rate.to_le_bytes());
    buf.extend_from_slice(&(model.layer_dims.len() as u64).to_le_bytes());
    for &d in &model.layer_dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for (w, b) in model.weights.iter().zip(&model.biases) {
        for &v in w.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &v in b.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let s = model.sensor_count();
    buf.extend_from_slice(&(s as u64).to_le_bytes());
    for &v in &model.norm_stats.train_min {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &model.norm_stats.train_max {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::Write {
        path: path.display().to_string(),
        source: e,
    })?;
    file.write_all(&buf).map_err(|e| Error::Write {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format("model file truncated".into()));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_model(path: &Path) -> Result<AutoencoderModel> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut cur = Cursor {
        data: &data,
        pos: 0,
    };
    if cur.take(8)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let activation = match cur.take(1)?[0] {
        0 => Activation::TanhIdentity,
        tag => return Err(Error::Format(format!("unknown activation tag {tag}"))),
    };
    let window_len = cur.u64()? as usize;
    let input_dropout_rate = cur.f64()?;
    let n_dims = cur.u64()? as usize;
    let mut layer_dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        layer_dims.push(cur.u64()? as usize);
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in layer_dims.windows(2) {
        let (rows, cols) = (pair[0], pair[1]);
        let mut w = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                w[(i, j)] = cur.f64()?;
            }
        }
        weights.push(w);
        let mut b = Array1::zeros(cols);
        for j in 0..cols {
            b[j] = cur.f64()?;
        }
        biases.push(b);
    }
    let s = cur.u64()? as usize;
    let mut train_min = Vec::with_capacity(s);
    for _ in 0..s {
        train_min.push(cur.f64()?);
    }
    let mut train_max = Vec::with_capacity(s);
    for _ in 0..s {
        train_max.push(cur.f64()?);
    }
    let model = AutoencoderModel {
        layer_dims,
        weights,
        biases,
        activation,
        norm_stats: NormStats {
            train_min,
            train_max,
        },
        window_len,
        input_dropout_rate,
    };
    model.check_shapes()?;
    Ok(model)
}

#[cfg(test)]
pub(crate) fn toy_model(dims: &[usize], seed: u64) -> AutoencoderModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in dims.windows(2) {
        let limit = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
        weights.push(Array2::from_shape_fn((pair[0], pair[1]), |_| {
            rng.gen_range(-limit..limit)
        }));
        biases.push(Array1::from_shape_fn(pair[1], |_| rng.gen_range(-0.1..0.1)));
    }
    AutoencoderModel {
        layer_dims: dims.to_vec(),
        weights,
        biases,
        activation: Activation::TanhIdentity,
        norm_stats: NormStats {
            train_min: vec![0.0; dims[0]],
            train_max: vec![1.0; dims[0]],
        },
        window_len: 1,
        input_dropout_rate: 0.0,
    }
}
