//! Desk-scale end-to-end pipeline.
//!
//! A synthetic blob dataset with label noise confined to one region of input
//! space, a linear classifier whose two heads predict per-class logit means and
//! log-stds (trained with the averaged-softmax logit-sampling loss), and a
//! plain linear softmax classifier as the point-estimate baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleField;
use crate::error::{Error, Result};
use crate::estimate::softmax_in_place;
use crate::field::{field_confidence, EstimatorConfig, FieldConfidence, Method};
use crate::gaussian::{argmax, GaussianField};
use crate::metrics::{
    accumulate_confusion, calibration_inputs, miou, BinScheme, CalibrationReport,
};
use crate::rng::DeterministicStream;

// Stream ids; per-sample training noise uses the sample index directly.
const DATA_STREAM: u64 = 1 << 62;
const INIT_STREAM: u64 = (1 << 62) + 1;
const SHUFFLE_STREAM: u64 = (1 << 62) + 2;

/// Axis-aligned box; `None` bounds are unbounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(d, &v)| {
            self.lower
                .get(d)
                .copied()
                .flatten()
                .is_none_or(|lo| v >= lo)
                && self.upper.get(d).copied().flatten().is_none_or(|hi| v < hi)
        })
    }
}

/// Generator for [`SyntheticDataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    /// One center per class, each of length `dim`.
    pub centers: Vec<Vec<f64>>,
    /// Per-class, per-dimension blob standard deviations.
    pub blob_stds: Vec<Vec<f64>>,
    /// Probability of relabelling a sample that falls inside `noisy_region`.
    pub flip_prob: f64,
    pub noisy_region: Region,
}

impl Default for DatasetSpec {
    /// Three blobs along the first axis; labels right of `x₀ = 3`, which is
    /// mostly the outer class's blob, are flipped to the nearest other class
    /// with probability 0.3.
    fn default() -> Self {
        Self {
            centers: vec![vec![-4.0, 0.0], vec![0.0, 0.0], vec![4.0, 0.0]],
            blob_stds: vec![vec![0.8, 1.0]; 3],
            flip_prob: 0.3,
            noisy_region: Region {
                lower: vec![Some(3.0), None],
                upper: vec![None, None],
            },
        }
    }
}

impl DatasetSpec {
    pub fn classes(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.classes();
        if c == 0 {
            return Err(Error::InvalidConfig("dataset spec has zero classes".into()));
        }
        if c < 2 {
            return Err(Error::InvalidConfig(
                "dataset spec needs at least 2 classes".into(),
            ));
        }
        let d = self.dim();
        if d == 0 || self.centers.iter().any(|v| v.len() != d) {
            return Err(Error::InvalidConfig(
                "centers must share a nonzero dimension".into(),
            ));
        }
        if self.blob_stds.len() != c
            || self
                .blob_stds
                .iter()
                .any(|s| s.len() != d || s.iter().any(|v| !(v.is_finite() && *v >= 0.0)))
        {
            return Err(Error::InvalidConfig(
                "blob_stds must be classes x dim finite non-negative values".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::InvalidConfig("flip_prob must be in [0, 1]".into()));
        }
        Ok(())
    }

    fn nearest_other(&self, x: &[f64], label: usize) -> usize {
        let dist = |k: usize| -> f64 {
            self.centers[k]
                .iter()
                .zip(x)
                .map(|(c, v)| (c - v) * (c - v))
                .sum()
        };
        (0..self.classes())
            .filter(|&k| k != label)
            .min_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)))
            .expect("at least two classes")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub dim: usize,
    pub classes: usize,
    /// Row-major `N × dim`.
    pub inputs: Vec<f64>,
    pub labels: Vec<u32>,
    /// Generating blob of each sample, before any flip.
    pub source_labels: Vec<u32>,
    pub in_noisy_region: Vec<bool>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }
}

/// Draws `n` samples: a uniform class, a Gaussian point around its center,
/// and inside the noisy region a flip to the nearest other class with
/// probability `flip_prob`.
pub fn generate_dataset(spec: &DatasetSpec, n: usize, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput("dataset size must be >= 1"));
    }
    let (c, d) = (spec.classes(), spec.dim());
    let mut s = DeterministicStream::new(seed, DATA_STREAM);
    let mut inputs = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut source_labels = Vec::with_capacity(n);
    let mut in_noisy_region = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        let k = s.next_below(c as u64) as usize;
        for (j, v) in x.iter_mut().enumerate() {
            *v = spec.centers[k][j] + spec.blob_stds[k][j] * s.next_normal();
        }
        let noisy = spec.noisy_region.contains(&x);
        // always consume the flip draw so sample i's stream position is fixed
        let u = s.next_uniform();
        let label = if noisy && u < spec.flip_prob {
            spec.nearest_other(&x, k)
        } else {
            k
        };
        inputs.extend_from_slice(&x);
        labels.push(label as u32);
        source_labels.push(k as u32);
        in_noisy_region.push(noisy);
    }
    Ok(SyntheticDataset {
        dim: d,
        classes: c,
        inputs,
        labels,
        source_labels,
        in_noisy_region,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// The step size decays linearly over the epochs to this fraction of
    /// `learning_rate`; 1 keeps it constant.
    pub final_lr_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Logit samples per example in the loss (T).
    pub loss_samples: usize,
    pub seed: u64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Std of the random initial weights.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    /// Desk defaults; [`TrainConfig::full_samples`] restores T = 150.
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            final_lr_fraction: 0.02,
            epochs: 60,
            batch_size: 32,
            loss_samples: 30,
            seed: 0,
            log_std_min: -10.0,
            log_std_max: 10.0,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub const FULL_LOSS_SAMPLES: usize = 150;

    pub fn full_samples(mut self) -> Self {
        self.loss_samples = Self::FULL_LOSS_SAMPLES;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Step size used during `epoch`.
    pub fn epoch_learning_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.learning_rate * (1.0 - t * (1.0 - self.final_lr_fraction))
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.loss_samples == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and loss_samples must be >= 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::InvalidConfig(
                "final_lr_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.log_std_min.is_nan()
            || self.log_std_max.is_nan()
            || self.log_std_min > self.log_std_max
        {
            return Err(Error::InvalidConfig(
                "log_std_min must be <= log_std_max".into(),
            ));
        }
        Ok(())
    }
}

/// Linear mean head and linear log-std head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianHeadModel {
    pub classes: usize,
    pub dim: usize,
    /// `classes × dim`, row-major.
    pub w_mu: Vec<f64>,
    pub b_mu: Vec<f64>,
    pub w_s: Vec<f64>,
    pub b_s: Vec<f64>,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

/// Gradients with the same layout as [`GaussianHeadModel`]'s parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHeadGrads {
    pub w_mu: Vec<f64>,
    pub b_mu: Vec<f64>,
    pub w_s: Vec<f64>,
    pub b_s: Vec<f64>,
}

impl GaussianHeadGrads {
    fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            w_mu: vec![0.0; classes * dim],
            b_mu: vec![0.0; classes],
            w_s: vec![0.0; classes * dim],
            b_s: vec![0.0; classes],
        }
    }
}

fn random_matrix(s: &mut DeterministicStream, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * s.next_normal()).collect()
}

fn linear(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        *o = b[k]
            + w[k * d..(k + 1) * d]
                .iter()
                .zip(x)
                .map(|(a, v)| a * v)
                .sum::<f64>();
    }
}

impl GaussianHeadModel {
    pub fn init(classes: usize, dim: usize, cfg: &TrainConfig) -> Self {
        let mut s = DeterministicStream::new(cfg.seed, INIT_STREAM);
        Self {
            classes,
            dim,
            w_mu: random_matrix(&mut s, classes * dim, cfg.init_scale),
            b_mu: vec![0.0; classes],
            w_s: random_matrix(&mut s, classes * dim, cfg.init_scale),
            b_s: vec![0.0; classes],
            log_std_min: cfg.log_std_min,
            log_std_max: cfg.log_std_max,
        }
    }

    /// Means, raw (unclamped) log-stds, and stds for one input.
    fn heads(&self, x: &[f64], mu: &mut [f64], raw: &mut [f64], sigma: &mut [f64]) {
        linear(&self.w_mu, &self.b_mu, x, mu);
        linear(&self.w_s, &self.b_s, x, raw);
        for (s, r) in sigma.iter_mut().zip(raw.iter()) {
            *s = r.clamp(self.log_std_min, self.log_std_max).exp();
        }
    }

    pub fn param_count(&self) -> usize {
        2 * (self.w_mu.len() + self.b_mu.len())
    }

    /// Parameters as one flat vector, in the order `w_mu, b_mu, w_s, b_s`.
    pub fn params(&self) -> Vec<f64> {
        [&self.w_mu[..], &self.b_mu, &self.w_s, &self.b_s].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (a, b) = (self.w_mu.len(), self.b_mu.len());
        self.w_mu.copy_from_slice(&p[..a]);
        self.b_mu.copy_from_slice(&p[a..a + b]);
        self.w_s.copy_from_slice(&p[a + b..2 * a + b]);
        self.b_s.copy_from_slice(&p[2 * a + b..]);
    }
}

impl GaussianHeadGrads {
    pub fn flat(&self) -> Vec<f64> {
        [&self.w_mu[..], &self.b_mu, &self.w_s, &self.b_s].concat()
    }
}

/// Averaged-softmax logit-sampling loss on a batch and its exact gradient.
///
/// For each example the logit samples are `μ + σ ⊙ ε_t` with `ε` taken from
/// `noise` (`batch × T × C`, example-major), and the loss is
/// `−log((1/T) Σ_t softmax(μ + σ ⊙ ε_t)_y)`, averaged over the batch.
pub fn logit_sampling_loss(
    model: &GaussianHeadModel,
    inputs: &[f64],
    labels: &[u32],
    noise: &[f64],
    t: usize,
) -> Result<(f64, GaussianHeadGrads)> {
    let (c, d) = (model.classes, model.dim);
    let batch = labels.len();
    if t == 0 || batch == 0 {
        return Err(Error::InvalidConfig(
            "loss needs T >= 1 and a non-empty batch".into(),
        ));
    }
    if inputs.len() != batch * d || noise.len() != batch * t * c {
        return Err(Error::ShapeMismatch(format!(
            "batch of {batch}: {} inputs (want {}), {} noise values (want {})",
            inputs.len(),
            batch * d,
            noise.len(),
            batch * t * c
        )));
    }
    let mut grads = GaussianHeadGrads::zeros(c, d);
    let mut total = 0.0;
    let (mut mu, mut raw, mut sigma) = (vec![0.0; c], vec![0.0; c], vec![0.0; c]);
    let mut probs = vec![0.0; t * c];
    let (mut g_mu, mut g_sigma) = (vec![0.0; c], vec![0.0; c]);
    let scale = 1.0 / batch as f64;

    for i in 0..batch {
        let x = &inputs[i * d..(i + 1) * d];
        let y = labels[i] as usize;
        if y >= c {
            return Err(Error::OutOfRange(format!("label {y} with {c} classes")));
        }
        let eps = &noise[i * t * c..(i + 1) * t * c];
        model.heads(x, &mut mu, &mut raw, &mut sigma);

        let mut avg_y = 0.0;
        for (p, e) in probs.chunks_exact_mut(c).zip(eps.chunks_exact(c)) {
            for k in 0..c {
                p[k] = mu[k] + sigma[k] * e[k];
            }
            softmax_in_place(p);
            avg_y += p[y];
        }
        avg_y /= t as f64;
        let loss = -avg_y.ln();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                index: i,
                value: loss,
            });
        }
        total += loss;

        // dL/dz_{t,k} = -(1/(T·P̄_y)) · p_{t,y} · (δ_{yk} − p_{t,k})
        g_mu.fill(0.0);
        g_sigma.fill(0.0);
        let coef = -1.0 / (t as f64 * avg_y);
        for (p, e) in probs.chunks_exact(c).zip(eps.chunks_exact(c)) {
            let py = p[y];
            for k in 0..c {
                let dz = coef * py * (f64::from(u8::from(k == y)) - p[k]);
                g_mu[k] += dz;
                g_sigma[k] += dz * e[k];
            }
        }
        for k in 0..c {
            // σ = exp(clamp(s)); the clamp has zero slope outside its range
            let in_range = raw[k] > model.log_std_min && raw[k] < model.log_std_max;
            let g_s = if in_range { g_sigma[k] * sigma[k] } else { 0.0 };
            let g_m = g_mu[k];
            grads.b_mu[k] += scale * g_m;
            grads.b_s[k] += scale * g_s;
            for j in 0..d {
                grads.w_mu[k * d + j] += scale * g_m * x[j];
                grads.w_s[k * d + j] += scale * g_s * x[j];
            }
        }
    }
    Ok((total * scale, grads))
}

/// Linear softmax classifier trained with plain cross-entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimateModel {
    pub classes: usize,
    pub dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl PointEstimateModel {
    pub fn init(classes: usize, dim: usize, cfg: &TrainConfig) -> Self {
        let mut s = DeterministicStream::new(cfg.seed, INIT_STREAM);
        Self {
            classes,
            dim,
            w: random_matrix(&mut s, classes * dim, cfg.init_scale),
            b: vec![0.0; classes],
        }
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.classes];
        linear(&self.w, &self.b, x, &mut z);
        softmax_in_place(&mut z);
        z
    }

    /// Predicted class and its softmax probability for each input.
    pub fn predict(&self, inputs: &[f64]) -> (Vec<u32>, Vec<f64>) {
        inputs
            .chunks_exact(self.dim)
            .map(|x| {
                let p = self.probs(x);
                let k = argmax(&p);
                (k as u32, p[k])
            })
            .unzip()
    }
}

/// Mean cross-entropy on a batch and its gradient `(w, b)`.
pub fn cross_entropy_loss(
    model: &PointEstimateModel,
    inputs: &[f64],
    labels: &[u32],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (c, d) = (model.classes, model.dim);
    let batch = labels.len();
    let mut gw = vec![0.0; c * d];
    let mut gb = vec![0.0; c];
    let mut total = 0.0;
    let scale = 1.0 / batch as f64;
    for (i, (x, &y)) in inputs.chunks_exact(d).zip(labels).enumerate() {
        let y = y as usize;
        let p = model.probs(x);
        let loss = -p[y].ln();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                index: i,
                value: loss,
            });
        }
        total += loss;
        for k in 0..c {
            let g = scale * (p[k] - f64::from(u8::from(k == y)));
            gb[k] += g;
            for j in 0..d {
                gw[k * d + j] += g * x[j];
            }
        }
    }
    Ok((total * scale, gw, gb))
}

/// A trained model with its per-epoch mean training loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trained<M> {
    pub model: M,
    pub loss_curve: Vec<f64>,
}

/// Training noise for example `index`: `T × C` standard normals, identical in
/// every epoch.
pub fn example_noise(seed: u64, index: usize, t: usize, classes: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), t * classes);
    DeterministicStream::new(seed, index as u64).fill_normal(out);
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut s = DeterministicStream::at(seed, SHUFFLE_STREAM, (epoch as u64) << 40);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = s.next_below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    order
}

fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// Mini-batch SGD on the logit-sampling loss.
pub fn train_gaussian_head(
    data: &SyntheticDataset,
    cfg: &TrainConfig,
) -> Result<Trained<GaussianHeadModel>> {
    cfg.validate()?;
    let mut model = GaussianHeadModel::init(data.classes, data.dim, cfg);
    let (c, d, t) = (data.classes, data.dim, cfg.loss_samples);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut xb = Vec::with_capacity(cfg.batch_size * d);
    let mut yb = Vec::with_capacity(cfg.batch_size);
    let mut nb = vec![0.0; cfg.batch_size * t * c];
    for epoch in 0..cfg.epochs {
        let lr = cfg.epoch_learning_rate(epoch);
        let order = epoch_order(data.len(), cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for (slot, &i) in batch.iter().enumerate() {
                xb.extend_from_slice(data.input(i));
                yb.push(data.labels[i]);
                example_noise(cfg.seed, i, t, c, &mut nb[slot * t * c..(slot + 1) * t * c]);
            }
            let (loss, grads) =
                logit_sampling_loss(&model, &xb, &yb, &nb[..batch.len() * t * c], t).map_err(
                    |e| Error::Diverged {
                        epoch,
                        source: Box::new(e),
                    },
                )?;
            epoch_loss += loss * batch.len() as f64;
            let mut p = model.params();
            sgd_step(&mut p, &grads.flat(), lr);
            model.set_params(&p);
        }
        curve.push(epoch_loss / data.len() as f64);
    }
    Ok(Trained {
        model,
        loss_curve: curve,
    })
}

/// Mini-batch SGD on cross-entropy.
pub fn train_point_estimate(
    data: &SyntheticDataset,
    cfg: &TrainConfig,
) -> Result<Trained<PointEstimateModel>> {
    cfg.validate()?;
    let mut model = PointEstimateModel::init(data.classes, data.dim, cfg);
    let d = data.dim;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut xb = Vec::with_capacity(cfg.batch_size * d);
    let mut yb = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let lr = cfg.epoch_learning_rate(epoch);
        let order = epoch_order(data.len(), cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(data.input(i));
                yb.push(data.labels[i]);
            }
            let (loss, gw, gb) =
                cross_entropy_loss(&model, &xb, &yb).map_err(|e| Error::Diverged {
                    epoch,
                    source: Box::new(e),
                })?;
            epoch_loss += loss * batch.len() as f64;
            sgd_step(&mut model.w, &gw, lr);
            sgd_step(&mut model.b, &gb, lr);
        }
        curve.push(epoch_loss / data.len() as f64);
    }
    Ok(Trained {
        model,
        loss_curve: curve,
    })
}

/// Evaluates both heads on every input, as a `1 × N` field.
pub fn predict_field(model: &GaussianHeadModel, inputs: &[f64]) -> Result<GaussianField> {
    let (c, d) = (model.classes, model.dim);
    if d == 0 || !inputs.len().is_multiple_of(d) || inputs.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} input values is not a positive multiple of dim {d}",
            inputs.len()
        )));
    }
    let n = inputs.len() / d;
    let mut means = vec![0.0; n * c];
    let mut stds = vec![0.0; n * c];
    let mut raw = vec![0.0; c];
    for (i, x) in inputs.chunks_exact(d).enumerate() {
        model.heads(
            x,
            &mut means[i * c..(i + 1) * c],
            &mut raw,
            &mut stds[i * c..(i + 1) * c],
        );
    }
    GaussianField::new(1, n, c, means, stds)
}

/// Trains one Gaussian-head model per seed (each run differs only in its
/// seed) and evaluates all of them on `test`.
pub fn train_ensemble(
    train: &SyntheticDataset,
    test: &SyntheticDataset,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<EnsembleField> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("ensemble needs at least one seed"));
    }
    let members = seeds
        .par_iter()
        .map(|&seed| {
            let trained = train_gaussian_head(train, &cfg.clone().with_seed(seed))?;
            predict_field(&trained.model, &test.inputs)
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleField::new(members)
}

/// Calibration and segmentation quality of one method on a labelled split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodEvaluation {
    pub method: String,
    pub calibration: CalibrationReport,
    pub miou: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub accuracy: f64,
}

/// Scores `(prediction, confidence)` maps against labels.
pub fn evaluate_predictions(
    method: &str,
    prediction: &[u32],
    confidence: &[f64],
    labels: &[u32],
    classes: usize,
    bins: usize,
    scheme: BinScheme,
) -> Result<MethodEvaluation> {
    let (conf, correct) = calibration_inputs(confidence, prediction, labels, None)?;
    let calibration = CalibrationReport::compute(&conf, &correct, bins, scheme)?;
    let cm = accumulate_confusion(prediction, labels, classes, None)?;
    let (per_class_iou, mean) = miou(&cm)?;
    Ok(MethodEvaluation {
        method: method.to_string(),
        calibration,
        miou: mean,
        per_class_iou,
        accuracy: cm.accuracy().unwrap_or(0.0),
    })
}

/// Settings for the three-way toy comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub spec: DatasetSpec,
    pub train_size: usize,
    pub test_size: usize,
    pub train: TrainConfig,
    /// T for the softmax-averaging baseline at inference.
    pub inference_samples: usize,
    pub bins: usize,
    pub scheme: BinScheme,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            spec: DatasetSpec::default(),
            train_size: 20_000,
            test_size: 100_000,
            train: TrainConfig::default(),
            inference_samples: 50,
            bins: 10,
            scheme: BinScheme::EqualWidth,
        }
    }
}

/// Everything produced by one seeded comparison run.
#[derive(Clone, Debug)]
pub struct ComparisonRun {
    pub test: SyntheticDataset,
    pub gaussian: Trained<GaussianHeadModel>,
    pub point: Trained<PointEstimateModel>,
    pub field: GaussianField,
    /// Uncalibrated point estimate, Gaussian head + lower bound, Gaussian
    /// head + softmax averaging, in that order.
    pub evaluations: Vec<MethodEvaluation>,
}

pub const UNCALIBRATED: &str = "uncalibrated";

/// Train and test splits of the comparison seeded by `seed`.
pub fn comparison_splits(
    cfg: &ComparisonConfig,
    seed: u64,
) -> Result<(SyntheticDataset, SyntheticDataset)> {
    let train = generate_dataset(&cfg.spec, cfg.train_size, seed)?;
    let test = generate_dataset(&cfg.spec, cfg.test_size, seed ^ 0x5bd1_e995_0000_0000)?;
    Ok((train, test))
}

/// Confidence maps of the three compared methods on `test`, in the order of
/// [`ComparisonRun::evaluations`].
pub fn comparison_maps(
    cfg: &ComparisonConfig,
    seed: u64,
    test: &SyntheticDataset,
    gaussian: &GaussianHeadModel,
    point: &PointEstimateModel,
) -> Result<(GaussianField, Vec<(String, FieldConfidence)>)> {
    let field = predict_field(gaussian, &test.inputs)?;
    let (pp, pc) = point.predict(&test.inputs);
    let mut maps = vec![(
        UNCALIBRATED.to_string(),
        FieldConfidence {
            height: 1,
            width: test.len(),
            uncertainty: pc.iter().map(|c| 1.0 - c).collect(),
            prediction: pp,
            confidence: pc,
            nonconverged: 0,
        },
    )];
    for ecfg in comparison_estimators(cfg, seed) {
        maps.push((
            ecfg.method.as_str().to_string(),
            field_confidence(&field, &ecfg)?,
        ));
    }
    Ok((field, maps))
}

/// Estimator settings of the lower-bound and softmax-averaging rows.
pub fn comparison_estimators(cfg: &ComparisonConfig, seed: u64) -> [EstimatorConfig; 2] {
    [
        EstimatorConfig::new(Method::LowerBound).with_seed(seed),
        EstimatorConfig::new(Method::SoftmaxAvg)
            .with_samples(cfg.inference_samples)
            .with_seed(seed),
    ]
}

/// Trains both models on a fresh split drawn from `seed` and evaluates the
/// point-estimate baseline, the lower bound, and softmax averaging on the
/// test split.
pub fn run_comparison(cfg: &ComparisonConfig, seed: u64) -> Result<ComparisonRun> {
    let (train, test) = comparison_splits(cfg, seed)?;
    let tcfg = cfg.train.clone().with_seed(seed);
    let gaussian = train_gaussian_head(&train, &tcfg)?;
    let point = train_point_estimate(&train, &tcfg)?;
    let (field, maps) = comparison_maps(cfg, seed, &test, &gaussian.model, &point.model)?;
    let evaluations = maps
        .iter()
        .map(|(name, m)| {
            evaluate_predictions(
                name,
                &m.prediction,
                &m.confidence,
                &test.labels,
                test.classes,
                cfg.bins,
                cfg.scheme,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonRun {
        test,
        gaussian,
        point,
        field,
        evaluations,
    })
}
