//! A small fully connected network trained to imitate the optimizer.
//!
//! Inputs per instance are `[b; 𝒯ᵗʰ; |G_kk|]` (`3K` values), outputs are
//! `[p; f; ϖ]` (`2K + 1` values). Gains and powers span many decades, so
//! both pass through `log₁₀` before min-max scaling. Everything here is
//! plain `Vec<f64>` arithmetic; training is single-threaded so a seed fixes
//! the result bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harness::{sample_trial, ScenarioConfig};
use crate::latency::{Allocation, SystemConfig};
use crate::numerics::{derive_seed, SimRng};
use crate::solver::{alternating_optimize, audit_solution, Instance, SolverOptions};

#[derive(Debug, thiserror::Error)]
pub enum LearnerError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch} (last finite test loss {last_test_loss:e})")]
    Diverged { epoch: usize, last_test_loss: f64 },
    #[error("only {accepted} of {draws} draws were feasible; yield below {min_yield}")]
    LowYield {
        accepted: usize,
        draws: usize,
        min_yield: f64,
    },
    #[error("dataset row {row}: {message}")]
    Dataset { row: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Layer sizes `[3K, 128, 64, 32, 2K+1]`.
pub fn layer_sizes(devices: usize) -> Vec<usize> {
    vec![3 * devices, 128, 64, 32, 2 * devices + 1]
}

/// Weights `Q_l` (row-major `n_l × n_{l−1}`) and biases `b_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Self {
        let weights = sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    /// He-normal weights, zero biases.
    pub fn init(sizes: &[usize], rng: &mut SimRng) -> Self {
        let mut p = Self::zeros(sizes);
        for (l, w) in p.weights.iter_mut().enumerate() {
            let std = (2.0 / sizes[l] as f64).sqrt();
            w.iter_mut().for_each(|x| *x = std * rng.standard_normal());
        }
        p
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .all(|x| x.is_finite())
    }

    /// Every parameter, weights of each layer followed by its biases.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(i, bi)| {
            let row = &w[i * n_in..(i + 1) * n_in];
            bi + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
        })
        .collect()
}

/// Activations of every layer, input first.
fn forward_cached(params: &MlpParams, x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(params.layers() + 1);
    acts.push(x.to_vec());
    for l in 0..params.layers() {
        let mut z = affine(&params.weights[l], &params.biases[l], &acts[l]);
        if l + 1 < params.layers() {
            z.iter_mut().for_each(|v| *v = relu(*v));
        }
        acts.push(z);
    }
    acts
}

/// ReLU hidden layers, affine output.
pub fn forward(params: &MlpParams, x: &[f64]) -> Vec<f64> {
    forward_cached(params, x).pop().unwrap()
}

/// Mean of squared differences over every entry of the batch.
pub fn mse(predicted: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64, LearnerError> {
    if predicted.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    if predicted.len() != target.len() {
        return Err(LearnerError::Shape(format!(
            "{} predictions for {} targets",
            predicted.len(),
            target.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, b) in predicted.iter().zip(target) {
        if a.len() != b.len() {
            return Err(LearnerError::Shape(format!("row lengths {} and {}", a.len(), b.len())));
        }
        sum += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        count += a.len();
    }
    Ok(sum / count as f64)
}

/// Batch loss and its gradient with respect to every parameter.
pub fn backward(
    params: &MlpParams,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, MlpParams), LearnerError> {
    if inputs.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    let n_out = params.output_len();
    let scale = 2.0 / (inputs.len() * n_out) as f64;
    let mut grads = MlpParams::zeros(&params.sizes);
    let mut loss = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        if x.len() != params.input_len() || y.len() != n_out {
            return Err(LearnerError::Shape(format!(
                "sample of {}→{} for a {}→{} network",
                x.len(),
                y.len(),
                params.input_len(),
                n_out
            )));
        }
        let acts = forward_cached(params, x);
        let out = &acts[params.layers()];
        let mut delta: Vec<f64> = out.iter().zip(y).map(|(a, b)| scale * (a - b)).collect();
        loss += out.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        for l in (0..params.layers()).rev() {
            let prev = &acts[l];
            let n_in = prev.len();
            let gw = &mut grads.weights[l];
            for (i, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut gw[i * n_in..(i + 1) * n_in];
                row.iter_mut().zip(prev).for_each(|(g, a)| *g += d * a);
            }
            grads.biases[l].iter_mut().zip(&delta).for_each(|(g, d)| *g += d);
            if l > 0 {
                let w = &params.weights[l];
                let mut back = vec![0.0; n_in];
                for (i, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &w[i * n_in..(i + 1) * n_in];
                    back.iter_mut().zip(row).for_each(|(b, wv)| *b += d * wv);
                }
                for (b, a) in back.iter_mut().zip(prev) {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                }
                delta = back;
            }
        }
    }
    Ok((loss / (inputs.len() * n_out) as f64, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            m: MlpParams::zeros(&params.sizes),
            v: MlpParams::zeros(&params.sizes),
            step: 0,
        }
    }
}

pub fn adam_step(params: &mut MlpParams, grads: &MlpParams, state: &mut AdamState, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let moments = state.m.values_mut().zip(state.v.values_mut());
    for ((p, g), (m, v)) in params.values_mut().zip(grads.values()).zip(moments) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
    }
}

/// Per-feature min-max scaling into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, LearnerError> {
        let first = rows.first().ok_or(LearnerError::EmptyBatch)?;
        let mut min = first.clone();
        let mut max = first.clone();
        for row in rows {
            for (i, x) in row.iter().enumerate() {
                min[i] = min[i].min(*x);
                max[i] = max[i].max(*x);
            }
        }
        Ok(Self { min, max })
    }

    /// Constant features map to 0.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let span = self.max[i] - self.min[i];
                if span > 0.0 {
                    (v - self.min[i]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| self.min[i] + v * (self.max[i] - self.min[i]))
            .collect()
    }
}

/// Raw input features of an instance: `[b; 𝒯ᵗʰ; |G_kk|]`.
pub fn instance_features(instance: &Instance) -> Vec<f64> {
    let mut x: Vec<f64> = instance.tasks.iter().map(|t| t.bits).collect();
    x.extend(instance.tasks.iter().map(|t| t.deadline));
    x.extend(instance.link.own_gains());
    x
}

/// Raw targets: `[p; f; ϖ]`.
pub fn allocation_targets(allocation: &Allocation) -> Vec<f64> {
    let mut y = allocation.power.clone();
    y.extend(&allocation.cpu);
    y.push(allocation.bits as f64);
    y
}

fn encode_features(raw: &[f64], k: usize) -> Vec<f64> {
    raw.iter()
        .enumerate()
        .map(|(i, v)| if i >= 2 * k { v.log10() } else { *v })
        .collect()
}

fn encode_targets(raw: &[f64], k: usize) -> Vec<f64> {
    raw.iter()
        .enumerate()
        .map(|(i, v)| if i < k { v.log10() } else { *v })
        .collect()
}

fn decode_targets(encoded: &[f64], k: usize) -> Vec<f64> {
    encoded
        .iter()
        .enumerate()
        .map(|(i, v)| if i < k { 10f64.powf(*v) } else { *v })
        .collect()
}

/// One solved instance; `features` and `targets` are raw (unscaled) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub seed: u64,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationStats {
    pub draws: usize,
    pub accepted: usize,
    /// Trials that ran out of redraws without a feasible instance.
    pub exhausted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub devices: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub stats: GenerationStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub count: usize,
    pub master_seed: u64,
    /// Fraction of samples used for training; the rest form the test split.
    pub train_fraction: f64,
    /// Redraw limit per sample.
    pub max_draws: usize,
    pub min_yield: f64,
    pub jobs: usize,
    pub solver: SolverOptions,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 5000,
            master_seed: 1,
            train_fraction: 0.9,
            max_draws: 200,
            min_yield: 0.1,
            jobs: 0,
            solver: SolverOptions::default(),
        }
    }
}

const DATASET_STREAM: u64 = 0xD5;

/// Seed of the `draw`-th attempt at sample `index`.
pub fn sample_seed(master: u64, index: usize, draw: usize) -> u64 {
    derive_seed(master, &[DATASET_STREAM, index as u64, draw as u64])
}

/// A feasible, converged, audited solve for one seed, if any.
pub fn solve_sample(scenario: &ScenarioConfig, seed: u64, solver: &SolverOptions) -> Option<Sample> {
    let instance = sample_trial(scenario, seed).ok()?.instance(scenario.filter).ok()?;
    let sol = alternating_optimize(&instance, solver).ok()?;
    if !sol.converged() || !audit_solution(&instance, &sol, 1e-6).passed() {
        return None;
    }
    Some(Sample {
        seed,
        features: instance_features(&instance),
        targets: allocation_targets(&sol.allocation),
    })
}

pub(crate) fn thread_pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
}

/// Solves `count` random feasible instances and splits them train/test.
pub fn generate_dataset(scenario: &ScenarioConfig, cfg: &DatasetConfig) -> Result<Dataset, LearnerError> {
    let results: Vec<(Option<Sample>, usize)> = thread_pool(cfg.jobs).install(|| {
        (0..cfg.count)
            .into_par_iter()
            .map(|i| {
                for draw in 0..cfg.max_draws {
                    if let Some(s) = solve_sample(scenario, sample_seed(cfg.master_seed, i, draw), &cfg.solver) {
                        return (Some(s), draw + 1);
                    }
                }
                (None, cfg.max_draws)
            })
            .collect()
    });
    let draws: usize = results.iter().map(|r| r.1).sum();
    let samples: Vec<Sample> = results.into_iter().filter_map(|r| r.0).collect();
    let stats = GenerationStats {
        draws,
        accepted: samples.len(),
        exhausted: cfg.count - samples.len(),
    };
    let rejected = draws - samples.len();
    if rejected > 0 {
        log::info!("dataset: {rejected} infeasible draws discarded out of {draws}");
    }
    if draws > 0 && (samples.len() as f64) < cfg.min_yield * draws as f64 {
        return Err(LearnerError::LowYield {
            accepted: samples.len(),
            draws,
            min_yield: cfg.min_yield,
        });
    }
    let split = ((samples.len() as f64) * cfg.train_fraction).round() as usize;
    let mut train = samples;
    let test = train.split_off(split);
    Ok(Dataset {
        devices: scenario.system.devices,
        train,
        test,
        stats,
    })
}

fn column_names(k: usize) -> Vec<String> {
    let mut names = Vec::new();
    for prefix in ["bits", "deadline", "gain"] {
        names.extend((0..k).map(|i| format!("{prefix}_{i}")));
    }
    for prefix in ["power", "cpu"] {
        names.extend((0..k).map(|i| format!("{prefix}_{i}")));
    }
    names.push("varpi".into());
    names.push("seed".into());
    names.push("split".into());
    names
}

impl Dataset {
    /// One row per sample: `3K` features, `2K+1` targets, seed, split tag.
    pub fn write_csv(&self, out: impl Write) -> Result<(), LearnerError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(column_names(self.devices))?;
        for (split, rows) in [("train", &self.train), ("test", &self.test)] {
            for s in rows {
                let mut rec: Vec<String> = s.features.iter().chain(&s.targets).map(|v| v.to_string()).collect();
                rec.push(s.seed.to_string());
                rec.push(split.into());
                w.write_record(rec)?;
            }
        }
        w.flush().map_err(|source| LearnerError::Io {
            path: "<dataset>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self, LearnerError> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers()?.len();
        if width < 8 || (width - 3) % 5 != 0 {
            return Err(LearnerError::Dataset {
                row: 0,
                message: format!("{width} columns do not match 5K+3"),
            });
        }
        let k = (width - 3) / 5;
        let mut ds = Dataset {
            devices: k,
            train: Vec::new(),
            test: Vec::new(),
            stats: GenerationStats::default(),
        };
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| LearnerError::Dataset { row: row + 1, message };
            let nums: Vec<f64> = rec
                .iter()
                .take(5 * k + 1)
                .map(|f| f.parse::<f64>().map_err(|e| bad(format!("{f}: {e}"))))
                .collect::<Result<_, _>>()?;
            let seed = rec[5 * k + 1].parse::<u64>().map_err(|e| bad(e.to_string()))?;
            let sample = Sample {
                seed,
                features: nums[..3 * k].to_vec(),
                targets: nums[3 * k..].to_vec(),
            };
            match &rec[5 * k + 2] {
                "train" => ds.train.push(sample),
                "test" => ds.test.push(sample),
                other => return Err(bad(format!("unknown split {other}"))),
            }
        }
        ds.stats.accepted = ds.train.len() + ds.test.len();
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnerError> {
        let file = std::fs::File::create(path).map_err(|source| LearnerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, LearnerError> {
        let file = std::fs::File::open(path).map_err(|source| LearnerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stop after this many epochs without a relative test-loss gain of `min_improvement`.
    pub patience: usize,
    pub min_improvement: f64,
    /// Pair each training input with another sample's targets (a sanity control).
    pub shuffle_labels: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 7,
            patience: 15,
            min_improvement: 1e-3,
            shuffle_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossCurve {
    /// Mean mini-batch loss per epoch (scaled units).
    pub train: Vec<f64>,
    /// Test-split loss after each epoch (scaled units).
    pub test: Vec<f64>,
}

impl LossCurve {
    pub fn best_test(&self) -> f64 {
        self.test.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Smallest test loss among the first `epochs` epochs.
    pub fn best_test_within(&self, epochs: usize) -> f64 {
        self.test.iter().take(epochs).copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), LearnerError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_mse", "test_mse"])?;
        for (e, (a, b)) in self.train.iter().zip(&self.test).enumerate() {
            w.write_record([(e + 1).to_string(), a.to_string(), b.to_string()])?;
        }
        w.flush().map_err(|source| LearnerError::Io {
            path: "<loss curve>".into(),
            source,
        })?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub devices: usize,
    pub params: MlpParams,
    pub x_scaler: Scaler,
    pub y_scaler: Scaler,
    pub system: SystemConfig,
    /// Multiplier applied to predicted powers before clamping.
    pub power_margin: f64,
    pub train_config: TrainConfig,
    pub curve: LossCurve,
    pub train_samples: usize,
    pub test_samples: usize,
}

fn scaled(dataset_rows: &[Sample], k: usize, xs: &Scaler, ys: &Scaler) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    dataset_rows
        .iter()
        .map(|s| {
            (
                xs.transform(&encode_features(&s.features, k)),
                ys.transform(&encode_targets(&s.targets, k)),
            )
        })
        .unzip()
}

fn batch_mse(params: &MlpParams, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64, LearnerError> {
    let preds: Vec<Vec<f64>> = xs.iter().map(|x| forward(params, x)).collect();
    mse(&preds, ys)
}

pub fn train(dataset: &Dataset, system: &SystemConfig, cfg: &TrainConfig) -> Result<TrainedModel, LearnerError> {
    let k = dataset.devices;
    if dataset.train.is_empty() || dataset.test.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    let enc_x: Vec<Vec<f64>> = dataset.train.iter().map(|s| encode_features(&s.features, k)).collect();
    let enc_y: Vec<Vec<f64>> = dataset.train.iter().map(|s| encode_targets(&s.targets, k)).collect();
    let x_scaler = Scaler::fit(&enc_x)?;
    let y_scaler = Scaler::fit(&enc_y)?;
    let (train_x, mut train_y) = scaled(&dataset.train, k, &x_scaler, &y_scaler);
    let (test_x, test_y) = scaled(&dataset.test, k, &x_scaler, &y_scaler);

    let mut rng = SimRng::new(cfg.seed);
    if cfg.shuffle_labels {
        rng.shuffle(&mut train_y);
    }
    let mut params = MlpParams::init(&layer_sizes(k), &mut rng);
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut curve = LossCurve::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let by: Vec<Vec<f64>> = chunk.iter().map(|&i| train_y[i].clone()).collect();
            let (loss, grads) = backward(&params, &bx, &by)?;
            adam_step(&mut params, &grads, &mut adam, &cfg.adam);
            epoch_loss += loss * chunk.len() as f64;
        }
        let test_loss = batch_mse(&params, &test_x, &test_y)?;
        if !test_loss.is_finite() || !params.is_finite() {
            return Err(LearnerError::Diverged {
                epoch,
                last_test_loss: curve.test.last().copied().unwrap_or(f64::NAN),
            });
        }
        curve.train.push(epoch_loss / train_x.len() as f64);
        curve.test.push(test_loss);
        log::debug!("epoch {epoch}: train {:.4e} test {test_loss:.4e}", curve.train[epoch - 1]);
        if test_loss < best * (1.0 - cfg.min_improvement) {
            best = test_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainedModel {
        devices: k,
        params,
        x_scaler,
        y_scaler,
        system: system.clone(),
        power_margin: 1.0,
        train_config: cfg.clone(),
        curve,
        train_samples: dataset.train.len(),
        test_samples: dataset.test.len(),
    })
}

impl TrainedModel {
    /// Raw `[p; f; ϖ]` before any post-processing.
    pub fn predict_raw(&self, features: &[f64]) -> Vec<f64> {
        let x = self.x_scaler.transform(&encode_features(features, self.devices));
        decode_targets(&self.y_scaler.inverse(&forward(&self.params, &x)), self.devices)
    }

    /// Post-processed allocation: `p ∈ [0, P_max]`, `f > 0` with `Σf = F_T`, integer `ϖ` in range.
    pub fn allocate(&self, features: &[f64]) -> Allocation {
        let k = self.devices;
        let sys = &self.system;
        let raw = self.predict_raw(features);
        let power = raw[..k]
            .iter()
            .map(|p| (p * self.power_margin).clamp(0.0, sys.max_power))
            .collect();
        let floor = sys.cpu_budget * 1e-6;
        let cpu: Vec<f64> = raw[k..2 * k]
            .iter()
            .map(|f| if f.is_finite() { f.clamp(floor, sys.cpu_budget) } else { floor })
            .collect();
        let total: f64 = cpu.iter().sum();
        let cpu = cpu.iter().map(|f| f * sys.cpu_budget / total).collect();
        let bits = if raw[2 * k].is_finite() {
            raw[2 * k].round().clamp(1.0, sys.bits_cap() as f64) as u32
        } else {
            sys.bits_midpoint()
        };
        Allocation { power, cpu, bits }
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnerError> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|source| LearnerError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LearnerError> {
        let text = std::fs::read_to_string(path).map_err(|source| LearnerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn infer(model: &TrainedModel, instance: &Instance) -> Allocation {
    model.allocate(&instance_features(instance))
}
