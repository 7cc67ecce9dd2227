//! Training: the squared-error loss, Adam/SGD update steps, the per-station
//! training loop, and the multi-station registry.
//!
//! The per-sample loss is the squared L2 norm over the two outputs (no ÷2,
//! no per-element mean); batch losses average over samples. Everything is
//! deterministic given (seed, data, config): mini-batch order comes from a
//! seeded generator and gradient accumulation runs in sample order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{prepare_station_dataset, DatasetSplits, WindowedDataset};
use crate::ingest::ObservationTable;
use crate::net::{n_param_slots, param_slot, param_slot_mut, Gradients, LstmModel};
use crate::{DEFAULT_WINDOW, HIDDEN_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(format!("unknown optimizer `{other}` (adam|sgd)")),
        }
    }
}

/// Hyperparameters for one training run.
///
/// Loadable from a flat `key value` text file; unknown keys are rejected so
/// typos fail loudly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    /// Input window length in hours.
    pub window: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    /// Stop once the epoch train loss dips below this; 0 disables.
    pub train_loss_goal: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 42,
            early_stop_patience: 0,
            window: DEFAULT_WINDOW,
            train_frac: 0.7,
            val_frac: 0.15,
            train_loss_goal: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::Config {
            path: PathBuf::from("<config>"),
            message: message.to_string(),
        };
        if self.epochs == 0 {
            return Err(bad("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(bad("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(bad("beta1/beta2 must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(bad("epsilon must be > 0"));
        }
        if self.window == 0 {
            return Err(bad("window must be >= 1"));
        }
        if !(self.train_frac > 0.0 && self.val_frac > 0.0 && self.train_frac + self.val_frac < 1.0)
        {
            return Err(bad("train_frac/val_frac must be positive and sum below 1"));
        }
        Ok(())
    }

    /// Parse the flat `key value` config format over the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<TrainConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = TrainConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |message: String| Error::Config {
                path: path.to_path_buf(),
                message: format!("line {}: {message}", lineno + 1),
            };
            let (key, value) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| fail(format!("expected `key value`, got `{line}`")))?;
            let value = value.trim();
            macro_rules! parse {
                () => {
                    value
                        .parse()
                        .map_err(|_| fail(format!("bad value `{value}` for `{key}`")))?
                };
            }
            match key {
                "epochs" => cfg.epochs = parse!(),
                "batch_size" => cfg.batch_size = parse!(),
                "learning_rate" => cfg.learning_rate = parse!(),
                "optimizer" => cfg.optimizer = value.parse().map_err(|e: String| fail(e))?,
                "beta1" => cfg.beta1 = parse!(),
                "beta2" => cfg.beta2 = parse!(),
                "epsilon" => cfg.epsilon = parse!(),
                "seed" => cfg.seed = parse!(),
                "early_stop_patience" => cfg.early_stop_patience = parse!(),
                "window" => cfg.window = parse!(),
                "train_frac" => cfg.train_frac = parse!(),
                "val_frac" => cfg.val_frac = parse!(),
                "train_loss_goal" => cfg.train_loss_goal = parse!(),
                other => return Err(fail(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }
}

/// Squared L2 distance over the two outputs.
pub fn mse_loss(y_hat: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::ShapeMismatch {
            context: "mse_loss".into(),
            expected: format!("({},)", y.len()),
            got: format!("({},)", y_hat.len()),
        });
    }
    if !(y_hat.iter().chain(y.iter())).all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "mse_loss".into(),
        });
    }
    Ok(y_hat
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Gradient of [`mse_loss`] at the prediction: `2(ŷ - y)`.
pub fn mse_loss_grad(y_hat: ArrayView1<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let mut g = &y_hat - &y;
    g *= 2.0;
    g
}

/// First/second-moment accumulators, shape-congruent with the model.
#[derive(Debug, Clone)]
pub struct AdamMoments {
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamMoments {
    pub fn zeros_like(model: &LstmModel) -> AdamMoments {
        AdamMoments {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }
}

/// One bias-corrected Adam update; `step` counts from 1.
///
/// Each parameter tensor updates independently from its own moments.
pub fn adam_step(
    model: &mut LstmModel,
    grads: &Gradients,
    moments: &mut AdamMoments,
    step: u64,
    config: &TrainConfig,
) {
    debug_assert!(step >= 1);
    let (b1, b2) = (config.beta1, config.beta2);
    let bias1 = 1.0 - b1.powi(step as i32);
    let bias2 = 1.0 - b2.powi(step as i32);
    for slot in 0..n_param_slots(model) {
        let g = param_slot(&grads.layers, &grads.head, slot);
        let m = param_slot_mut(&mut moments.m.layers, &mut moments.m.head, slot);
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
        }
        let v = param_slot_mut(&mut moments.v.layers, &mut moments.v.head, slot);
        for (vi, &gi) in v.iter_mut().zip(g) {
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        }
        let m = param_slot(&moments.m.layers, &moments.m.head, slot);
        let v = param_slot(&moments.v.layers, &moments.v.head, slot);
        let p = param_slot_mut(&mut model.layers, &mut model.head, slot);
        for ((pi, &mi), &vi) in p.iter_mut().zip(m).zip(v) {
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            *pi -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
}

/// Plain gradient-descent update.
pub fn sgd_step(model: &mut LstmModel, grads: &Gradients, learning_rate: f64) {
    for slot in 0..n_param_slots(model) {
        let g = param_slot(&grads.layers, &grads.head, slot);
        let p = param_slot_mut(&mut model.layers, &mut model.head, slot);
        for (pi, &gi) in p.iter_mut().zip(g) {
            *pi -= learning_rate * gi;
        }
    }
}

/// Loss curves and bookkeeping from one station's run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub station_id: usize,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub epochs_run: usize,
    /// Wall-clock time; informational only, never serialized into artifacts.
    pub wall_secs: f64,
}

/// Per-station seed streams, decorrelated so the station set and its order
/// never influence an individual station's run.
fn derive_seed(base: u64, station: usize, stream: u64) -> u64 {
    let mut z = base
        ^ (station as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mean_loss(model: &LstmModel, ds: &WindowedDataset) -> Result<f64> {
    let mut sum = 0.0;
    for k in 0..ds.len() {
        let y = model.predict(ds.input(k))?;
        let diff = &y - &ds.target(k);
        sum += diff.dot(&diff);
    }
    Ok(sum / ds.len() as f64)
}

/// Train one model against one station's splits.
///
/// Mini-batch order reshuffles every epoch from a seeded generator; the
/// parameters with the best validation loss are the ones returned. A
/// non-finite loss aborts with a diagnostic error.
pub fn train_station(
    splits: &DatasetSplits,
    station_id: usize,
    config: &TrainConfig,
) -> Result<(LstmModel, TrainReport)> {
    config.validate()?;
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(Error::EmptyPartition {
            train: splits.train.len(),
            val: splits.val.len(),
            test: splits.test.len(),
        });
    }
    let started = Instant::now();
    let mut model = LstmModel::init_sized(
        splits.train.feature_dim(),
        HIDDEN_SIZE,
        derive_seed(config.seed, station_id, 0),
    );
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(config.seed, station_id, 1));
    let mut moments =
        (config.optimizer == OptimizerKind::Adam).then(|| AdamMoments::zeros_like(&model));

    let n = splits.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step: u64 = 0;
    let mut train_losses = Vec::with_capacity(config.epochs);
    let mut val_losses = Vec::with_capacity(config.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_model = model.clone();
    let mut best_epoch = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grads = Gradients::zeros_like(&model);
            let mut batch_loss_sum = 0.0;
            for &k in batch {
                let (y, cache) = model.forward(splits.train.input(k))?;
                let target = splits.train.target(k);
                let diff = &y - &target;
                batch_loss_sum += diff.dot(&diff);
                let sample_grads = model.backward(&cache, mse_loss_grad(y.view(), target).view())?;
                grads.add_assign(&sample_grads);
            }
            let batch_loss = batch_loss_sum / batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    station: station_id,
                    epoch,
                    batch: batch_idx,
                    loss: batch_loss,
                });
            }
            grads.scale(1.0 / batch.len() as f64);
            step += 1;
            match moments.as_mut() {
                Some(m) => adam_step(&mut model, &grads, m, step, config),
                None => sgd_step(&mut model, &grads, config.learning_rate),
            }
            epoch_loss_sum += batch_loss_sum;
        }
        let train_loss = epoch_loss_sum / n as f64;
        let val_loss = mean_loss(&model, &splits.val)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                station: station_id,
                epoch,
                batch: 0,
                loss: val_loss,
            });
        }
        train_losses.push(train_loss);
        val_losses.push(val_loss);
        if val_loss < best_val {
            best_val = val_loss;
            best_model = model.clone();
            best_epoch = epoch;
        }
        if config.early_stop_patience > 0 && epoch - best_epoch >= config.early_stop_patience {
            break;
        }
        if config.train_loss_goal > 0.0 && train_loss < config.train_loss_goal {
            break;
        }
    }

    let epochs_run = train_losses.len();
    Ok((
        best_model,
        TrainReport {
            station_id,
            train_losses,
            val_losses,
            best_epoch,
            best_val_mse: best_val,
            epochs_run,
            wall_secs: started.elapsed().as_secs_f64(),
        },
    ))
}

/// One successfully trained station's artifacts.
#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub station_id: usize,
    /// Checkpoint file name, relative to the registry manifest.
    pub checkpoint: String,
    /// Scaler file name, relative to the registry manifest.
    pub scaler: String,
    pub best_val_mse: f64,
    pub epochs_run: usize,
    pub report: TrainReport,
}

/// Results of a multi-station run: successes keyed by station, failures
/// recorded without aborting the rest.
#[derive(Debug, Default)]
pub struct ModelRegistry {
    pub entries: BTreeMap<usize, RegistryEntry>,
    pub failures: BTreeMap<usize, Error>,
}

/// One JSON line of the registry manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestRecord {
    pub station_id: usize,
    pub checkpoint: String,
    pub scaler: String,
    pub best_val_mse: f64,
    pub epochs_run: usize,
}

impl ModelRegistry {
    /// Write one JSON record per station, sorted by station id.
    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for entry in self.entries.values() {
            let record = ManifestRecord {
                station_id: entry.station_id,
                checkpoint: entry.checkpoint.clone(),
                scaler: entry.scaler.clone(),
                best_val_mse: entry.best_val_mse,
                epochs_run: entry.epochs_run,
            };
            out.push_str(&serde_json::to_string(&record).expect("plain fields"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord =
                serde_json::from_str(line).map_err(|e| Error::Registry {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", lineno + 1),
                })?;
            records.push(record);
        }
        Ok(records)
    }
}

fn train_one_to_disk(
    table: &ObservationTable,
    station: usize,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<RegistryEntry> {
    let (scaler, splits) = prepare_station_dataset(
        table,
        station,
        config.window,
        config.train_frac,
        config.val_frac,
    )?;
    let (model, report) = train_station(&splits, station, config)?;
    let checkpoint = format!("station_{station:02}.ckpt");
    let scaler_name = format!("station_{station:02}.scaler");
    model.save(out_dir.join(&checkpoint))?;
    scaler.save(out_dir.join(&scaler_name))?;
    Ok(RegistryEntry {
        station_id: station,
        checkpoint,
        scaler: scaler_name,
        best_val_mse: report.best_val_mse,
        epochs_run: report.epochs_run,
        report,
    })
}

/// Train an independent model per station, optionally in parallel.
///
/// Results are identical whether stations run serially or across `jobs`
/// threads: every station draws its own seed stream and writes its own
/// files. Per-station failures are recorded and the rest continue.
pub fn train_all(
    table: &ObservationTable,
    stations: &[usize],
    config: &TrainConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<ModelRegistry> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let unique: Vec<usize> = stations
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let outcomes: Vec<(usize, Result<RegistryEntry>)> = if jobs <= 1 {
        unique
            .iter()
            .map(|&s| (s, train_one_to_disk(table, s, config, out_dir)))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| {
            use rayon::prelude::*;
            unique
                .par_iter()
                .map(|&s| (s, train_one_to_disk(table, s, config, out_dir)))
                .collect()
        })
    };

    let mut registry = ModelRegistry::default();
    for (station, outcome) in outcomes {
        match outcome {
            Ok(entry) => {
                registry.entries.insert(station, entry);
            }
            Err(err) => {
                registry.failures.insert(station, err);
            }
        }
    }
    Ok(registry)
}
