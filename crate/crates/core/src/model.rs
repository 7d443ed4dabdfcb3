//! Network assembly, training, evaluation and checkpointing.
//!
//! Three architectures share the engine: the five-conv extended network, the
//! three-conv variant, and a four-layer fully connected baseline. Training
//! is plain minibatch Adam on standardized labels with early stopping on
//! validation MSE; all reported metrics are in original label units.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, LabelScaler, Manifest, SampleRow, Split};
use crate::mechanics::Label;
use crate::nn::{
    adam_step, batch_norm, conv5x5, linear, mse_loss, AdamState, Layer, NnError, Stack, Tensor,
};
use crate::raster::CrossSectionImage;
use crate::seeds::{self, mix, Stream};

const CHECKPOINT_VERSION: u32 = 1;
const PREDICT_BATCH: usize = 256;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error("label mismatch: checkpoint has [{got}], expected [{expected}]")]
    LabelMismatch { expected: String, got: String },
    #[error("numeric fault at epoch {epoch}, batch {batch}, lr {lr}: {message}")]
    NumericFault {
        epoch: usize,
        batch: usize,
        lr: f64,
        message: String,
    },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    ConvnetExtended,
    Convnet,
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub kind: ArchKind,
    pub img_size: usize,
    pub number_of_labels: usize,
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.img_size == 0 || self.img_size % 4 != 0 {
            return Err(ModelError::Config(format!(
                "img_size {} must be a positive multiple of 4",
                self.img_size
            )));
        }
        if self.number_of_labels == 0 {
            return Err(ModelError::Config("number_of_labels must be >= 1".into()));
        }
        Ok(())
    }

    /// Width of the flattened feature vector entering the first dense layer.
    pub fn flatten_width(&self) -> usize {
        match self.kind {
            ArchKind::ConvnetExtended | ArchKind::Convnet => {
                32 * (self.img_size / 4) * (self.img_size / 4)
            }
            ArchKind::FullyConnected => self.img_size * self.img_size,
        }
    }
}

/// A network plus everything needed to map images to labels in original
/// units: the label list, the fitted scaler, and the build/train seed.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: ArchitectureConfig,
    pub stack: Stack<f32>,
    pub labels: Vec<Label>,
    pub scaler: Option<LabelScaler>,
    pub train_seed: u64,
}

/// Builds the architecture with Kaiming-initialized weights.
pub fn build(arch: ArchitectureConfig, labels: &[Label], seed: u64) -> Result<Model, ModelError> {
    arch.validate()?;
    if labels.len() != arch.number_of_labels {
        return Err(ModelError::Config(format!(
            "{} labels given but number_of_labels is {}",
            labels.len(),
            arch.number_of_labels
        )));
    }
    let mut rng = seeds::rng(seed, Stream::WeightInit);
    let flat = arch.flatten_width();
    let n_out = arch.number_of_labels;
    let layers: Vec<Layer<f32>> = match arch.kind {
        ArchKind::ConvnetExtended => vec![
            conv5x5(1, 32, &mut rng),
            batch_norm(32),
            Layer::ReLU,
            conv5x5(32, 32, &mut rng),
            batch_norm(32),
            Layer::ReLU,
            conv5x5(32, 32, &mut rng),
            batch_norm(32),
            Layer::ReLU,
            conv5x5(32, 64, &mut rng),
            batch_norm(64),
            Layer::ReLU,
            Layer::MaxPool2x2,
            conv5x5(64, 32, &mut rng),
            batch_norm(32),
            Layer::ReLU,
            Layer::MaxPool2x2,
            Layer::Flatten,
            linear(flat, 1024, &mut rng),
            Layer::ReLU,
            linear(1024, n_out, &mut rng),
        ],
        ArchKind::Convnet => vec![
            conv5x5(1, 32, &mut rng),
            batch_norm(32),
            Layer::ReLU,
            conv5x5(32, 64, &mut rng),
            batch_norm(64),
            Layer::ReLU,
            Layer::MaxPool2x2,
            conv5x5(64, 32, &mut rng),
            batch_norm(32),
            Layer::ReLU,
            Layer::MaxPool2x2,
            Layer::Flatten,
            linear(flat, 1024, &mut rng),
            Layer::ReLU,
            linear(1024, n_out, &mut rng),
        ],
        ArchKind::FullyConnected => vec![
            Layer::Flatten,
            linear(flat, 1024, &mut rng),
            Layer::ReLU,
            linear(1024, 512, &mut rng),
            Layer::ReLU,
            linear(512, 256, &mut rng),
            Layer::ReLU,
            linear(256, n_out, &mut rng),
        ],
    };
    Ok(Model {
        arch,
        stack: Stack::new(layers),
        labels: labels.to_vec(),
        scaler: None,
        train_seed: seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 100,
            max_epochs: 60,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The preset used for eigenfrequency regression.
    pub fn eigenfrequency() -> Self {
        TrainConfig {
            lr: 1e-5,
            batch_size: 100,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lr >= 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(ModelError::Config(format!(
                "lr {}, batch_size {}, max_epochs {} must be positive",
                self.lr, self.batch_size, self.max_epochs
            )));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(ModelError::Config(format!(
                "patience {} must be in 1..=max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<(), ModelError> {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_mse, e.val_mse));
        }
        std::fs::write(path, out).map_err(io_err(path))
    }
}

/// In-memory split: images flattened to [N, 1, H, W] f32 and standardized
/// labels [N, L] f32.
struct Loaded {
    images: Vec<f32>,
    targets: Vec<f32>,
    n: usize,
    pixels: usize,
    n_labels: usize,
}

fn load_split(
    model: &Model,
    manifest: &Manifest,
    dir: &Path,
    split: Split,
    scaler: &LabelScaler,
) -> Result<Loaded, ModelError> {
    let rows: Vec<&SampleRow> = manifest.split_rows(split).collect();
    let pixels = model.arch.img_size * model.arch.img_size;
    let n_labels = model.labels.len();
    let mut images = Vec::with_capacity(rows.len() * pixels);
    let mut targets = Vec::with_capacity(rows.len() * n_labels);
    for row in &rows {
        let img = manifest.load_image(dir, row)?;
        if img.width != model.arch.img_size || img.height != model.arch.img_size {
            return Err(ModelError::Config(format!(
                "image {} is {}x{}, model expects {}",
                row.image_path, img.width, img.height, model.arch.img_size
            )));
        }
        images.extend_from_slice(&img.pixels);
        let raw: Vec<f64> = model.labels.iter().map(|&l| row.label(l)).collect();
        targets.extend(scaler.apply(&raw).iter().map(|&v| v as f32));
    }
    Ok(Loaded {
        images,
        targets,
        n: rows.len(),
        pixels,
        n_labels,
    })
}

fn batch_tensors(data: &Loaded, idx: &[usize], img: usize) -> (Tensor<f32>, Tensor<f32>) {
    let mut xb = Vec::with_capacity(idx.len() * data.pixels);
    let mut yb = Vec::with_capacity(idx.len() * data.n_labels);
    for &i in idx {
        xb.extend_from_slice(&data.images[i * data.pixels..(i + 1) * data.pixels]);
        yb.extend_from_slice(&data.targets[i * data.n_labels..(i + 1) * data.n_labels]);
    }
    (
        Tensor::from_vec(&[idx.len(), 1, img, img], xb),
        Tensor::from_vec(&[idx.len(), data.n_labels], yb),
    )
}

fn eval_mse(model: &Model, data: &Loaded, batch: usize) -> Result<f64, ModelError> {
    let img = model.arch.img_size;
    let mut acc = 0.0f64;
    let indices: Vec<usize> = (0..data.n).collect();
    for chunk in indices.chunks(batch) {
        let (xb, yb) = batch_tensors(data, chunk, img);
        let out = model.stack.forward_eval(xb)?;
        let (loss, _) = mse_loss(&out, &yb)?;
        acc += loss * chunk.len() as f64;
    }
    Ok(acc / data.n as f64)
}

/// Minibatch Adam with seeded epoch shuffling and early stopping on
/// validation MSE; the best-validation parameters are restored at the end.
/// Fits the label scaler on the train split and attaches it to the model.
pub fn train(
    model: &mut Model,
    manifest: &Manifest,
    dir: &Path,
    cfg: &TrainConfig,
) -> Result<TrainHistory, ModelError> {
    cfg.validate()?;
    if manifest.split_len(Split::Train) == 0 || manifest.split_len(Split::Val) == 0 {
        return Err(ModelError::Config(
            "training needs non-empty train and val splits".into(),
        ));
    }
    let scaler = LabelScaler::fit(manifest, &model.labels)?;
    let train_data = load_split(model, manifest, dir, Split::Train, &scaler)?;
    let val_data = load_split(model, manifest, dir, Split::Val, &scaler)?;
    model.scaler = Some(scaler);

    let param_names = model.stack.parameter_names();
    let mut adam = {
        let params = model.stack.parameters();
        AdamState::new(cfg.lr, &params)
    };

    let img = model.arch.img_size;
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Stack<f32>, usize)> = None;
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_data.n).collect();
        let mut rng = seeds::rng(mix(cfg.seed, epoch as u64), Stream::EpochShuffle);
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut train_acc = 0.0f64;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (xb, yb) = batch_tensors(&train_data, chunk, img);
            let fault = |message: String| ModelError::NumericFault {
                epoch,
                batch: batch_no,
                lr: cfg.lr,
                message,
            };
            let (out, cache) = model
                .stack
                .forward_train(xb)
                .map_err(|e| fault(e.to_string()))?;
            let (loss, grad) = mse_loss(&out, &yb)?;
            if !loss.is_finite() {
                return Err(fault(format!("loss = {loss}")));
            }
            train_acc += loss * chunk.len() as f64;
            let (grads, _) = model
                .stack
                .backward(&cache, grad)
                .map_err(|e| fault(e.to_string()))?;
            let mut params = model.stack.parameters_mut();
            adam_step(&mut params, &grads, &param_names, &mut adam)
                .map_err(|e| fault(e.to_string()))?;
        }
        let train_mse = train_acc / train_data.n as f64;
        let val_mse = eval_mse(model, &val_data, cfg.batch_size)?;
        history.epochs.push(EpochStats {
            epoch,
            train_mse,
            val_mse,
        });

        let improved = best.as_ref().map_or(true, |(b, _, _)| val_mse < *b);
        if improved {
            best = Some((val_mse, model.stack.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (_, best_stack, best_epoch) = best.expect("at least one epoch ran");
    model.stack = best_stack;
    history.best_epoch = best_epoch;
    Ok(history)
}

/// Per-label error metrics in original label units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: Label,
    pub mse: f64,
    pub mae: f64,
    /// Percent. Samples with |y| < 1e-12 are excluded and counted.
    pub mape: f64,
    pub mape_excluded: usize,
    /// 95% normal-approximation half-width over per-sample absolute errors.
    pub ci95_mae: f64,
    /// Same, over per-sample percentage errors.
    pub ci95_mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_label: Vec<LabelMetrics>,
    /// Aggregates are means of the per-label values.
    pub mse: f64,
    pub mae: f64,
    pub mape: f64,
    pub n_samples: usize,
}

/// Metrics from aligned prediction/target rows (original units).
pub fn compute_metrics(
    labels: &[Label],
    predictions: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<Metrics, ModelError> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(ModelError::Config(format!(
            "metrics need matching non-empty rows: {} predictions, {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let n = predictions.len();
    let mut per_label = Vec::with_capacity(labels.len());
    for (j, &label) in labels.iter().enumerate() {
        let mut sq = 0.0f64;
        let mut abs_errors = Vec::with_capacity(n);
        let mut pct_errors = Vec::new();
        let mut excluded = 0usize;
        for (p, t) in predictions.iter().zip(targets) {
            let err = p[j] - t[j];
            sq += err * err;
            abs_errors.push(err.abs());
            if t[j].abs() < 1e-12 {
                excluded += 1;
            } else {
                pct_errors.push(100.0 * err.abs() / t[j].abs());
            }
        }
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let half_width = |v: &[f64]| {
            if v.len() < 2 {
                return 0.0;
            }
            let m = mean(v);
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
            1.96 * var.sqrt() / (v.len() as f64).sqrt()
        };
        per_label.push(LabelMetrics {
            label,
            mse: sq / n as f64,
            mae: mean(&abs_errors),
            mape: mean(&pct_errors),
            mape_excluded: excluded,
            ci95_mae: half_width(&abs_errors),
            ci95_mape: half_width(&pct_errors),
        });
    }
    let agg =
        |f: fn(&LabelMetrics) -> f64| per_label.iter().map(f).sum::<f64>() / per_label.len() as f64;
    Ok(Metrics {
        mse: agg(|m| m.mse),
        mae: agg(|m| m.mae),
        mape: agg(|m| m.mape),
        per_label,
        n_samples: n,
    })
}

/// Eval-mode predictions in original units for a set of images.
pub fn predict(model: &Model, images: &[CrossSectionImage]) -> Result<Vec<Vec<f64>>, ModelError> {
    let scaler = model
        .scaler
        .as_ref()
        .ok_or_else(|| ModelError::Config("model has no fitted label scaler".into()))?;
    let img = model.arch.img_size;
    let pixels = img * img;
    for im in images {
        if im.width != img || im.height != img {
            return Err(ModelError::Config(format!(
                "image is {}x{}, model expects {img}x{img}",
                im.width, im.height
            )));
        }
    }
    let n_labels = model.labels.len();
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(PREDICT_BATCH) {
        let mut xb = Vec::with_capacity(chunk.len() * pixels);
        for im in chunk {
            xb.extend_from_slice(&im.pixels);
        }
        let x = Tensor::from_vec(&[chunk.len(), 1, img, img], xb);
        let y = model.stack.forward_eval(x)?;
        for row in y.data().chunks(n_labels) {
            let scaled: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            out.push(scaler.invert(&scaled));
        }
    }
    Ok(out)
}

/// Predictions and raw targets for the rows of one split, manifest order.
pub fn predict_split(
    model: &Model,
    manifest: &Manifest,
    dir: &Path,
    split: Split,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), ModelError> {
    let rows: Vec<&SampleRow> = manifest.split_rows(split).collect();
    if rows.is_empty() {
        return Err(ModelError::Config(format!("split {} is empty", split.tag())));
    }
    let mut images = Vec::with_capacity(rows.len());
    for row in &rows {
        images.push(manifest.load_image(dir, row)?);
    }
    let preds = predict(model, &images)?;
    let targets: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| model.labels.iter().map(|&l| r.label(l)).collect())
        .collect();
    Ok((preds, targets))
}

/// Deterministic eval-mode metrics for one split.
pub fn evaluate(
    model: &Model,
    manifest: &Manifest,
    dir: &Path,
    split: Split,
) -> Result<Metrics, ModelError> {
    let (preds, targets) = predict_split(model, manifest, dir, split)?;
    compute_metrics(&model.labels, &preds, &targets)
}

// ---------------------------------------------------------------------------
// Checkpoints: `<name>.ckpt.json` header + `<name>.ckpt.bin` f32 LE blob.
// Blob order: per layer, trainable parameters then buffers (conv: weight,
// bias; batch norm: gamma, beta, running mean, running var; linear: weight,
// bias); then, when included, Adam (m, v) per trainable parameter.

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    arch: ArchitectureConfig,
    labels: Vec<String>,
    scaler: Option<LabelScaler>,
    train_seed: u64,
    blob_f32_len: usize,
    adam_included: bool,
    adam_step: u64,
}

/// Writes `<stem>.ckpt.json` and `<stem>.ckpt.bin`.
pub fn save_checkpoint(
    model: &Model,
    path_stem: &Path,
    adam: Option<&AdamState<f32>>,
) -> Result<(), ModelError> {
    let mut blob: Vec<u8> = Vec::new();
    for layer in &model.stack.layers {
        for t in layer.state_tensors() {
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    if let Some(state) = adam {
        for (m, v) in &state.moments {
            for t in [m, v] {
                for x in t.data() {
                    blob.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        arch: model.arch,
        labels: model.labels.iter().map(|l| l.name().to_string()).collect(),
        scaler: model.scaler.clone(),
        train_seed: model.train_seed,
        blob_f32_len: blob.len() / 4,
        adam_included: adam.is_some(),
        adam_step: adam.map_or(0, |a| a.step),
    };
    let json_path = path_stem.with_extension("ckpt.json");
    let bin_path = path_stem.with_extension("ckpt.bin");
    let json = serde_json::to_string_pretty(&header).expect("serializable header");
    std::fs::write(&json_path, json).map_err(io_err(&json_path))?;
    std::fs::write(&bin_path, blob).map_err(io_err(&bin_path))?;
    Ok(())
}

/// Loads a checkpoint saved by [`save_checkpoint`]; eval-mode behavior is
/// bit-exact with the saved model.
pub fn load_checkpoint(path_stem: &Path) -> Result<(Model, Option<AdamState<f32>>), ModelError> {
    let json_path = path_stem.with_extension("ckpt.json");
    let bin_path = path_stem.with_extension("ckpt.bin");
    let text = std::fs::read_to_string(&json_path).map_err(io_err(&json_path))?;
    let header: CheckpointHeader =
        serde_json::from_str(&text).map_err(|e| ModelError::Format(format!("header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(ModelError::Format(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            header.format_version
        )));
    }
    let labels: Vec<Label> = header
        .labels
        .iter()
        .map(|name| {
            Label::from_name(name).ok_or_else(|| ModelError::Format(format!("unknown label {name:?}")))
        })
        .collect::<Result<_, _>>()?;
    let mut model = build(header.arch, &labels, header.train_seed)?;
    model.scaler = header.scaler;

    let blob = std::fs::read(&bin_path).map_err(io_err(&bin_path))?;
    if blob.len() % 4 != 0 || blob.len() / 4 != header.blob_f32_len {
        return Err(ModelError::Format(format!(
            "blob length {} bytes does not match header ({} f32 values)",
            blob.len(),
            header.blob_f32_len
        )));
    }
    let values: Vec<f32> = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let mut offset = 0usize;
    for layer in model.stack.layers.iter_mut() {
        for t in layer.state_tensors_mut() {
            let n = t.numel();
            if offset + n > values.len() {
                return Err(ModelError::Format("blob too short for layout".into()));
            }
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    }

    let adam = if header.adam_included {
        let mut state = {
            let params = model.stack.parameters();
            AdamState::new(0.0, &params)
        };
        state.step = header.adam_step;
        for (m, v) in state.moments.iter_mut() {
            for t in [m, v] {
                let n = t.numel();
                if offset + n > values.len() {
                    return Err(ModelError::Format("blob too short for adam state".into()));
                }
                t.data_mut().copy_from_slice(&values[offset..offset + n]);
                offset += n;
            }
        }
        Some(state)
    } else {
        None
    };
    if offset != values.len() {
        return Err(ModelError::Format(format!(
            "blob has {} trailing f32 values",
            values.len() - offset
        )));
    }
    Ok((model, adam))
}

/// Errors unless the checkpoint's labels equal `expected` exactly.
pub fn check_labels(model: &Model, expected: &[Label]) -> Result<(), ModelError> {
    if model.labels != expected {
        return Err(ModelError::LabelMismatch {
            expected: expected.iter().map(|l| l.name()).collect::<Vec<_>>().join(", "),
            got: model.labels.iter().map(|l| l.name()).collect::<Vec<_>>().join(", "),
        });
    }
    Ok(())
}
