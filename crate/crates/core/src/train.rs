//! Dataset ingestion, train/validation split, batch assembly and the Adam
//! training loop.
//!
//! Batching follows the objective exactly: the batch loss is the mean of
//! per-image losses, so parameter gradients are accumulated per image with
//! a `1/|B|` scale before each optimizer step. Every source of randomness
//! (split, per-epoch shuffle, weight init) derives from the config seed, so
//! a rerun with the same config produces bit-identical checkpoints.

use crate::color;
use crate::embedding::{Embedding, EmbeddingError, EmbeddingProvider, FileOrStubProvider};
use crate::model::{self, CheckpointError, ModelParameters};
use crate::tensor::{AdamState, Graph, Scalar, Tensor, TensorError};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest {manifest}: duplicate image path {image}")]
    DuplicateEntry { manifest: PathBuf, image: PathBuf },
    #[error("manifest {manifest}: listed file does not exist: {missing}")]
    MissingFile { manifest: PathBuf, missing: PathBuf },
    #[error("dataset must have at least 2 entries to split, got {got}")]
    TooSmallToSplit { got: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no readable training examples")]
    AllUnreadable,
    #[error("evaluation set is empty")]
    EmptyEvaluation,
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        source: color::ColorError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub embedding: Option<PathBuf>,
}

/// Image list read from a TSV file: `image_path[TAB]embedding_path?` per
/// line, relative paths resolved against the manifest's directory.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let io_err = |source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        };
        let text = std::fs::read_to_string(path).map_err(io_err)?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let resolve = |raw: &str| -> PathBuf {
            let p = Path::new(raw);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                root.join(p)
            }
        };

        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for line in text.lines() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.splitn(2, '\t');
            let image = resolve(fields.next().expect("split yields at least one").trim());
            let embedding = fields
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(resolve);
            if !seen.insert(image.clone()) {
                return Err(TrainError::DuplicateEntry {
                    manifest: path.to_path_buf(),
                    image,
                });
            }
            for file in std::iter::once(&image).chain(embedding.as_ref()) {
                if !file.exists() {
                    return Err(TrainError::MissingFile {
                        manifest: path.to_path_buf(),
                        missing: file.clone(),
                    });
                }
            }
            entries.push(ManifestEntry { image, embedding });
        }
        Ok(DatasetManifest { root, entries })
    }

    /// Provider serving the manifest's KEMB files, stub elsewhere.
    pub fn embedding_provider(&self) -> FileOrStubProvider {
        let files: HashMap<PathBuf, PathBuf> = self
            .entries
            .iter()
            .filter_map(|e| Some((e.image.clone(), e.embedding.clone()?)))
            .collect();
        FileOrStubProvider::new(files)
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub train_side: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 8,
            epochs: 1,
            seed: 0,
            validation_fraction: 0.10,
            train_side: 224,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(TrainError::Config(format!(
                "validation fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.train_side == 0 || !self.train_side.is_multiple_of(8) {
            return Err(TrainError::Config(format!(
                "train side must be a positive multiple of 8, got {}",
                self.train_side
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
    pub skipped: Vec<PathBuf>,
}

/// Seeded shuffle, then split off `round(n * fraction)` validation entries
/// (clamped so both sides stay nonempty). The partitions are disjoint and
/// exhaustive.
pub fn split_dataset(
    manifest: &DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<ManifestEntry>, Vec<ManifestEntry>), TrainError> {
    let n = manifest.entries.len();
    if n < 2 {
        return Err(TrainError::TooSmallToSplit { got: n });
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(TrainError::Config(format!(
            "validation fraction must be in (0, 1), got {}",
            fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let val = order[..n_val]
        .iter()
        .map(|&i| manifest.entries[i].clone())
        .collect();
    let train = order[n_val..]
        .iter()
        .map(|&i| manifest.entries[i].clone())
        .collect();
    Ok((train, val))
}

/// One decoded, resized, converted training example.
pub struct PreparedExample {
    pub path: PathBuf,
    pub luminance: Tensor<f32>,
    pub target_ab: Tensor<f32>,
    pub embedding: Embedding,
}

/// Load an image, resize onto the white square, convert to normalized Lab
/// planes and fetch its embedding.
pub fn prepare_example(
    path: &Path,
    side: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<PreparedExample, TrainError> {
    let image_err = |source| TrainError::Image {
        path: path.to_path_buf(),
        source,
    };
    let loaded = color::load_image(path).map_err(image_err)?;
    let resized = color::resize_with_padding(&loaded.to_rgb(), side).map_err(image_err)?;
    let planes = color::normalize(&color::srgb_to_lab(&resized));
    let embedding = provider.embedding(path, &planes.l, side, side)?;
    Ok(PreparedExample {
        path: path.to_path_buf(),
        luminance: planes.luminance_tensor(),
        target_ab: planes.chroma_tensor(),
        embedding,
    })
}

fn prepare_all(
    entries: &[ManifestEntry],
    side: usize,
    provider: &dyn EmbeddingProvider,
    skipped: &mut Vec<PathBuf>,
) -> Result<Vec<PreparedExample>, TrainError> {
    let mut prepared = Vec::with_capacity(entries.len());
    for entry in entries {
        match prepare_example(&entry.image, side, provider) {
            Ok(example) => prepared.push(example),
            Err(err @ (TrainError::Image { .. } | TrainError::Embedding(_))) => {
                eprintln!("warning: skipping {}: {}", entry.image.display(), err);
                skipped.push(entry.image.clone());
            }
            Err(other) => return Err(other),
        }
    }
    Ok(prepared)
}

/// Forward pass for one example; returns the scalar loss node and its value.
fn example_loss(
    graph: &mut Graph<f32>,
    bound: &model::BoundParams,
    example: &PreparedExample,
) -> Result<(crate::tensor::Var, f64), TrainError> {
    let input = graph.leaf(example.luminance.clone());
    let target = graph.leaf(example.target_ab.clone());
    let out = model::model_forward(graph, input, &example.embedding, bound)?;
    let loss = graph.mse_loss(out, target)?;
    let value = graph.value(loss).item()?.to_real();
    Ok((loss, value))
}

fn mean_loss(
    examples: &[PreparedExample],
    params: &ModelParameters<f32>,
) -> Result<f64, TrainError> {
    let mut total = 0.0f64;
    for example in examples {
        let mut graph = Graph::new();
        let bound = params.bind(&mut graph);
        let (_, value) = example_loss(&mut graph, &bound, example)?;
        total += value;
    }
    Ok(total / examples.len() as f64)
}

/// Mean objective loss over a set of entries, forward-only.
pub fn evaluate(
    entries: &[ManifestEntry],
    params: &ModelParameters<f32>,
    provider: &dyn EmbeddingProvider,
    side: usize,
) -> Result<f64, TrainError> {
    if entries.is_empty() {
        return Err(TrainError::EmptyEvaluation);
    }
    let mut prepared = Vec::with_capacity(entries.len());
    for entry in entries {
        prepared.push(prepare_example(&entry.image, side, provider)?);
    }
    mean_loss(&prepared, params)
}

/// Run the full training loop and write `last.koal` / `best.koal` into
/// `out_dir` after every epoch.
pub fn train(
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    provider: &dyn EmbeddingProvider,
    out_dir: &Path,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if manifest.entries.is_empty() {
        return Err(TrainError::AllUnreadable);
    }

    // A single-entry dataset cannot be split; it trains without validation.
    let (train_entries, val_entries) = if manifest.entries.len() >= 2 {
        split_dataset(manifest, cfg.validation_fraction, cfg.seed)?
    } else {
        (manifest.entries.clone(), Vec::new())
    };

    let mut report = TrainReport::default();
    let train_set = prepare_all(&train_entries, cfg.train_side, provider, &mut report.skipped)?;
    let val_set = prepare_all(&val_entries, cfg.train_side, provider, &mut report.skipped)?;
    if train_set.is_empty() {
        return Err(TrainError::AllUnreadable);
    }

    let mut params = ModelParameters::<f32>::init(cfg.seed);
    let mut adam = AdamState::new(cfg.learning_rate);
    let last_path = out_dir.join("last.koal");
    let best_path = out_dir.join("best.koal");
    let mut best_metric = f64::INFINITY;

    if cfg.epochs > 0 {
        std::fs::create_dir_all(out_dir).map_err(|source| TrainError::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
    }

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            params.zero_grads();
            let scale = 1.0 / batch.len() as f32;
            for &index in batch {
                let example = &train_set[index];
                let mut graph = Graph::new();
                let bound = params.bind(&mut graph);
                let (loss, value) = example_loss(&mut graph, &bound, example)?;
                graph.backward(loss)?;
                params.accumulate_from(&graph, &bound, scale)?;
                loss_sum += value;
            }
            adam.step(params.tensors_mut())?;
        }

        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(mean_loss(&val_set, &params)?)
        };
        for loss in std::iter::once(train_loss).chain(val_loss) {
            if !(loss.is_finite() && loss >= 0.0) {
                return Err(TrainError::Config(format!(
                    "loss diverged to {loss} at epoch {epoch}"
                )));
            }
        }

        model::save_checkpoint(&params, &last_path)?;
        let metric = val_loss.unwrap_or(train_loss);
        if metric < best_metric {
            best_metric = metric;
            model::save_checkpoint(&params, &best_path)?;
        }

        report.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    if cfg.epochs > 0 {
        report.checkpoint = Some(last_path);
        report.best_checkpoint = Some(best_path);
    }
    Ok(report)
}
