//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error (including
//! nonexistent paths given as arguments).

use crate::color::{self, LabImage};
use crate::embedding::{self, EmbeddingProvider, StubProvider};
use crate::model;
use crate::train::{self, DatasetManifest, TrainConfig};
use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "recolor",
    version,
    about = "Colorize grayscale images with a trainable encoder-fusion-decoder CNN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a manifest of images
    Train(TrainArgs),
    /// Colorize images using a trained checkpoint
    Colorize(ColorizeArgs),
    /// Write the 299x299 stacked-luminance PNGs the external feature
    /// extractor expects
    ExportInceptionInputs(ExportArgs),
    /// Print the mean validation loss of a checkpoint over a manifest
    Eval(EvalArgs),
    /// List the tensors stored in a checkpoint
    InspectCheckpoint(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest file: one `image_path[TAB]embedding_path?` line per image
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Learning rate
    #[arg(long, default_value_t = 0.001)]
    lr: f32,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Fraction of entries held out for validation
    #[arg(long, default_value_t = 0.10)]
    val_fraction: f64,
    /// Square training resolution; must be a multiple of 8
    #[arg(long, default_value_t = 224)]
    side: usize,
    /// Directory receiving last.koal and best.koal
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ColorizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input PNGs; color inputs contribute only their luminance
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output file (single input) or directory (multiple inputs)
    #[arg(long, short = 'o')]
    output: PathBuf,
    /// Precomputed KEMB embedding; only valid with a single input
    #[arg(long)]
    embedding: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Square evaluation resolution; must be a multiple of 8
    #[arg(long, default_value_t = 224)]
    side: usize,
}

#[derive(Args)]
struct InspectArgs {
    checkpoint: PathBuf,
}

enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Runtime(err)
    }
}

type CliResult = Result<(), CliError>;

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Colorize(args) => cmd_colorize(args),
        Command::ExportInceptionInputs(args) => cmd_export(args),
        Command::Eval(args) => cmd_eval(args),
        Command::InspectCheckpoint(args) => cmd_inspect(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            2
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

fn require_exists(path: &Path, what: &str) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} does not exist: {}",
            path.display()
        )))
    }
}

fn cmd_train(args: TrainArgs) -> CliResult {
    require_exists(&args.manifest, "manifest")?;
    let manifest =
        DatasetManifest::load(&args.manifest).context("loading manifest")?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
        validation_fraction: args.val_fraction,
        train_side: args.side,
    };
    cfg.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let provider = manifest.embedding_provider();
    let report =
        train::train(&manifest, &cfg, &provider, &args.out_dir).context("training")?;
    for epoch in &report.epochs {
        match epoch.val_loss {
            Some(val) => println!(
                "epoch {} train={:.6} val={:.6}",
                epoch.epoch, epoch.train_loss, val
            ),
            None => println!("epoch {} train={:.6} val=-", epoch.epoch, epoch.train_loss),
        }
    }
    Ok(())
}

/// Fold an index into `[0, len)` by symmetric reflection.
fn mirror_index(index: usize, len: usize) -> usize {
    let period = 2 * len;
    let folded = index % period;
    if folded < len {
        folded
    } else {
        period - 1 - folded
    }
}

/// Reflect-pad a plane on the bottom/right up to the next multiples of 8.
fn pad_plane_to_multiple_of_8(plane: &[f32], height: usize, width: usize) -> (Vec<f32>, usize, usize) {
    let padded_h = height.div_ceil(8) * 8;
    let padded_w = width.div_ceil(8) * 8;
    if (padded_h, padded_w) == (height, width) {
        return (plane.to_vec(), height, width);
    }
    let mut out = vec![0.0f32; padded_h * padded_w];
    for y in 0..padded_h {
        let src_y = mirror_index(y, height);
        for x in 0..padded_w {
            out[y * padded_w + x] = plane[src_y * width + mirror_index(x, width)];
        }
    }
    (out, padded_h, padded_w)
}

fn colorize_one(
    params: &model::ModelParameters<f32>,
    input: &Path,
    output: &Path,
    embedding_file: Option<&Path>,
) -> anyhow::Result<()> {
    let loaded = color::load_image(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let lab = loaded.to_lab();
    let (width, height) = (lab.width, lab.height);

    let l_norm: Vec<f32> = lab.l.iter().map(|&v| v / 50.0 - 1.0).collect();
    let (padded, padded_h, padded_w) = pad_plane_to_multiple_of_8(&l_norm, height, width);

    let emb = match embedding_file {
        Some(path) => embedding::load_embedding(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => StubProvider.embedding(input, &padded, padded_h, padded_w)?,
    };

    let luminance = crate::tensor::Tensor::new(vec![1, padded_h, padded_w], padded)?;
    let predicted = model::predict(params, luminance, &emb)?;

    // Crop back to the input size and denormalize the chroma planes.
    let ab = predicted.ab.data();
    let mut a = Vec::with_capacity(width * height);
    let mut b = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            a.push(ab[y * padded_w + x] * color::CHROMA_SCALE);
            b.push(ab[padded_h * padded_w + y * padded_w + x] * color::CHROMA_SCALE);
        }
    }

    // Merge predicted chroma with the original luminance.
    let merged = LabImage {
        width,
        height,
        l: lab.l,
        a,
        b,
    };
    color::save_png(&color::lab_to_srgb(&merged), output)
        .with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

fn cmd_colorize(args: ColorizeArgs) -> CliResult {
    require_exists(&args.checkpoint, "checkpoint")?;
    for input in &args.inputs {
        require_exists(input, "input image")?;
    }
    if let Some(embedding) = &args.embedding {
        require_exists(embedding, "embedding")?;
        if args.inputs.len() > 1 {
            return Err(CliError::Usage(
                "--embedding applies to a single input image".into(),
            ));
        }
    }
    let params = model::load_checkpoint(&args.checkpoint)
        .context("loading checkpoint")?;

    if args.inputs.len() == 1 {
        colorize_one(
            &params,
            &args.inputs[0],
            &args.output,
            args.embedding.as_deref(),
        )?;
    } else {
        std::fs::create_dir_all(&args.output)
            .with_context(|| format!("creating {}", args.output.display()))
            .map_err(CliError::Runtime)?;
        for input in &args.inputs {
            let stem = input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into());
            let output = args.output.join(format!("{stem}.png"));
            colorize_one(&params, input, &output, None)?;
        }
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CliResult {
    require_exists(&args.manifest, "manifest")?;
    let manifest =
        DatasetManifest::load(&args.manifest).context("loading manifest")?;
    if manifest.entries.is_empty() {
        eprintln!("warning: manifest is empty, nothing to export");
        return Ok(());
    }
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(CliError::Runtime)?;

    let mut failures = 0usize;
    for entry in &manifest.entries {
        let stem = entry
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        let output = args.out_dir.join(format!("{stem}.png"));
        let result = color::load_image(&entry.image)
            .map_err(anyhow::Error::from)
            .and_then(|loaded| {
                embedding::export_extractor_input(&loaded.to_rgb(), &output)
                    .map_err(anyhow::Error::from)
            });
        if let Err(err) = result {
            eprintln!("warning: {}: {err:#}", entry.image.display());
            failures += 1;
        }
    }
    if failures == manifest.entries.len() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "all {failures} exports failed"
        )));
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    require_exists(&args.checkpoint, "checkpoint")?;
    require_exists(&args.manifest, "manifest")?;
    let params = model::load_checkpoint(&args.checkpoint)
        .context("loading checkpoint")?;
    let manifest =
        DatasetManifest::load(&args.manifest).context("loading manifest")?;
    let provider = manifest.embedding_provider();
    let loss = train::evaluate(&manifest.entries, &params, &provider, args.side)
        .context("evaluating")?;
    println!("val_loss={loss:.6}");
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> CliResult {
    require_exists(&args.checkpoint, "checkpoint")?;
    let params = model::load_checkpoint(&args.checkpoint)
        .context("loading checkpoint")?;
    for (name, tensor) in params.tensors() {
        println!("{name} shape={:?}", tensor.shape());
    }
    println!("total_parameters={}", params.parameter_count());
    Ok(())
}
