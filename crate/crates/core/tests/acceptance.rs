//! Acceptance suite: one test per acceptance criterion, each printing a
//! single pass/fail line (run with `--nocapture` to see them).
//!
//! The heavyweight criteria (single-image overfit at 224x224, the
//! twenty-image desk-scale run) are real training runs; expect the full
//! suite to take several minutes.

mod common;

use common::{fd_gradient_error, flat_chroma_image, gradient_image, naive_mse, write_manifest, write_png, TestRng};
use recolor::color::{lab_to_srgb, normalize, srgb_to_lab, RgbImage};
use recolor::embedding::{
    load_embedding, save_embedding, stub_embedding, Embedding, EmbeddingError, EMBEDDING_DIM,
};
use recolor::model::{
    self, fusion_stack, load_checkpoint, model_forward, save_checkpoint, CheckpointError,
    ModelParameters, FUSION_DEPTH,
};
use recolor::tensor::{Graph, Tensor, Var};
use recolor::train::{train, DatasetManifest, TrainConfig};
use std::fs;
use std::process::Command;
use std::time::Instant;

fn criterion(number: u32, name: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("[criterion {number}] {name}: PASS ({detail})"),
        Err(detail) => {
            println!("[criterion {number}] {name}: FAIL ({detail})");
            panic!("criterion {number} ({name}) failed: {detail}");
        }
    }
}

fn run_binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_recolor"))
        .args(args)
        .output()
        .expect("binary runs")
}

// ---------------------------------------------------------------- 1

fn model_loss_f64(
    params: &ModelParameters<f64>,
    input: &Tensor<f64>,
    emb: &Embedding,
    target: &Tensor<f64>,
) -> f64 {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let l = g.leaf(input.clone());
    let t = g.leaf(target.clone());
    let out = model_forward(&mut g, l, emb, &bound).unwrap();
    let loss = g.mse_loss(out, t).unwrap();
    g.value(loss).item().unwrap()
}

#[test]
fn criterion_1_gradient_suite() {
    let started = Instant::now();
    let mut rng = TestRng::new(1);
    let mut worst_op: f64 = 0.0;

    // conv2d, stride 1 and 2, with respect to input, kernels and bias.
    for stride in [1usize, 2] {
        let x = rng.tensor(vec![3, 5, 6]);
        let k = rng.tensor(vec![4, 3, 3, 3]);
        let b = rng.tensor(vec![4]);
        let t = rng.tensor(vec![4, 5usize.div_ceil(stride), 6usize.div_ceil(stride)]);
        let inputs = [x, k, b, t];
        for wrt in 0..3 {
            let err = fd_gradient_error(
                |g, v: &[Var]| {
                    let y = g.conv2d(v[0], v[1], v[2], stride).unwrap();
                    g.mse_loss(y, v[3]).unwrap()
                },
                &inputs,
                wrt,
            );
            worst_op = worst_op.max(err);
        }
    }
    // relu (inputs kept away from the kink), tanh, upsample, tile, concat, mse.
    let relu_in = Tensor::new(
        vec![2, 3, 4],
        rng.vec(24).into_iter().map(|v| v + 0.2 * v.signum()).collect(),
    )
    .unwrap();
    let relu_t = rng.tensor(vec![2, 3, 4]);
    worst_op = worst_op.max(fd_gradient_error(
        |g, v: &[Var]| {
            let y = g.relu(v[0]);
            g.mse_loss(y, v[1]).unwrap()
        },
        &[relu_in, relu_t],
        0,
    ));
    let tanh_in = rng.tensor(vec![2, 3, 3]);
    let tanh_t = rng.tensor(vec![2, 3, 3]);
    worst_op = worst_op.max(fd_gradient_error(
        |g, v: &[Var]| {
            let y = g.tanh_act(v[0]);
            g.mse_loss(y, v[1]).unwrap()
        },
        &[tanh_in, tanh_t],
        0,
    ));
    let up_in = rng.tensor(vec![3, 3, 2]);
    let up_t = rng.tensor(vec![3, 6, 4]);
    worst_op = worst_op.max(fd_gradient_error(
        |g, v: &[Var]| {
            let y = g.upsample_nearest2x(v[0]).unwrap();
            g.mse_loss(y, v[1]).unwrap()
        },
        &[up_in, up_t],
        0,
    ));
    let tile_in = rng.tensor(vec![6]);
    let tile_t = rng.tensor(vec![6, 2, 2]);
    worst_op = worst_op.max(fd_gradient_error(
        |g, v: &[Var]| {
            let y = g.tile_spatial(v[0], 2, 2).unwrap();
            g.mse_loss(y, v[1]).unwrap()
        },
        &[tile_in, tile_t],
        0,
    ));
    let cat_a = rng.tensor(vec![2, 3, 3]);
    let cat_b = rng.tensor(vec![3, 3, 3]);
    let cat_t = rng.tensor(vec![5, 3, 3]);
    let cat_inputs = [cat_a, cat_b, cat_t];
    for wrt in 0..2 {
        worst_op = worst_op.max(fd_gradient_error(
            |g, v: &[Var]| {
                let y = g.concat_depth(v[0], v[1]).unwrap();
                g.mse_loss(y, v[2]).unwrap()
            },
            &cat_inputs,
            wrt,
        ));
    }
    let mse_p = rng.tensor(vec![2, 4, 4]);
    let mse_t = rng.tensor(vec![2, 4, 4]);
    let mse_inputs = [mse_p, mse_t];
    for wrt in 0..2 {
        worst_op = worst_op.max(fd_gradient_error(
            |g, v: &[Var]| g.mse_loss(v[0], v[1]).unwrap(),
            &mse_inputs,
            wrt,
        ));
    }

    // End-to-end model loss on a 1x8x8 input, sampled per parameter tensor.
    let mut params = ModelParameters::<f64>::init(17);
    let input = rng.tensor(vec![1, 8, 8]);
    let target = rng.tensor(vec![2, 8, 8]);
    let plane: Vec<f32> = input.data().iter().map(|&v| v as f32).collect();
    let emb = stub_embedding(&plane, 8, 8);

    let mut graph = Graph::new();
    let bound = params.bind(&mut graph);
    let l = graph.leaf(input.clone());
    let t = graph.leaf(target.clone());
    let out = model_forward(&mut graph, l, &emb, &bound).unwrap();
    let loss = graph.mse_loss(out, t).unwrap();
    graph.backward(loss).unwrap();
    params.zero_grads();
    params.accumulate_from(&graph, &bound, 1.0).unwrap();
    let analytic: Vec<Vec<f64>> = params
        .tensors()
        .map(|(_, tensor)| tensor.grad().unwrap().to_vec())
        .collect();
    drop(graph);

    let mut worst_model: f64 = 0.0;
    let step = recolor::tensor::check::FD_STEP;
    for (tensor_idx, analytic_tensor) in analytic.iter().enumerate() {
        let numel = analytic_tensor.len();
        let mut samples = vec![0, numel / 2, numel - 1];
        samples.dedup();
        for elem in samples {
            let mut probe = |delta: f64| {
                let original = {
                    let tensor = params.tensors_mut().nth(tensor_idx).unwrap();
                    let v = tensor.data()[elem];
                    tensor.data_mut()[elem] = v + delta;
                    v
                };
                let value = model_loss_f64(&params, &input, &emb, &target);
                params.tensors_mut().nth(tensor_idx).unwrap().data_mut()[elem] = original;
                value
            };
            let numeric = (probe(step) - probe(-step)) / (2.0 * step);
            let a = analytic_tensor[elem];
            let diff = (a - numeric).abs();
            if diff > 1e-9 {
                worst_model = worst_model.max(diff / a.abs().max(numeric.abs()));
            }
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    let shown = |err: f64| {
        if err == 0.0 {
            "<1e-9".to_string()
        } else {
            format!("{err:.1e}")
        }
    };
    let mut result = Ok(format!(
        "op max rel err {} (tol 1e-4), end-to-end {} (tol 1e-3), {elapsed:.0}s",
        shown(worst_op),
        shown(worst_model)
    ));
    if worst_op > 1e-4 {
        result = Err(format!("op gradient rel err {worst_op:.3e} exceeds 1e-4"));
    } else if worst_model > 1e-3 {
        result = Err(format!(
            "end-to-end gradient rel err {worst_model:.3e} exceeds 1e-3"
        ));
    } else if elapsed > 120.0 {
        result = Err(format!("runtime {elapsed:.0}s exceeds 2 minutes"));
    }
    criterion(1, "gradient suite", result);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_shape_contract() {
    let params = ModelParameters::<f32>::init(2);
    let mut rng = TestRng::new(2);
    let plane: Vec<f32> = rng.vec(64).iter().map(|&v| v as f32).collect();
    let emb = stub_embedding(&plane, 8, 8);

    let mut checked = 0;
    for &h in &[8usize, 16, 24, 32, 64] {
        for &w in &[8usize, 16, 24, 32, 64] {
            let data: Vec<f32> = rng.vec(h * w).iter().map(|&v| v as f32).collect();
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let input = g.leaf(Tensor::new(vec![1, h, w], data).unwrap());
            let out = model_forward(&mut g, input, &emb, &bound).unwrap();
            if g.value(out).shape() != [2, h, w] {
                criterion(
                    2,
                    "shape contract",
                    Err(format!(
                        "{h}x{w} input produced {:?}",
                        g.value(out).shape()
                    )),
                );
            }
            checked += 1;
        }
    }

    // Fused pre-convolution depth at the bottleneck.
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let input = g.leaf(Tensor::zeros(vec![1, 16, 16]));
    let encoded = model::encoder_forward(&mut g, input, &bound).unwrap();
    let stacked = fusion_stack(&mut g, encoded, &emb).unwrap();
    let depth = g.value(stacked).shape()[0];

    let result = if depth == 1257 && FUSION_DEPTH == 1257 {
        Ok(format!("{checked} size pairs exact, fused depth {depth}"))
    } else {
        Err(format!("fused depth {depth}, expected 1257"))
    };
    criterion(2, "shape contract", result);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_objective_oracle_equivalence() {
    let mut rng = TestRng::new(3);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let c = 2;
        let h = 1 + (case % 7);
        let w = 1 + (case % 5);
        let pred = rng.tensor(vec![c, h, w]);
        let target = rng.tensor(vec![c, h, w]);
        let mut g = Graph::new();
        let p = g.leaf(pred.clone());
        let t = g.leaf(target.clone());
        let loss = g.mse_loss(p, t).unwrap();
        let got = g.value(loss).item().unwrap();
        let want = naive_mse(pred.data(), target.data(), c, h, w);
        worst = worst.max((got - want).abs() / want.abs().max(1e-300));
    }
    let result = if worst <= 1e-12 {
        Ok(format!("100 random pairs, max rel diff {worst:.2e}"))
    } else {
        Err(format!("rel diff {worst:.3e} exceeds 1e-12"))
    };
    criterion(3, "objective oracle equivalence", result);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_colorspace_fidelity() {
    let steps: Vec<u8> = (0..16).map(|i| (i * 17) as u8).collect();
    let mut worst = 0i32;
    for &r in &steps {
        for &g in &steps {
            for &b in &steps {
                let img = RgbImage::new(1, 1, vec![r, g, b]).unwrap();
                let back = lab_to_srgb(&srgb_to_lab(&img));
                let [r2, g2, b2] = back.pixel(0, 0);
                for (orig, round) in [(r, r2), (g, g2), (b, b2)] {
                    worst = worst.max((orig as i32 - round as i32).abs());
                }
            }
        }
    }
    let mut worst_chroma = 0.0f32;
    for v in 0..=255u8 {
        let lab = srgb_to_lab(&RgbImage::new(1, 1, vec![v, v, v]).unwrap());
        worst_chroma = worst_chroma.max(lab.a[0].abs()).max(lab.b[0].abs());
    }
    let result = if worst <= 1 && worst_chroma < 0.01 {
        Ok(format!(
            "lattice max error {worst}/255, gray chroma <= {worst_chroma:.1e}"
        ))
    } else {
        Err(format!(
            "lattice error {worst}, gray chroma {worst_chroma:.1e}"
        ))
    };
    criterion(4, "colorspace fidelity", result);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_single_image_overfit() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let image = flat_chroma_image(224, 224, 25.0, -18.0, 1);
    let image_path = write_png(dir.path(), "target.png", &image);
    let manifest = DatasetManifest::load(&write_manifest(dir.path(), &["target.png"])).unwrap();

    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 1,
        seed: 42,
        train_side: 224,
        ..TrainConfig::default()
    };
    let out_dir = dir.path().join("run");
    let report = train(
        &manifest,
        &cfg,
        &recolor::embedding::StubProvider,
        &out_dir,
    )
    .unwrap();

    let (best_epoch, best_loss) = report
        .epochs
        .iter()
        .map(|e| (e.epoch, e.train_loss))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();

    // Colorize the training image through the CLI and measure how well the
    // written PNG reproduces the target chroma.
    let colorized_path = dir.path().join("colorized.png");
    let output = run_binary(&[
        "colorize",
        "--checkpoint",
        out_dir.join("best.koal").to_str().unwrap(),
        "-o",
        colorized_path.to_str().unwrap(),
        image_path.to_str().unwrap(),
    ]);
    if !output.status.success() {
        criterion(
            5,
            "single-image overfit",
            Err(format!(
                "colorize failed: {}",
                String::from_utf8_lossy(&output.stderr)
            )),
        );
    }
    let colorized = image::open(&colorized_path).unwrap().to_rgb8();
    let colorized =
        RgbImage::new(224, 224, colorized.into_raw()).unwrap();
    let target_planes = normalize(&srgb_to_lab(&image));
    let output_planes = normalize(&srgb_to_lab(&colorized));

    let mut g = Graph::new();
    let p = g.leaf(output_planes.chroma_tensor());
    let t = g.leaf(target_planes.chroma_tensor());
    let loss = g.mse_loss(p, t).unwrap();
    let colorize_loss = g.value(loss).item().unwrap() as f64;

    let mut luminance_drift = 0.0f32;
    for (a, b) in srgb_to_lab(&image).l.iter().zip(&srgb_to_lab(&colorized).l) {
        luminance_drift = luminance_drift.max((a - b).abs());
    }

    // `eval` on the image the model was overfit to reports the same
    // near-zero loss.
    let eval_out = run_binary(&[
        "eval",
        "--checkpoint",
        out_dir.join("best.koal").to_str().unwrap(),
        "--manifest",
        dir.path().join("manifest.tsv").to_str().unwrap(),
    ]);
    let eval_stdout = String::from_utf8_lossy(&eval_out.stdout).into_owned();
    let eval_loss: f64 = eval_stdout
        .trim()
        .strip_prefix("val_loss=")
        .and_then(|v| v.parse().ok())
        .unwrap_or(f64::INFINITY);

    let minutes = started.elapsed().as_secs_f64() / 60.0;
    let result = if best_loss >= 1e-3 {
        Err(format!(
            "train loss only reached {best_loss:.2e} after 200 epochs"
        ))
    } else if colorize_loss >= 1e-3 {
        Err(format!("colorize chroma loss {colorize_loss:.2e} >= 1e-3"))
    } else if eval_loss >= 1e-3 {
        Err(format!(
            "eval reported {eval_loss} (stdout {eval_stdout:?})"
        ))
    } else if luminance_drift >= 1.0 {
        Err(format!("luminance drifted by {luminance_drift:.2}"))
    } else if minutes > 30.0 {
        Err(format!("runtime {minutes:.1} min exceeds 30 min"))
    } else {
        Ok(format!(
            "loss {best_loss:.2e} at epoch {best_epoch}, colorize loss {colorize_loss:.2e}, \
             eval {eval_loss:.1e}, luminance drift {luminance_drift:.2}, {minutes:.1} min"
        ))
    };
    criterion(5, "single-image overfit", result);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_desk_scale_generalization() {
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<String> = (0..20)
        .map(|i| {
            let img = gradient_image(64 + 2 * (i % 5), 48 + 3 * (i % 4), i as u32);
            let name = format!("img{i:02}.png");
            write_png(dir.path(), &name, &img);
            name
        })
        .collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let manifest = DatasetManifest::load(&write_manifest(dir.path(), &name_refs)).unwrap();

    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 8,
        seed: 1234,
        train_side: 64,
        validation_fraction: 0.10,
        ..TrainConfig::default()
    };
    let report = train(
        &manifest,
        &cfg,
        &recolor::embedding::StubProvider,
        &dir.path().join("run"),
    )
    .unwrap();

    let first = &report.epochs[0];
    let last = &report.epochs[19];
    let val_first = first.val_loss.unwrap();
    let val_last = last.val_loss.unwrap();
    let all_finite = report
        .epochs
        .iter()
        .all(|e| e.train_loss.is_finite() && e.val_loss.is_some_and(f64::is_finite));

    let result = if !all_finite {
        Err("a loss became non-finite".into())
    } else if last.train_loss >= 0.5 * first.train_loss {
        Err(format!(
            "epoch-20 train loss {:.4e} not below half of epoch-1 {:.4e}",
            last.train_loss, first.train_loss
        ))
    } else if val_last >= val_first {
        Err(format!(
            "validation loss did not decrease: {val_first:.4e} -> {val_last:.4e}"
        ))
    } else {
        Ok(format!(
            "18/2 split, train {:.3e} -> {:.3e}, val {val_first:.3e} -> {val_last:.3e}",
            first.train_loss, last.train_loss
        ))
    };
    criterion(6, "desk-scale generalization", result);
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_determinism() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3 {
        write_png(dir.path(), &format!("d{i}.png"), &gradient_image(24, 20, i));
    }
    let manifest_path = write_manifest(dir.path(), &["d0.png", "d1.png", "d2.png"]);
    let manifest = DatasetManifest::load(&manifest_path).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 2,
        seed: 99,
        train_side: 16,
        validation_fraction: 0.34,
        ..TrainConfig::default()
    };

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    train(&manifest, &cfg, &recolor::embedding::StubProvider, &out_a).unwrap();
    train(&manifest, &cfg, &recolor::embedding::StubProvider, &out_b).unwrap();

    let last_identical =
        fs::read(out_a.join("last.koal")).unwrap() == fs::read(out_b.join("last.koal")).unwrap();
    let best_identical =
        fs::read(out_a.join("best.koal")).unwrap() == fs::read(out_b.join("best.koal")).unwrap();

    // Colorize the same input twice with the same checkpoint.
    let input = write_png(dir.path(), "photo.png", &gradient_image(30, 22, 9));
    let png_a = dir.path().join("out_a.png");
    let png_b = dir.path().join("out_b.png");
    for path in [&png_a, &png_b] {
        let output = run_binary(&[
            "colorize",
            "--checkpoint",
            out_a.join("last.koal").to_str().unwrap(),
            "-o",
            path.to_str().unwrap(),
            input.to_str().unwrap(),
        ]);
        assert!(output.status.success());
    }
    let pngs_identical = fs::read(&png_a).unwrap() == fs::read(&png_b).unwrap();

    let result = match (last_identical, best_identical, pngs_identical) {
        (true, true, true) => Ok("checkpoints and colorized PNGs byte-identical".into()),
        other => Err(format!(
            "identical? last={} best={} png={}",
            other.0, other.1, other.2
        )),
    };
    criterion(7, "determinism", result);
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_format_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();

    // KOAL round trip.
    let params = ModelParameters::<f32>::init(8);
    let koal_a = dir.path().join("a.koal");
    let koal_b = dir.path().join("b.koal");
    save_checkpoint(&params, &koal_a).unwrap();
    let reloaded = load_checkpoint(&koal_a).unwrap();
    save_checkpoint(&reloaded, &koal_b).unwrap();
    if fs::read(&koal_a).unwrap() != fs::read(&koal_b).unwrap() {
        failures.push("KOAL round trip not bit-identical".to_string());
    }

    // KEMB round trip.
    let values: Vec<f32> = (0..EMBEDDING_DIM).map(|i| (i as f32).cos()).collect();
    let emb = Embedding::new(values).unwrap();
    let kemb_a = dir.path().join("a.kemb");
    let kemb_b = dir.path().join("b.kemb");
    save_embedding(&emb, &kemb_a).unwrap();
    save_embedding(&load_embedding(&kemb_a).unwrap(), &kemb_b).unwrap();
    if fs::read(&kemb_a).unwrap() != fs::read(&kemb_b).unwrap() {
        failures.push("KEMB round trip not bit-identical".to_string());
    }

    // Malformed checkpoint: magic, truncation, wrong shape.
    let corrupt = |mutate: &dyn Fn(&mut Vec<u8>)| -> Vec<u8> {
        let mut bytes = fs::read(&koal_a).unwrap();
        mutate(&mut bytes);
        bytes
    };
    let bad_magic = dir.path().join("magic.koal");
    fs::write(&bad_magic, corrupt(&|b| b[0] = b'X')).unwrap();
    if !matches!(
        load_checkpoint(&bad_magic),
        Err(CheckpointError::BadMagic { .. })
    ) {
        failures.push("bad KOAL magic not rejected".into());
    }
    let cut = dir.path().join("cut.koal");
    fs::write(&cut, &fs::read(&koal_a).unwrap()[..1000]).unwrap();
    if !matches!(load_checkpoint(&cut), Err(CheckpointError::Truncated { .. })) {
        failures.push("truncated KOAL not rejected".into());
    }
    let reshaped = dir.path().join("shape.koal");
    fs::write(
        &reshaped,
        corrupt(&|b| {
            let off = 4 + 4 + 4 + 2 + 11 + 1;
            b[off..off + 4].copy_from_slice(&32u32.to_le_bytes());
        }),
    )
    .unwrap();
    match load_checkpoint(&reshaped) {
        Err(CheckpointError::ShapeMismatch { name, .. }) if name == "enc1.kernel" => {}
        _ => failures.push("KOAL shape mismatch not reported with the offender".into()),
    }

    // Malformed embeddings: magic, wrong dimension, truncation.
    let kemb_magic = dir.path().join("magic.kemb");
    let mut bytes = fs::read(&kemb_a).unwrap();
    bytes[1] = b'?';
    fs::write(&kemb_magic, &bytes).unwrap();
    if !matches!(
        load_embedding(&kemb_magic),
        Err(EmbeddingError::BadMagic { .. })
    ) {
        failures.push("bad KEMB magic not rejected".into());
    }
    let kemb_dim = dir.path().join("dim.kemb");
    let mut bytes = fs::read(&kemb_a).unwrap();
    bytes[8..12].copy_from_slice(&1000u32.to_le_bytes());
    fs::write(&kemb_dim, &bytes).unwrap();
    if !matches!(
        load_embedding(&kemb_dim),
        Err(EmbeddingError::WrongDimension { got: 1000, .. })
    ) {
        failures.push("wrong KEMB dimension not rejected".into());
    }
    let kemb_cut = dir.path().join("cut.kemb");
    let bytes = fs::read(&kemb_a).unwrap();
    fs::write(&kemb_cut, &bytes[..bytes.len() - 3]).unwrap();
    if !matches!(
        load_embedding(&kemb_cut),
        Err(EmbeddingError::Truncated { .. })
    ) {
        failures.push("truncated KEMB not rejected".into());
    }

    let result = if failures.is_empty() {
        Ok("KOAL and KEMB bit-identical round trips, malformed files rejected".into())
    } else {
        Err(failures.join("; "))
    };
    criterion(8, "format round trips", result);
}
