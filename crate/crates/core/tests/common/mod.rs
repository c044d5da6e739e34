//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles here (naive convolution, triple-loop objective) are kept as
//! plain nested loops so they stay independent of the engine's im2col and
//! matrix-multiply path.

#![allow(dead_code)]

use recolor::color::{self, LabImage, RgbImage};
use recolor::tensor::{Graph, Tensor, Var};
use std::path::{Path, PathBuf};

/// Deterministic pseudo-random values in [-1, 1] (splitmix-style), so the
/// oracles need no RNG crate.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x2545f4914f6cdd1d))
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    pub fn vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.next_f64()).collect()
    }

    pub fn tensor(&mut self, shape: Vec<usize>) -> Tensor<f64> {
        let numel = shape.iter().product();
        Tensor::new(shape, self.vec(numel)).unwrap()
    }
}

/// Same-padding geometry, restated independently: output is `ceil(in/s)`,
/// total padding `(out-1)*s + k - in`, extra row/column on the
/// bottom/right.
fn same_pad_before(len: usize, kernel: usize, stride: usize) -> usize {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(len);
    total / 2
}

/// Reference cross-correlation with same padding: plain nested loops.
pub fn naive_conv2d(
    input: &[f64],
    (c_in, h, w): (usize, usize, usize),
    kernels: &[f64],
    c_out: usize,
    k: usize,
    bias: &[f64],
    stride: usize,
) -> (Vec<f64>, usize, usize) {
    let out_h = h.div_ceil(stride);
    let out_w = w.div_ceil(stride);
    let pad_y = same_pad_before(h, k, stride);
    let pad_x = same_pad_before(w, k, stride);
    let mut out = vec![0.0; c_out * out_h * out_w];
    for oc in 0..c_out {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = 0.0;
                for ic in 0..c_in {
                    for ky in 0..k {
                        for kx in 0..k {
                            let y = (oy * stride + ky) as isize - pad_y as isize;
                            let x = (ox * stride + kx) as isize - pad_x as isize;
                            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                continue;
                            }
                            let pixel = input[(ic * h + y as usize) * w + x as usize];
                            let weight = kernels[((oc * c_in + ic) * k + ky) * k + kx];
                            acc += pixel * weight;
                        }
                    }
                }
                out[(oc * out_h + oy) * out_w + ox] = acc + bias[oc];
            }
        }
    }
    (out, out_h, out_w)
}

/// Triple-loop objective: `sum_k sum_i sum_j (p - t)^2 / (2 H W)`.
pub fn naive_mse(pred: &[f64], target: &[f64], channels: usize, h: usize, w: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..channels {
        for i in 0..h {
            for j in 0..w {
                let idx = (k * h + i) * w + j;
                let d = pred[idx] - target[idx];
                total += d * d;
            }
        }
    }
    total / (2.0 * h as f64 * w as f64)
}

/// Worst relative disagreement between the analytic gradient of
/// `inputs[wrt]` and central finite differences, under a graph-building
/// closure returning a scalar loss node. The numeric side re-runs the
/// forward pass only.
pub fn fd_gradient_error<F>(build: F, inputs: &[Tensor<f64>], wrt: usize) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| graph.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let loss = build(&mut graph, &vars);
    graph.backward(loss).unwrap();
    let analytic = graph.grad(vars[wrt]).unwrap().to_vec();

    let forward = |point: &[f64]| -> f64 {
        let mut graph = Graph::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let tensor = if i == wrt {
                    Tensor::new(t.shape().to_vec(), point.to_vec()).unwrap()
                } else {
                    t.clone()
                };
                graph.leaf(tensor)
            })
            .collect();
        let loss = build(&mut graph, &vars);
        graph.value(loss).item().unwrap()
    };
    let numeric = recolor::tensor::check::numerical_gradient(
        forward,
        inputs[wrt].data(),
        recolor::tensor::check::FD_STEP,
    );
    recolor::tensor::check::max_relative_error(&analytic, &numeric, 1e-9)
}

/// Assert the finite-difference disagreement stays under `rtol`.
pub fn assert_fd_gradient<F>(build: F, inputs: &[Tensor<f64>], wrt: usize, rtol: f64)
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let err = fd_gradient_error(build, inputs, wrt);
    assert!(
        err <= rtol,
        "finite-difference mismatch for input {wrt}: relative error {err:.3e} > {rtol:.0e}"
    );
}

/// Smooth colorful test image; `phase` varies the palette.
pub fn gradient_image(width: usize, height: usize, phase: u32) -> RgbImage {
    let mut pixels = Vec::with_capacity(width * height * 3);
    let p = phase as f64;
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / width.max(1) as f64;
            let fy = y as f64 / height.max(1) as f64;
            let r = 140.0 + 80.0 * (std::f64::consts::TAU * (fx + 0.13 * p)).sin();
            let g = 128.0 + 70.0 * (std::f64::consts::TAU * (fy * 0.8 + 0.29 * p)).cos();
            let b = 120.0 + 90.0 * (std::f64::consts::TAU * (0.5 * (fx + fy) + 0.07 * p)).sin();
            for v in [r, g, b] {
                pixels.push(v.clamp(0.0, 255.0).round() as u8);
            }
        }
    }
    RgbImage::new(width, height, pixels).unwrap()
}

/// Image with constant (a*, b*) chroma and a luminance ramp, rendered
/// through Lab so the chroma target really is flat. `variant` rotates the
/// ramp direction.
pub fn flat_chroma_image(width: usize, height: usize, a: f32, b: f32, variant: u32) -> RgbImage {
    let n = width * height;
    let angle = variant as f32 * 0.9;
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut l = Vec::with_capacity(n);
    for y in 0..height {
        for x in 0..width {
            let ramp = (x as f32 * dx + y as f32 * dy) / (width + height) as f32;
            l.push(55.0 + 25.0 * ramp.clamp(-1.0, 1.0));
        }
    }
    let lab = LabImage {
        width,
        height,
        l,
        a: vec![a; n],
        b: vec![b; n],
    };
    color::lab_to_srgb(&lab)
}

pub fn write_png(dir: &Path, name: &str, img: &RgbImage) -> PathBuf {
    let path = dir.join(name);
    color::save_png(img, &path).unwrap();
    path
}

/// Write a TSV manifest referencing the given file names (one per line).
pub fn write_manifest(dir: &Path, names: &[&str]) -> PathBuf {
    let path = dir.join("manifest.tsv");
    let body: String = names.iter().map(|n| format!("{n}\n")).collect();
    std::fs::write(&path, body).unwrap();
    path
}
