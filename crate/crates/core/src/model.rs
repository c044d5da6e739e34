//! The encoder-fusion-decoder network.
//!
//! Eight 3x3 encoder convolutions (strides 2,1,2,1,2,1,1,1) reduce a
//! `[1,H,W]` luminance plane to a `[256,H/8,W/8]` volume. The fusion stage
//! tiles a 1001-element global embedding across every spatial position,
//! concatenates it along depth (1257 channels) and mixes with a 1x1
//! convolution back to 256. The decoder alternates 3x3 convolutions with
//! nearest-neighbor 2x upsampling to emit `[2,H,W]` chroma planes through a
//! final tanh.
//!
//! All convolutions use ReLU except the last, which uses tanh.

use crate::embedding::{Embedding, EMBEDDING_DIM};
use crate::tensor::{Graph, Result as TensorResult, Scalar, Tensor, TensorError, Var};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

/// One convolution layer: `kernels [out,in,k,k]`, `bias [out]`.
#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub name: &'static str,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
}

impl ConvSpec {
    const fn relu(
        name: &'static str,
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        ConvSpec {
            name,
            out_channels,
            in_channels,
            kernel,
            stride,
            activation: Activation::Relu,
        }
    }

    pub fn kernel_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn bias_shape(&self) -> Vec<usize> {
        vec![self.out_channels]
    }

    pub fn parameter_count(&self) -> usize {
        self.out_channels * (self.in_channels * self.kernel * self.kernel + 1)
    }
}

pub const ENCODER_LAYERS: [ConvSpec; 8] = [
    ConvSpec::relu("enc1", 64, 1, 3, 2),
    ConvSpec::relu("enc2", 128, 64, 3, 1),
    ConvSpec::relu("enc3", 128, 128, 3, 2),
    ConvSpec::relu("enc4", 256, 128, 3, 1),
    ConvSpec::relu("enc5", 256, 256, 3, 2),
    ConvSpec::relu("enc6", 512, 256, 3, 1),
    ConvSpec::relu("enc7", 512, 512, 3, 1),
    ConvSpec::relu("enc8", 256, 512, 3, 1),
];

/// Depth of the concatenated fusion volume: encoder output plus embedding.
pub const FUSION_DEPTH: usize = 256 + EMBEDDING_DIM;

pub const FUSION_LAYER: ConvSpec = ConvSpec::relu("fusion", 256, FUSION_DEPTH, 1, 1);

pub const DECODER_LAYERS: [ConvSpec; 5] = [
    ConvSpec::relu("dec1", 128, 256, 3, 1),
    ConvSpec::relu("dec2", 64, 128, 3, 1),
    ConvSpec::relu("dec3", 64, 64, 3, 1),
    ConvSpec::relu("dec4", 32, 64, 3, 1),
    ConvSpec {
        name: "dec5",
        out_channels: 2,
        in_channels: 32,
        kernel: 3,
        stride: 1,
        activation: Activation::Tanh,
    },
];

/// 2x upsampling follows dec1, dec3 and dec5.
const UPSAMPLE_AFTER: [bool; 5] = [true, false, true, false, true];

/// Exact number of trainable values across all kernels and biases.
pub const PARAMETER_COUNT: usize = 6_574_050;

/// All 14 convolution layers in network order.
pub fn layer_specs() -> impl Iterator<Item = ConvSpec> {
    ENCODER_LAYERS
        .into_iter()
        .chain(std::iter::once(FUSION_LAYER))
        .chain(DECODER_LAYERS)
}

const CHECKPOINT_MAGIC: [u8; 4] = *b"KOAL";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic, not a KOAL checkpoint")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported checkpoint version {got}")]
    BadVersion { path: PathBuf, got: u32 },
    #[error("{path}: truncated file")]
    Truncated { path: PathBuf },
    #[error("{path}: tensor name is not valid UTF-8")]
    BadName { path: PathBuf },
    #[error("{path}: unknown tensor {name:?}")]
    UnknownTensor { path: PathBuf, name: String },
    #[error("{path}: duplicate tensor {name:?}")]
    DuplicateTensor { path: PathBuf, name: String },
    #[error("{path}: missing tensor {name:?}")]
    MissingTensor { path: PathBuf, name: String },
    #[error("{path}: tensor {name:?} has shape {got:?}, architecture requires {expected:?}")]
    ShapeMismatch {
        path: PathBuf,
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

/// Named kernel/bias tensors for every layer, in network order.
pub struct ModelParameters<T: Scalar> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> ModelParameters<T> {
    /// He-uniform kernels (bound `sqrt(6 / fan_in)`), zero biases,
    /// deterministic in the seed.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::with_capacity(2 * layer_specs().count());
        for spec in layer_specs() {
            let fan_in = spec.in_channels * spec.kernel * spec.kernel;
            let bound = (6.0 / fan_in as f64).sqrt();
            let kernel_shape = spec.kernel_shape();
            let numel: usize = kernel_shape.iter().product();
            let data: Vec<T> = (0..numel)
                .map(|_| T::from_real(rng.gen_range(-bound..=bound)))
                .collect();
            let kernel = Tensor::new(kernel_shape, data)
                .expect("table shape is consistent")
                .with_requires_grad(true);
            let bias = Tensor::zeros(spec.bias_shape()).with_requires_grad(true);
            entries.push((format!("{}.kernel", spec.name), kernel));
            entries.push((format!("{}.bias", spec.name), bias));
        }
        let params = ModelParameters { entries };
        assert_eq!(params.parameter_count(), PARAMETER_COUNT);
        params
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in &mut self.entries {
            t.zero_grad();
        }
    }

    /// Insert every parameter as a graph leaf, in network order.
    pub fn bind(&self, graph: &mut Graph<T>) -> BoundParams {
        let pairs = self
            .entries
            .chunks_exact(2)
            .map(|pair| (graph.leaf(pair[0].1.clone()), graph.leaf(pair[1].1.clone())))
            .collect();
        BoundParams { pairs }
    }

    /// Accumulate `scale * grad` from bound graph leaves into the owned
    /// parameter tensors.
    pub fn accumulate_from(
        &mut self,
        graph: &Graph<T>,
        bound: &BoundParams,
        scale: T,
    ) -> TensorResult<()> {
        for (entry, (kernel_var, bias_var)) in
            self.entries.chunks_exact_mut(2).zip(&bound.pairs)
        {
            let [kernel_entry, bias_entry] = entry else {
                unreachable!("chunks_exact(2)");
            };
            for (tensor, var) in [(&mut kernel_entry.1, kernel_var), (&mut bias_entry.1, bias_var)]
            {
                let grad = graph.grad(*var).ok_or_else(|| {
                    TensorError::Contract("bound parameter has no gradient".into())
                })?;
                tensor.accumulate_grad(grad, scale)?;
            }
        }
        Ok(())
    }
}

/// Graph handles for one `bind` call: `(kernel, bias)` per layer, encoder
/// first, then fusion, then decoder.
pub struct BoundParams {
    pairs: Vec<(Var, Var)>,
}

impl BoundParams {
    fn layer(&self, index: usize) -> (Var, Var) {
        self.pairs[index]
    }
}

fn conv_block<T: Scalar>(
    graph: &mut Graph<T>,
    input: Var,
    spec: &ConvSpec,
    (kernel, bias): (Var, Var),
) -> TensorResult<Var> {
    let out = graph.conv2d(input, kernel, bias, spec.stride)?;
    Ok(match spec.activation {
        Activation::Relu => graph.relu(out),
        Activation::Tanh => graph.tanh_act(out),
    })
}

/// `[1,H,W] -> [256,H/8,W/8]`; H and W must be divisible by 8.
pub fn encoder_forward<T: Scalar>(
    graph: &mut Graph<T>,
    luminance: Var,
    params: &BoundParams,
) -> TensorResult<Var> {
    let (c, h, w) = graph.value(luminance).dims3()?;
    if c != 1 {
        return Err(TensorError::Shape(format!(
            "encoder expects a single luminance channel, got {}",
            c
        )));
    }
    if h % 8 != 0 || w % 8 != 0 {
        return Err(TensorError::Shape(format!(
            "encoder input dims must be divisible by 8, got {}x{}",
            h, w
        )));
    }
    let mut x = luminance;
    for (i, spec) in ENCODER_LAYERS.iter().enumerate() {
        x = conv_block(graph, x, spec, params.layer(i))?;
    }
    Ok(x)
}

/// The fusion volume before the 1x1 convolution: the embedding tiled over
/// `[h,w]` and attached after the encoder channels, `[1257,h,w]`.
pub fn fusion_stack<T: Scalar>(
    graph: &mut Graph<T>,
    encoded: Var,
    embedding: &Embedding,
) -> TensorResult<Var> {
    let (_, h, w) = graph.value(encoded).dims3()?;
    let values: Vec<T> = embedding
        .values()
        .iter()
        .map(|&v| T::from_real(v as f64))
        .collect();
    let emb = graph.leaf(Tensor::new(vec![EMBEDDING_DIM], values)?);
    let tiled = graph.tile_spatial(emb, h, w)?;
    graph.concat_depth(encoded, tiled)
}

/// Tile the embedding over `[h,w]`, concatenate with the encoder volume to
/// 1257 channels, then mix with the 1x1 convolution back to 256.
pub fn fusion_forward<T: Scalar>(
    graph: &mut Graph<T>,
    encoded: Var,
    embedding: &Embedding,
    params: &BoundParams,
) -> TensorResult<Var> {
    let stacked = fusion_stack(graph, encoded, embedding)?;
    debug_assert_eq!(graph.value(stacked).shape()[0], FUSION_DEPTH);
    conv_block(graph, stacked, &FUSION_LAYER, params.layer(8))
}

/// `[256,h,w] -> [2,8h,8w]` through three upsampling stages.
pub fn decoder_forward<T: Scalar>(
    graph: &mut Graph<T>,
    fused: Var,
    params: &BoundParams,
) -> TensorResult<Var> {
    let mut x = fused;
    for (i, spec) in DECODER_LAYERS.iter().enumerate() {
        x = conv_block(graph, x, spec, params.layer(9 + i))?;
        if UPSAMPLE_AFTER[i] {
            x = graph.upsample_nearest2x(x)?;
        }
    }
    Ok(x)
}

/// Full pass: `[1,H,W]` luminance plus embedding to `[2,H,W]` chroma.
pub fn model_forward<T: Scalar>(
    graph: &mut Graph<T>,
    luminance: Var,
    embedding: &Embedding,
    params: &BoundParams,
) -> TensorResult<Var> {
    let encoded = encoder_forward(graph, luminance, params)?;
    let fused = fusion_forward(graph, encoded, embedding, params)?;
    decoder_forward(graph, fused, params)
}

/// Predicted chroma planes, normalized to `(-1, 1)`: `[2, H, W]`.
pub struct NetworkOutput {
    pub ab: Tensor<f32>,
}

/// Forward-only convenience wrapper for inference.
pub fn predict(
    params: &ModelParameters<f32>,
    luminance: Tensor<f32>,
    embedding: &Embedding,
) -> TensorResult<NetworkOutput> {
    let mut graph = Graph::new();
    let bound = params.bind(&mut graph);
    let input = graph.leaf(luminance);
    let out = model_forward(&mut graph, input, embedding, &bound)?;
    Ok(NetworkOutput {
        ab: graph.value(out).clone(),
    })
}

fn expected_shape(name: &str) -> Option<Vec<usize>> {
    for spec in layer_specs() {
        if name == format!("{}.kernel", spec.name) {
            return Some(spec.kernel_shape());
        }
        if name == format!("{}.bias", spec.name) {
            return Some(spec.bias_shape());
        }
    }
    None
}

/// Bit-exact checkpoint writer: magic `KOAL`, version, tensor count, then
/// per tensor `name_len:u16 | name | ndim:u8 | dims:u32... | f32 payload`,
/// all integers and floats little-endian.
pub fn save_checkpoint(params: &ModelParameters<f32>, path: &Path) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    out.write_all(&CHECKPOINT_MAGIC).map_err(io_err)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())
        .map_err(io_err)?;
    out.write_all(&(params.entries.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for (name, tensor) in &params.entries {
        out.write_all(&(name.len() as u16).to_le_bytes())
            .map_err(io_err)?;
        out.write_all(name.as_bytes()).map_err(io_err)?;
        out.write_all(&[tensor.shape().len() as u8]).map_err(io_err)?;
        for &dim in tensor.shape() {
            out.write_all(&(dim as u32).to_le_bytes()).map_err(io_err)?;
        }
        for &v in tensor.data() {
            out.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParameters<f32>, CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let truncated = || CheckpointError::Truncated {
        path: path.to_path_buf(),
    };
    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);

    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(|_| truncated())?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut word = [0u8; 4];
    reader.read_exact(&mut word).map_err(|_| truncated())?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::BadVersion {
            path: path.to_path_buf(),
            got: version,
        });
    }
    reader.read_exact(&mut word).map_err(|_| truncated())?;
    let count = u32::from_le_bytes(word) as usize;

    let mut loaded: Vec<(String, Tensor<f32>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut half = [0u8; 2];
        reader.read_exact(&mut half).map_err(|_| truncated())?;
        let name_len = u16::from_le_bytes(half) as usize;
        let mut name_bytes = vec![0u8; name_len];
        reader.read_exact(&mut name_bytes).map_err(|_| truncated())?;
        let name = String::from_utf8(name_bytes).map_err(|_| CheckpointError::BadName {
            path: path.to_path_buf(),
        })?;

        let expected = expected_shape(&name).ok_or_else(|| CheckpointError::UnknownTensor {
            path: path.to_path_buf(),
            name: name.clone(),
        })?;
        if loaded.iter().any(|(n, _)| *n == name) {
            return Err(CheckpointError::DuplicateTensor {
                path: path.to_path_buf(),
                name,
            });
        }

        let mut ndim = [0u8; 1];
        reader.read_exact(&mut ndim).map_err(|_| truncated())?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            reader.read_exact(&mut word).map_err(|_| truncated())?;
            shape.push(u32::from_le_bytes(word) as usize);
        }
        if shape != expected {
            return Err(CheckpointError::ShapeMismatch {
                path: path.to_path_buf(),
                name,
                expected,
                got: shape,
            });
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            reader.read_exact(&mut word).map_err(|_| truncated())?;
            data.push(f32::from_le_bytes(word));
        }
        let tensor = Tensor::new(shape, data)
            .expect("shape validated")
            .with_requires_grad(true);
        loaded.push((name, tensor));
    }

    // Normalize to network order and require the full set.
    let mut entries = Vec::with_capacity(2 * layer_specs().count());
    for spec in layer_specs() {
        for suffix in ["kernel", "bias"] {
            let name = format!("{}.{}", spec.name, suffix);
            let position = loaded.iter().position(|(n, _)| *n == name).ok_or_else(|| {
                CheckpointError::MissingTensor {
                    path: path.to_path_buf(),
                    name: name.clone(),
                }
            })?;
            entries.push(loaded.swap_remove(position));
        }
    }
    Ok(ModelParameters { entries })
}
