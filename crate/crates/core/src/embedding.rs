//! Global semantic embeddings for the fusion layer.
//!
//! Real embeddings come from an external Inception-ResNet-v2 run and are
//! ingested as KEMB files; a deterministic stub derived from coarse image
//! statistics stands in when no file is available. The expected extractor
//! input (299x299 stacked luminance) can be exported for offline use.

use crate::color::{self, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

/// Length of the feature vector produced by the external extractor.
pub const EMBEDDING_DIM: usize = 1001;

/// Side length of the extractor's expected input image.
pub const EXTRACTOR_SIDE: usize = 299;

const KEMB_MAGIC: [u8; 4] = *b"KEMB";
const KEMB_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic, not a KEMB file")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported KEMB version {got}")]
    BadVersion { path: PathBuf, got: u32 },
    #[error("{path}: wrong dimension {got}, expected {EMBEDDING_DIM}")]
    WrongDimension { path: PathBuf, got: u32 },
    #[error("{path}: truncated payload")]
    Truncated { path: PathBuf },
    #[error("embedding must have {EMBEDDING_DIM} values, got {got}")]
    WrongLength { got: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("image error: {0}")]
    Color(#[from] color::ColorError),
}

/// A 1001-element feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.len() != EMBEDDING_DIM {
            return Err(EmbeddingError::WrongLength { got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Embedding { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Yields the embedding for an image, given its path and normalized
/// luminance plane. Implementations must be deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn embedding(
        &self,
        image: &Path,
        l_norm: &[f32],
        height: usize,
        width: usize,
    ) -> Result<Embedding, EmbeddingError>;
}

/// 64-bit FNV-1a; stable across platforms and toolchains.
fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Deterministic pseudo-embedding: mean and variance over an 8x8 grid of
/// the luminance plane are hashed into a seed, which drives a generator of
/// values in `[-1, 1]`.
pub fn stub_embedding(l_norm: &[f32], height: usize, width: usize) -> Embedding {
    assert_eq!(l_norm.len(), height * width, "plane size mismatch");
    let mut stats = Vec::with_capacity(128);
    for gy in 0..8 {
        for gx in 0..8 {
            let y0 = gy * height / 8;
            let y1 = (gy + 1) * height / 8;
            let x0 = gx * width / 8;
            let x1 = (gx + 1) * width / 8;
            let mut sum = 0.0f64;
            let mut sum_sq = 0.0f64;
            let mut count = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    let v = l_norm[y * width + x] as f64;
                    sum += v;
                    sum_sq += v * v;
                    count += 1;
                }
            }
            let (mean, var) = if count == 0 {
                (0.0, 0.0)
            } else {
                let mean = sum / count as f64;
                (mean, (sum_sq / count as f64 - mean * mean).max(0.0))
            };
            stats.push(mean as f32);
            stats.push(var as f32);
        }
    }
    let seed = fnv1a(stats.iter().flat_map(|v| v.to_bits().to_le_bytes()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..EMBEDDING_DIM)
        .map(|_| rng.gen_range(-1.0f32..=1.0))
        .collect();
    Embedding { values }
}

/// Always answers with the luminance-statistics stub.
pub struct StubProvider;

impl EmbeddingProvider for StubProvider {
    fn embedding(
        &self,
        _image: &Path,
        l_norm: &[f32],
        height: usize,
        width: usize,
    ) -> Result<Embedding, EmbeddingError> {
        Ok(stub_embedding(l_norm, height, width))
    }
}

/// Serves precomputed KEMB files where the manifest lists one, falling back
/// to the stub otherwise. Loaded files are cached; embeddings of a fixed
/// image never change, so the cache is exact.
pub struct FileOrStubProvider {
    files: HashMap<PathBuf, PathBuf>,
    cache: Mutex<HashMap<PathBuf, Embedding>>,
}

impl FileOrStubProvider {
    pub fn new(files: HashMap<PathBuf, PathBuf>) -> Self {
        FileOrStubProvider {
            files,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl EmbeddingProvider for FileOrStubProvider {
    fn embedding(
        &self,
        image: &Path,
        l_norm: &[f32],
        height: usize,
        width: usize,
    ) -> Result<Embedding, EmbeddingError> {
        let Some(file) = self.files.get(image) else {
            return Ok(stub_embedding(l_norm, height, width));
        };
        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(hit) = cache.get(image) {
            return Ok(hit.clone());
        }
        let loaded = load_embedding(file)?;
        cache.insert(image.to_path_buf(), loaded.clone());
        Ok(loaded)
    }
}

/// Write the KEMB format: magic, version, dimension, little-endian f32s.
pub fn save_embedding(embedding: &Embedding, path: &Path) -> Result<(), EmbeddingError> {
    let io_err = |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    out.write_all(&KEMB_MAGIC).map_err(io_err)?;
    out.write_all(&KEMB_VERSION.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(EMBEDDING_DIM as u32).to_le_bytes())
        .map_err(io_err)?;
    for v in &embedding.values {
        out.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_embedding(path: &Path) -> Result<Embedding, EmbeddingError> {
    let io_err = |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);

    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(io_err)?;
    if magic != KEMB_MAGIC {
        return Err(EmbeddingError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut word = [0u8; 4];
    reader.read_exact(&mut word).map_err(io_err)?;
    let version = u32::from_le_bytes(word);
    if version != KEMB_VERSION {
        return Err(EmbeddingError::BadVersion {
            path: path.to_path_buf(),
            got: version,
        });
    }
    reader.read_exact(&mut word).map_err(io_err)?;
    let dim = u32::from_le_bytes(word);
    if dim as usize != EMBEDDING_DIM {
        return Err(EmbeddingError::WrongDimension {
            path: path.to_path_buf(),
            got: dim,
        });
    }
    let mut values = Vec::with_capacity(EMBEDDING_DIM);
    for _ in 0..EMBEDDING_DIM {
        if reader.read_exact(&mut word).is_err() {
            return Err(EmbeddingError::Truncated {
                path: path.to_path_buf(),
            });
        }
        values.push(f32::from_le_bytes(word));
    }
    Embedding::new(values)
}

/// Write the 299x299 three-channel PNG the external extractor expects: the
/// image resized onto a white square, reduced to luminance, stacked into
/// three identical channels (pixel value = L* scaled to 0..255).
pub fn export_extractor_input(img: &RgbImage, path: &Path) -> Result<(), EmbeddingError> {
    let resized = color::resize_with_padding(img, EXTRACTOR_SIDE)?;
    let lab = color::srgb_to_lab(&resized);
    let mut pixels = Vec::with_capacity(EXTRACTOR_SIDE * EXTRACTOR_SIDE * 3);
    for &lv in &lab.l {
        let v = (lv * (255.0 / 100.0)).round().clamp(0.0, 255.0) as u8;
        pixels.extend_from_slice(&[v, v, v]);
    }
    let out = RgbImage::new(EXTRACTOR_SIDE, EXTRACTOR_SIDE, pixels)?;
    color::save_png(&out, path)?;
    Ok(())
}
