//! Grayscale image colorization.
//!
//! An encoder-fusion-decoder convolutional network predicts the a*/b*
//! chroma planes of an image from its L* luminance plane, mixing in a
//! global 1001-dimensional semantic embedding at the bottleneck. Everything
//! runs on a small reverse-mode tensor engine built in this crate; no
//! external ML framework is involved.
//!
//! The crate ships a `recolor` binary with `train`, `colorize`, `eval`,
//! `export-inception-inputs` and `inspect-checkpoint` subcommands.

pub mod cli;
pub mod color;
pub mod embedding;
pub mod model;
pub mod tensor;
pub mod train;
