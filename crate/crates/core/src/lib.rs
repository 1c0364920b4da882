//! Grid-based noise-shuffling video editing over a pluggable diffusion backend.
//!
//! Frames are tiled into `n × m` latent grids so a text-to-image denoiser edits
//! several frames jointly. A fresh random frame-to-grid assignment is drawn at
//! every denoising step, which lets every frame interact with every other one
//! over the trajectory while only one grid is ever materialized at a time.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! image decoding live in the `rave` companion crate.
#![no_std]

extern crate alloc;

pub mod conditioning;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod sampler;
pub mod tensor;
pub mod toy;
pub mod video;

pub use error::{Error, Result};
pub use tensor::{Latent, Shape, Tensor};
