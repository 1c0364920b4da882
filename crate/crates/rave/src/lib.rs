//! Files and formats around `rave-core`: frame directories, the condition
//! cache, run and inversion manifests, dataset manifests and evaluation
//! reports. Container files (mp4 and friends) are handled by the `rave`
//! binary through an external `ffmpeg`; this library only sees frame
//! directories.

pub mod adapters;
pub mod cache;
pub mod dataset;
pub mod error;
pub mod frames;
pub mod latents;
pub mod report;
pub mod run;

pub use error::{Error, Result};
