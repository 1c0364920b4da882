//! On-disk condition cache, `cond_<kind>/frame_%04d.png` next to the input
//! frames, reused across prompts.
//!
//! Cached maps are 8-bit, so [`Quantized`] always rounds its inner
//! extractor's output to the same levels. A run therefore sees identical
//! maps whether they were just computed or read back from the cache.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rave_core::conditioning::{ConditionExtractor, ConditionKind};
use rave_core::sampler::digest_frames;
use rave_core::video::{Frame, Video};
use rave_core::{Error as CoreError, Shape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{frame_to_image, image_to_frame, list_frames, write_frames};

pub const QUANTIZED_SUFFIX: &str = "+u8";
const INDEX: &str = "index.json";

pub fn cache_dir(base: &Path, kind: ConditionKind) -> PathBuf {
    base.join(format!("cond_{}", kind.as_str()))
}

/// Rounds `[0, 1]` map values to 255 levels.
fn quantize(map: &Tensor) -> Tensor {
    map.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CacheIndex {
    extractor: String,
    input_digest: String,
    frames: usize,
    channels: usize,
}

/// Wraps an extractor with 8-bit quantization and a per-frame memo.
pub struct Quantized<'a> {
    inner: &'a dyn ConditionExtractor,
    memo: HashMap<String, Tensor>,
}

impl<'a> Quantized<'a> {
    pub fn new(inner: &'a dyn ConditionExtractor) -> Self {
        Self {
            inner,
            memo: HashMap::new(),
        }
    }

    pub fn cached_frames(&self) -> usize {
        self.memo.len()
    }
}

impl ConditionExtractor for Quantized<'_> {
    fn kind(&self) -> ConditionKind {
        self.inner.kind()
    }

    fn id(&self) -> String {
        format!("{}{QUANTIZED_SUFFIX}", self.inner.id())
    }

    fn extract(&self, frame: &Frame) -> rave_core::Result<Tensor> {
        let key = digest_frames(std::slice::from_ref(frame));
        match self.memo.get(&key) {
            Some(map) => Ok(map.clone()),
            None => Ok(quantize(&self.inner.extract(frame)?)),
        }
    }
}

fn map_to_frame(map: &Tensor) -> Frame {
    // [0, 1] maps onto the [-1, 1] pixel range used for frame files
    map.map(|v| v * 2.0 - 1.0)
}

fn frame_to_map(frame: &Frame, channels: usize) -> Result<Tensor> {
    let shape = Shape::new(frame.height(), frame.width(), channels);
    Ok(Tensor::from_fn(shape, |y, x, c| {
        (frame.get(y, x, c) + 1.0) / 2.0
    }))
}

/// Cache outcome of [`load_or_extract`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheState {
    Hit,
    Written,
}

/// Fills `extractor`'s memo for `video`, reading `dir` when it holds maps
/// for exactly these frames and extractor, and writing it otherwise.
pub fn load_or_extract(
    video: &Video,
    extractor: &mut Quantized<'_>,
    dir: &Path,
) -> Result<CacheState> {
    let input_digest = digest_frames(video.frames());
    let keys: Vec<String> = video
        .frames()
        .iter()
        .map(|f| digest_frames(std::slice::from_ref(f)))
        .collect();
    let index_path = dir.join(INDEX);
    if let Ok(text) = fs::read_to_string(&index_path) {
        if let Ok(index) = serde_json::from_str::<CacheIndex>(&text) {
            if index.extractor == extractor.id()
                && index.input_digest == input_digest
                && index.frames == video.len()
            {
                let files = list_frames(dir)?;
                if files.len() == video.len() {
                    for (key, path) in keys.iter().zip(&files) {
                        let img = image::open(path).map_err(Error::image(path))?.to_rgb8();
                        let map = frame_to_map(&image_to_frame(&img), index.channels)?;
                        extractor.memo.insert(key.clone(), quantize(&map));
                    }
                    return Ok(CacheState::Hit);
                }
            }
        }
    }

    let mut maps = Vec::with_capacity(video.len());
    for (i, frame) in video.frames().iter().enumerate() {
        let map = extractor.extract(frame).map_err(|e| CoreError::Extractor {
            frame: i,
            message: e.to_string(),
        })?;
        maps.push(map);
    }
    let channels = maps[0].channels();
    let previews: Vec<Frame> = maps.iter().map(map_to_frame).collect();
    // reject before touching the disk so an unsupported map leaves no partial cache
    frame_to_image(&previews[0])?;
    write_frames(&previews, dir)?;
    let index = CacheIndex {
        extractor: extractor.id(),
        input_digest,
        frames: video.len(),
        channels,
    };
    let text = serde_json::to_string_pretty(&index).map_err(Error::json(&index_path))?;
    fs::write(&index_path, text).map_err(Error::io(&index_path))?;
    for (key, map) in keys.into_iter().zip(maps) {
        extractor.memo.insert(key, map);
    }
    Ok(CacheState::Written)
}
