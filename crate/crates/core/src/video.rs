//! Frame sequences and the pixel ↔ latent codec boundary.
//!
//! Pixel values are normalized to `[-1, 1]`. Decoding images from disk and
//! resizing happen in the `rave` crate; this module only deals with frames
//! already in memory.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Latent, Shape, Tensor};

/// A single RGB frame, `H × W × C`, values in `[-1, 1]`.
pub type Frame = Tensor;

/// An ordered, non-empty list of equally sized frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    frames: Vec<Frame>,
    shape: Shape,
}

impl Video {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyVideo)?;
        let shape = first.shape();
        if shape.is_empty() {
            return Err(Error::Invalid(format!("frame shape {shape} is empty")));
        }
        for (index, frame) in frames.iter().enumerate() {
            if frame.shape() != shape {
                return Err(Error::InconsistentFrame {
                    index,
                    expected: shape,
                    actual: frame.shape(),
                });
            }
        }
        Ok(Self { frames, shape })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn frame(&self, index: usize) -> Option<&Frame> {
        self.frames.get(index)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false: a video holds at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }
}

/// Pixel-space to latent-space autoencoder.
pub trait LatentCodec {
    /// Stable identity string recorded in run manifests.
    fn id(&self) -> String;
    /// Spatial downscale factor between pixels and latents.
    fn scale_factor(&self) -> usize;
    fn latent_channels(&self) -> usize;
    fn encode_frame(&self, frame: &Frame) -> Result<Tensor>;
    fn decode_latent(&self, latent: &Tensor) -> Result<Frame>;
    /// Whether `encode_frame` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }

    fn latent_shape(&self, frame: Shape) -> Result<Shape> {
        let f = self.scale_factor();
        if f == 0 || !frame.width.is_multiple_of(f) || !frame.height.is_multiple_of(f) {
            return Err(Error::Indivisible {
                width: frame.width,
                height: frame.height,
                factor: f,
            });
        }
        Ok(Shape::new(
            frame.height / f,
            frame.width / f,
            self.latent_channels(),
        ))
    }
}

/// Per-frame latents keyed by original frame index.
///
/// Indices `0..original` are real frames; anything past that is padding
/// appended by [`LatentStore::pad_to`].
#[derive(Clone, Debug, PartialEq)]
pub struct LatentStore {
    latents: Vec<Latent>,
    original: usize,
}

impl LatentStore {
    pub fn new(latents: Vec<Latent>) -> Result<Self> {
        let first = latents.first().ok_or(Error::EmptyVideo)?;
        let shape = first.shape();
        for (index, l) in latents.iter().enumerate() {
            if l.shape() != shape {
                return Err(Error::InconsistentFrame {
                    index,
                    expected: shape,
                    actual: l.shape(),
                });
            }
        }
        let original = latents.len();
        Ok(Self { latents, original })
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        Self::new(tensors.into_iter().map(Latent::new).collect())
    }

    /// Number of real (unpadded) frames.
    pub fn original_len(&self) -> usize {
        self.original
    }

    /// Number of stored latents, padding included.
    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn latent_shape(&self) -> Shape {
        self.latents[0].shape()
    }

    pub fn get(&self, index: usize) -> Option<&Latent> {
        self.latents.get(index)
    }

    pub fn as_slice(&self) -> &[Latent] {
        &self.latents
    }

    pub fn as_mut_slice(&mut self) -> &mut [Latent] {
        &mut self.latents
    }

    pub fn iter(&self) -> impl Iterator<Item = &Latent> {
        self.latents.iter()
    }

    /// Appends copies of the last real frame until `padded` latents are held.
    pub fn pad_to(&mut self, padded: usize) {
        let last = self.original - 1;
        while self.latents.len() < padded {
            let copy = self.latents[last].clone();
            self.latents.push(copy);
        }
    }

    /// Drops padding, keeping the real frames in order.
    pub fn truncate_padding(&mut self) {
        self.latents.truncate(self.original);
    }

    pub fn into_latents(self) -> Vec<Latent> {
        self.latents
    }
}

/// Encodes every frame; fails before any work if the resolution is not
/// divisible by the codec's scale factor.
pub fn encode(video: &Video, codec: &dyn LatentCodec) -> Result<LatentStore> {
    let expected = codec.latent_shape(video.frame_shape())?;
    let mut latents = Vec::with_capacity(video.len());
    for frame in video.frames() {
        let latent = codec.encode_frame(frame)?;
        latent.ensure_shape(expected)?;
        latents.push(Latent::new(latent));
    }
    LatentStore::new(latents)
}

/// Decodes the real frames of `latents`, consuming them one at a time.
pub fn decode(latents: LatentStore, codec: &dyn LatentCodec) -> Result<Video> {
    let shape = latents.latent_shape();
    if shape.channels != codec.latent_channels() {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(shape.height, shape.width, codec.latent_channels()),
            actual: shape,
        });
    }
    let original = latents.original_len();
    let mut frames = Vec::with_capacity(original);
    for latent in latents.into_latents().into_iter().take(original) {
        frames.push(codec.decode_latent(latent.as_tensor())?);
    }
    Video::new(frames)
}

/// Latents are the pixels themselves (`f = 1`).
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityCodec;

impl LatentCodec for IdentityCodec {
    fn id(&self) -> String {
        "identity".into()
    }

    fn scale_factor(&self) -> usize {
        1
    }

    fn latent_channels(&self) -> usize {
        3
    }

    fn encode_frame(&self, frame: &Frame) -> Result<Tensor> {
        Ok(frame.clone())
    }

    fn decode_latent(&self, latent: &Tensor) -> Result<Frame> {
        Ok(latent.clone())
    }
}

/// Averages `f × f` pixel blocks on encode, nearest-neighbour upsampling on decode.
#[derive(Clone, Copy, Debug)]
pub struct BlockAverageCodec {
    factor: usize,
    channels: usize,
}

impl BlockAverageCodec {
    pub fn new(factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Invalid("block factor must be positive".into()));
        }
        Ok(Self {
            factor,
            channels: 3,
        })
    }
}

impl LatentCodec for BlockAverageCodec {
    fn id(&self) -> String {
        format!("block-average:{}", self.factor)
    }

    fn scale_factor(&self) -> usize {
        self.factor
    }

    fn latent_channels(&self) -> usize {
        self.channels
    }

    fn encode_frame(&self, frame: &Frame) -> Result<Tensor> {
        let shape = self.latent_shape(frame.shape())?;
        if frame.channels() != self.channels {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(frame.height(), frame.width(), self.channels),
                actual: frame.shape(),
            });
        }
        Ok(block_average(frame, self.factor, shape))
    }

    fn decode_latent(&self, latent: &Tensor) -> Result<Frame> {
        let f = self.factor;
        let shape = Shape::new(latent.height() * f, latent.width() * f, latent.channels());
        Ok(Tensor::from_fn(shape, |y, x, c| {
            latent.get(y / f, x / f, c)
        }))
    }
}

/// Integer-factor area average. `out` must be `in / factor` spatially.
pub(crate) fn block_average(input: &Tensor, factor: usize, out: Shape) -> Tensor {
    let area = (factor * factor) as f64;
    Tensor::from_fn(out, |y, x, c| {
        let mut acc = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                acc += input.get(y * factor + dy, x * factor + dx, c);
            }
        }
        acc / area
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ramp_video(k: usize, h: usize, w: usize) -> Video {
        let frames = (0..k)
            .map(|i| {
                Tensor::from_fn(Shape::new(h, w, 3), |y, x, c| {
                    let v = ((i * 31 + y * 7 + x * 3 + c) % 97) as f64 / 48.5 - 1.0;
                    v.clamp(-1.0, 1.0)
                })
            })
            .collect();
        Video::new(frames).unwrap()
    }

    #[test]
    fn empty_and_inconsistent_videos_are_rejected() {
        assert!(matches!(Video::new(vec![]), Err(Error::EmptyVideo)));
        let a = Tensor::zeros(Shape::new(4, 4, 3));
        let b = Tensor::zeros(Shape::new(4, 8, 3));
        assert!(matches!(
            Video::new(vec![a, b]),
            Err(Error::InconsistentFrame { index: 1, .. })
        ));
    }

    #[test]
    fn identity_round_trip_is_bit_exact() {
        let v = ramp_video(3, 8, 8);
        let store = encode(&v, &IdentityCodec).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.get(1).unwrap().as_tensor(), &v.frames()[1]);
        let back = decode(store, &IdentityCodec).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn block_average_shapes() {
        let v = ramp_video(1, 320, 512);
        let codec = BlockAverageCodec::new(8).unwrap();
        let store = encode(&v, &codec).unwrap();
        assert_eq!(store.latent_shape(), Shape::new(40, 64, 3));
    }

    #[test]
    fn indivisible_resolution_fails() {
        let v = ramp_video(1, 320, 512);
        let codec = BlockAverageCodec::new(5).unwrap();
        assert!(matches!(
            encode(&v, &codec),
            Err(Error::Indivisible { factor: 5, .. })
        ));
    }

    #[test]
    fn constant_image_survives_block_average() {
        let frame = Tensor::filled(Shape::new(16, 24, 3), 0.375);
        let v = Video::new(vec![frame]).unwrap();
        let codec = BlockAverageCodec::new(8).unwrap();
        let back = decode(encode(&v, &codec).unwrap(), &codec).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn block_average_is_lossy_on_texture() {
        let v = ramp_video(1, 16, 16);
        let codec = BlockAverageCodec::new(8).unwrap();
        let back = decode(encode(&v, &codec).unwrap(), &codec).unwrap();
        assert!(back.frames()[0].max_abs_diff(&v.frames()[0]).unwrap() > 0.0);
    }

    #[test]
    fn decode_rejects_channel_mismatch() {
        let store = LatentStore::from_tensors(vec![Tensor::zeros(Shape::new(2, 2, 4))]).unwrap();
        assert!(matches!(
            decode(store, &IdentityCodec),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn padding_replicates_last_frame_and_truncates() {
        let v = ramp_video(10, 4, 4);
        let mut store = encode(&v, &IdentityCodec).unwrap();
        store.pad_to(18);
        assert_eq!(store.len(), 18);
        assert_eq!(store.original_len(), 10);
        for i in 10..18 {
            assert_eq!(store.get(i).unwrap(), store.get(9).unwrap());
        }
        let back = decode(store, &IdentityCodec).unwrap();
        assert_eq!(back.len(), 10);
    }
}
