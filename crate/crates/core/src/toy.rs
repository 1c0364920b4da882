//! Deterministic stand-ins for the model adapters, so the full pipeline runs
//! without downloading weights. Absolute outputs mean nothing; the point is
//! exercising the plumbing with known algebraic behaviour.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::conditioning::ConditionGrid;
use crate::diffusion::{NoisePredictor, TextEncoder};
use crate::error::{Error, Result};
use crate::metrics::EmbeddingProvider;
use crate::tensor::Tensor;
use crate::video::Frame;

/// Embedding width of the toy text and image embedders.
pub const TOY_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const HISTOGRAM_SEED: u64 = 0x5241_5645;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Unit-norm histogram of characters hashed into [`TOY_DIM`] buckets.
/// The empty string maps to the zero vector.
pub fn char_histogram(text: &str) -> Vec<f64> {
    let mut hist = vec![0.0; TOY_DIM];
    let mut buf = [0u8; 4];
    for ch in text.chars() {
        let bucket = fnv1a(HISTOGRAM_SEED, ch.encode_utf8(&mut buf).as_bytes()) % TOY_DIM as u64;
        hist[bucket as usize] += 1.0;
    }
    normalize(&mut hist);
    hist
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HashedTextEncoder;

impl TextEncoder for HashedTextEncoder {
    fn id(&self) -> String {
        "hashed-char-histogram".into()
    }

    fn encode(&self, prompt: &str) -> Result<Vec<f64>> {
        Ok(char_histogram(prompt))
    }
}

/// Predicts the same noise value everywhere.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConstantNoise {
    pub value: f64,
}

impl NoisePredictor for ConstantNoise {
    fn id(&self) -> String {
        format!("constant-noise:{}", self.value)
    }

    fn predict(
        &self,
        latent: &Tensor,
        _step: usize,
        _text: &[f64],
        _condition: Option<&ConditionGrid>,
    ) -> Result<Tensor> {
        Ok(Tensor::filled(latent.shape(), self.value))
    }
}

fn text_bias(text: &[f64]) -> f64 {
    if text.is_empty() {
        0.0
    } else {
        text.iter().sum::<f64>() / text.len() as f64
    }
}

fn condition_at(condition: Option<&ConditionGrid>, y: usize, x: usize) -> f64 {
    condition.map_or(0.0, |c| c.values.get(y, x, 0))
}

fn check_condition(latent: &Tensor, condition: Option<&ConditionGrid>) -> Result<()> {
    if let Some(c) = condition {
        if c.values.height() != latent.height() || c.values.width() != latent.width() {
            return Err(Error::Adapter(format!(
                "condition grid {} does not cover latent grid {}",
                c.values.shape(),
                latent.shape()
            )));
        }
    }
    Ok(())
}

/// Noise at each element depends only on that element's latent value, the
/// condition at the same pixel and the prompt, so frames never interact.
#[derive(Clone, Copy, Debug)]
pub struct SeparablePredictor {
    pub gain: f64,
    pub condition_gain: f64,
    pub text_gain: f64,
}

impl Default for SeparablePredictor {
    fn default() -> Self {
        Self {
            gain: 0.3,
            condition_gain: 0.2,
            text_gain: 0.5,
        }
    }
}

impl NoisePredictor for SeparablePredictor {
    fn id(&self) -> String {
        format!(
            "separable:{}:{}:{}",
            self.gain, self.condition_gain, self.text_gain
        )
    }

    fn predict(
        &self,
        latent: &Tensor,
        _step: usize,
        text: &[f64],
        condition: Option<&ConditionGrid>,
    ) -> Result<Tensor> {
        check_condition(latent, condition)?;
        let bias = self.text_gain * text_bias(text);
        Ok(Tensor::from_fn(latent.shape(), |y, x, c| {
            self.gain * libm::tanh(latent.get(y, x, c))
                + self.condition_gain * condition_at(condition, y, x)
                + bias
        }))
    }
}

/// `ε̂ = strength · (z − mean_c)`, with `mean_c` the per-channel mean over
/// the whole grid: every frame in a grid is pulled towards the same value.
#[derive(Clone, Copy, Debug)]
pub struct GridMeanCoupling {
    pub strength: f64,
}

impl Default for GridMeanCoupling {
    fn default() -> Self {
        Self { strength: 0.5 }
    }
}

impl NoisePredictor for GridMeanCoupling {
    fn id(&self) -> String {
        format!("grid-mean-coupling:{}", self.strength)
    }

    fn predict(
        &self,
        latent: &Tensor,
        _step: usize,
        _text: &[f64],
        _condition: Option<&ConditionGrid>,
    ) -> Result<Tensor> {
        let channels = latent.channels();
        // Summing in sorted order makes the mean independent of where each
        // frame sits in the grid, bit for bit.
        let mean: Vec<f64> = (0..channels)
            .map(|c| {
                let mut values: Vec<f64> = latent
                    .data()
                    .iter()
                    .skip(c)
                    .step_by(channels)
                    .copied()
                    .collect();
                values.sort_unstable_by(f64::total_cmp);
                values.iter().sum::<f64>() / values.len() as f64
            })
            .collect();
        Ok(Tensor::from_fn(latent.shape(), |y, x, c| {
            self.strength * (latent.get(y, x, c) - mean[c])
        }))
    }
}

/// Images: 8×8 average-pooled luminance (shifted to `[0, 1]`), unit-normed.
/// Text: [`char_histogram`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ToyEmbedder;

const POOL: usize = 8;

impl EmbeddingProvider for ToyEmbedder {
    fn id(&self) -> String {
        "toy-pooled-luminance".into()
    }

    fn embed_image(&self, frame: &Frame) -> Result<Vec<f64>> {
        let lum = frame.luminance();
        let (h, w) = (lum.height(), lum.width());
        let mut sums = vec![0.0; POOL * POOL];
        let mut counts = vec![0usize; POOL * POOL];
        for y in 0..h {
            for x in 0..w {
                let bin = (y * POOL / h) * POOL + x * POOL / w;
                sums[bin] += (lum.get(y, x, 0) + 1.0) / 2.0;
                counts[bin] += 1;
            }
        }
        let mut v: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect();
        if !normalize(&mut v) {
            // all-black frame: pick a fixed direction so the output stays unit norm
            v.iter_mut().for_each(|x| *x = 1.0 / POOL as f64);
        }
        Ok(v)
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::Invalid("cannot embed an empty prompt".into()));
        }
        Ok(char_histogram(text))
    }
}
