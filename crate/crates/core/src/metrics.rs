//! Edit-quality metrics: CLIP-F, CLIP-T, WarpSSIM and `Q_edit`.
//!
//! Embeddings and optical flow come from providers, so the same code scores
//! with real CLIP/RAFT adapters or the deterministic toys. All reductions
//! sum in a fixed order and are bit-stable for fixed inputs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};
use crate::video::{Frame, Video};

pub trait EmbeddingProvider {
    fn id(&self) -> String;
    /// Unit-norm image embedding.
    fn embed_image(&self, frame: &Frame) -> Result<Vec<f64>>;
    /// Unit-norm text embedding.
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
}

/// Dense per-pixel displacement in pixels.
///
/// `flow(src, dst)` is defined on `src`'s pixel grid such that
/// `src(p) ≈ dst(p + flow(p))`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    /// `(dx, dy)` per pixel, row-major.
    vectors: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::uniform(height, width, 0.0, 0.0)
    }

    pub fn uniform(height: usize, width: usize, dx: f64, dy: f64) -> Self {
        Self {
            height,
            width,
            vectors: vec![[dx, dy]; height * width],
        }
    }

    pub fn from_vectors(height: usize, width: usize, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if vectors.len() != height * width {
            return Err(Error::Invalid(format!(
                "{} flow vectors for a {height}x{width} field",
                vectors.len()
            )));
        }
        Ok(Self {
            height,
            width,
            vectors,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> [f64; 2] {
        self.vectors[y * self.width + x]
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }
}

pub trait FlowProvider {
    fn id(&self) -> String;
    fn flow(&self, src: &Frame, dst: &Frame) -> Result<FlowField>;
}

/// Every pixel stays put.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroFlow;

impl FlowProvider for ZeroFlow {
    fn id(&self) -> String {
        "zero".into()
    }

    fn flow(&self, src: &Frame, _dst: &Frame) -> Result<FlowField> {
        Ok(FlowField::zeros(src.height(), src.width()))
    }
}

/// A known global translation, for synthetic videos.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConstantFlow {
    pub dx: f64,
    pub dy: f64,
}

impl FlowProvider for ConstantFlow {
    fn id(&self) -> String {
        format!("constant:{}:{}", self.dx, self.dy)
    }

    fn flow(&self, src: &Frame, _dst: &Frame) -> Result<FlowField> {
        Ok(FlowField::uniform(
            src.height(),
            src.width(),
            self.dx,
            self.dy,
        ))
    }
}

/// Single-scale dense Lucas–Kanade on luminance.
///
/// A classical baseline so evaluation runs without a learned flow model;
/// only reliable for small motions (a few pixels).
#[derive(Clone, Copy, Debug)]
pub struct LucasKanadeFlow {
    pub radius: usize,
    pub iterations: usize,
}

impl Default for LucasKanadeFlow {
    fn default() -> Self {
        Self {
            radius: 3,
            iterations: 5,
        }
    }
}

impl FlowProvider for LucasKanadeFlow {
    fn id(&self) -> String {
        format!("lucas-kanade:{}:{}", self.radius, self.iterations)
    }

    fn flow(&self, src: &Frame, dst: &Frame) -> Result<FlowField> {
        src.ensure_shape(dst.shape())?;
        let a = src.luminance();
        let b = dst.luminance();
        let (h, w) = (a.height(), a.width());
        let at = |t: &Tensor, y: isize, x: isize| {
            t.get(
                y.clamp(0, h as isize - 1) as usize,
                x.clamp(0, w as isize - 1) as usize,
                0,
            )
        };
        let mut gx = vec![0.0; h * w];
        let mut gy = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (yi, xi) = (y as isize, x as isize);
                gx[y * w + x] = (at(&a, yi, xi + 1) - at(&a, yi, xi - 1)) / 2.0;
                gy[y * w + x] = (at(&a, yi + 1, xi) - at(&a, yi - 1, xi)) / 2.0;
            }
        }

        let mut field = FlowField::zeros(h, w);
        let r = self.radius as isize;
        for _ in 0..self.iterations {
            let warped = warp(&b, &field)?;
            let mut update = field.vectors.clone();
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for wy in (y - r).max(0)..(y + r + 1).min(h as isize) {
                        for wx in (x - r).max(0)..(x + r + 1).min(w as isize) {
                            let i = wy as usize * w + wx as usize;
                            let it = warped.get(wy as usize, wx as usize, 0)
                                - a.get(wy as usize, wx as usize, 0);
                            sxx += gx[i] * gx[i];
                            sxy += gx[i] * gy[i];
                            syy += gy[i] * gy[i];
                            sxt += gx[i] * it;
                            syt += gy[i] * it;
                        }
                    }
                    let det = sxx * syy - sxy * sxy;
                    if det.abs() > 1e-9 {
                        let dx = (-syy * sxt + sxy * syt) / det;
                        let dy = (sxy * sxt - sxx * syt) / det;
                        let v = &mut update[y as usize * w + x as usize];
                        v[0] += dx;
                        v[1] += dy;
                    }
                }
            }
            field.vectors = update;
        }
        Ok(field)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Invalid(format!(
            "cannot compare embeddings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Invalid("zero-norm embedding".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

fn embed_all(frames: &[Frame], emb: &dyn EmbeddingProvider) -> Result<Vec<Vec<f64>>> {
    frames.iter().map(|f| emb.embed_image(f)).collect()
}

fn pairwise(embeddings: &[Vec<f64>]) -> Result<Vec<PairScore>> {
    let mut pairs = Vec::with_capacity(embeddings.len() * embeddings.len().saturating_sub(1) / 2);
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            pairs.push(PairScore {
                i,
                j,
                score: cosine(&embeddings[i], &embeddings[j])?,
            });
        }
    }
    Ok(pairs)
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    values.sum::<f64>() / n as f64
}

/// Mean cosine similarity over all unordered frame pairs.
pub fn clip_f(frames: &[Frame], emb: &dyn EmbeddingProvider) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::Invalid("CLIP-F needs at least two frames".into()));
    }
    let pairs = pairwise(&embed_all(frames, emb)?)?;
    Ok(mean(pairs.iter().map(|p| p.score)))
}

/// Mean cosine similarity between the prompt and every frame.
pub fn clip_t(prompt: &str, frames: &[Frame], emb: &dyn EmbeddingProvider) -> Result<f64> {
    Ok(mean(clip_t_frames(prompt, frames, emb)?.into_iter()))
}

fn clip_t_frames(prompt: &str, frames: &[Frame], emb: &dyn EmbeddingProvider) -> Result<Vec<f64>> {
    if prompt.is_empty() {
        return Err(Error::Invalid("CLIP-T needs a non-empty prompt".into()));
    }
    if frames.is_empty() {
        return Err(Error::EmptyVideo);
    }
    let text = emb.embed_text(prompt)?;
    frames
        .iter()
        .map(|f| cosine(&text, &emb.embed_image(f)?))
        .collect()
}

/// Window and constants for [`ssim_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    /// Dynamic range of the pixel values.
    pub range: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            range: 2.0,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            libm::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur; weights falling outside the image are dropped
/// and the rest renormalized.
fn blur(values: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (k, &wt) in kernel.iter().enumerate() {
                    let off = k as isize - r;
                    let (sy, sx) = if along_x { (y, x + off) } else { (y + off, x) };
                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                        continue;
                    }
                    acc += wt * src[sy as usize * w + sx as usize];
                    norm += wt;
                }
                out[y as usize * w + x as usize] = acc / norm;
            }
        }
        out
    };
    pass(&pass(values, true), false)
}

/// Mean SSIM over the luminance (channel mean) of two frames.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

pub fn ssim_with(a: &Frame, b: &Frame, params: &SsimParams) -> Result<f64> {
    b.ensure_shape(a.shape())?;
    let (h, w) = (a.height(), a.width());
    let la = a.luminance().into_data();
    let lb = b.luminance().into_data();
    let kernel = gaussian_kernel(params.window, params.sigma);
    let c1 = (params.k1 * params.range) * (params.k1 * params.range);
    let c2 = (params.k2 * params.range) * (params.k2 * params.range);

    let product =
        |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = blur(&la, h, w, &kernel);
    let mu_b = blur(&lb, h, w, &kernel);
    let e_aa = blur(&product(&la, &la), h, w, &kernel);
    let e_bb = blur(&product(&lb, &lb), h, w, &kernel);
    let e_ab = blur(&product(&la, &lb), h, w, &kernel);

    let mut total = 0.0;
    for i in 0..h * w {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    Ok(total / (h * w) as f64)
}

/// Backward warp: `out(p) = frame(p + flow(p))`, bilinear, edge-replicated.
pub fn warp(frame: &Frame, flow: &FlowField) -> Result<Frame> {
    let (h, w, ch) = (frame.height(), frame.width(), frame.channels());
    if flow.height != h || flow.width != w {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(h, w, 2),
            actual: Shape::new(flow.height, flow.width, 2),
        });
    }
    let mut out = Tensor::zeros(frame.shape());
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let [dx, dy] = flow.at(y, x);
            let sx = (x as f64 + dx).clamp(0.0, max_x);
            let sy = (y as f64 + dy).clamp(0.0, max_y);
            let (x0, y0) = (libm::floor(sx) as usize, libm::floor(sy) as usize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            if fx == 0.0 && fy == 0.0 {
                for c in 0..ch {
                    out.set(y, x, c, frame.get(y0, x0, c));
                }
                continue;
            }
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            for c in 0..ch {
                let top = (1.0 - fx) * frame.get(y0, x0, c) + fx * frame.get(y0, x1, c);
                let bottom = (1.0 - fx) * frame.get(y1, x0, c) + fx * frame.get(y1, x1, c);
                out.set(y, x, c, (1.0 - fy) * top + fy * bottom);
            }
        }
    }
    Ok(out)
}

fn warp_ssim_pairs(edited: &Video, source: &Video, flow: &dyn FlowProvider) -> Result<Vec<f64>> {
    if edited.len() != source.len() {
        return Err(Error::Invalid(format!(
            "edited video has {} frames, source has {}",
            edited.len(),
            source.len()
        )));
    }
    if edited.frame_shape() != source.frame_shape() {
        return Err(Error::ShapeMismatch {
            expected: source.frame_shape(),
            actual: edited.frame_shape(),
        });
    }
    if edited.len() < 2 {
        return Err(Error::Invalid("WarpSSIM needs at least two frames".into()));
    }
    let (src, out) = (source.frames(), edited.frames());
    (0..src.len() - 1)
        .map(|i| {
            let field = flow.flow(&src[i], &src[i + 1])?;
            ssim(&warp(&out[i + 1], &field)?, &out[i])
        })
        .collect()
}

/// Mean SSIM between each edited frame and its successor warped back onto
/// it with the source video's flow.
pub fn warp_ssim(edited: &Video, source: &Video, flow: &dyn FlowProvider) -> Result<f64> {
    Ok(mean(warp_ssim_pairs(edited, source, flow)?.into_iter()))
}

pub fn q_edit(warp_ssim: f64, clip_t: f64) -> f64 {
    warp_ssim * clip_t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsBreakdown {
    pub clip_f_pairs: Vec<PairScore>,
    pub clip_t_frames: Vec<f64>,
    pub warp_ssim_pairs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub clip_f: f64,
    pub clip_t: f64,
    pub warp_ssim: f64,
    pub q_edit: f64,
    pub breakdown: MetricsBreakdown,
}

/// Metric values scaled by 100, in CLIP-F, WarpSSIM, CLIP-T, `Q_edit` order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub clip_f: f64,
    pub warp_ssim: f64,
    pub clip_t: f64,
    pub q_edit: f64,
}

impl MetricsReport {
    pub fn table_row(&self) -> TableRow {
        TableRow {
            clip_f: self.clip_f * 100.0,
            warp_ssim: self.warp_ssim * 100.0,
            clip_t: self.clip_t * 100.0,
            q_edit: self.q_edit * 100.0,
        }
    }
}

pub fn evaluate(
    source: &Video,
    edited: &Video,
    prompt: &str,
    emb: &dyn EmbeddingProvider,
    flow: &dyn FlowProvider,
) -> Result<MetricsReport> {
    let frames = edited.frames();
    if frames.len() < 2 {
        return Err(Error::Invalid(
            "evaluation needs at least two frames".into(),
        ));
    }
    let clip_f_pairs = pairwise(&embed_all(frames, emb)?)?;
    let clip_t_frames = clip_t_frames(prompt, frames, emb)?;
    let warp_ssim_pairs = warp_ssim_pairs(edited, source, flow)?;

    let clip_f = mean(clip_f_pairs.iter().map(|p| p.score));
    let clip_t = mean(clip_t_frames.iter().copied());
    let warp_ssim = mean(warp_ssim_pairs.iter().copied());
    Ok(MetricsReport {
        clip_f,
        clip_t,
        warp_ssim,
        q_edit: q_edit(warp_ssim, clip_t),
        breakdown: MetricsBreakdown {
            clip_f_pairs,
            clip_t_frames,
            warp_ssim_pairs,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_frame(seed: u64, h: usize, w: usize) -> Tensor {
        let mut s = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        Tensor::from_fn(Shape::new(h, w, 3), |_, _, _| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn ssim_of_identical_frames_is_exactly_one() {
        for seed in 0..4 {
            let a = noise_frame(seed, 13, 17);
            assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = noise_frame(1, 20, 20);
        let b = noise_frame(2, 20, 20);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 0.5);
    }

    #[test]
    fn ssim_on_constant_frames_reduces_to_luminance_term() {
        let a = Tensor::filled(Shape::new(16, 16, 3), -0.5);
        let b = Tensor::filled(Shape::new(16, 16, 3), 0.5);
        let c1 = (0.01f64 * 2.0).powi(2);
        let (m1, m2) = (-0.5f64, 0.5f64);
        let expected = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_shape_mismatch() {
        let a = Tensor::zeros(Shape::new(4, 4, 3));
        let b = Tensor::zeros(Shape::new(4, 5, 3));
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn zero_flow_warp_is_bit_exact() {
        let mut a = noise_frame(3, 9, 11);
        a.set(0, 0, 0, -0.0);
        let out = warp(&a, &FlowField::zeros(9, 11)).unwrap();
        assert!(out
            .data()
            .iter()
            .zip(a.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn integer_flow_shifts_with_replicated_border() {
        let a = Tensor::from_fn(Shape::new(2, 7, 1), |y, x, _| (10 * y + x) as f64);
        let out = warp(&a, &FlowField::uniform(2, 7, 3.0, 0.0)).unwrap();
        for y in 0..2 {
            for x in 0..7 {
                let src = (x + 3).min(6);
                assert_eq!(out.get(y, x, 0), a.get(y, src, 0));
            }
        }
    }

    #[test]
    fn half_pixel_flow_on_a_ramp_is_exact_inside() {
        let a = Tensor::from_fn(Shape::new(3, 8, 1), |_, x, _| 0.25 * x as f64 - 0.8);
        let out = warp(&a, &FlowField::uniform(3, 8, 0.5, 0.0)).unwrap();
        for y in 0..3 {
            for x in 0..7 {
                let expected = 0.25 * (x as f64 + 0.5) - 0.8;
                assert!((out.get(y, x, 0) - expected).abs() < 1e-15);
            }
            assert_eq!(out.get(y, 7, 0), a.get(y, 7, 0));
        }
    }

    #[test]
    fn warp_rejects_mismatched_flow() {
        let a = Tensor::zeros(Shape::new(4, 4, 3));
        assert!(warp(&a, &FlowField::zeros(4, 5)).is_err());
    }

    #[test]
    fn lucas_kanade_recovers_small_translation() {
        let blob = |cx: f64, cy: f64| {
            Tensor::from_fn(Shape::new(32, 32, 3), move |y, x, _| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                2.0 * libm::exp(-(dx * dx + dy * dy) / 18.0) - 1.0
            })
        };
        let src = blob(15.0, 16.0);
        let dst = blob(16.0, 16.5);
        let field = LucasKanadeFlow::default().flow(&src, &dst).unwrap();
        let [dx, dy] = field.at(16, 13);
        assert!((dx - 1.0).abs() < 0.1, "dx = {dx}");
        assert!((dy - 0.5).abs() < 0.1, "dy = {dy}");
    }

    #[test]
    fn q_edit_is_the_product() {
        assert_eq!(q_edit(0.0, 0.3), 0.0);
        assert_eq!(q_edit(0.7, 0.0), 0.0);
        assert!((q_edit(0.7144, 0.2951) - 0.21081944).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_bad_inputs() {
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }
}
