//! The end-to-end edit: DDIM-invert the source video in sequential grids,
//! denoise with a fresh frame shuffle at every step, then decode.
//!
//! Latents live per frame, keyed by original index, between steps. A grid is
//! materialized only for the predictor calls on it and written straight back
//! into the per-frame store afterwards. Resident latent state therefore
//! stays at `K' + 3N` frame latents (store, grid, two noise predictions)
//! whatever the video length or step count.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditioning::{
    cell_conditions, condition_grid, extract_conditions, ConditionExtractor, ConditionKind,
    ConditionMap,
};
use crate::diffusion::{
    denoise_in_place, guide_in_place, invert_in_place, DiffusionSchedule, NoisePredictor,
    ScheduleConfig, Spacing, StepId, TextEncoder,
};
use crate::error::{Error, Mismatch, Result};
use crate::grid::{
    assemble_grid, plan_padding, read_cell_into, sample_permutation, GridLayout, Permutation,
    PermutationRng,
};
use crate::tensor::{Latent, Shape, Tensor};
use crate::video::{decode, encode, LatentCodec, LatentStore, Video};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditConfig {
    pub rows: usize,
    pub cols: usize,
    pub steps: usize,
    pub guidance: f64,
    pub shuffle: bool,
    #[serde(default)]
    pub shuffle_inversion: bool,
    pub seed: u64,
    pub prompt: String,
    #[serde(default)]
    pub inversion_prompt: String,
    pub condition: ConditionKind,
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(default)]
    pub spacing: Spacing,
}

impl EditConfig {
    /// Defaults: 50 steps, guidance 7.5, shuffling on, grid picked by
    /// [`EditConfig::default_grid`].
    pub fn new(prompt: impl Into<String>, frames: usize) -> Self {
        let (rows, cols) = Self::default_grid(frames);
        let schedule = ScheduleConfig::default();
        Self {
            rows,
            cols,
            steps: schedule.steps,
            guidance: 7.5,
            shuffle: true,
            shuffle_inversion: false,
            seed: 0,
            prompt: prompt.into(),
            inversion_prompt: String::new(),
            condition: ConditionKind::ToyEdge,
            train_steps: schedule.train_steps,
            beta_start: schedule.beta_start,
            beta_end: schedule.beta_end,
            spacing: schedule.spacing,
        }
    }

    /// 2×2 for 8-frame clips, 3×3 otherwise.
    pub fn default_grid(frames: usize) -> (usize, usize) {
        if frames == 8 {
            (2, 2)
        } else {
            (3, 3)
        }
    }

    pub fn schedule_config(&self) -> ScheduleConfig {
        ScheduleConfig {
            train_steps: self.train_steps,
            steps: self.steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            spacing: self.spacing,
        }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Invalid("steps must be at least 1".into()));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Layout(format!(
                "{}x{} grid has no cells",
                self.rows, self.cols
            )));
        }
        if !self.guidance.is_finite() || self.guidance < 0.0 {
            return Err(Error::Invalid(format!(
                "guidance scale {} must be finite and non-negative",
                self.guidance
            )));
        }
        Ok(())
    }
}

/// The model-side plug-ins of one run.
#[derive(Clone, Copy)]
pub struct Adapters<'a> {
    pub codec: &'a dyn LatentCodec,
    pub predictor: &'a dyn NoisePredictor,
    pub extractor: &'a dyn ConditionExtractor,
    pub text: &'a dyn TextEncoder,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterIds {
    pub codec: String,
    pub predictor: String,
    pub extractor: String,
    pub text_encoder: String,
}

impl Adapters<'_> {
    pub fn ids(&self) -> AdapterIds {
        AdapterIds {
            codec: self.codec.id(),
            predictor: self.predictor.id(),
            extractor: self.extractor.id(),
            text_encoder: self.text.id(),
        }
    }
}

/// Wall-clock source for phase timings, in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Reports zero for every phase.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub preprocess: f64,
    pub inversion: f64,
    pub sampling: f64,
    pub decode: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.preprocess + self.inversion + self.sampling + self.decode
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub config: EditConfig,
    /// Digest of the config's canonical form.
    pub config_digest: String,
    pub adapters: AdapterIds,
    pub frames: usize,
    pub padded_frames: usize,
    pub width: usize,
    pub height: usize,
    pub input_digest: String,
    pub output_digest: String,
    #[serde(default)]
    pub inversion_permutations: Vec<Permutation>,
    pub permutations: Vec<Permutation>,
    pub timings: PhaseTimings,
    #[serde(default)]
    pub artifacts: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// SHA-256 over the frame shape and the exact bits of every value.
pub fn digest_frames<T: AsRef<Tensor>>(frames: &[T]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((frames.len() as u64).to_le_bytes());
    for frame in frames {
        let t = frame.as_ref();
        let s = t.shape();
        for d in [s.height, s.width, s.channels] {
            hasher.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&hasher.finalize())
}

pub fn digest_config(config: &EditConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("{config:?}").as_bytes());
    hex(&hasher.finalize())
}

/// Where each step's frame order comes from.
pub enum FrameOrder<'a> {
    Sequential,
    Shuffled(&'a mut PermutationRng),
}

impl FrameOrder<'_> {
    fn draw(&mut self, padded: usize, timestep: usize, seed: u64) -> Permutation {
        match self {
            FrameOrder::Sequential => Permutation::identity(padded, timestep, seed),
            FrameOrder::Shuffled(rng) => sample_permutation(rng, padded, timestep),
        }
    }
}

/// How the two prompt branches feed the update.
enum Branches<'a> {
    /// A single predictor call, i.e. guidance scale fixed at 1.
    Single(&'a [f64]),
    Guided {
        uncond: &'a [f64],
        cond: &'a [f64],
        scale: f64,
    },
}

/// Everything needed to run one grid pass over the per-frame store.
struct GridPass<'a> {
    layout: GridLayout,
    predictor: &'a dyn NoisePredictor,
    conditions: &'a [Tensor],
    kind: ConditionKind,
    frame: Shape,
}

impl GridPass<'_> {
    fn predict(
        &self,
        grid: &Latent,
        indices: &[usize],
        step: usize,
        text: &[f64],
    ) -> Result<Latent> {
        let cond = condition_grid(
            self.conditions,
            &self.layout,
            indices,
            self.kind,
            self.frame,
        )?;
        let eps = self
            .predictor
            .predict(grid.as_tensor(), step, text, Some(&cond))
            .map_err(|e| Error::Predictor {
                step,
                message: e.to_string(),
            })?;
        if eps.shape() != grid.shape() {
            return Err(Error::Predictor {
                step,
                message: format!(
                    "predicted noise has shape {}, expected {}",
                    eps.shape(),
                    grid.shape()
                ),
            });
        }
        Ok(Latent::new(eps))
    }

    /// Runs `update(grid, eps)` on every grid of `order` and writes the cells
    /// back to the frames they came from.
    fn run(
        &self,
        store: &mut [Latent],
        order: &[usize],
        step: usize,
        branches: &Branches<'_>,
        update: impl Fn(&mut [f64], &[f64]),
    ) -> Result<()> {
        for indices in order.chunks(self.layout.cells()) {
            let mut grid = Latent::new(assemble_grid(store, &self.layout, indices)?);
            let eps = match *branches {
                Branches::Single(text) => self.predict(&grid, indices, step, text)?,
                Branches::Guided {
                    uncond,
                    cond,
                    scale,
                } => {
                    let eps_u = self.predict(&grid, indices, step, uncond)?;
                    let mut eps_c = self.predict(&grid, indices, step, cond)?;
                    guide_in_place(eps_c.data_mut(), eps_u.data(), scale);
                    eps_c
                }
            };
            update(grid.data_mut(), eps.data());
            drop(eps);
            for (j, &frame) in indices.iter().enumerate() {
                read_cell_into(grid.as_tensor(), &self.layout, j, store[frame].data_mut());
            }
        }
        Ok(())
    }
}

fn layout_for(config: &EditConfig, latent: Shape) -> Result<GridLayout> {
    GridLayout::new(config.rows, config.cols, latent.height, latent.width)
}

fn invert_store(
    pass: &GridPass<'_>,
    store: &mut LatentStore,
    schedule: &DiffusionSchedule,
    text: &[f64],
    order: &mut FrameOrder<'_>,
    seed: u64,
) -> Result<Vec<Permutation>> {
    let padded = store.len();
    let mut drawn = Vec::new();
    for (from, to) in schedule.inversion_pairs() {
        let StepId::Noisy(t) = to else { unreachable!() };
        let (a_from, a_to) = (schedule.alpha_bar(from)?, schedule.alpha_bar(to)?);
        let perm = order.draw(padded, t, seed);
        pass.run(
            store.as_mut_slice(),
            &perm.forward,
            t,
            &Branches::Single(text),
            |z, eps| invert_in_place(z, eps, a_from, a_to),
        )?;
        if matches!(order, FrameOrder::Shuffled(_)) {
            drawn.push(perm);
        }
    }
    Ok(drawn)
}

/// Result of [`invert_video`].
#[derive(Debug)]
pub struct Inversion {
    /// Noisy latents at the schedule's terminal step, padding included.
    pub latents: LatentStore,
    /// Orders drawn when inversion shuffles; empty otherwise.
    pub permutations: Vec<Permutation>,
}

/// DDIM-inverts `latents` up to the schedule's terminal timestep with a
/// single prompt branch (guidance scale 1).
///
/// `conditions` are the frame-resolution maps of the source video. Grids
/// are sequential unless `order` is [`FrameOrder::Shuffled`].
#[allow(clippy::too_many_arguments)]
pub fn invert_video(
    mut latents: LatentStore,
    conditions: &[ConditionMap],
    predictor: &dyn NoisePredictor,
    text: &[f64],
    schedule: &DiffusionSchedule,
    rows: usize,
    cols: usize,
    mut order: FrameOrder<'_>,
) -> Result<Inversion> {
    let layout = GridLayout::new(
        rows,
        cols,
        latents.latent_shape().height,
        latents.latent_shape().width,
    )?;
    if conditions.len() != latents.original_len() {
        return Err(Error::Invalid(format!(
            "{} condition maps for {} frames",
            conditions.len(),
            latents.original_len()
        )));
    }
    let plan = plan_padding(latents.original_len(), layout.cells())?;
    latents.pad_to(plan.padded);
    let cells = cell_conditions(conditions, &layout)?;
    let first = &conditions[0].values;
    let pass = GridPass {
        layout,
        predictor,
        conditions: &cells,
        kind: conditions[0].kind,
        frame: first.shape(),
    };
    let seed = match &order {
        FrameOrder::Shuffled(rng) => rng.seed(),
        FrameOrder::Sequential => 0,
    };
    let permutations = invert_store(&pass, &mut latents, schedule, text, &mut order, seed)?;
    Ok(Inversion {
        latents,
        permutations,
    })
}

/// Output of [`edit_video`].
#[derive(Debug)]
pub struct Edit {
    pub video: Video,
    pub manifest: RunManifest,
}

pub fn edit_video(video: &Video, config: &EditConfig, adapters: Adapters<'_>) -> Result<Edit> {
    edit_video_timed(video, config, adapters, &NoClock)
}

/// Runs the edit, reading phase timings from `clock`.
pub fn edit_video_timed(
    video: &Video,
    config: &EditConfig,
    adapters: Adapters<'_>,
    clock: &dyn Clock,
) -> Result<Edit> {
    config.validate()?;
    if adapters.extractor.kind() != config.condition {
        return Err(Error::Invalid(format!(
            "config asks for {} conditions but the extractor produces {}",
            config.condition,
            adapters.extractor.kind()
        )));
    }
    let schedule = DiffusionSchedule::from_config(&config.schedule_config())?;
    let mut timings = PhaseTimings::default();

    // 1. encode, extract conditions, plan padding
    let t0 = clock.now();
    let mut store = encode(video, adapters.codec)?;
    let layout = layout_for(config, store.latent_shape())?;
    let plan = plan_padding(video.len(), layout.cells())?;
    store.pad_to(plan.padded);
    let maps = extract_conditions(video, adapters.extractor)?;
    let cells = cell_conditions(&maps, &layout)?;
    drop(maps);
    let inversion_text = adapters.text.encode(&config.inversion_prompt)?;
    let uncond = adapters.text.encode("")?;
    let cond = adapters.text.encode(&config.prompt)?;
    let pass = GridPass {
        layout,
        predictor: adapters.predictor,
        conditions: &cells,
        kind: config.condition,
        frame: video.frame_shape(),
    };
    let mut rng = PermutationRng::new(config.seed);
    let t1 = clock.now();
    timings.preprocess = t1 - t0;

    // 2. invert to the terminal step
    let inversion_permutations = {
        let mut order = if config.shuffle_inversion {
            FrameOrder::Shuffled(&mut rng)
        } else {
            FrameOrder::Sequential
        };
        invert_store(
            &pass,
            &mut store,
            &schedule,
            &inversion_text,
            &mut order,
            config.seed,
        )?
    };
    let t2 = clock.now();
    timings.inversion = t2 - t1;

    // 3. denoise with a fresh order per step
    let branches = Branches::Guided {
        uncond: &uncond,
        cond: &cond,
        scale: config.guidance,
    };
    let mut permutations = Vec::with_capacity(schedule.len());
    for (t, prev) in schedule.denoise_pairs() {
        let StepId::Noisy(step) = t else {
            unreachable!()
        };
        let (a_t, a_prev) = (schedule.alpha_bar(t)?, schedule.alpha_bar(prev)?);
        let perm = if config.shuffle {
            sample_permutation(&mut rng, plan.padded, step)
        } else {
            Permutation::identity(plan.padded, step, config.seed)
        };
        pass.run(
            store.as_mut_slice(),
            &perm.forward,
            step,
            &branches,
            |z, eps| denoise_in_place(z, eps, a_t, a_prev),
        )?;
        permutations.push(perm);
    }
    let t3 = clock.now();
    timings.sampling = t3 - t2;

    // 4. drop padding and decode
    store.truncate_padding();
    let edited = decode(store, adapters.codec)?;
    timings.decode = clock.now() - t3;

    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        config: config.clone(),
        config_digest: digest_config(config),
        adapters: adapters.ids(),
        frames: video.len(),
        padded_frames: plan.padded,
        width: video.width(),
        height: video.height(),
        input_digest: digest_frames(video.frames()),
        output_digest: digest_frames(edited.frames()),
        inversion_permutations,
        permutations,
        timings,
        artifacts: BTreeMap::new(),
    };
    Ok(Edit {
        video: edited,
        manifest,
    })
}

/// The orders a run with `config` draws, in draw order: inversion first
/// (only when it shuffles), then one per sampling step.
pub fn expected_permutations(
    config: &EditConfig,
    padded: usize,
) -> Result<(Vec<Permutation>, Vec<Permutation>)> {
    let schedule = DiffusionSchedule::from_config(&config.schedule_config())?;
    let mut rng = PermutationRng::new(config.seed);
    let mut inversion = Vec::new();
    if config.shuffle_inversion {
        for (_, to) in schedule.inversion_pairs() {
            let StepId::Noisy(t) = to else { unreachable!() };
            inversion.push(sample_permutation(&mut rng, padded, t));
        }
    }
    let sampling = schedule
        .timesteps()
        .iter()
        .map(|&t| {
            if config.shuffle {
                sample_permutation(&mut rng, padded, t)
            } else {
                Permutation::identity(padded, t, config.seed)
            }
        })
        .collect();
    Ok((inversion, sampling))
}

fn mismatch(field: &str, recorded: impl ToString, requested: impl ToString) -> Mismatch {
    Mismatch {
        field: field.into(),
        recorded: recorded.to_string(),
        requested: requested.to_string(),
    }
}

/// Checks that `manifest` is self-consistent and describes a run of
/// `video` with `adapters`. Returns every mismatch found.
pub fn validate_replay(
    manifest: &RunManifest,
    video: &Video,
    adapters: &Adapters<'_>,
) -> Result<()> {
    let mut problems = Vec::new();
    if manifest.version != MANIFEST_VERSION {
        problems.push(mismatch("version", manifest.version, MANIFEST_VERSION));
    }
    let ids = adapters.ids();
    for (field, recorded, actual) in [
        ("adapters.codec", &manifest.adapters.codec, &ids.codec),
        (
            "adapters.predictor",
            &manifest.adapters.predictor,
            &ids.predictor,
        ),
        (
            "adapters.extractor",
            &manifest.adapters.extractor,
            &ids.extractor,
        ),
        (
            "adapters.text_encoder",
            &manifest.adapters.text_encoder,
            &ids.text_encoder,
        ),
    ] {
        if recorded != actual {
            problems.push(mismatch(field, recorded, actual));
        }
    }
    if manifest.frames != video.len() {
        problems.push(mismatch("frames", manifest.frames, video.len()));
    }
    if (manifest.width, manifest.height) != (video.width(), video.height()) {
        problems.push(mismatch(
            "resolution",
            format!("{}x{}", manifest.width, manifest.height),
            format!("{}x{}", video.width(), video.height()),
        ));
    }
    let input = digest_frames(video.frames());
    if manifest.input_digest != input {
        problems.push(mismatch("input_digest", &manifest.input_digest, input));
    }

    let config = &manifest.config;
    let digest = digest_config(config);
    if manifest.config_digest != digest {
        problems.push(mismatch("config", &manifest.config_digest, digest));
    }
    let recorded = manifest
        .inversion_permutations
        .iter()
        .chain(&manifest.permutations);
    if let Some(p) = recorded.clone().find(|p| p.seed != config.seed) {
        problems.push(mismatch("seed", p.seed, config.seed));
    }
    let recorded_shuffle = manifest.permutations.iter().any(|p| !p.is_identity());
    if recorded_shuffle && !config.shuffle {
        problems.push(mismatch("shuffle", true, false));
    }
    let recorded_inversion_shuffle = !manifest.inversion_permutations.is_empty();
    if recorded_inversion_shuffle != config.shuffle_inversion {
        problems.push(mismatch(
            "shuffle_inversion",
            recorded_inversion_shuffle,
            config.shuffle_inversion,
        ));
    }
    if problems.is_empty() {
        let (inversion, sampling) = expected_permutations(config, manifest.padded_frames)?;
        if inversion != manifest.inversion_permutations {
            problems.push(mismatch(
                "inversion_permutations",
                "recorded orders",
                "orders regenerated from the config",
            ));
        }
        if sampling != manifest.permutations {
            let field = if config.shuffle {
                "shuffle"
            } else {
                "permutations"
            };
            problems.push(mismatch(
                field,
                "recorded orders",
                "orders regenerated from the config",
            ));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::ReplayMismatch(problems))
    }
}

/// Re-runs a recorded edit and checks the output is bit-identical.
pub fn replay(manifest: &RunManifest, video: &Video, adapters: Adapters<'_>) -> Result<Video> {
    validate_replay(manifest, video, &adapters)?;
    let edit = edit_video(video, &manifest.config, adapters)?;
    if edit.manifest.output_digest != manifest.output_digest {
        return Err(Error::ReplayDiverged {
            recorded: manifest.output_digest.clone(),
            actual: edit.manifest.output_digest,
        });
    }
    Ok(edit.video)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::SobelEdge;
    use crate::toy::{ConstantNoise, GridMeanCoupling, HashedTextEncoder, SeparablePredictor};
    use crate::video::IdentityCodec;

    fn synthetic_video(k: usize, h: usize, w: usize) -> Video {
        let frames = (0..k)
            .map(|i| {
                Tensor::from_fn(Shape::new(h, w, 3), |y, x, c| {
                    let phase = i as f64 * 0.37 + c as f64;
                    0.8 * libm::sin(0.9 * x as f64 + 0.4 * y as f64 + phase)
                })
            })
            .collect();
        Video::new(frames).unwrap()
    }

    fn small_config(frames: usize) -> EditConfig {
        let mut c = EditConfig::new("a watercolor painting", frames);
        c.train_steps = 100;
        c.steps = 10;
        c.beta_start = 0.001;
        c.beta_end = 0.02;
        c.seed = 3;
        c
    }

    fn adapters<'a>(predictor: &'a dyn NoisePredictor) -> Adapters<'a> {
        Adapters {
            codec: &IdentityCodec,
            predictor,
            extractor: &SobelEdge,
            text: &HashedTextEncoder,
        }
    }

    #[test]
    fn default_grid_sizes() {
        assert_eq!(EditConfig::default_grid(8), (2, 2));
        assert_eq!(EditConfig::default_grid(36), (3, 3));
        assert_eq!(EditConfig::default_grid(90), (3, 3));
    }

    #[test]
    fn zero_noise_inversion_scales_by_root_terminal_alpha() {
        let video = synthetic_video(8, 4, 4);
        let schedule = DiffusionSchedule::from_config(&small_config(8).schedule_config()).unwrap();
        let latents = encode(&video, &IdentityCodec).unwrap();
        let maps = extract_conditions(&video, &SobelEdge).unwrap();
        let inv = invert_video(
            latents,
            &maps,
            &ConstantNoise { value: 0.0 },
            &[],
            &schedule,
            2,
            2,
            FrameOrder::Sequential,
        )
        .unwrap();
        let scale = libm::sqrt(schedule.alpha_bar(schedule.terminal()).unwrap());
        for (out, src) in inv.latents.iter().zip(video.frames()) {
            let expected = src.map(|v| v * scale);
            assert!(out.max_abs_diff(&expected).unwrap() < 1e-14);
        }
    }

    struct CountingPredictor {
        calls: core::cell::Cell<usize>,
    }

    impl NoisePredictor for CountingPredictor {
        fn id(&self) -> String {
            "counting".into()
        }
        fn predict(
            &self,
            latent: &Tensor,
            _: usize,
            _: &[f64],
            _: Option<&crate::conditioning::ConditionGrid>,
        ) -> Result<Tensor> {
            self.calls.set(self.calls.get() + 1);
            Ok(Tensor::zeros(latent.shape()))
        }
    }

    #[test]
    fn inversion_runs_one_call_per_grid_per_step() {
        let video = synthetic_video(8, 4, 4);
        let schedule = DiffusionSchedule::from_config(&small_config(8).schedule_config()).unwrap();
        let p = CountingPredictor {
            calls: core::cell::Cell::new(0),
        };
        let maps = extract_conditions(&video, &SobelEdge).unwrap();
        invert_video(
            encode(&video, &IdentityCodec).unwrap(),
            &maps,
            &p,
            &[],
            &schedule,
            2,
            2,
            FrameOrder::Sequential,
        )
        .unwrap();
        assert_eq!(p.calls.get(), 2 * schedule.len());
    }

    #[test]
    fn constant_noise_edit_reproduces_the_source() {
        let video = synthetic_video(10, 6, 6);
        let config = small_config(10);
        let p = ConstantNoise { value: 0.3 };
        let edit = edit_video(&video, &config, adapters(&p)).unwrap();
        assert_eq!(edit.video.len(), 10);
        for (a, b) in edit.video.frames().iter().zip(video.frames()) {
            assert!(a.max_abs_diff(b).unwrap() < 1e-6);
        }
        assert_eq!(edit.manifest.padded_frames, 18);
        assert_eq!(edit.manifest.permutations.len(), 10);
    }

    #[test]
    fn separable_predictor_is_shuffle_neutral() {
        let video = synthetic_video(12, 4, 6);
        let mut config = small_config(12);
        let p = SeparablePredictor::default();
        let on = edit_video(&video, &config, adapters(&p)).unwrap();
        config.shuffle = false;
        let off = edit_video(&video, &config, adapters(&p)).unwrap();
        assert_eq!(on.video, off.video);
        assert!(on.manifest.permutations.iter().any(|p| !p.is_identity()));
    }

    #[test]
    fn coupling_predictor_notices_the_shuffle() {
        let video = synthetic_video(18, 4, 4);
        let mut config = small_config(18);
        let p = GridMeanCoupling::default();
        let on = edit_video(&video, &config, adapters(&p)).unwrap();
        config.shuffle = false;
        let off = edit_video(&video, &config, adapters(&p)).unwrap();
        assert_ne!(on.video, off.video);
    }

    #[test]
    fn single_grid_shuffle_only_relabels_cells() {
        // K = N = 9: one grid, so a shuffle only moves cells around
        let video = synthetic_video(9, 4, 4);
        let mut config = small_config(9);
        let p = GridMeanCoupling::default();
        let on = edit_video(&video, &config, adapters(&p)).unwrap();
        config.shuffle = false;
        let off = edit_video(&video, &config, adapters(&p)).unwrap();
        assert_eq!(on.video, off.video);
    }

    #[test]
    fn manifest_round_trips_through_replay() {
        let video = synthetic_video(8, 4, 4);
        let config = small_config(8);
        let p = SeparablePredictor::default();
        let edit = edit_video(&video, &config, adapters(&p)).unwrap();
        let again = replay(&edit.manifest, &video, adapters(&p)).unwrap();
        assert_eq!(again, edit.video);
    }

    #[test]
    fn replay_refuses_tampered_manifests() {
        let video = synthetic_video(8, 4, 4);
        let config = small_config(8);
        let p = SeparablePredictor::default();
        let edit = edit_video(&video, &config, adapters(&p)).unwrap();

        let mut seed = edit.manifest.clone();
        seed.config.seed += 1;
        let Err(Error::ReplayMismatch(fields)) = validate_replay(&seed, &video, &adapters(&p))
        else {
            panic!("altered seed accepted");
        };
        assert!(fields.iter().any(|m| m.field == "seed"));

        let mut flipped = edit.manifest.clone();
        flipped.config.shuffle = false;
        let Err(Error::ReplayMismatch(fields)) = validate_replay(&flipped, &video, &adapters(&p))
        else {
            panic!("flipped shuffle accepted");
        };
        assert!(fields.iter().any(|m| m.field == "shuffle"));

        let other = ConstantNoise { value: 0.0 };
        let Err(Error::ReplayMismatch(fields)) =
            validate_replay(&edit.manifest, &video, &adapters(&other))
        else {
            panic!("different predictor accepted");
        };
        assert_eq!(fields[0].field, "adapters.predictor");
    }

    #[test]
    fn predictor_failure_carries_the_timestep() {
        struct Broken;
        impl NoisePredictor for Broken {
            fn id(&self) -> String {
                "broken".into()
            }
            fn predict(
                &self,
                latent: &Tensor,
                _: usize,
                _: &[f64],
                _: Option<&crate::conditioning::ConditionGrid>,
            ) -> Result<Tensor> {
                Ok(Tensor::zeros(Shape::new(1, 1, latent.channels())))
            }
        }
        let video = synthetic_video(4, 4, 4);
        let mut config = small_config(4);
        config.rows = 1;
        config.cols = 2;
        let err = edit_video(&video, &config, adapters(&Broken)).unwrap_err();
        assert!(matches!(err, Error::Predictor { .. }));
    }

    #[test]
    fn extractor_kind_must_match_config() {
        let video = synthetic_video(4, 4, 4);
        let mut config = small_config(4);
        config.condition = ConditionKind::Depth;
        let p = ConstantNoise::default();
        assert!(edit_video(&video, &config, adapters(&p)).is_err());
    }
}
