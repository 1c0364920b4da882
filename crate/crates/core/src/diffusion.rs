//! Deterministic DDIM (η = 0) in both directions and classifier-free guidance.
//!
//! Every update goes through the clean-sample estimate
//! `x̂0 = (z_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t`, then re-noises it to the target level
//! with the same `ε̂`. Denoising targets a lower timestep, inversion a higher
//! one; holding `ε̂` fixed, the two are exact algebraic inverses.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::conditioning::ConditionGrid;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A noise level on the trajectory. `Clean` is the `ᾱ = 1` boundary below
/// every training timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepId {
    Clean,
    Noisy(usize),
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepId::Clean => f.write_str("clean"),
            StepId::Noisy(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    /// `t_i = i · ⌊T_train / T⌋`.
    #[default]
    Leading,
    /// `t_i = round(T_train − i · T_train / T) − 1`.
    Trailing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub train_steps: usize,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            train_steps: 1000,
            steps: 50,
            beta_start: 0.00085,
            beta_end: 0.012,
            spacing: Spacing::Leading,
        }
    }
}

/// Cumulative signal retention `ᾱ_t` over the training steps, plus the
/// descending subsequence of timesteps used for sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    train_steps: usize,
    timesteps: Vec<usize>,
    alpha_bar: Vec<f64>,
}

/// Betas are linear in `√β` between `beta_start` and `beta_end`.
pub fn make_schedule(
    train_steps: usize,
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    spacing: Spacing,
) -> Result<DiffusionSchedule> {
    if train_steps == 0 || steps == 0 || steps > train_steps {
        return Err(Error::Schedule(format!(
            "need 1 <= steps <= train_steps, got steps={steps}, train_steps={train_steps}"
        )));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Schedule(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }

    let (lo, hi) = (libm::sqrt(beta_start), libm::sqrt(beta_end));
    let mut alpha_bar = Vec::with_capacity(train_steps);
    let mut acc = 1.0;
    for i in 0..train_steps {
        let root = if train_steps == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (train_steps - 1) as f64
        };
        acc *= 1.0 - root * root;
        alpha_bar.push(acc);
    }

    let timesteps: Vec<usize> = match spacing {
        Spacing::Leading => {
            let ratio = train_steps / steps;
            (0..steps).rev().map(|i| i * ratio).collect()
        }
        Spacing::Trailing => {
            let ratio = train_steps as f64 / steps as f64;
            (0..steps)
                .map(|i| libm::round(train_steps as f64 - i as f64 * ratio) as usize - 1)
                .collect()
        }
    };

    Ok(DiffusionSchedule {
        train_steps,
        timesteps,
        alpha_bar,
    })
}

impl DiffusionSchedule {
    pub fn from_config(config: &ScheduleConfig) -> Result<Self> {
        make_schedule(
            config.train_steps,
            config.steps,
            config.beta_start,
            config.beta_end,
            config.spacing,
        )
    }

    pub fn train_steps(&self) -> usize {
        self.train_steps
    }

    /// Sampling timesteps, noisiest first.
    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }

    /// `ᾱ_t` for every training step.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// The noisiest sampling level, where inversion ends and sampling starts.
    pub fn terminal(&self) -> StepId {
        StepId::Noisy(self.timesteps[0])
    }

    pub fn contains(&self, step: StepId) -> bool {
        match step {
            StepId::Clean => true,
            StepId::Noisy(t) => self.timesteps.contains(&t),
        }
    }

    pub fn alpha_bar(&self, step: StepId) -> Result<f64> {
        match step {
            StepId::Clean => Ok(1.0),
            StepId::Noisy(t) if self.timesteps.contains(&t) => Ok(self.alpha_bar[t]),
            StepId::Noisy(t) => Err(Error::StepNotInSchedule(t)),
        }
    }

    /// `(t, t_prev)` pairs in sampling order; the last pair ends at `Clean`.
    pub fn denoise_pairs(&self) -> impl Iterator<Item = (StepId, StepId)> + '_ {
        self.timesteps.iter().enumerate().map(|(i, &t)| {
            let prev = self
                .timesteps
                .get(i + 1)
                .map_or(StepId::Clean, |&p| StepId::Noisy(p));
            (StepId::Noisy(t), prev)
        })
    }

    /// `(from, to)` pairs in inversion order, starting at `Clean`.
    pub fn inversion_pairs(&self) -> impl Iterator<Item = (StepId, StepId)> + '_ {
        let pairs: Vec<_> = self.denoise_pairs().collect();
        pairs.into_iter().rev().map(|(t, prev)| (prev, t))
    }

    fn checked_pair(&self, lower: StepId, upper: StepId) -> Result<(f64, f64)> {
        if upper <= lower {
            return Err(Error::StepOrder(format!(
                "expected {upper} above {lower} on the trajectory"
            )));
        }
        Ok((self.alpha_bar(lower)?, self.alpha_bar(upper)?))
    }
}

/// DDIM update towards a lower noise level, given `ᾱ` at both ends.
pub fn denoise_in_place(z: &mut [f64], eps: &[f64], alpha_t: f64, alpha_prev: f64) {
    if alpha_t == alpha_prev {
        return;
    }
    let (sa, sn) = (libm::sqrt(alpha_t), libm::sqrt(1.0 - alpha_t));
    let (pa, pn) = (libm::sqrt(alpha_prev), libm::sqrt(1.0 - alpha_prev));
    for (zi, &e) in z.iter_mut().zip(eps) {
        let x0 = (*zi - sn * e) / sa;
        *zi = pa * x0 + pn * e;
    }
}

/// DDIM update towards a higher noise level; inverse of [`denoise_in_place`].
pub fn invert_in_place(z: &mut [f64], eps: &[f64], alpha_prev: f64, alpha_t: f64) {
    // Same re-noising through x̂0, with the roles of the two levels swapped.
    denoise_in_place(z, eps, alpha_prev, alpha_t);
}

fn check_eps(z: &Tensor, eps: &Tensor) -> Result<()> {
    eps.ensure_shape(z.shape())
}

pub fn ddim_denoise_step(
    z_t: &Tensor,
    eps_hat: &Tensor,
    t: StepId,
    t_prev: StepId,
    schedule: &DiffusionSchedule,
) -> Result<Tensor> {
    let (alpha_prev, alpha_t) = schedule.checked_pair(t_prev, t)?;
    check_eps(z_t, eps_hat)?;
    let mut out = z_t.clone();
    denoise_in_place(out.data_mut(), eps_hat.data(), alpha_t, alpha_prev);
    Ok(out)
}

pub fn ddim_invert_step(
    z_t_prev: &Tensor,
    eps_hat: &Tensor,
    t_prev: StepId,
    t: StepId,
    schedule: &DiffusionSchedule,
) -> Result<Tensor> {
    let (alpha_prev, alpha_t) = schedule.checked_pair(t_prev, t)?;
    check_eps(z_t_prev, eps_hat)?;
    let mut out = z_t_prev.clone();
    invert_in_place(out.data_mut(), eps_hat.data(), alpha_prev, alpha_t);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub scale: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { scale: 7.5 }
    }
}

/// `(1 − s)·ε_u + s·ε_c`, written into `eps_cond`. Equal to
/// `ε_u + s·(ε_c − ε_u)`; this form returns `ε_c` exactly at `s = 1` and
/// `ε_u` exactly at `s = 0`.
pub fn guide_in_place(eps_cond: &mut [f64], eps_uncond: &[f64], scale: f64) {
    let keep = 1.0 - scale;
    for (c, &u) in eps_cond.iter_mut().zip(eps_uncond) {
        *c = keep * u + scale * *c;
    }
}

pub fn guide(eps_uncond: &Tensor, eps_cond: &Tensor, cfg: GuidanceConfig) -> Result<Tensor> {
    eps_cond.ensure_shape(eps_uncond.shape())?;
    let mut out = eps_cond.clone();
    guide_in_place(out.data_mut(), eps_uncond.data(), cfg.scale);
    Ok(out)
}

/// The denoiser: predicts the noise in a latent grid.
pub trait NoisePredictor {
    fn id(&self) -> String;

    /// Output must have `latent`'s shape and depend only on the arguments.
    fn predict(
        &self,
        latent: &Tensor,
        step: usize,
        text: &[f64],
        condition: Option<&ConditionGrid>,
    ) -> Result<Tensor>;

    /// Whether `predict` may run on several grids concurrently.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Prompt to embedding. The empty prompt is the unconditional branch.
pub trait TextEncoder {
    fn id(&self) -> String;
    fn encode(&self, prompt: &str) -> Result<Vec<f64>>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use alloc::vec;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(Shape::new(1, 1, 1), vec![v]).unwrap()
    }

    #[test]
    fn tiny_constant_beta_schedule() {
        let s = make_schedule(3, 3, 0.001, 0.001, Spacing::Leading).unwrap();
        // 0.999, 0.999², 0.999³
        let expected = [0.999, 0.998001, 0.997002999];
        for (a, e) in s.alpha_bars().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
        assert_eq!(s.timesteps(), &[2, 1, 0]);
    }

    #[test]
    fn default_schedule_has_fifty_descending_steps() {
        let s = DiffusionSchedule::from_config(&ScheduleConfig::default()).unwrap();
        assert_eq!(s.len(), 50);
        assert_eq!(s.timesteps()[0], 980);
        assert_eq!(*s.timesteps().last().unwrap(), 0);
        assert!(s.timesteps().windows(2).all(|w| w[0] > w[1]));
        assert!(s.alpha_bars().windows(2).all(|w| w[0] > w[1]));
        assert!(s.alpha_bars().iter().all(|&a| a > 0.0 && a <= 1.0));
    }

    #[test]
    fn full_schedule_lists_every_step() {
        for spacing in [Spacing::Leading, Spacing::Trailing] {
            let s = make_schedule(20, 20, 0.001, 0.02, spacing).unwrap();
            let expected: Vec<usize> = (0..20).rev().collect();
            assert_eq!(s.timesteps(), expected.as_slice());
        }
    }

    #[test]
    fn trailing_spacing_ends_at_last_train_step() {
        let s = make_schedule(1000, 50, 0.00085, 0.012, Spacing::Trailing).unwrap();
        assert_eq!(s.timesteps()[0], 999);
        assert_eq!(*s.timesteps().last().unwrap(), 19);
    }

    #[test]
    fn schedule_rejects_bad_ranges() {
        assert!(make_schedule(10, 11, 0.001, 0.01, Spacing::Leading).is_err());
        assert!(make_schedule(10, 0, 0.001, 0.01, Spacing::Leading).is_err());
        assert!(make_schedule(10, 5, 0.0, 0.01, Spacing::Leading).is_err());
        assert!(make_schedule(10, 5, 0.02, 0.01, Spacing::Leading).is_err());
        assert!(make_schedule(10, 5, 0.01, 1.0, Spacing::Leading).is_err());
    }

    #[test]
    fn pairs_walk_the_trajectory() {
        let s = make_schedule(10, 3, 0.001, 0.01, Spacing::Leading).unwrap();
        let down: Vec<_> = s.denoise_pairs().collect();
        assert_eq!(
            down,
            vec![
                (StepId::Noisy(6), StepId::Noisy(3)),
                (StepId::Noisy(3), StepId::Noisy(0)),
                (StepId::Noisy(0), StepId::Clean),
            ]
        );
        let up: Vec<_> = s.inversion_pairs().collect();
        assert_eq!(up[0], (StepId::Clean, StepId::Noisy(0)));
        assert_eq!(up[2], (StepId::Noisy(3), StepId::Noisy(6)));
    }

    #[test]
    fn zero_noise_step_scales_by_alpha_ratio() {
        let mut z = [1.0];
        denoise_in_place(&mut z, &[0.0], 0.5, 0.8);
        // √(0.8 / 0.5)
        assert!((z[0] - 1.2649110640673518).abs() < 1e-12);
    }

    #[test]
    fn equal_levels_leave_latent_unchanged() {
        let mut z = [0.3, -1.7];
        denoise_in_place(&mut z, &[5.0, -2.0], 0.42, 0.42);
        assert_eq!(z, [0.3, -1.7]);
    }

    #[test]
    fn step_to_clean_returns_x0_estimate() {
        let mut z = [0.5];
        denoise_in_place(&mut z, &[0.5], 0.25, 1.0);
        // (0.5 − √0.75 · 0.5) / 0.5 = 1 − √0.75
        assert!((z[0] - 0.1339745962155614).abs() < 1e-12);
    }

    #[test]
    fn invert_then_denoise_round_trips() {
        let s = DiffusionSchedule::from_config(&ScheduleConfig::default()).unwrap();
        let z = scalar(0.731);
        let eps = scalar(0.3);
        for (t, prev) in s.denoise_pairs() {
            let up = ddim_invert_step(&z, &eps, prev, t, &s).unwrap();
            let back = ddim_denoise_step(&up, &eps, t, prev, &s).unwrap();
            assert!((back.data()[0] - 0.731).abs() < 1e-12);
            let down = ddim_denoise_step(&z, &eps, t, prev, &s).unwrap();
            let again = ddim_invert_step(&down, &eps, prev, t, &s).unwrap();
            assert!((again.data()[0] - 0.731).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_inversion_scales_up_by_root_alpha_ratio() {
        let s = make_schedule(10, 2, 0.01, 0.02, Spacing::Leading).unwrap();
        let z = scalar(2.0);
        let out =
            ddim_invert_step(&z, &scalar(0.0), StepId::Noisy(0), StepId::Noisy(5), &s).unwrap();
        let a = s.alpha_bars();
        let expected = 2.0 * (a[5] / a[0]).sqrt();
        assert!((out.data()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn step_errors() {
        let s = make_schedule(10, 2, 0.01, 0.02, Spacing::Leading).unwrap();
        let z = scalar(1.0);
        assert!(matches!(
            ddim_denoise_step(&z, &z, StepId::Noisy(4), StepId::Noisy(0), &s),
            Err(Error::StepNotInSchedule(4))
        ));
        assert!(matches!(
            ddim_denoise_step(&z, &z, StepId::Noisy(0), StepId::Noisy(5), &s),
            Err(Error::StepOrder(_))
        ));
        let wide = Tensor::zeros(Shape::new(1, 2, 1));
        assert!(matches!(
            ddim_denoise_step(&z, &wide, StepId::Noisy(5), StepId::Noisy(0), &s),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn guidance_collapses_and_extrapolates() {
        let u = Tensor::from_vec(Shape::new(1, 3, 1), vec![0.1, -0.37, 4.0]).unwrap();
        let c = Tensor::from_vec(Shape::new(1, 3, 1), vec![0.2, 0.91, -2.5]).unwrap();
        assert_eq!(guide(&u, &c, GuidanceConfig { scale: 1.0 }).unwrap(), c);
        assert_eq!(guide(&u, &c, GuidanceConfig { scale: 0.0 }).unwrap(), u);
        let g = guide(&scalar(0.1), &scalar(0.2), GuidanceConfig::default()).unwrap();
        // 0.1 + 7.5 · (0.2 − 0.1)
        assert!((g.data()[0] - 0.85).abs() < 1e-12);
        assert!(guide(&u, &scalar(0.0), GuidanceConfig::default()).is_err());
    }
}
