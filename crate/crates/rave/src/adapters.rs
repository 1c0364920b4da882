//! Built-in adapters by name. Names round-trip through the ids recorded in a
//! run manifest, so a replay can rebuild exactly the adapters of the run.

use rave_core::conditioning::{ConditionExtractor, ConditionKind, SobelEdge};
use rave_core::diffusion::{NoisePredictor, TextEncoder};
use rave_core::toy::{ConstantNoise, GridMeanCoupling, HashedTextEncoder, SeparablePredictor};
use rave_core::video::{BlockAverageCodec, IdentityCodec, LatentCodec};

use crate::cache::QUANTIZED_SUFFIX;
use crate::error::{Error, Result};

fn numbers<const N: usize>(choice: &str, args: &str) -> Result<[f64; N]> {
    let parsed: Vec<f64> = args
        .split(':')
        .map(|a| a.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("bad numeric arguments in `{choice}`")))?;
    parsed
        .try_into()
        .map_err(|_| Error::Format(format!("`{choice}` expects {N} numeric argument(s)")))
}

/// `identity`, or `block:F` / `block-average:F`.
pub fn codec(choice: &str) -> Result<Box<dyn LatentCodec>> {
    match choice.split_once(':') {
        None if choice == "identity" => Ok(Box::new(IdentityCodec)),
        Some(("block" | "block-average", f)) => {
            let factor = f
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad block factor in `{choice}`")))?;
            Ok(Box::new(BlockAverageCodec::new(factor)?))
        }
        _ => Err(Error::Format(format!(
            "unknown codec `{choice}` (built-in: identity, block:F)"
        ))),
    }
}

/// `separable[:gain:condition_gain:text_gain]`, `coupling` or
/// `grid-mean-coupling[:strength]`, `constant` or `constant-noise[:value]`.
pub fn predictor(choice: &str) -> Result<Box<dyn NoisePredictor>> {
    let (name, args) = match choice.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (choice, None),
    };
    match (name, args) {
        ("separable", None) => Ok(Box::new(SeparablePredictor::default())),
        ("separable", Some(a)) => {
            let [gain, condition_gain, text_gain] = numbers(choice, a)?;
            Ok(Box::new(SeparablePredictor {
                gain,
                condition_gain,
                text_gain,
            }))
        }
        ("coupling" | "grid-mean-coupling", None) => Ok(Box::new(GridMeanCoupling::default())),
        ("coupling" | "grid-mean-coupling", Some(a)) => {
            let [strength] = numbers(choice, a)?;
            Ok(Box::new(GridMeanCoupling { strength }))
        }
        ("constant" | "constant-noise", None) => Ok(Box::new(ConstantNoise::default())),
        ("constant" | "constant-noise", Some(a)) => {
            let [value] = numbers(choice, a)?;
            Ok(Box::new(ConstantNoise { value }))
        }
        _ => Err(Error::Format(format!(
            "unknown predictor `{choice}` (built-in: separable, coupling, constant); \
             diffusion backbones plug in through the NoisePredictor trait"
        ))),
    }
}

/// The built-in extractor for `kind`. Only the toy edge map ships; depth,
/// line art and soft edges need an external model.
pub fn extractor(kind: ConditionKind) -> Result<Box<dyn ConditionExtractor>> {
    match kind {
        ConditionKind::ToyEdge => Ok(Box::new(SobelEdge)),
        other => Err(Error::Format(format!(
            "condition `{other}` requires an adapter; the built-in extractor is toy-edge"
        ))),
    }
}

/// Inverse of [`ConditionExtractor::id`] for built-in extractors, with the
/// cache's quantization suffix stripped.
pub fn extractor_by_id(id: &str) -> Result<Box<dyn ConditionExtractor>> {
    match id.strip_suffix(QUANTIZED_SUFFIX).unwrap_or(id) {
        "sobel-edge" => Ok(Box::new(SobelEdge)),
        other => Err(Error::Format(format!("unknown extractor `{other}`"))),
    }
}

pub fn text_encoder(id: &str) -> Result<Box<dyn TextEncoder>> {
    match id {
        "hashed-char-histogram" | "hashed" => Ok(Box::new(HashedTextEncoder)),
        other => Err(Error::Format(format!("unknown text encoder `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for choice in [
            "separable",
            "separable:0.1:0.25:3",
            "coupling:0.75",
            "constant:-0.5",
        ] {
            let p = predictor(choice).unwrap();
            assert_eq!(predictor(&p.id()).unwrap().id(), p.id());
        }
        for choice in ["identity", "block:8"] {
            let c = codec(choice).unwrap();
            assert_eq!(codec(&c.id()).unwrap().id(), c.id());
        }
        assert_eq!(
            text_encoder(&HashedTextEncoder.id()).unwrap().id(),
            HashedTextEncoder.id()
        );
    }

    #[test]
    fn model_backed_conditions_need_an_adapter() {
        let err = extractor(ConditionKind::Depth).err().unwrap();
        assert!(err.to_string().contains("requires an adapter"));
        assert!(extractor(ConditionKind::ToyEdge).is_ok());
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(predictor("unet").is_err());
        assert!(predictor("separable:1").is_err());
        assert!(codec("block:x").is_err());
        assert!(codec("block:0").is_err());
    }
}
