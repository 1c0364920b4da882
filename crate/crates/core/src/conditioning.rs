//! Spatial condition maps (depth, line art, soft edges) and their grids.
//!
//! Maps are extracted once per video at frame resolution and area-averaged
//! down to the latent cell size right before grid assembly. Condition grids
//! always reuse the latent grids' frame order for the same step.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{assemble_grid, video2grid, GridBatch, GridLayout};
use crate::tensor::{Shape, Tensor};
use crate::video::{block_average, Frame, Video};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionKind {
    Depth,
    Lineart,
    Softedge,
    ToyEdge,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 4] = [
        ConditionKind::Depth,
        ConditionKind::Lineart,
        ConditionKind::Softedge,
        ConditionKind::ToyEdge,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionKind::Depth => "depth",
            ConditionKind::Lineart => "lineart",
            ConditionKind::Softedge => "softedge",
            ConditionKind::ToyEdge => "toy-edge",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConditionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || (s == "toy_edge" && *k == ConditionKind::ToyEdge))
            .ok_or_else(|| Error::Invalid(format!("unknown condition kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionMap {
    pub values: Tensor,
    pub kind: ConditionKind,
}

/// Condition grid handed to the denoiser, tiled at latent cell resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionGrid {
    pub values: Tensor,
    pub kind: ConditionKind,
    /// Frame resolution each cell was downscaled from.
    pub frame_height: usize,
    pub frame_width: usize,
}

pub trait ConditionExtractor {
    fn kind(&self) -> ConditionKind;
    fn id(&self) -> String;
    /// Deterministic; output size must not vary between frames of a video.
    fn extract(&self, frame: &Frame) -> Result<Tensor>;
}

/// 3×3 Sobel gradient magnitude of the luminance, replicate borders.
///
/// Output is single-channel in `[0, 1]`: the magnitude is divided by its
/// largest possible value for inputs in `[-1, 1]` (`8√2`).
#[derive(Clone, Copy, Debug, Default)]
pub struct SobelEdge;

const SOBEL_MAX: f64 = 8.0 * core::f64::consts::SQRT_2;

impl ConditionExtractor for SobelEdge {
    fn kind(&self) -> ConditionKind {
        ConditionKind::ToyEdge
    }

    fn id(&self) -> String {
        "sobel-edge".into()
    }

    fn extract(&self, frame: &Frame) -> Result<Tensor> {
        let lum = frame.luminance();
        let (h, w) = (lum.height() as isize, lum.width() as isize);
        let at =
            |y: isize, x: isize| lum.get(y.clamp(0, h - 1) as usize, x.clamp(0, w - 1) as usize, 0);
        Ok(Tensor::from_fn(
            Shape::new(lum.height(), lum.width(), 1),
            |y, x, _| {
                let (y, x) = (y as isize, x as isize);
                let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
                let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
                (libm::sqrt(gx * gx + gy * gy) / SOBEL_MAX).min(1.0)
            },
        ))
    }
}

/// One map per frame, in frame order. Prompt-independent, so callers can
/// cache the result per video.
pub fn extract_conditions(
    video: &Video,
    extractor: &dyn ConditionExtractor,
) -> Result<Vec<ConditionMap>> {
    let mut maps: Vec<ConditionMap> = Vec::with_capacity(video.len());
    for (frame_index, frame) in video.frames().iter().enumerate() {
        let values = extractor.extract(frame).map_err(|e| Error::Extractor {
            frame: frame_index,
            message: format!("{e}"),
        })?;
        if let Some(first) = maps.first() {
            if first.values.shape() != values.shape() {
                return Err(Error::Extractor {
                    frame: frame_index,
                    message: format!(
                        "map shape {} differs from first frame's {}",
                        values.shape(),
                        first.values.shape()
                    ),
                });
            }
        }
        maps.push(ConditionMap {
            values,
            kind: extractor.kind(),
        });
    }
    Ok(maps)
}

/// Area-averages `map` to `height × width`; both must divide the map size
/// by the same integer factor.
pub fn downscale_area(map: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    if height == 0
        || width == 0
        || !map.height().is_multiple_of(height)
        || !map.width().is_multiple_of(width)
    {
        return Err(Error::Indivisible {
            width: map.width(),
            height: map.height(),
            factor: map.height().checked_div(height).unwrap_or(0),
        });
    }
    let factor = map.height() / height;
    if map.width() / width != factor {
        return Err(Error::Invalid(format!(
            "anisotropic downscale {}x{} -> {height}x{width}",
            map.height(),
            map.width()
        )));
    }
    if factor == 1 {
        return Ok(map.clone());
    }
    Ok(block_average(
        map,
        factor,
        Shape::new(height, width, map.channels()),
    ))
}

/// Downscales every map to the layout's cell size.
pub fn cell_conditions(maps: &[ConditionMap], layout: &GridLayout) -> Result<Vec<Tensor>> {
    maps.iter()
        .map(|m| downscale_area(&m.values, layout.cell_height, layout.cell_width))
        .collect()
}

/// Tiles condition maps following `order`, the same padded order used for
/// the latent grids at this step. Padding slots take the last frame's map.
pub fn conditions_to_grids(
    maps: &[ConditionMap],
    layout: &GridLayout,
    order: &[usize],
) -> Result<GridBatch<Tensor>> {
    let cells = cell_conditions(maps, layout)?;
    video2grid(&cells, layout, order)
}

/// Assembles the condition grid for one set of cell indices.
pub fn condition_grid(
    cells: &[Tensor],
    layout: &GridLayout,
    indices: &[usize],
    kind: ConditionKind,
    frame: Shape,
) -> Result<ConditionGrid> {
    Ok(ConditionGrid {
        values: assemble_grid(cells, layout, indices)?,
        kind,
        frame_height: frame.height,
        frame_width: frame.width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn step_edge(h: usize, w: usize, edge: usize) -> Tensor {
        Tensor::from_fn(
            Shape::new(h, w, 3),
            |_, x, _| if x < edge { -1.0 } else { 1.0 },
        )
    }

    #[test]
    fn constant_frame_has_no_edges() {
        let frame = Tensor::filled(Shape::new(6, 7, 3), 0.25);
        let map = SobelEdge.extract(&frame).unwrap();
        assert!(map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge_responds_on_the_two_boundary_columns() {
        let frame = step_edge(5, 8, 4);
        let map = SobelEdge.extract(&frame).unwrap();
        // Columns 3 and 4 straddle the step: gx = 4 · (1 − (−1)) = 8, gy = 0,
        // so the normalized magnitude is 8 / (8√2) = 1/√2.
        let expected = core::f64::consts::FRAC_1_SQRT_2;
        for y in 0..5 {
            for x in 0..8 {
                let v = map.get(y, x, 0);
                if x == 3 || x == 4 {
                    assert!((v - expected).abs() < 1e-15);
                } else {
                    assert_eq!(v, 0.0, "({y}, {x})");
                }
            }
        }
    }

    #[test]
    fn one_map_per_frame_in_order() {
        let frames = (0..8).map(|i| step_edge(4, 8, i)).collect();
        let video = Video::new(frames).unwrap();
        let maps = extract_conditions(&video, &SobelEdge).unwrap();
        assert_eq!(maps.len(), 8);
        for (i, m) in maps.iter().enumerate() {
            assert_eq!(m.values, SobelEdge.extract(&video.frames()[i]).unwrap());
            assert_eq!(m.kind, ConditionKind::ToyEdge);
        }
    }

    struct Failing;

    impl ConditionExtractor for Failing {
        fn kind(&self) -> ConditionKind {
            ConditionKind::Depth
        }
        fn id(&self) -> String {
            "failing".into()
        }
        fn extract(&self, frame: &Frame) -> Result<Tensor> {
            if frame.get(0, 0, 0) > 0.0 {
                Err(Error::Adapter("boom".into()))
            } else {
                Ok(frame.luminance())
            }
        }
    }

    #[test]
    fn extractor_failure_names_the_frame() {
        let frames = vec![
            Tensor::filled(Shape::new(2, 2, 3), -0.5),
            Tensor::filled(Shape::new(2, 2, 3), -0.5),
            Tensor::filled(Shape::new(2, 2, 3), 0.5),
        ];
        let video = Video::new(frames).unwrap();
        assert!(matches!(
            extract_conditions(&video, &Failing),
            Err(Error::Extractor { frame: 2, .. })
        ));
    }

    #[test]
    fn area_downscale_averages_blocks() {
        let map = Tensor::from_vec(
            Shape::new(2, 4, 1),
            vec![0.0, 1.0, 0.5, 0.5, 1.0, 0.0, 0.25, 0.75],
        )
        .unwrap();
        let small = downscale_area(&map, 1, 2).unwrap();
        assert_eq!(small.data(), &[0.5, 0.5]);
        assert!(downscale_area(&map, 1, 3).is_err());
        assert!(downscale_area(&map, 2, 1).is_err());
    }

    #[test]
    fn condition_grids_share_the_latent_assignment() {
        let layout = GridLayout::new(2, 2, 2, 2).unwrap();
        let maps: Vec<ConditionMap> = (0..5)
            .map(|i| ConditionMap {
                values: Tensor::filled(Shape::new(4, 4, 1), i as f64),
                kind: ConditionKind::ToyEdge,
            })
            .collect();
        let latents: Vec<Tensor> = (0..5).map(|_| Tensor::zeros(Shape::new(2, 2, 4))).collect();
        let order = [7, 2, 0, 5, 1, 6, 4, 3];
        let conds = conditions_to_grids(&maps, &layout, &order).unwrap();
        let lats = video2grid(&latents, &layout, &order).unwrap();
        assert_eq!(conds.assignment, lats.assignment);
        // slot 7 is padding and carries frame 4's map
        assert_eq!(conds.grids[0].get(0, 0, 0), 4.0);
        assert_eq!(conds.grids[0].get(0, 2, 0), 2.0);
    }

    #[test]
    fn kinds_parse_from_cli_spelling() {
        assert_eq!(
            "toy-edge".parse::<ConditionKind>().unwrap(),
            ConditionKind::ToyEdge
        );
        assert_eq!(
            "depth".parse::<ConditionKind>().unwrap(),
            ConditionKind::Depth
        );
        assert!("pose".parse::<ConditionKind>().is_err());
    }
}
