//! Text–video evaluation set manifests: schema, semantic validation and
//! summary counts. Parsing from JSON lives in the `rave` crate, which adds
//! structural checks before handing a typed manifest to [`validate`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Clip lengths the evaluation protocol groups videos by.
pub const LENGTH_BUCKETS: [usize; 3] = [8, 36, 90];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditType {
    Local,
    VisualStyle,
    Background,
    ShapeAttribute,
    ExtremeShape,
}

impl EditType {
    pub const ALL: [EditType; 5] = [
        EditType::Local,
        EditType::VisualStyle,
        EditType::Background,
        EditType::ShapeAttribute,
        EditType::ExtremeShape,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EditType::Local => "local",
            EditType::VisualStyle => "visual-style",
            EditType::Background => "background",
            EditType::ShapeAttribute => "shape-attribute",
            EditType::ExtremeShape => "extreme-shape",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }

    /// Local, visual-style and background edits change style; the rest change shape.
    pub fn is_style(&self) -> bool {
        matches!(
            self,
            EditType::Local | EditType::VisualStyle | EditType::Background
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionTag {
    Exo,
    Ego,
    EgoExo,
    Occlusion,
    MultiObject,
}

impl MotionTag {
    pub const ALL: [MotionTag; 5] = [
        MotionTag::Exo,
        MotionTag::Ego,
        MotionTag::EgoExo,
        MotionTag::Occlusion,
        MotionTag::MultiObject,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MotionTag::Exo => "exo",
            MotionTag::Ego => "ego",
            MotionTag::EgoExo => "ego-exo",
            MotionTag::Occlusion => "occlusion",
            MotionTag::MultiObject => "multi-object",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub text: String,
    pub edit_type: EditType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub source: String,
    pub frame_count: usize,
    pub resolution: Resolution,
    #[serde(default)]
    pub motion_tags: Vec<MotionTag>,
    pub prompts: Vec<PromptEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub version: String,
    pub entries: Vec<VideoEntry>,
}

/// A problem at a JSON-pointer location in the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub pointer: String,
    pub message: String,
}

impl Issue {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pointer, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Validation {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Semantic checks on a structurally valid manifest. Reports every problem,
/// not just the first.
pub fn validate(manifest: &DatasetManifest) -> Validation {
    let mut out = Validation::default();
    let mut first_seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        let at = format!("/entries/{i}");
        if entry.id.is_empty() {
            out.errors
                .push(Issue::new(format!("{at}/id"), "id is empty"));
        } else if let Some(&j) = first_seen.get(entry.id.as_str()) {
            out.errors.push(Issue::new(
                format!("{at}/id"),
                format!(
                    "duplicate id `{}`: entries {j} and {i} (/entries/{j}/id)",
                    entry.id
                ),
            ));
        } else {
            first_seen.insert(&entry.id, i);
        }
        if entry.frame_count == 0 {
            out.errors.push(Issue::new(
                format!("{at}/frame_count"),
                "frame_count must be at least 1",
            ));
        } else if !LENGTH_BUCKETS.contains(&entry.frame_count) {
            out.warnings.push(Issue::new(
                format!("{at}/frame_count"),
                format!(
                    "frame_count {} is outside the 8/36/90 length buckets",
                    entry.frame_count
                ),
            ));
        }
        if entry.resolution.width == 0 || entry.resolution.height == 0 {
            out.errors.push(Issue::new(
                format!("{at}/resolution"),
                "resolution must be positive",
            ));
        }
        if entry.prompts.is_empty() {
            out.errors.push(Issue::new(
                format!("{at}/prompts"),
                "at least one prompt is required",
            ));
        }
        for (p, prompt) in entry.prompts.iter().enumerate() {
            if prompt.text.trim().is_empty() {
                out.errors.push(Issue::new(
                    format!("{at}/prompts/{p}/text"),
                    "prompt text is empty",
                ));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub videos: usize,
    /// Text–video pairs: the total prompt count over all videos.
    pub pairs: usize,
    /// Videos per frame count.
    pub videos_by_length: BTreeMap<usize, usize>,
    /// Pairs per frame count.
    pub pairs_by_length: BTreeMap<usize, usize>,
    pub pairs_by_edit_type: BTreeMap<EditType, usize>,
    pub videos_by_motion: BTreeMap<MotionTag, usize>,
    pub style_pairs: usize,
    pub shape_pairs: usize,
}

pub fn summarize(manifest: &DatasetManifest) -> Summary {
    let mut s = Summary::default();
    for entry in &manifest.entries {
        s.videos += 1;
        s.pairs += entry.prompts.len();
        *s.videos_by_length.entry(entry.frame_count).or_default() += 1;
        *s.pairs_by_length.entry(entry.frame_count).or_default() += entry.prompts.len();
        for prompt in &entry.prompts {
            *s.pairs_by_edit_type.entry(prompt.edit_type).or_default() += 1;
            if prompt.edit_type.is_style() {
                s.style_pairs += 1;
            } else {
                s.shape_pairs += 1;
            }
        }
        let mut tags = entry.motion_tags.clone();
        tags.sort();
        tags.dedup();
        for tag in tags {
            *s.videos_by_motion.entry(tag).or_default() += 1;
        }
    }
    s
}
