use std::fmt;
use std::path::PathBuf;

use rave_core::dataset::Issue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every problem found in a manifest file, in document order.
#[derive(Debug)]
pub struct Issues(pub Vec<Issue>);

impl fmt::Display for Issues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "  {issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{} does not exist", .0.display())]
    Missing(PathBuf),
    #[error("no image frames in {}", .0.display())]
    NoFrames(PathBuf),
    #[error("{} is {actual_width}x{actual_height}, earlier frames are {width}x{height}; pass a target resolution to resize", path.display())]
    InconsistentSize {
        path: PathBuf,
        width: u32,
        height: u32,
        actual_width: u32,
        actual_height: u32,
    },
    #[error("invalid manifest {}:\n{issues}", path.display())]
    Manifest { path: PathBuf, issues: Issues },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] rave_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn image(path: impl Into<PathBuf>) -> impl FnOnce(image::ImageError) -> Error {
        let path = path.into();
        move |source| Error::Image { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }
}
