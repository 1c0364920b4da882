//! Frame directories: one 8-bit RGB image per frame, ordered by file name.
//!
//! Pixels map to `[-1, 1]` via `v / 127.5 − 1`; saving rounds back to the
//! nearest 8-bit level, so a save/load round trip is exact for frames that
//! came from disk and within `0.5 / 127.5` otherwise.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::imageops::FilterType;
use image::{Rgb, RgbImage};
use rave_core::video::{Frame, Video};
use rave_core::{Shape, Tensor};

use crate::error::{Error, Result};

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// `WxH`, as taken by `--resolution`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
        let parse = |v: &str| match v.trim().parse::<u32>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("`{v}` is not a positive integer in `{s}`")),
        };
        Ok(Self {
            width: parse(w)?,
            height: parse(h)?,
        })
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:04}.png")
}

/// Image files directly inside `dir`, in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Err(Error::Missing(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(Error::io(dir))? {
        let path = entry.map_err(Error::io(dir))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn image_to_frame(img: &RgbImage) -> Frame {
    let shape = Shape::new(img.height() as usize, img.width() as usize, 3);
    Tensor::from_fn(shape, |y, x, c| {
        img.get_pixel(x as u32, y as u32)[c] as f64 / 127.5 - 1.0
    })
}

fn quantize(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Three channels map to RGB; a single channel is replicated to gray.
pub fn frame_to_image(frame: &Frame) -> Result<RgbImage> {
    let channels = frame.channels();
    if channels != 1 && channels != 3 {
        return Err(Error::Format(format!(
            "cannot write a {channels}-channel frame as RGB"
        )));
    }
    Ok(RgbImage::from_fn(
        frame.width() as u32,
        frame.height() as u32,
        |x, y| {
            let at = |c: usize| quantize(frame.get(y as usize, x as usize, c.min(channels - 1)));
            Rgb([at(0), at(1), at(2)])
        },
    ))
}

/// Loads a frame directory, bilinearly resizing to `target` when given.
pub fn load_frames(dir: &Path, target: Option<Resolution>) -> Result<Video> {
    let files = list_frames(dir)?;
    if files.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    let mut frames = Vec::with_capacity(files.len());
    let mut size = None;
    for path in &files {
        let mut img = image::open(path).map_err(Error::image(path))?.to_rgb8();
        match target {
            Some(t) if (img.width(), img.height()) != (t.width, t.height) => {
                img = image::imageops::resize(&img, t.width, t.height, FilterType::Triangle);
            }
            Some(_) => {}
            None => {
                let (w, h) = *size.get_or_insert((img.width(), img.height()));
                if (img.width(), img.height()) != (w, h) {
                    return Err(Error::InconsistentSize {
                        path: path.clone(),
                        width: w,
                        height: h,
                        actual_width: img.width(),
                        actual_height: img.height(),
                    });
                }
            }
        }
        frames.push(image_to_frame(&img));
    }
    Ok(Video::new(frames)?)
}

/// Writes `frame_0000.png`, `frame_0001.png`, ... into `dir`, creating it if
/// needed. Higher-numbered frame files left over from a longer video are
/// removed so the directory loads back as exactly this video.
pub fn save_frames(video: &Video, dir: &Path) -> Result<Vec<PathBuf>> {
    write_frames(video.frames(), dir)
}

pub(crate) fn write_frames(frames: &[Frame], dir: &Path) -> Result<Vec<PathBuf>> {
    if frames.is_empty() {
        return Err(rave_core::Error::EmptyVideo.into());
    }
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut written = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let path = dir.join(frame_name(i));
        frame_to_image(frame)?
            .save(&path)
            .map_err(Error::image(&path))?;
        written.push(path);
    }
    let mut stale = frames.len();
    loop {
        let path = dir.join(frame_name(stale));
        if !path.exists() {
            break;
        }
        fs::remove_file(&path).map_err(Error::io(&path))?;
        stale += 1;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_parses_both_separators() {
        assert_eq!(
            "512x320".parse::<Resolution>().unwrap(),
            Resolution {
                width: 512,
                height: 320
            }
        );
        assert_eq!("64X48".parse::<Resolution>().unwrap().height, 48);
        assert!("512".parse::<Resolution>().is_err());
        assert!("0x4".parse::<Resolution>().is_err());
    }

    #[test]
    fn names_are_zero_padded() {
        assert_eq!(frame_name(0), "frame_0000.png");
        assert_eq!(frame_name(123), "frame_0123.png");
    }

    #[test]
    fn pixel_mapping_hits_both_ends() {
        let img = RgbImage::from_fn(2, 1, |x, _| {
            if x == 0 {
                Rgb([0, 0, 0])
            } else {
                Rgb([255, 255, 255])
            }
        });
        let frame = image_to_frame(&img);
        assert_eq!(frame.get(0, 0, 0), -1.0);
        assert_eq!(frame.get(0, 1, 2), 1.0);
        assert_eq!(frame_to_image(&frame).unwrap(), img);
    }
}
