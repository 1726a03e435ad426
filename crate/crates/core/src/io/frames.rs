//! Loading frame directories.
//!
//! Frames are ordered by file name, so sequences should use zero-padded
//! indices (`frame_000.pgm`, `frame_001.pgm`, ...). 8-bit grayscale and RGB
//! PGM/PPM/PNG files are accepted; RGB is converted to BT.601 luma.

use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::event::{to_intensity, Frame, Plane};

const EXTENSIONS: &[&str] = &["pgm", "ppm", "pnm", "png"];

/// Frames read from a directory together with their source paths.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub paths: Vec<PathBuf>,
    pub frames: Vec<Frame>,
}

/// Image files in `dir`, sorted lexicographically by file name.
pub fn list_frame_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if path.is_file() && is_image {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

pub fn image_to_frame(index: usize, image: &DynamicImage) -> Result<Frame> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    match image {
        DynamicImage::ImageLuma8(gray) => Frame::new(
            index,
            w,
            h,
            gray.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect(),
        ),
        DynamicImage::ImageRgb8(rgb) => {
            let channel = |c: usize| {
                Plane::new(
                    w,
                    h,
                    rgb.as_raw()
                        .iter()
                        .skip(c)
                        .step_by(3)
                        .map(|&v| f32::from(v) / 255.0)
                        .collect(),
                )
            };
            to_intensity(index, &channel(0)?, &channel(1)?, &channel(2)?)
        }
        other => Err(Error::Input(format!(
            "unsupported pixel format {:?}; expected 8-bit grayscale or RGB",
            other.color()
        ))),
    }
}

pub fn read_frame(index: usize, path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let image = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Input(format!("{}: {other}", path.display())),
    })?;
    image_to_frame(index, &image).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Read every frame in `dir`; all frames must share one size.
pub fn read_frames(dir: impl AsRef<Path>) -> Result<FrameSet> {
    let dir = dir.as_ref();
    let paths = list_frame_files(dir)?;
    if paths.is_empty() {
        return Err(Error::Input(format!("no frame images in {}", dir.display())));
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        let frame = read_frame(i, path)?;
        if let Some(first) = frames.first() {
            if (frame.width(), frame.height()) != (first.width(), first.height()) {
                return Err(Error::Input(format!(
                    "{} is {}x{}, expected {}x{} like {}",
                    path.display(),
                    frame.width(),
                    frame.height(),
                    first.width(),
                    first.height(),
                    paths[0].display()
                )));
            }
        }
        frames.push(frame);
    }
    Ok(FrameSet { paths, frames })
}

/// Write a frame as an 8-bit binary PGM, rounding intensities to the nearest level.
pub fn write_pgm(path: impl AsRef<Path>, frame: &Frame) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    bytes.extend(frame.intensities().iter().map(|&v| (v * 255.0).round() as u8));
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
