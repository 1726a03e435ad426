//! EVF1: a flat little-endian container for event-count frames.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EVF1"
//! 4       4     width  (u32 LE)
//! 8       4     height (u32 LE)
//! 12      4     frame_count (u32 LE)
//! 16      ...   frame_count * height * width counts, u16 LE, row-major
//! ```
//!
//! Frames are stored in temporal order; the `k`-th stored frame is `E_{k+1}`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::event::EventFrame;

pub const MAGIC: &[u8; 4] = b"EVF1";
pub const HEADER_LEN: usize = 16;

/// A decoded EVF1 file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFile {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<EventFrame>,
}

impl EventFile {
    pub fn new(width: usize, height: usize, frames: Vec<EventFrame>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("event file dimensions {width}x{height}")));
        }
        if u32::try_from(width).is_err() || u32::try_from(height).is_err() || u32::try_from(frames.len()).is_err() {
            return Err(Error::Dimension("event file header field exceeds u32".into()));
        }
        if let Some(f) = frames.iter().find(|f| f.width() != width || f.height() != height) {
            return Err(Error::Dimension(format!(
                "event frame {} is {}x{}, file is {width}x{height}",
                f.index(),
                f.width(),
                f.height()
            )));
        }
        Ok(Self { width, height, frames })
    }

    /// Build from a non-empty frame list, taking dimensions from the first frame.
    pub fn from_frames(frames: Vec<EventFrame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Argument("no event frames to store".into()))?;
        let (w, h) = (first.width(), first.height());
        Self::new(w, h, frames)
    }

    pub fn encode(&self) -> Vec<u8> {
        let pixels = self.width * self.height;
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * pixels * self.frames.len());
        out.extend_from_slice(MAGIC);
        for v in [self.width, self.height, self.frames.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for f in &self.frames {
            for c in f.counts() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, reason: String| Error::Format {
            offset: offset as u64,
            reason,
        };
        if bytes.len() < HEADER_LEN {
            return Err(fail(
                bytes.len(),
                format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
            ));
        }
        if &bytes[..4] != MAGIC {
            return Err(fail(0, format!("bad magic {:02x?}", &bytes[..4])));
        }
        let field = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice")) as usize;
        let (width, height, count) = (field(4), field(8), field(12));
        if width == 0 {
            return Err(fail(4, "width is zero".into()));
        }
        if height == 0 {
            return Err(fail(8, "height is zero".into()));
        }
        let payload = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(count))
            .and_then(|c| c.checked_mul(2))
            .ok_or_else(|| fail(12, "payload size overflows".into()))?;
        let available = bytes.len() - HEADER_LEN;
        if available < payload {
            // First byte of the first incomplete frame.
            let frame_bytes = 2 * width * height;
            let complete = available / frame_bytes;
            return Err(fail(
                HEADER_LEN + complete * frame_bytes,
                format!("truncated payload: expected {payload} bytes, found {available}"),
            ));
        }
        if available > payload {
            return Err(fail(
                HEADER_LEN + payload,
                format!("{} trailing bytes", available - payload),
            ));
        }

        let pixels = width * height;
        let frames = bytes[HEADER_LEN..]
            .chunks_exact(2 * pixels)
            .enumerate()
            .map(|(k, chunk)| {
                let counts = chunk
                    .chunks_exact(2)
                    .map(|b| u16::from_le_bytes([b[0], b[1]]))
                    .collect();
                EventFrame::new(k + 1, width, height, counts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { width, height, frames })
    }
}

pub fn read_event_file(path: impl AsRef<Path>) -> Result<EventFile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EventFile::decode(&bytes)
}

pub fn write_event_file(path: impl AsRef<Path>, file: &EventFile) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, file.encode()).map_err(|e| Error::io(path, e))
}
