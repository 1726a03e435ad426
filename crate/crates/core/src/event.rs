//! Frames, event frames, and the frame-differencing event simulator.
//!
//! Intensities are stored gamma-encoded in `[0, 1]`. The simulator
//! linearizes them with `I^gamma`, takes the natural log, and converts the
//! per-pixel log change into positive/negative event counts using the
//! contrast thresholds. Counts from both polarities are summed and saturate
//! at `u16::MAX`, matching the on-disk EVF1 format.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on a stored per-pixel event count.
pub const MAX_COUNT: u16 = u16::MAX;

/// One color channel (or any scalar field) as a row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "plane must be non-empty, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "plane {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }
}

/// A grayscale video frame with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    index: usize,
    intensities: Vec<f32>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, intensities: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "frame must be non-empty, got {width}x{height}"
            )));
        }
        if intensities.len() != width * height {
            return Err(Error::Dimension(format!(
                "frame {width}x{height} needs {} intensities, got {}",
                width * height,
                intensities.len()
            )));
        }
        if let Some(pos) = intensities.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "frame {index}: non-finite intensity at pixel {pos}"
            )));
        }
        if let Some(pos) = intensities.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input(format!(
                "frame {index}: intensity {} at pixel {pos} outside [0, 1]",
                intensities[pos]
            )));
        }
        Ok(Self {
            width,
            height,
            index,
            intensities,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn intensities(&self) -> &[f32] {
        &self.intensities
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }
}

/// Per-pixel event counts accumulated between frames `index - 1` and `index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFrame {
    width: usize,
    height: usize,
    index: usize,
    counts: Vec<u16>,
}

impl EventFrame {
    pub fn new(index: usize, width: usize, height: usize, counts: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "event frame must be non-empty, got {width}x{height}"
            )));
        }
        if counts.len() != width * height {
            return Err(Error::Dimension(format!(
                "event frame {width}x{height} needs {} counts, got {}",
                width * height,
                counts.len()
            )));
        }
        Ok(Self {
            width,
            height,
            index,
            counts,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn counts(&self) -> &[u16] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Event simulator parameters. Thresholds are in natural-log units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub gamma: f64,
    pub c_p: f64,
    pub c_n: f64,
    pub eps: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gamma: 2.2,
            c_p: 0.2,
            c_n: 0.2,
            eps: 1e-5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("c_p", self.c_p),
            ("c_n", self.c_n),
            ("eps", self.eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("sim.{name} must be finite and > 0, got {v}")));
            }
        }
        if self.eps >= 1.0 {
            return Err(Error::Config(format!("sim.eps must be < 1, got {}", self.eps)));
        }
        Ok(())
    }

    #[inline]
    fn log_intensity(&self, intensity: f32) -> f64 {
        self.gamma * f64::from(intensity).clamp(self.eps, 1.0).ln()
    }

    #[inline]
    fn count(&self, delta: f64) -> u16 {
        let positive = (delta.max(0.0) / self.c_p).floor();
        let negative = ((-delta).max(0.0) / self.c_n).floor();
        // f64 -> u16 casts saturate; non-finite deltas were rejected upstream.
        (positive + negative).min(f64::from(MAX_COUNT)) as u16
    }
}

/// Linearized log intensity of one frame, reusable across both pairs it joins.
#[derive(Debug, Clone)]
pub struct LogFrame {
    width: usize,
    height: usize,
    index: usize,
    values: Vec<f64>,
}

impl LogFrame {
    pub fn new(frame: &Frame, cfg: &SimConfig) -> Self {
        Self {
            width: frame.width,
            height: frame.height,
            index: frame.index,
            values: frame.intensities.iter().map(|&i| cfg.log_intensity(i)).collect(),
        }
    }
}

/// Luma (BT.601) from three equally sized channels.
pub fn to_intensity(index: usize, red: &Plane, green: &Plane, blue: &Plane) -> Result<Frame> {
    let (w, h) = (red.width, red.height);
    for (name, p) in [("green", green), ("blue", blue)] {
        if p.width != w || p.height != h || p.values.len() != red.values.len() {
            return Err(Error::Dimension(format!(
                "{name} channel is {}x{}, red is {w}x{h}",
                p.width, p.height
            )));
        }
    }
    let intensities = red
        .values
        .iter()
        .zip(&green.values)
        .zip(&blue.values)
        .map(|((&r, &g), &b)| {
            let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
            if y.is_finite() {
                y.clamp(0.0, 1.0) as f32
            } else {
                f32::NAN
            }
        })
        .collect();
    Frame::new(index, w, h, intensities)
}

fn check_pair(
    prev_index: usize,
    prev_dims: (usize, usize),
    curr_index: usize,
    curr_dims: (usize, usize),
) -> Result<()> {
    if prev_dims != curr_dims {
        return Err(Error::Dimension(format!(
            "frame {prev_index} is {}x{} but frame {curr_index} is {}x{}",
            prev_dims.0, prev_dims.1, curr_dims.0, curr_dims.1
        )));
    }
    if curr_index != prev_index + 1 {
        return Err(Error::Input(format!(
            "frames {prev_index} and {curr_index} are not consecutive"
        )));
    }
    Ok(())
}

/// Events between two already-linearized frames.
pub fn events_between(prev: &LogFrame, curr: &LogFrame, cfg: &SimConfig) -> Result<EventFrame> {
    check_pair(
        prev.index,
        (prev.width, prev.height),
        curr.index,
        (curr.width, curr.height),
    )?;
    let counts = prev
        .values
        .iter()
        .zip(&curr.values)
        .map(|(&lp, &lc)| cfg.count(lc - lp))
        .collect();
    Ok(EventFrame {
        width: curr.width,
        height: curr.height,
        index: curr.index,
        counts,
    })
}

/// Simulate the event frame `E_t` between `F_{t-1}` and `F_t`.
pub fn simulate_event_frame(prev: &Frame, curr: &Frame, cfg: &SimConfig) -> Result<EventFrame> {
    cfg.validate()?;
    check_pair(
        prev.index,
        (prev.width, prev.height),
        curr.index,
        (curr.width, curr.height),
    )?;
    events_between(&LogFrame::new(prev, cfg), &LogFrame::new(curr, cfg), cfg)
}

/// Simulate all `M - 1` event frames of a sequence, linearizing each frame once.
pub fn simulate_sequence(frames: &[Frame], cfg: &SimConfig) -> Result<Vec<EventFrame>> {
    cfg.validate()?;
    let logs: Vec<LogFrame> = frames.iter().map(|f| LogFrame::new(f, cfg)).collect();
    logs.windows(2).map(|w| events_between(&w[0], &w[1], cfg)).collect()
}

/// Parallel variant of [`simulate_sequence`]; runs on the current rayon pool
/// and returns the same frames in the same order.
pub fn simulate_sequence_par(frames: &[Frame], cfg: &SimConfig) -> Result<Vec<EventFrame>> {
    cfg.validate()?;
    let logs: Vec<LogFrame> = frames.par_iter().map(|f| LogFrame::new(f, cfg)).collect();
    logs.par_windows(2).map(|w| events_between(&w[0], &w[1], cfg)).collect()
}

/// Mean event count per pixel.
pub fn event_density(ev: &EventFrame) -> f64 {
    ev.total() as f64 / (ev.width * ev.height) as f64
}

/// Maps pixels onto a `rows x cols` patch grid. Each patch spans
/// `height / rows` by `width / cols` pixels; leftover rows and columns are
/// folded into the last patch row and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLayout {
    pub width: usize,
    pub height: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchLayout {
    pub fn new(width: usize, height: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "patch grid must be non-empty, got {rows}x{cols}"
            )));
        }
        if rows > height || cols > width {
            return Err(Error::Dimension(format!(
                "patch grid {rows}x{cols} (rows x cols) exceeds frame {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            rows,
            cols,
        })
    }

    pub fn tokens(&self) -> usize {
        self.rows * self.cols
    }

    pub fn patch_row(&self, y: usize) -> usize {
        (y / (self.height / self.rows)).min(self.rows - 1)
    }

    pub fn patch_col(&self, x: usize) -> usize {
        (x / (self.width / self.cols)).min(self.cols - 1)
    }

    /// Raster token index of the patch containing pixel `(x, y)`.
    pub fn token_at(&self, x: usize, y: usize) -> usize {
        self.patch_row(y) * self.cols + self.patch_col(x)
    }
}

/// Per-patch event totals in raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub sums: Vec<u64>,
}

impl PatchGrid {
    pub fn tokens(&self) -> usize {
        self.sums.len()
    }
}

pub fn patch_density(ev: &EventFrame, grid_rows: usize, grid_cols: usize) -> Result<PatchGrid> {
    let layout = PatchLayout::new(ev.width, ev.height, grid_rows, grid_cols)?;
    let col_of: Vec<usize> = (0..ev.width).map(|x| layout.patch_col(x)).collect();
    let mut sums = vec![0u64; layout.tokens()];
    for (y, row) in ev.counts.chunks_exact(ev.width).enumerate() {
        let base = layout.patch_row(y) * grid_cols;
        for (&c, &col) in row.iter().zip(&col_of) {
            sums[base + col] += u64::from(c);
        }
    }
    Ok(PatchGrid {
        rows: grid_rows,
        cols: grid_cols,
        sums,
    })
}

/// Most nearly square `rows x cols` factorization of `tokens` with `rows <= cols`.
pub fn square_grid(tokens: usize) -> (usize, usize) {
    let mut rows = (tokens as f64).sqrt() as usize;
    while rows > 1 && !tokens.is_multiple_of(rows) {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, tokens / rows)
}
