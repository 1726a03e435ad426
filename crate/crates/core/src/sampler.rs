//! Coarse-to-fine keyframe sampling.
//!
//! The coarse stage removes temporally redundant frames using event
//! densities; the fine stage picks question-relevant frames among the coarse
//! survivors using externally computed image-text similarity scores.
//!
//! Index conventions: a [`DensitySeries`] holds `e_t` for `t = 1..M-1`, where
//! `e_t` measures the change from frame `t - 1` to frame `t`. Selecting `t`
//! selects RGB frame `t`. All tie-breaks favour the earliest index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when rounding `(M-1) * S` up, so that a rate such as `0.3`
/// stored as `0.30000000000000004` does not add a phantom frame.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySeries {
    values: Vec<f64>,
}

impl DensitySeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((t, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Input(format!(
                "density e_{} = {v} is not a finite non-negative value",
                t + 1
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of RGB frames `M` the series describes.
    pub fn frame_count(&self) -> usize {
        self.values.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CoarseStrategy {
    /// Cumulative sampling over accumulated event density.
    Cs,
    /// Uniform temporal sampling.
    Uni,
    /// Highest event density.
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FineStrategy {
    /// Per-bin similarity argmax.
    Bin,
    /// Global top similarity.
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Coarse sampling rate in `(0, 1]`.
    pub rate: f64,
    /// Number of fine keyframes.
    pub fine_count: usize,
    pub coarse_strategy: CoarseStrategy,
    pub fine_strategy: FineStrategy,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            rate: 0.25,
            fine_count: 32,
            coarse_strategy: CoarseStrategy::Cs,
            fine_strategy: FineStrategy::Bin,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::Config(format!(
                "sampling.rate must be in (0, 1], got {}",
                self.rate
            )));
        }
        if self.fine_count == 0 {
            return Err(Error::Config("sampling.fine_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of both sampling stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSelection {
    pub coarse_indices: Vec<usize>,
    pub fine_indices: Vec<usize>,
    pub raw_scores: Vec<f64>,
    pub norm_scores: Vec<f64>,
}

/// `ceil(len * rate)`, at least one.
pub fn coarse_target(len: usize, rate: f64) -> usize {
    ((len as f64 * rate - CEIL_SLACK).ceil() as usize).max(1)
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("sampling rate must be in (0, 1], got {rate}")))
    }
}

/// Cumulative sampling: emit `t` whenever the density accumulated since the
/// last emission reaches `sum(e) / ceil((M-1) * rate)`.
pub fn cumulative_sample(densities: &DensitySeries, rate: f64) -> Result<Vec<usize>> {
    check_rate(rate)?;
    if densities.is_empty() {
        return Err(Error::Argument("density series is empty".into()));
    }
    let total: f64 = densities.values.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptySelection);
    }
    let tau = total / coarse_target(densities.len(), rate) as f64;

    let mut acc = 0.0;
    let mut picked = Vec::new();
    for (i, &e) in densities.values.iter().enumerate() {
        acc += e;
        if acc >= tau {
            picked.push(i + 1);
            acc = 0.0;
        }
    }
    Ok(picked)
}

/// Evenly spaced frame indices in `0..frame_count`, taking the midpoint of
/// each of `count` equal spans.
pub fn uniform_sample(frame_count: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > frame_count {
        return Err(Error::Argument(format!(
            "uniform sample of {count} from {frame_count} frames"
        )));
    }
    let mut out: Vec<usize> = (0..count).map(|k| (2 * k + 1) * frame_count / (2 * count)).collect();
    out.dedup();
    Ok(out)
}

/// Positions of the `count` largest values, earliest first on ties, sorted.
fn top_positions(values: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(count);
    order.sort_unstable();
    order
}

/// The `count` frames with the highest event density.
pub fn top_density_sample(densities: &DensitySeries, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > densities.len() {
        return Err(Error::Argument(format!(
            "top-density sample of {count} from {} densities",
            densities.len()
        )));
    }
    Ok(top_positions(&densities.values, count)
        .into_iter()
        .map(|i| i + 1)
        .collect())
}

fn check_scores(candidates: &[usize], scores: &[f64], fine_count: usize) -> Result<()> {
    if scores.len() != candidates.len() {
        return Err(Error::Argument(format!(
            "{} scores for {} candidates",
            scores.len(),
            candidates.len()
        )));
    }
    if fine_count == 0 {
        return Err(Error::Argument("fine frame count must be >= 1".into()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Input(format!("non-finite similarity score {s}")));
    }
    Ok(())
}

/// Split `len` items into `bins` contiguous spans, larger spans first.
pub fn bin_bounds(len: usize, bins: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (len / bins, len % bins);
    let mut start = 0;
    (0..bins)
        .map(|b| {
            let size = base + usize::from(b < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

/// Bin sampling: split the candidates temporally into `fine_count` bins and
/// keep the best-scoring candidate of each.
pub fn bin_sample(candidates: &[usize], scores: &[f64], fine_count: usize) -> Result<Vec<usize>> {
    check_scores(candidates, scores, fine_count)?;
    if candidates.len() <= fine_count {
        return Ok(candidates.to_vec());
    }
    let mut picked: Vec<usize> = bin_bounds(candidates.len(), fine_count)
        .into_iter()
        .map(|bin| {
            let best = bin
                .clone()
                .reduce(|best, i| if scores[i] > scores[best] { i } else { best })
                .expect("bins are non-empty when candidates exceed bins");
            candidates[best]
        })
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Global top-`fine_count` by similarity.
pub fn top_similarity_sample(candidates: &[usize], scores: &[f64], fine_count: usize) -> Result<Vec<usize>> {
    check_scores(candidates, scores, fine_count)?;
    let mut picked: Vec<usize> = top_positions(scores, fine_count.min(candidates.len()))
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Shift scores so the minimum becomes `1e-6`, then normalize to sum 1.
pub fn normalize_scores(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Argument("cannot normalize an empty score list".into()));
    }
    if let Some(s) = raw.iter().find(|s| !s.is_finite()) {
        return Err(Error::Input(format!("non-finite similarity score {s}")));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = raw.iter().map(|r| r - min + 1e-6).collect();
    let total: f64 = shifted.iter().sum();
    Ok(shifted.into_iter().map(|s| s / total).collect())
}
