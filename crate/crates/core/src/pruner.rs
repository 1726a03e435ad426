//! Zero-cost adaptive token pruning.
//!
//! Per-frame budgets come from question relevance: a shared pool of
//! `M_f * N * (1 - K - R)` tokens is split in proportion to the normalized
//! relevance, on top of a floor of `R * N` tokens per frame. Each frame's
//! pruning ratio is then split into a physics stage (event saliency, capped
//! at `K_p`) and a semantic stage (vision-encoder attention).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::PatchGrid;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruningConfig {
    /// Overall pruning ratio `K`.
    pub ratio: f64,
    /// Physics-stage cap `K_p`.
    pub physics_cap: f64,
    /// Base retained ratio `R`.
    pub base_retained: f64,
    /// Tokens per frame `N`.
    pub tokens_per_frame: usize,
}

impl Default for PruningConfig {
    fn default() -> Self {
        Self {
            ratio: 0.5,
            physics_cap: 0.25,
            base_retained: 0.05,
            tokens_per_frame: 196,
        }
    }
}

impl PruningConfig {
    pub fn validate(&self) -> Result<()> {
        let PruningConfig {
            ratio,
            physics_cap,
            base_retained,
            tokens_per_frame,
        } = *self;
        if !(0.0..1.0).contains(&base_retained) {
            return Err(Error::Config(format!(
                "pruning.base_retained must be in [0, 1), got {base_retained}"
            )));
        }
        if !(ratio >= 0.0 && ratio + base_retained < 1.0) {
            return Err(Error::Config(format!(
                "pruning.ratio must satisfy 0 <= K and K + R < 1, got K = {ratio}, R = {base_retained}"
            )));
        }
        if !(0.0..1.0).contains(&physics_cap) {
            return Err(Error::Config(format!(
                "pruning.physics_cap must be in [0, 1), got {physics_cap}"
            )));
        }
        if tokens_per_frame == 0 {
            return Err(Error::Config("pruning.tokens_per_frame must be >= 1".into()));
        }
        Ok(())
    }

    /// Tokens kept across `frames` frames: `round(frames * N * (1 - K))`.
    pub fn global_budget(&self, frames: usize) -> usize {
        ((frames * self.tokens_per_frame) as f64 * (1.0 - self.ratio)).round() as usize
    }
}

/// Token budget for one keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBudget {
    pub frame_index: usize,
    pub s_norm: f64,
    /// Tokens kept after both stages.
    pub retained: usize,
    pub pruning_ratio: f64,
    pub physics_ratio: f64,
    pub semantic_ratio: f64,
    /// Tokens kept after the physics stage.
    pub physics_kept: usize,
}

/// Keep/drop decision per token, raster order over the patch grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMask {
    pub frame_index: usize,
    pub keep: Vec<bool>,
}

impl TokenMask {
    pub fn all(frame_index: usize, tokens: usize) -> Self {
        Self {
            frame_index,
            keep: vec![true; tokens],
        }
    }

    pub fn popcount(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| k)
            .map(|(i, _)| i)
            .collect()
    }

    /// `'1'`/`'0'` per token.
    pub fn to_bit_string(&self) -> String {
        self.keep.iter().map(|&k| if k { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(frame_index: usize, bits: &str) -> Result<Self> {
        let keep = bits
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::Input(format!("invalid mask character {other:?}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { frame_index, keep })
    }
}

/// Query-row attention matrix from the vision encoder's last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    pub queries: usize,
    pub keys: usize,
    pub values: Vec<f64>,
}

impl AttentionMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let keys = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || keys == 0 {
            return Err(Error::Input("attention matrix is empty".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != keys) {
            return Err(Error::Input(format!(
                "attention row {i} has {} keys, expected {keys}",
                rows[i].len()
            )));
        }
        Ok(Self {
            queries: rows.len(),
            keys,
            values: rows.concat(),
        })
    }

    fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.keys)
    }

    fn check_entries(&self) -> Result<()> {
        match self.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            Some(pos) => Err(Error::Input(format!(
                "attention entry ({}, {}) = {} is not finite and non-negative",
                pos / self.keys,
                pos % self.keys,
                self.values[pos]
            ))),
            None => Ok(()),
        }
    }

    /// Drop a leading class-token column and renormalize each row to sum 1.
    pub fn without_class_token(&self) -> Result<Self> {
        self.check_entries()?;
        if self.keys < 2 {
            return Err(Error::Input("attention matrix has no patch columns".into()));
        }
        let keys = self.keys - 1;
        let mut values = Vec::with_capacity(self.queries * keys);
        for row in self.rows() {
            let patches = &row[1..];
            let total: f64 = patches.iter().sum();
            if total > 0.0 {
                values.extend(patches.iter().map(|v| v / total));
            } else {
                values.extend(std::iter::repeat_n(1.0 / keys as f64, keys));
            }
        }
        Ok(Self {
            queries: self.queries,
            keys,
            values,
        })
    }
}

/// Per-token importance: attention averaged over queries.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSummary {
    pub frame_index: usize,
    pub scores: Vec<f64>,
}

pub fn attention_summarize(frame_index: usize, attn: &AttentionMatrix) -> Result<AttentionSummary> {
    attn.check_entries()?;
    let mut scores = vec![0.0; attn.keys];
    for row in attn.rows() {
        for (s, v) in scores.iter_mut().zip(row) {
            *s += v;
        }
    }
    let q = attn.queries as f64;
    scores.iter_mut().for_each(|s| *s /= q);
    Ok(AttentionSummary { frame_index, scores })
}

/// Split a frame pruning ratio into (physics, semantic) stage ratios.
pub fn split_ratios(frame_ratio: f64, physics_cap: f64) -> Result<(f64, f64)> {
    for (name, v) in [("frame ratio", frame_ratio), ("physics cap", physics_cap)] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::Argument(format!("{name} must be in [0, 1), got {v}")));
        }
    }
    if frame_ratio <= physics_cap {
        Ok((frame_ratio, 0.0))
    } else {
        Ok((physics_cap, 1.0 - (1.0 - frame_ratio) / (1.0 - physics_cap)))
    }
}

/// Real-valued retained token counts, capped at `N` with the overflow handed
/// to the remaining frames in proportion to their relevance.
fn retained_targets(s: &[f64], cfg: &PruningConfig) -> Vec<f64> {
    let n = cfg.tokens_per_frame as f64;
    let pool = s.len() as f64 * n * (1.0 - cfg.ratio - cfg.base_retained);
    let mut real: Vec<f64> = s.iter().map(|&si| pool * si + cfg.base_retained * n).collect();
    let mut capped = vec![false; s.len()];

    for _ in 0..s.len() {
        let surplus: f64 = real.iter().map(|&r| (r - n).max(0.0)).sum();
        if surplus <= 0.0 {
            break;
        }
        for (r, c) in real.iter_mut().zip(capped.iter_mut()) {
            if *r >= n {
                *r = n;
                *c = true;
            }
        }
        let open_count = capped.iter().filter(|&&c| !c).count();
        if open_count == 0 {
            break;
        }
        let open_weight: f64 = s.iter().zip(&capped).filter(|(_, &c)| !c).map(|(w, _)| w).sum();
        for ((r, &c), &w) in real.iter_mut().zip(&capped).zip(s) {
            if !c {
                *r += if open_weight > 0.0 {
                    surplus * w / open_weight
                } else {
                    surplus / open_count as f64
                };
            }
        }
    }
    real.into_iter().map(|r| r.clamp(0.0, n)).collect()
}

/// Largest-remainder rounding of `real` to integers summing to `total`,
/// never exceeding `cap`. Remainder ties go to earlier entries.
fn largest_remainder(real: &[f64], total: usize, cap: usize) -> Vec<usize> {
    let mut out: Vec<usize> = real.iter().map(|r| (r.floor() as usize).min(cap)).collect();
    let mut order: Vec<usize> = (0..real.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = real[a] - real[a].floor();
        let fb = real[b] - real[b].floor();
        fb.partial_cmp(&fa).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    let mut assigned: usize = out.iter().sum();
    // A full pass adds at most one token per frame; float slack can need more.
    while assigned < total {
        let before = assigned;
        for &i in &order {
            if assigned == total {
                break;
            }
            if out[i] < cap {
                out[i] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    while assigned > total {
        let before = assigned;
        for &i in order.iter().rev() {
            if assigned == total {
                break;
            }
            if out[i] > 0 {
                out[i] -= 1;
                assigned -= 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    out
}

/// Allocate per-frame budgets from normalized relevance scores.
///
/// `frame_indices` labels the budgets; it must align with `s`.
pub fn allocate_budgets(frame_indices: &[usize], s: &[f64], cfg: &PruningConfig) -> Result<Vec<FrameBudget>> {
    cfg.validate()?;
    if s.is_empty() {
        return Err(Error::Argument("no frames to allocate".into()));
    }
    if frame_indices.len() != s.len() {
        return Err(Error::Argument(format!(
            "{} frame indices for {} scores",
            frame_indices.len(),
            s.len()
        )));
    }
    if let Some(v) = s.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Argument(format!(
            "relevance score {v} is not finite and non-negative"
        )));
    }
    let sum: f64 = s.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Argument(format!("relevance scores sum to {sum}, expected 1")));
    }

    let n = cfg.tokens_per_frame;
    let real = retained_targets(s, cfg);
    let retained = largest_remainder(&real, cfg.global_budget(s.len()), n);

    frame_indices
        .iter()
        .zip(s)
        .zip(retained)
        .map(|((&frame_index, &s_norm), kept)| {
            let pruning_ratio = 1.0 - kept as f64 / n as f64;
            // kept == 0 gives ratio 1, outside the split's domain; clamp just below.
            let (physics_ratio, semantic_ratio) = if kept == 0 {
                (cfg.physics_cap, 1.0)
            } else {
                split_ratios(pruning_ratio, cfg.physics_cap)?
            };
            let physics_kept = (((1.0 - physics_ratio) * n as f64).round() as usize).max(kept);
            Ok(FrameBudget {
                frame_index,
                s_norm,
                retained: kept,
                pruning_ratio,
                physics_ratio,
                semantic_ratio,
                physics_kept,
            })
        })
        .collect()
}

/// Indices of the `keep` highest scores among `candidates`, earliest first on ties.
fn keep_top<T: PartialOrd + Copy>(scores: &[T], candidates: impl Iterator<Item = usize>, keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = candidates.collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(keep);
    order
}

fn mask_from(frame_index: usize, tokens: usize, kept: &[usize]) -> TokenMask {
    let mut keep = vec![false; tokens];
    for &i in kept {
        keep[i] = true;
    }
    TokenMask { frame_index, keep }
}

/// Keep the `keep` tokens whose patches saw the most events.
pub fn physics_prune(frame_index: usize, saliency: &PatchGrid, keep: usize) -> Result<TokenMask> {
    let n = saliency.tokens();
    if keep > n {
        return Err(Error::Argument(format!("cannot keep {keep} of {n} tokens")));
    }
    let kept = keep_top(&saliency.sums, 0..n, keep);
    Ok(mask_from(frame_index, n, &kept))
}

/// Among tokens still kept, keep the `keep` with the highest attention.
pub fn semantic_prune(mask_in: &TokenMask, scores: &AttentionSummary, keep: usize) -> Result<TokenMask> {
    let n = mask_in.keep.len();
    if scores.scores.len() != n {
        return Err(Error::Dimension(format!(
            "attention summary has {} tokens, mask has {n}",
            scores.scores.len()
        )));
    }
    if let Some(s) = scores.scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Input(format!("non-finite attention score {s}")));
    }
    let available = mask_in.popcount();
    if keep > available {
        return Err(Error::Argument(format!(
            "cannot keep {keep} of {available} surviving tokens"
        )));
    }
    let kept = keep_top(&scores.scores, mask_in.kept_indices().into_iter(), keep);
    Ok(mask_from(mask_in.frame_index, n, &kept))
}

/// Two-stage pruning for one frame; with no attention summary only the
/// physics stage runs, straight down to the final budget.
pub fn prune_frame(saliency: &PatchGrid, scores: Option<&AttentionSummary>, budget: &FrameBudget) -> Result<TokenMask> {
    let n = saliency.tokens();
    if !(budget.retained <= budget.physics_kept && budget.physics_kept <= n) {
        return Err(Error::Argument(format!(
            "inconsistent budget for frame {}: retained {} / physics {} / tokens {n}",
            budget.frame_index, budget.retained, budget.physics_kept
        )));
    }
    match scores {
        Some(scores) => {
            let physics = physics_prune(budget.frame_index, saliency, budget.physics_kept)?;
            semantic_prune(&physics, scores, budget.retained)
        }
        None => physics_prune(budget.frame_index, saliency, budget.retained),
    }
}
