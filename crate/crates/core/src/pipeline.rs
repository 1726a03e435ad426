//! End-to-end run: events, densities, coarse and fine sampling, budget
//! allocation, and per-frame pruning, summarized in a [`RunManifest`].

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::event::{event_density, patch_density, simulate_sequence_par, square_grid, EventFrame, Frame, SimConfig};
use crate::io::{AttentionSidecar, FrameRef, RetryPolicy, SimilarityScorer};
use crate::pruner::{allocate_budgets, attention_summarize, prune_frame, FrameBudget, PruningConfig, TokenMask};
use crate::sampler::{
    bin_sample, coarse_target, cumulative_sample, normalize_scores, top_density_sample, top_similarity_sample,
    uniform_sample, CoarseStrategy, DensitySeries, FineStrategy, KeyframeSelection, SamplingConfig,
};

pub const MANIFEST_SCHEMA: &str = "evstu-manifest/1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventSource {
    /// Event frames supplied alongside the video.
    RealFrames,
    /// Event frames simulated from consecutive RGB frames.
    #[default]
    Simulate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerMode {
    SidecarFile,
    RemoteService,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    pub mode: ScorerMode,
    /// Score sidecar; also the fallback when the remote service fails.
    pub sidecar: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            mode: ScorerMode::None,
            sidecar: None,
            endpoint: None,
            timeout_ms: 10_000,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruningMode {
    /// Event saliency then attention.
    #[default]
    Full,
    /// Event saliency only.
    PhysicsOnly,
}

/// Abstract prefill cost `c1 * T + c2 * T^2` for `T` visual tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlopsModel {
    pub c1: f64,
    pub c2: f64,
}

impl Default for FlopsModel {
    fn default() -> Self {
        Self { c1: 1.0, c2: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub sampling: SamplingConfig,
    pub pruning: PruningConfig,
    pub pruning_mode: PruningMode,
    pub event_source: EventSource,
    pub scorer: ScorerConfig,
    /// Attention sidecar for the semantic stage.
    pub attention: Option<PathBuf>,
    pub flops_model: FlopsModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            sampling: SamplingConfig::default(),
            pruning: PruningConfig::default(),
            pruning_mode: PruningMode::Full,
            event_source: EventSource::Simulate,
            scorer: ScorerConfig::default(),
            attention: None,
            flops_model: FlopsModel::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.sampling.validate()?;
        self.pruning.validate()?;
        let FlopsModel { c1, c2 } = self.flops_model;
        if !(c1.is_finite() && c2.is_finite() && c1 >= 0.0 && c2 >= 0.0) || (c1 == 0.0 && c2 == 0.0) {
            return Err(Error::Config(format!(
                "flops_model coefficients must be non-negative and not both zero, got ({c1}, {c2})"
            )));
        }
        match self.scorer.mode {
            ScorerMode::SidecarFile if self.scorer.sidecar.is_none() => {
                Err(Error::Config("scorer.mode sidecar-file needs scorer.sidecar".into()))
            }
            ScorerMode::RemoteService if self.scorer.endpoint.is_none() => {
                Err(Error::Config("scorer.mode remote-service needs scorer.endpoint".into()))
            }
            _ => Ok(()),
        }
    }
}

pub fn flops_ratio(tokens_out: usize, tokens_full: usize, c1: f64, c2: f64) -> Result<f64> {
    if tokens_full == 0 {
        return Err(Error::Argument("full token count must be > 0".into()));
    }
    if !(c1 >= 0.0 && c2 >= 0.0) || (c1 == 0.0 && c2 == 0.0) {
        return Err(Error::Config(format!("invalid FLOPs coefficients ({c1}, {c2})")));
    }
    let cost = |t: usize| {
        let t = t as f64;
        c1 * t + c2 * t * t
    };
    Ok(cost(tokens_out) / cost(tokens_full))
}

/// Everything the run consumes besides its config.
pub struct RunInputs<'a> {
    pub frames: &'a [Frame],
    /// Scorer-facing reference per frame (usually its path); defaults to `frame-NNNNNN`.
    pub frame_uris: Option<&'a [String]>,
    pub events: Option<&'a [EventFrame]>,
    pub scorer: Option<&'a dyn SimilarityScorer>,
    pub attention: Option<&'a AttentionSidecar>,
}

impl<'a> RunInputs<'a> {
    pub fn new(frames: &'a [Frame]) -> Self {
        Self {
            frames,
            frame_uris: None,
            events: None,
            scorer: None,
            attention: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(flatten)]
    pub budget: FrameBudget,
    /// `'1'` keeps the token, raster order over the patch grid.
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub frames_in: usize,
    pub frames_coarse: usize,
    pub frames_out: usize,
    pub tokens_full: usize,
    pub tokens_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: String,
    pub input_digest: String,
    pub question: String,
    pub config: RunConfig,
    pub frame_width: usize,
    pub frame_height: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Coarse stage fell back to uniform sampling (no events at all).
    pub coarse_fallback: bool,
    pub pruning_mode: PruningMode,
    pub selection: KeyframeSelection,
    pub frames: Vec<FrameRecord>,
    pub totals: Totals,
    pub token_ratio: f64,
    pub flops_ratio: f64,
}

impl RunManifest {
    pub fn masks(&self) -> Result<Vec<TokenMask>> {
        self.frames
            .iter()
            .map(|f| TokenMask::from_bit_string(f.budget.frame_index, &f.mask))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    pub stages: Vec<(&'static str, Duration)>,
}

impl StageTimings {
    fn record<T>(&mut self, name: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push((name, start.elapsed()));
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker threads for per-frame stages; 0 uses rayon's default.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

/// Coarse stage, with the uniform fallback for event-free input.
pub fn coarse_select(densities: &DensitySeries, cfg: &SamplingConfig) -> Result<(Vec<usize>, bool)> {
    let frames = densities.frame_count();
    let target = coarse_target(densities.len(), cfg.rate);
    match cfg.coarse_strategy {
        CoarseStrategy::Cs => match cumulative_sample(densities, cfg.rate) {
            Ok(picked) => Ok((picked, false)),
            Err(Error::EmptySelection) => Ok((uniform_sample(frames, target.min(frames))?, true)),
            Err(e) => Err(e),
        },
        CoarseStrategy::Uni => Ok((uniform_sample(frames, target.min(frames))?, false)),
        CoarseStrategy::Top => Ok((top_density_sample(densities, target)?, false)),
    }
}

/// Fine stage over scored coarse candidates.
pub fn fine_select(candidates: &[usize], scores: &[f64], cfg: &SamplingConfig) -> Result<KeyframeSelection> {
    let fine = match cfg.fine_strategy {
        FineStrategy::Bin => bin_sample(candidates, scores, cfg.fine_count)?,
        FineStrategy::Top => top_similarity_sample(candidates, scores, cfg.fine_count)?,
    };
    let raw: Vec<f64> = fine
        .iter()
        .map(|f| {
            scores[candidates
                .iter()
                .position(|c| c == f)
                .expect("fine frames come from candidates")]
        })
        .collect();
    let norm = normalize_scores(&raw)?;
    Ok(KeyframeSelection {
        coarse_indices: candidates.to_vec(),
        fine_indices: fine,
        raw_scores: raw,
        norm_scores: norm,
    })
}

/// Fine stage without a scorer: candidates thinned uniformly, equal relevance.
pub fn unscored_select(candidates: &[usize], cfg: &SamplingConfig) -> Result<KeyframeSelection> {
    let fine: Vec<usize> = if candidates.len() <= cfg.fine_count {
        candidates.to_vec()
    } else {
        uniform_sample(candidates.len(), cfg.fine_count)?
            .into_iter()
            .map(|p| candidates[p])
            .collect()
    };
    let n = fine.len();
    Ok(KeyframeSelection {
        coarse_indices: candidates.to_vec(),
        fine_indices: fine,
        raw_scores: vec![0.0; n],
        norm_scores: vec![1.0 / n as f64; n],
    })
}

fn digest_inputs(
    question: &str,
    frames: &[Frame],
    events: Option<&[EventFrame]>,
    candidate_scores: Option<(&[usize], &[f64])>,
    attention: Option<&AttentionSidecar>,
) -> String {
    let mut h = Sha256::new();
    h.update(b"question\0");
    h.update(question.as_bytes());
    h.update(b"\0frames\0");
    for f in frames {
        for v in [f.width(), f.height(), f.index()] {
            h.update((v as u64).to_le_bytes());
        }
        for v in f.intensities() {
            h.update(v.to_le_bytes());
        }
    }
    if let Some(events) = events {
        h.update(b"events\0");
        for e in events {
            for c in e.counts() {
                h.update(c.to_le_bytes());
            }
        }
    }
    if let Some((idx, scores)) = candidate_scores {
        h.update(b"scores\0");
        for (i, s) in idx.iter().zip(scores) {
            h.update((*i as u64).to_le_bytes());
            h.update(s.to_le_bytes());
        }
    }
    if let Some(a) = attention {
        h.update(b"attention\0");
        h.update(serde_json::to_vec(a).expect("serializable sidecar"));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Run the full pipeline.
pub fn run(config: &RunConfig, inputs: &RunInputs<'_>, question: &str, options: RunOptions) -> Result<RunOutput> {
    config.validate()?;
    let frames = inputs.frames;
    if frames.len() < 2 {
        return Err(Error::Input(format!("need at least 2 frames, got {}", frames.len())));
    }
    let (width, height) = (frames[0].width(), frames[0].height());
    if let Some(f) = frames.iter().find(|f| (f.width(), f.height()) != (width, height)) {
        return Err(Error::Input(format!(
            "frame {} is {}x{}, expected {width}x{height}",
            f.index(),
            f.width(),
            f.height()
        )));
    }
    if let Some((i, f)) = frames.iter().enumerate().find(|(i, f)| f.index() != *i) {
        return Err(Error::Input(format!("frame at position {i} has index {}", f.index())));
    }
    let scorer = match config.scorer.mode {
        ScorerMode::None => None,
        _ => Some(inputs.scorer.ok_or_else(|| {
            Error::Config(format!(
                "scorer mode {:?} configured but no scorer available",
                config.scorer.mode
            ))
        })?),
    };

    let n = config.pruning.tokens_per_frame;
    let (grid_rows, grid_cols) = square_grid(n);
    if grid_rows > height || grid_cols > width {
        return Err(Error::Input(format!(
            "{grid_rows}x{grid_cols} token grid does not fit {width}x{height} frames"
        )));
    }

    let pool = build_pool(options.workers)?;
    let mut timings = StageTimings::default();

    let simulated;
    let events: &[EventFrame] = match (config.event_source, inputs.events) {
        (EventSource::Simulate, None) => {
            simulated = timings.record("simulate", || {
                pool.install(|| simulate_sequence_par(frames, &config.sim))
            })?;
            &simulated
        }
        (EventSource::Simulate, Some(_)) => {
            return Err(Error::Config(
                "event frames supplied but event_source is simulate".into(),
            ));
        }
        (EventSource::RealFrames, None) => {
            return Err(Error::Config("event_source real-frames needs an event file".into()));
        }
        (EventSource::RealFrames, Some(events)) => {
            if events.len() != frames.len() - 1 {
                return Err(Error::Input(format!(
                    "{} event frames for {} RGB frames; expected {}",
                    events.len(),
                    frames.len(),
                    frames.len() - 1
                )));
            }
            for (t, e) in events.iter().enumerate() {
                if (e.width(), e.height()) != (width, height) {
                    return Err(Error::Input(format!(
                        "event frame {} is {}x{}, frames are {width}x{height}",
                        t + 1,
                        e.width(),
                        e.height()
                    )));
                }
                if e.index() != t + 1 {
                    return Err(Error::Input(format!(
                        "event frame at position {t} has index {}",
                        e.index()
                    )));
                }
            }
            events
        }
    };

    let densities = timings.record("density", || {
        DensitySeries::new(events.iter().map(event_density).collect())
    })?;
    let (coarse, coarse_fallback) = timings.record("coarse", || coarse_select(&densities, &config.sampling))?;

    let uris: Vec<String> = match inputs.frame_uris {
        Some(uris) if uris.len() == frames.len() => uris.to_vec(),
        Some(uris) => {
            return Err(Error::Input(format!(
                "{} frame references for {} frames",
                uris.len(),
                frames.len()
            )));
        }
        None => (0..frames.len()).map(|i| format!("frame-{i:06}")).collect(),
    };
    let candidate_scores = match scorer {
        Some(scorer) => {
            let refs: Vec<FrameRef> = coarse
                .iter()
                .map(|&i| FrameRef {
                    index: i,
                    uri: uris[i].clone(),
                })
                .collect();
            let scores = timings.record("score", || scorer.score(question, &refs))?;
            if scores.len() != coarse.len() {
                return Err(Error::Protocol(format!(
                    "scorer returned {} scores for {} frames",
                    scores.len(),
                    coarse.len()
                )));
            }
            Some(scores)
        }
        None => None,
    };
    let selection = timings.record("fine", || match &candidate_scores {
        Some(scores) => fine_select(&coarse, scores, &config.sampling),
        None => unscored_select(&coarse, &config.sampling),
    })?;

    let budgets = timings.record("allocate", || {
        allocate_budgets(&selection.fine_indices, &selection.norm_scores, &config.pruning)
    })?;

    let pruning_mode = match (config.pruning_mode, inputs.attention) {
        (PruningMode::Full, Some(_)) => PruningMode::Full,
        _ => PruningMode::PhysicsOnly,
    };
    let attention = inputs.attention.filter(|_| pruning_mode == PruningMode::Full);
    let masks: Vec<TokenMask> = timings.record("prune", || {
        pool.install(|| {
            budgets
                .par_iter()
                .map(|b| {
                    // Frame t pairs with E_t; frame 0 borrows E_1.
                    let ev = &events[b.frame_index.max(1) - 1];
                    let saliency = patch_density(ev, grid_rows, grid_cols)?;
                    let summary = match attention {
                        Some(a) => Some(attention_summarize(b.frame_index, &a.matrix_for(b.frame_index, n)?)?),
                        None => None,
                    };
                    prune_frame(&saliency, summary.as_ref(), b)
                })
                .collect::<Result<Vec<_>>>()
        })
    })?;

    let tokens_full = budgets.len() * n;
    let tokens_out: usize = masks.iter().map(TokenMask::popcount).sum();
    let flops = flops_ratio(tokens_out, tokens_full, config.flops_model.c1, config.flops_model.c2)?;
    let input_digest = digest_inputs(
        question,
        frames,
        inputs.events,
        candidate_scores.as_deref().map(|s| (coarse.as_slice(), s)),
        attention,
    );

    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        version: crate::VERSION.to_string(),
        input_digest,
        question: question.to_string(),
        config: config.clone(),
        frame_width: width,
        frame_height: height,
        grid_rows,
        grid_cols,
        coarse_fallback,
        pruning_mode,
        totals: Totals {
            frames_in: frames.len(),
            frames_coarse: selection.coarse_indices.len(),
            frames_out: selection.fine_indices.len(),
            tokens_full,
            tokens_out,
        },
        selection,
        frames: budgets
            .into_iter()
            .zip(&masks)
            .map(|(budget, m)| FrameRecord {
                budget,
                mask: m.to_bit_string(),
            })
            .collect(),
        token_ratio: tokens_out as f64 / tokens_full as f64,
        flops_ratio: flops,
    };
    Ok(RunOutput { manifest, timings })
}
