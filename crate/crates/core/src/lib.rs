//! Event-guided preprocessing for video language models.
//!
//! Given a video, its (real or simulated) event frames, and a question, the
//! toolkit picks a small set of non-redundant, question-relevant keyframes
//! and decides which visual tokens of each keyframe to keep under a global
//! token budget. No model weights are involved: similarity scores and
//! attention matrices are inputs.
//!
//! * [`event`]: frames, event simulation, event densities.
//! * [`sampler`]: coarse (event density) and fine (question relevance) keyframe sampling.
//! * [`pruner`]: per-frame budget allocation and two-stage token pruning.
//! * [`pipeline`]: the end-to-end run and its manifest.
//! * [`io`]: EVF1 event files, frame directories, JSON sidecars, scorer client.

pub mod error;
pub mod event;
pub mod io;
pub mod pipeline;
pub mod pruner;
pub mod sampler;

pub use error::{Error, ErrorCategory, Result};
pub use event::{
    event_density, patch_density, simulate_event_frame, simulate_sequence, to_intensity, EventFrame, Frame, PatchGrid,
    PatchLayout, Plane, SimConfig,
};
pub use pipeline::{flops_ratio, run, RunConfig, RunInputs, RunManifest, RunOptions, RunOutput};
pub use pruner::{
    allocate_budgets, attention_summarize, physics_prune, prune_frame, semantic_prune, split_ratios, AttentionMatrix,
    AttentionSummary, FrameBudget, PruningConfig, TokenMask,
};
pub use sampler::{
    bin_sample, cumulative_sample, normalize_scores, top_density_sample, top_similarity_sample, uniform_sample,
    CoarseStrategy, DensitySeries, FineStrategy, KeyframeSelection, SamplingConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
