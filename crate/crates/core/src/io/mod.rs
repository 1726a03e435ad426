//! File formats and the scorer client.

pub mod evf;
pub mod frames;
pub mod scorer;
pub mod sidecar;

pub use evf::{read_event_file, write_event_file, EventFile};
pub use frames::{image_to_frame, list_frame_files, read_frame, read_frames, write_pgm, FrameSet};
pub use scorer::{fetch_scores, FallbackScorer, FrameRef, RemoteScorer, RetryPolicy, SimilarityScorer, SCORER_URL_ENV};
pub use sidecar::{
    read_attention_sidecar, read_json, read_score_sidecar, to_json_bytes, write_json, AttentionSidecar, ScoreSidecar,
};
