//! Regenerates the committed 40-frame fixture under `tests/fixtures/video40`.
//!
//! cargo run -p evstu-core --example make_fixture

use std::path::Path;

use evstu_core::io::{write_json, write_pgm, AttentionSidecar, ScoreSidecar};
use evstu_core::Frame;

const SIZE: usize = 56;
const FRAMES: usize = 40;
const TOKENS: usize = 196;

/// Square position at frame `t`: fast sweep, pause, slow drift back.
fn square_origin(t: usize) -> (usize, usize) {
    match t {
        0..=4 => (4, 4),
        5..=15 => (4 + 3 * (t - 4), 4 + (t - 4)),
        16..=25 => (37, 15),
        _ => (37 - (t - 25), 15 + (t - 25)),
    }
}

fn frame(t: usize) -> Frame {
    let (sx, sy) = square_origin(t);
    let px = (0..SIZE * SIZE)
        .map(|i| {
            let (x, y) = (i % SIZE, i / SIZE);
            let level = if (sx..sx + 10).contains(&x) && (sy..sy + 10).contains(&y) {
                230
            } else {
                40 + (x + 2 * y) as u32
            };
            level as f32 / 255.0
        })
        .collect();
    Frame::new(t, SIZE, SIZE, px).unwrap()
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/video40");
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).unwrap();
    for t in 0..FRAMES {
        write_pgm(frames_dir.join(format!("frame_{t:03}.pgm")), &frame(t)).unwrap();
    }

    let scores = ScoreSidecar {
        question: "Where does the bright square stop moving?".into(),
        frame_indices: (0..FRAMES).collect(),
        scores: (0..FRAMES).map(|t| ((t * 37) % 17) as f64 / 20.0).collect(),
    };
    write_json(dir.join("scores.json"), &scores).unwrap();

    let attention = AttentionSidecar {
        frame_indices: (0..FRAMES).collect(),
        matrices: (0..FRAMES)
            .map(|t| {
                (0..2)
                    .map(|q| {
                        (0..TOKENS)
                            .map(|j| ((j * 7 + q * 13 + t * 3) % 29 + 1) as f64 / 32.0)
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    };
    write_json(dir.join("attention.json"), &attention).unwrap();
    println!("wrote fixture to {}", dir.display());
}
