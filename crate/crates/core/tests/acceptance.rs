//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints its `[PASS]`/`[FAIL]` line on each `cargo test`; exits non-zero if
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evstu_core::event::{events_between, square_grid, LogFrame};
use evstu_core::io::{read_attention_sidecar, read_frames, read_score_sidecar, to_json_bytes, EventFile, ScoreSidecar};
use evstu_core::pipeline::{RunInputs, RunOptions, ScorerMode};
use evstu_core::sampler::coarse_target;
use evstu_core::{
    allocate_budgets, cumulative_sample, event_density, patch_density, prune_frame, run, simulate_event_frame,
    split_ratios, AttentionSummary, CoarseStrategy, DensitySeries, Error, EventFrame, Frame, FrameBudget, PatchGrid,
    PruningConfig, RunConfig, SimConfig,
};

// Pinned tolerances and limits.
const SPLIT_IDENTITY_TOL: f64 = 1e-12;
const SPLIT_PAIRS: usize = 100_000;
const SPLIT_TIME_LIMIT: Duration = Duration::from_secs(1);
const CS_SEQUENCES: usize = 10_000;
const CS_MAX_LEN: usize = 200;
const SIM_PAIRS: usize = 10_000;
const PRUNE_FRAMES: usize = 1_000;
const PRUNE_MAX_TOKENS: usize = 64;
const DETERMINISM_RERUNS: usize = 5;
const THROUGHPUT_FRAMES: usize = 600;
const THROUGHPUT_WIDTH: usize = 346;
const THROUGHPUT_HEIGHT: usize = 260;
const THROUGHPUT_LIMIT: Duration = Duration::from_secs(5);
const FUZZ_CASES: usize = 10_000;

static FAILURES: AtomicUsize = AtomicUsize::new(0);

fn report(name: &str, ok: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        FAILURES.fetch_add(1, Ordering::SeqCst);
    }
}

// ---------------------------------------------------------------------------

fn split_composition_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE02);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..SPLIT_PAIRS {
        let k_t: f64 = rng.gen_range(0.0..1.0);
        let k_p: f64 = rng.gen_range(0.0..1.0);
        let (p, s) = split_ratios(k_t, k_p).unwrap();
        worst = worst.max(((1.0 - p) * (1.0 - s) - (1.0 - k_t)).abs());
    }
    let elapsed = start.elapsed();
    report(
        "split-ratio composition identity",
        worst <= SPLIT_IDENTITY_TOL && elapsed < SPLIT_TIME_LIMIT,
        &format!("{SPLIT_PAIRS} pairs, max |err| = {worst:.2e}, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------------

fn random_normalized(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

fn noisy_video(rng: &mut ChaCha8Rng, frames: usize, w: usize, h: usize) -> Vec<Frame> {
    (0..frames)
        .map(|t| Frame::new(t, w, h, (0..w * h).map(|_| rng.gen_range(0.0f32..=1.0)).collect()).unwrap())
        .collect()
}

fn budget_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0D6E7);
    let n = 196;
    let mut checked = 0;
    let mut failures = Vec::new();
    for &k in &[0.3, 0.5, 0.7] {
        for &fine in &[4usize, 8, 32] {
            let cfg = PruningConfig {
                ratio: k,
                physics_cap: 0.25,
                base_retained: 0.05,
                tokens_per_frame: n,
            };
            let target = ((fine * n) as f64 * (1.0 - k)).round() as usize;
            for _ in 0..50 {
                let s = random_normalized(&mut rng, fine);
                let idx: Vec<usize> = (0..fine).collect();
                let b = allocate_budgets(&idx, &s, &cfg).unwrap();
                let total: usize = b.iter().map(|f| f.retained).sum();
                checked += 1;
                if total != target {
                    failures.push(format!("K={k} M_f={fine}: {total} != {target}"));
                }
            }

            // Through the pipeline: every frame survives coarse sampling, the
            // sidecar's random scores drive fine sampling and allocation.
            let frames = noisy_video(&mut rng, 2 * fine + 1, 28, 28);
            let sidecar = ScoreSidecar {
                question: "q".into(),
                frame_indices: (0..frames.len()).collect(),
                scores: (0..frames.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let mut rc = RunConfig {
                pruning: cfg,
                ..Default::default()
            };
            rc.sampling.rate = 1.0;
            rc.sampling.fine_count = fine;
            rc.sampling.coarse_strategy = CoarseStrategy::Uni;
            rc.scorer.mode = ScorerMode::SidecarFile;
            rc.scorer.sidecar = Some("scores.json".into());
            let inputs = RunInputs {
                scorer: Some(&sidecar),
                ..RunInputs::new(&frames)
            };
            let m = run(&rc, &inputs, "q", RunOptions::default()).unwrap().manifest;
            let slack = 1.0 / (fine * n) as f64;
            if m.selection.fine_indices.len() != fine
                || m.totals.tokens_out != target
                || (m.token_ratio - (1.0 - k)).abs() > slack
            {
                failures.push(format!(
                    "manifest K={k} M_f={fine}: frames {} tokens {} ratio {}",
                    m.selection.fine_indices.len(),
                    m.totals.tokens_out,
                    m.token_ratio
                ));
            }
        }
    }
    report(
        "budget conservation",
        failures.is_empty(),
        &format!("{checked} allocations + 9 manifests; failures: {failures:?}"),
    );
}

// ---------------------------------------------------------------------------

/// Literal transcription of the cumulative sampling listing, with the
/// sampling rate held as the exact fraction `num / den`.
fn cumulative_oracle(e: &[f64], num: usize, den: usize) -> Vec<usize> {
    let m_minus_1 = e.len();
    let ceil = (m_minus_1 * num).div_ceil(den);
    let mut sum = 0.0;
    for t in 1..=m_minus_1 {
        sum += e[t - 1];
    }
    let tau = sum / ceil as f64;
    let mut a = 0.0;
    let mut indices = Vec::new();
    for t in 1..=m_minus_1 {
        #[allow(clippy::assign_op_pattern)]
        {
            a = a + e[t - 1];
        }
        if a >= tau {
            indices.push(t);
            a = 0.0;
        }
    }
    indices
}

fn random_densities(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = rng.gen_range(1..=CS_MAX_LEN);
    let style = rng.gen_range(0..4);
    (0..len)
        .map(|_| match style {
            0 => rng.gen_range(0.0..10.0),
            1 => f64::from(rng.gen_range(0u32..5)),
            2 => {
                if rng.gen_bool(0.1) {
                    rng.gen_range(0.0..100.0)
                } else {
                    0.0
                }
            }
            _ => rng.gen_range(0.0..1.0f64).powi(4) * 50.0,
        })
        .collect()
}

fn cumulative_sampling_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA161);
    let mut mismatches = 0;
    let mut over_budget = 0;
    let mut cases = 0;
    while cases < CS_SEQUENCES {
        let e = random_densities(&mut rng);
        let den = rng.gen_range(1..=100usize);
        let num = rng.gen_range(1..=den);
        let rate = num as f64 / den as f64;
        let series = DensitySeries::new(e.clone()).unwrap();
        if e.iter().sum::<f64>() == 0.0 {
            assert!(matches!(cumulative_sample(&series, rate), Err(Error::EmptySelection)));
            continue;
        }
        cases += 1;
        let got = cumulative_sample(&series, rate).unwrap();
        if got != cumulative_oracle(&e, num, den) {
            mismatches += 1;
        }
        if got.len() > (e.len() * num).div_ceil(den) || coarse_target(e.len(), rate) != (e.len() * num).div_ceil(den) {
            over_budget += 1;
        }
    }
    let traces = [
        (vec![1.0, 1.0, 1.0], 1.0, vec![1, 2, 3]),
        (vec![1.0; 4], 0.5, vec![2, 4]),
        (vec![5.0, 0.0, 0.0, 0.0, 5.0], 0.4, vec![1, 5]),
    ];
    let traces_ok = traces
        .iter()
        .all(|(e, rate, want)| &cumulative_sample(&DensitySeries::new(e.clone()).unwrap(), *rate).unwrap() == want);
    report(
        "cumulative sampling oracle equivalence",
        mismatches == 0 && over_budget == 0 && traces_ok,
        &format!("{cases} sequences, {mismatches} mismatches, {over_budget} over budget, hand traces ok = {traces_ok}"),
    );
}

// ---------------------------------------------------------------------------

fn pixel(index: usize, v: f32) -> Frame {
    Frame::new(index, 1, 1, vec![v]).unwrap()
}

fn count(prev: f32, curr: f32, cfg: &SimConfig) -> u16 {
    simulate_event_frame(&pixel(0, prev), &pixel(1, curr), cfg)
        .unwrap()
        .counts()[0]
}

fn simulation_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5117);
    let mut failures = Vec::new();

    let still = noisy_video(&mut rng, 1, 64, 48).remove(0);
    let ev = simulate_event_frame(&still, &still.clone().with_index(1), &SimConfig::default()).unwrap();
    if ev.counts().iter().any(|&c| c != 0) {
        failures.push("identical frames produced events".to_string());
    }

    let fixture = SimConfig {
        gamma: 2.2,
        c_p: 0.2,
        c_n: 0.3,
        eps: 1e-5,
    };
    let (up, down) = (count(0.25, 0.5, &fixture), count(0.5, 0.25, &fixture));
    if (up, down) != (7, 5) {
        failures.push(format!("scalar fixtures gave ({up}, {down}), expected (7, 5)"));
    }

    let mut symmetry_violations = 0;
    let mut monotonic_violations = 0;
    for _ in 0..SIM_PAIRS {
        let c: f64 = rng.gen_range(0.01..1.0);
        let cfg = SimConfig {
            gamma: rng.gen_range(0.5..3.0),
            c_p: c,
            c_n: c,
            eps: 1e-5,
        };
        let p: f32 = rng.gen_range(0.0..=1.0);
        let q: f32 = rng.gen_range(0.0..=1.0);
        if count(p, q, &cfg) != count(q, p, &cfg) {
            symmetry_violations += 1;
        }

        // Moving the current intensity further from `prev` on the same side
        // increases |dL|.
        let asym = SimConfig {
            c_n: rng.gen_range(0.01..1.0),
            ..cfg
        };
        let near: f32 = rng.gen_range(0.0..=1.0);
        let far = if near >= p {
            rng.gen_range(near..=1.0)
        } else {
            rng.gen_range(0.0..=near)
        };
        if count(p, far, &asym) < count(p, near, &asym) {
            monotonic_violations += 1;
        }
    }
    if symmetry_violations + monotonic_violations > 0 {
        failures.push(format!(
            "{symmetry_violations} symmetry / {monotonic_violations} monotonicity violations"
        ));
    }
    report(
        "simulation correctness",
        failures.is_empty(),
        &format!("{SIM_PAIRS} random pixel pairs; failures: {failures:?}"),
    );
}

// ---------------------------------------------------------------------------

fn brute_force_prune(saliency: &[u64], attention: &[f64], n1: usize, n2: usize) -> (Vec<usize>, Vec<usize>) {
    let mut by_saliency: Vec<usize> = (0..saliency.len()).collect();
    by_saliency.sort_by(|&a, &b| saliency[b].cmp(&saliency[a]).then(a.cmp(&b)));
    by_saliency.truncate(n1);
    let mut survivors = by_saliency.clone();
    survivors.sort_by(|&a, &b| attention[b].partial_cmp(&attention[a]).unwrap().then(a.cmp(&b)));
    survivors.truncate(n2);
    by_saliency.sort_unstable();
    survivors.sort_unstable();
    (by_saliency, survivors)
}

fn pruning_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9121E);
    let mut mismatches = 0;
    let mut invariant_violations = 0;
    for _ in 0..PRUNE_FRAMES {
        let n = rng.gen_range(1..=PRUNE_MAX_TOKENS);
        // Small value ranges force plenty of ties.
        let saliency: Vec<u64> = (0..n).map(|_| rng.gen_range(0..8)).collect();
        let attention: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0u32..6)) / 8.0).collect();
        let n1 = rng.gen_range(0..=n);
        let n2 = rng.gen_range(0..=n1);
        let grid = PatchGrid {
            rows: 1,
            cols: n,
            sums: saliency.clone(),
        };
        let budget = FrameBudget {
            frame_index: 0,
            s_norm: 1.0,
            retained: n2,
            pruning_ratio: 1.0 - n2 as f64 / n as f64,
            physics_ratio: 0.0,
            semantic_ratio: 0.0,
            physics_kept: n1,
        };
        let summary = AttentionSummary {
            frame_index: 0,
            scores: attention.clone(),
        };
        let mask = prune_frame(&grid, Some(&summary), &budget).unwrap();
        let (physics, semantic) = brute_force_prune(&saliency, &attention, n1, n2);
        if mask.kept_indices() != semantic {
            mismatches += 1;
        }
        let nested = mask.kept_indices().iter().all(|i| physics.contains(i));
        if !nested || mask.popcount() != n2 || mask.keep.len() != n {
            invariant_violations += 1;
        }
    }
    report(
        "pruning oracle equivalence",
        mismatches == 0 && invariant_violations == 0,
        &format!("{PRUNE_FRAMES} frames, {mismatches} mismatches, {invariant_violations} invariant violations"),
    );
}

// ---------------------------------------------------------------------------

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/video40")
}

fn fixture_manifest_bytes(workers: usize) -> (Vec<u8>, evstu_core::RunManifest) {
    let dir = fixture_dir();
    let config: RunConfig = evstu_core::io::read_json(dir.join("config.json")).unwrap();
    let frames = read_frames(dir.join("frames")).unwrap();
    let scores = read_score_sidecar(dir.join("scores.json")).unwrap();
    let attention = read_attention_sidecar(dir.join("attention.json")).unwrap();
    let inputs = RunInputs {
        scorer: Some(&scores),
        attention: Some(&attention),
        ..RunInputs::new(&frames.frames)
    };
    let m = run(&config, &inputs, &scores.question, RunOptions { workers })
        .unwrap()
        .manifest;
    (to_json_bytes(&m), m)
}

fn fixture_run_is_deterministic() {
    let (reference, m) = fixture_manifest_bytes(1);
    let mut identical = true;
    for workers in [1, 4] {
        for _ in 0..DETERMINISM_RERUNS {
            identical &= fixture_manifest_bytes(workers).0 == reference;
        }
    }
    let shape_ok = m.selection.coarse_indices.len() <= coarse_target(39, 0.25)
        && m.selection.fine_indices.len() == 4
        && m.totals.tokens_out == 392;
    report(
        "determinism",
        identical && shape_ok,
        &format!(
            "{} reruns x workers {{1, 4}} byte-identical = {identical}; coarse {:?}, fine {:?}, tokens_out {}",
            DETERMINISM_RERUNS, m.selection.coarse_indices, m.selection.fine_indices, m.totals.tokens_out
        ),
    );
}

// ---------------------------------------------------------------------------

fn throughput_frame(t: usize) -> Frame {
    let (w, h) = (THROUGHPUT_WIDTH, THROUGHPUT_HEIGHT);
    let x0 = (t * 3) % w;
    let px = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if x >= x0 && x < x0 + 24 && y > h / 3 && y < 2 * h / 3 {
                0.85
            } else {
                0.15 + 0.5 * ((x + y + t) % 64) as f32 / 64.0
            }
        })
        .collect();
    Frame::new(t, w, h, px).unwrap()
}

fn throughput_soft_target() {
    let frames: Vec<Frame> = (0..THROUGHPUT_FRAMES).map(throughput_frame).collect();
    let sim = SimConfig::default();
    let cfg = PruningConfig::default();
    let (rows, cols) = square_grid(cfg.tokens_per_frame);
    let budget = allocate_budgets(&[0], &[1.0], &cfg).unwrap().remove(0);

    let start = Instant::now();
    let mut prev = LogFrame::new(&frames[0], &sim);
    let mut kept = 0usize;
    let mut density = 0.0;
    for frame in &frames[1..] {
        let curr = LogFrame::new(frame, &sim);
        let ev = events_between(&prev, &curr, &sim).unwrap();
        density += event_density(&ev);
        let grid = patch_density(&ev, rows, cols).unwrap();
        kept += prune_frame(&grid, None, &budget).unwrap().popcount();
        prev = curr;
    }
    let elapsed = start.elapsed();
    report(
        "throughput (soft target)",
        elapsed < THROUGHPUT_LIMIT && kept == budget.retained * (THROUGHPUT_FRAMES - 1) && density > 0.0,
        &format!("{THROUGHPUT_FRAMES} frames at {THROUGHPUT_WIDTH}x{THROUGHPUT_HEIGHT} in {elapsed:?} (limit {THROUGHPUT_LIMIT:?})"),
    );
}

// ---------------------------------------------------------------------------

fn random_event_file(rng: &mut ChaCha8Rng) -> EventFile {
    let (w, h, n) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(0..4));
    let frames = (0..n)
        .map(|k| EventFrame::new(k + 1, w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap())
        .collect();
    EventFile::new(w, h, frames).unwrap()
}

fn mutate(rng: &mut ChaCha8Rng, mut bytes: Vec<u8>) -> Vec<u8> {
    match rng.gen_range(0..5) {
        0 => {
            let len = rng.gen_range(0..=bytes.len());
            bytes.truncate(len);
        }
        1 if !bytes.is_empty() => {
            for _ in 0..rng.gen_range(1..4) {
                let at = rng.gen_range(0..bytes.len());
                bytes[at] ^= 1 << rng.gen_range(0..8);
            }
        }
        2 if bytes.len() >= 16 => {
            let at = 4 + 4 * rng.gen_range(0..3);
            let v: u32 = if rng.gen_bool(0.5) {
                rng.gen()
            } else {
                rng.gen_range(0..8)
            };
            bytes[at..at + 4].copy_from_slice(&v.to_le_bytes());
        }
        3 => bytes.extend((0..rng.gen_range(1..8)).map(|_| rng.gen::<u8>())),
        _ => {
            let len = rng.gen_range(0..48);
            bytes = (0..len).map(|_| rng.gen()).collect();
            if rng.gen_bool(0.5) && bytes.len() >= 4 {
                bytes[..4].copy_from_slice(b"EVF1");
            }
        }
    }
    bytes
}

fn event_file_format_robustness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let mut panics = 0;
    let mut bad_rejections = 0;
    let mut lossy = 0;
    for _ in 0..FUZZ_CASES {
        let file = random_event_file(&mut rng);
        let bytes = file.encode();
        match EventFile::decode(&bytes) {
            Ok(back) if back == file && back.encode() == bytes => {}
            _ => lossy += 1,
        }
        let fuzzed = mutate(&mut rng, bytes);
        match catch_unwind(AssertUnwindSafe(|| EventFile::decode(&fuzzed))) {
            Err(_) => panics += 1,
            Ok(Ok(decoded)) => {
                if decoded.encode() != fuzzed {
                    lossy += 1;
                }
            }
            Ok(Err(Error::Format { offset, .. })) if offset as usize <= fuzzed.len() => {}
            Ok(Err(_)) => bad_rejections += 1,
        }
    }
    report(
        "format robustness",
        panics == 0 && bad_rejections == 0 && lossy == 0,
        &format!(
            "{FUZZ_CASES} fuzzed inputs: {panics} panics, {bad_rejections} rejections without offset, {lossy} lossy"
        ),
    );
}

fn main() {
    let criteria: [(&str, fn()); 8] = [
        ("split-ratio composition identity", split_composition_identity),
        ("budget conservation", budget_conservation),
        (
            "cumulative sampling oracle equivalence",
            cumulative_sampling_matches_oracle,
        ),
        ("simulation correctness", simulation_correctness),
        ("pruning oracle equivalence", pruning_matches_brute_force),
        ("determinism", fixture_run_is_deterministic),
        ("throughput (soft target)", throughput_soft_target),
        ("format robustness", event_file_format_robustness),
    ];
    for (name, criterion) in criteria {
        if catch_unwind(criterion).is_err() {
            println!("[FAIL] {name}: panicked before reporting");
            FAILURES.fetch_add(1, Ordering::SeqCst);
        }
    }
    let failed = FAILURES.load(Ordering::SeqCst);
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
