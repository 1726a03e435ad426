use std::path::{Path, PathBuf};
use std::time::Duration;

use evstu_core::event::square_grid;
use evstu_core::io::{
    list_frame_files, read_attention_sidecar, read_event_file, read_frames, read_json, read_score_sidecar,
    write_event_file, write_json, AttentionSidecar, EventFile, FallbackScorer, RemoteScorer, SimilarityScorer,
};
use evstu_core::pipeline::{coarse_select, fine_select, unscored_select, EventSource, FrameRecord, ScorerMode};
use evstu_core::{
    allocate_budgets, attention_summarize, event_density, normalize_scores, patch_density, prune_frame, run,
    simulate_sequence, EventFrame, PatchLayout, RunConfig, RunInputs, RunManifest, RunOptions, SimConfig,
};
use serde_json::json;

use crate::args::{DensityArgs, EventArgs, PruneArgs, RunArgs, SampleArgs, SimArgs, SimulateArgs, VizArgs};
use crate::error::{as_config, CliError, CliResult};
use crate::output::Output;
use crate::viz::{self, OverlayStyle};

fn sim_config(args: &SimArgs) -> CliResult<SimConfig> {
    let mut cfg = SimConfig::default();
    if let Some(v) = args.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = args.cp {
        cfg.c_p = v;
    }
    if let Some(v) = args.cn {
        cfg.c_n = v;
    }
    if let Some(v) = args.eps {
        cfg.eps = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Event frames from an EVF1 file or simulated from a frame directory.
fn load_events(args: &EventArgs) -> CliResult<Vec<EventFrame>> {
    match (&args.events, &args.frames) {
        (Some(path), _) => Ok(read_event_file(path)?.frames),
        (None, Some(dir)) => {
            let cfg = sim_config(&args.sim)?;
            let set = read_frames(dir)?;
            Ok(simulate_sequence(&set.frames, &cfg)?)
        }
        (None, None) => unreachable!("clap requires --events or --frames"),
    }
}

/// Loads and validates a run config. Relative paths inside it are resolved
/// against the config file's directory; the returned config keeps them as written.
fn load_config(path: &Path) -> CliResult<(RunConfig, PathBuf)> {
    let cfg: RunConfig = read_json(path).map_err(as_config)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn simulate(args: &SimulateArgs, out: &Output) -> CliResult<()> {
    let cfg = sim_config(&args.sim)?;
    let set = read_frames(&args.frames)?;
    let events = simulate_sequence(&set.frames, &cfg)?;
    let (w, h) = (set.frames[0].width(), set.frames[0].height());
    let total: u64 = events.iter().map(EventFrame::total).sum();
    let file = EventFile::new(w, h, events)?;
    write_event_file(&args.out, &file)?;
    out.line(
        &json!({
            "frames_in": set.frames.len(),
            "event_frames": file.frames.len(),
            "width": w,
            "height": h,
            "total_events": total,
            "out": args.out.display().to_string(),
        }),
        || {
            format!(
                "{} event frames ({w}x{h}, {total} events) -> {}",
                file.frames.len(),
                args.out.display()
            )
        },
    );
    Ok(())
}

pub fn density(args: &DensityArgs, out: &Output) -> CliResult<()> {
    let events = load_events(&args.input)?;
    let grid = args.tokens.map(square_grid);
    for ev in &events {
        let d = event_density(ev);
        let patches = match grid {
            Some((rows, cols)) => Some(patch_density(ev, rows, cols)?.sums),
            None => None,
        };
        out.line(
            &json!({ "frame": ev.index(), "events": ev.total(), "density": d, "patches": patches }),
            || match &patches {
                Some(p) => format!("{}\t{}\t{d}\t{}", ev.index(), ev.total(), join(p)),
                None => format!("{}\t{}\t{d}", ev.index(), ev.total()),
            },
        );
    }
    Ok(())
}

pub fn sample(args: &SampleArgs, out: &Output) -> CliResult<()> {
    let events = load_events(&args.input)?;
    let mut cfg = evstu_core::SamplingConfig {
        rate: args.rate,
        fine_count: args.fine_count,
        coarse_strategy: args.coarse.into(),
        fine_strategy: args.fine.into(),
    };
    cfg.validate()?;
    let densities = evstu_core::DensitySeries::new(events.iter().map(event_density).collect())?;
    let (coarse, fallback) = coarse_select(&densities, &cfg)?;
    let selection = match &args.scores {
        Some(path) => {
            let sidecar = read_score_sidecar(path)?;
            fine_select(&coarse, &sidecar.lookup(&coarse)?, &cfg)?
        }
        None => {
            cfg.fine_count = cfg.fine_count.min(coarse.len());
            unscored_select(&coarse, &cfg)?
        }
    };
    out.line(
        &json!({
            "coarse_fallback": fallback,
            "coarse_indices": selection.coarse_indices,
            "fine_indices": selection.fine_indices,
            "raw_scores": selection.raw_scores,
            "norm_scores": selection.norm_scores,
        }),
        || {
            format!(
                "coarse {}{}\nfine {}",
                join(&selection.coarse_indices),
                if fallback { " (uniform fallback)" } else { "" },
                join(&selection.fine_indices)
            )
        },
    );
    Ok(())
}

pub fn prune(args: &PruneArgs, out: &Output) -> CliResult<()> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?.0.pruning,
        None => evstu_core::PruningConfig::default(),
    };
    if let Some(v) = args.ratio {
        cfg.ratio = v;
    }
    if let Some(v) = args.physics_cap {
        cfg.physics_cap = v;
    }
    if let Some(v) = args.base_retained {
        cfg.base_retained = v;
    }
    if let Some(v) = args.tokens {
        cfg.tokens_per_frame = v;
    }
    cfg.validate()?;

    let events = load_events(&args.input)?;
    if events.is_empty() {
        return Err(CliError::input("no event frames to prune against"));
    }
    let mut keyframes = args.keyframes.clone();
    keyframes.sort_unstable();
    keyframes.dedup();
    if let Some(&t) = keyframes.iter().find(|&&t| t > events.len()) {
        return Err(CliError::input(format!(
            "keyframe {t} is past the last frame ({})",
            events.len()
        )));
    }
    let s = match &args.scores {
        Some(path) => normalize_scores(&read_score_sidecar(path)?.lookup(&keyframes)?)?,
        None => vec![1.0 / keyframes.len() as f64; keyframes.len()],
    };
    let attention = args.attention.as_deref().map(read_attention_sidecar).transpose()?;

    let n = cfg.tokens_per_frame;
    let (rows, cols) = square_grid(n);
    let budgets = allocate_budgets(&keyframes, &s, &cfg)?;
    for budget in budgets {
        let ev = &events[budget.frame_index.max(1) - 1];
        let saliency = patch_density(ev, rows, cols)?;
        let summary = match &attention {
            Some(a) => Some(attention_summarize(
                budget.frame_index,
                &a.matrix_for(budget.frame_index, n)?,
            )?),
            None => None,
        };
        let mask = prune_frame(&saliency, summary.as_ref(), &budget)?;
        let record = FrameRecord {
            mask: mask.to_bit_string(),
            budget,
        };
        out.line(&record, || {
            format!(
                "{}\tretained {}\tphysics_kept {}\t{}",
                record.budget.frame_index, record.budget.retained, record.budget.physics_kept, record.mask
            )
        });
    }
    Ok(())
}

struct Prepared {
    config: RunConfig,
    frames: evstu_core::io::FrameSet,
    uris: Vec<String>,
    events: Option<Vec<EventFrame>>,
    scorer: Option<Box<dyn SimilarityScorer>>,
    attention: Option<AttentionSidecar>,
}

fn prepare(args: &RunArgs) -> CliResult<Prepared> {
    let (mut config, base) = load_config(&args.config)?;
    if let Some(url) = &args.scorer_url {
        config.scorer.endpoint = Some(url.clone());
    }
    if args.events.is_some() && config.event_source != EventSource::RealFrames {
        log::info!("--events given; using real event frames");
        config.event_source = EventSource::RealFrames;
    }
    config.validate()?;

    let frames = read_frames(&args.frames)?;
    let uris = frames.paths.iter().map(|p| p.display().to_string()).collect();
    let events = args
        .events
        .as_deref()
        .map(|p| read_event_file(p).map(|f| f.frames))
        .transpose()?;

    let sidecar = config
        .scorer
        .sidecar
        .as_deref()
        .map(|p| resolve(&base, p))
        .filter(|p| config.scorer.mode == ScorerMode::SidecarFile || p.exists())
        .map(read_score_sidecar)
        .transpose()?;
    if let Some(s) = &sidecar {
        if s.question != args.question {
            log::warn!("score sidecar was computed for question {:?}", s.question);
        }
    }
    let scorer: Option<Box<dyn SimilarityScorer>> = match config.scorer.mode {
        ScorerMode::None => None,
        ScorerMode::SidecarFile => sidecar.map(|s| Box::new(s) as Box<dyn SimilarityScorer>),
        ScorerMode::RemoteService => {
            let endpoint = config.scorer.endpoint.clone().expect("validated");
            let remote = RemoteScorer::new(
                endpoint,
                Duration::from_millis(config.scorer.timeout_ms),
                config.scorer.retry,
            );
            Some(match sidecar {
                Some(fallback) => Box::new(FallbackScorer {
                    primary: remote,
                    fallback,
                }),
                None => Box::new(remote),
            })
        }
    };
    let attention = config
        .attention
        .as_deref()
        .map(|p| read_attention_sidecar(resolve(&base, p)))
        .transpose()?;
    Ok(Prepared {
        config,
        frames,
        uris,
        events,
        scorer,
        attention,
    })
}

fn execute(args: &RunArgs) -> CliResult<evstu_core::RunOutput> {
    let p = prepare(args)?;
    let inputs = RunInputs {
        frames: &p.frames.frames,
        frame_uris: Some(&p.uris),
        events: p.events.as_deref(),
        scorer: p.scorer.as_deref(),
        attention: p.attention.as_ref(),
    };
    Ok(run(
        &p.config,
        &inputs,
        &args.question,
        RunOptions { workers: args.workers },
    )?)
}

fn summary(m: &RunManifest) -> serde_json::Value {
    json!({
        "frames_in": m.totals.frames_in,
        "frames_coarse": m.totals.frames_coarse,
        "frames_kept": m.totals.frames_out,
        "tokens_out": m.totals.tokens_out,
        "tokens_full": m.totals.tokens_full,
        "token_ratio": m.token_ratio,
        "flops_ratio": m.flops_ratio,
    })
}

fn summary_text(m: &RunManifest) -> String {
    format!(
        "frames kept {} of {}, tokens_out {}, token_ratio {:.6}, flops_ratio {:.6}",
        m.totals.frames_out, m.totals.frames_in, m.totals.tokens_out, m.token_ratio, m.flops_ratio
    )
}

pub fn run_cmd(args: &RunArgs, manifest: &Path, out: &Output) -> CliResult<()> {
    let result = execute(args)?;
    write_json(manifest, &result.manifest)?;
    out.line(&summary(&result.manifest), || summary_text(&result.manifest));
    Ok(())
}

pub fn stats(args: &RunArgs, manifest: Option<&Path>, out: &Output) -> CliResult<()> {
    let result = execute(args)?;
    if let Some(path) = manifest {
        write_json(path, &result.manifest)?;
    }
    let mut total = Duration::ZERO;
    for (stage, elapsed) in &result.timings.stages {
        eprintln!("{stage:<10} {:>10.3} ms", elapsed.as_secs_f64() * 1e3);
        total += *elapsed;
    }
    eprintln!("{:<10} {:>10.3} ms", "total", total.as_secs_f64() * 1e3);
    out.line(&summary(&result.manifest), || summary_text(&result.manifest));
    Ok(())
}

pub fn viz(args: &VizArgs, out: &Output) -> CliResult<()> {
    let manifest: RunManifest = read_json(&args.manifest)?;
    let layout = PatchLayout::new(
        manifest.frame_width,
        manifest.frame_height,
        manifest.grid_rows,
        manifest.grid_cols,
    )?;
    let paths = list_frame_files(&args.frames)?;
    let style = OverlayStyle {
        dim: args.dim,
        outline: !args.no_outline,
    };
    if !(0.0..=1.0).contains(&style.dim) {
        return Err(CliError::config(format!("--dim must be in [0, 1], got {}", style.dim)));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::input(format!("{}: {e}", args.out.display())))?;

    for mask in manifest.masks()? {
        let t = mask.frame_index;
        let src = paths.get(t).ok_or_else(|| {
            CliError::input(format!(
                "manifest keyframe {t} but {} holds {} frames",
                args.frames.display(),
                paths.len()
            ))
        })?;
        let image = image::open(src).map_err(|e| CliError::input(format!("{}: {e}", src.display())))?;
        let overlay = viz::render(&image, &layout, &mask, style)
            .map_err(|e| CliError::input(format!("{}: {e}", src.display())))?;
        let dest = args.out.join(format!("keyframe_{t:06}.png"));
        overlay
            .save_with_format(&dest, image::ImageFormat::Png)
            .map_err(|e| CliError::input(format!("{}: {e}", dest.display())))?;
        out.line(
            &json!({ "frame": t, "kept": mask.popcount(), "tokens": mask.keep.len(), "out": dest.display().to_string() }),
            || format!("{t}\t{}/{}\t{}", mask.popcount(), mask.keep.len(), dest.display()),
        );
    }
    Ok(())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}
