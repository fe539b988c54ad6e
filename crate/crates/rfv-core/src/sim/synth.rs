//! Synthetic "human video" bank generation: expert runs re-rendered with a
//! hand cursor, plus ground-truth mid-level annotations (silhouette mask
//! at the contact keyframe, smoothed cursor trajectory).

use crate::bank::{AffordanceMask, Bank, BankEntry, HandTrajectory, Narration, TrajPoint, VideoClip};
use crate::error::{Error, Result};
use crate::midlevel::{smooth_trajectory, DEFAULT_SMOOTHING_LAMBDA};
use crate::retriever::{embed_text, EmbedderConfig};
use crate::rng::Rng64;

use super::expert::run_expert;
use super::render::{render_hand_view, render_object_silhouette};
use super::world::{generate_task, SimConfig, TaskSpec, TaskType, WorldState};

const MAX_CLIP_FRAMES: usize = 12;

/// Contact step: first state where the target object is held, or (push)
/// first state with the hand touching the object.
fn contact_step(states: &[WorldState], cfg: &SimConfig, task: TaskType) -> usize {
    match task {
        TaskType::Push | TaskType::Reach => {
            for (i, s) in states.iter().enumerate() {
                let o = &s.objects[0];
                let d = ((o.x - s.effector_x).powi(2) + (o.y - s.effector_y).powi(2)).sqrt();
                if d <= o.size + cfg.effector_radius + 0.02 {
                    return i;
                }
            }
            0
        }
        _ => states.iter().position(|s| s.objects[0].held).unwrap_or(0),
    }
}

/// Subsample step indices to at most `MAX_CLIP_FRAMES`, always keeping the
/// keyframe and the final state, with at least 4 samples at or after the
/// keyframe (the smoothing spline needs them).
fn sample_steps(total: usize, keyframe: usize) -> Vec<usize> {
    let mut picks: Vec<usize> = Vec::new();
    let stride = (total.max(1) + MAX_CLIP_FRAMES - 1) / MAX_CLIP_FRAMES;
    let mut i = 0;
    while i < total {
        picks.push(i);
        i += stride.max(1);
    }
    for must in [keyframe, total - 1] {
        if !picks.contains(&must) {
            picks.push(must);
        }
    }
    // densify after the keyframe if the tail is too sparse for the spline
    let mut tail: Vec<usize> = picks.iter().copied().filter(|&s| s >= keyframe).collect();
    let mut extra = 1usize;
    while tail.len() < 4 && tail.len() < total - keyframe {
        let candidate = keyframe + extra;
        if candidate < total && !picks.contains(&candidate) {
            picks.push(candidate);
            tail.push(candidate);
        }
        extra += 1;
    }
    picks.sort_unstable();
    picks.dedup();
    picks
}

/// Generate `n_per_task` annotated human-video entries per task spec.
/// Narrations reuse the instruction templates; embeddings are precomputed
/// with the supplied embedder.
pub fn synthesize_human_bank(
    specs: &[TaskSpec],
    n_per_task: usize,
    seed: u64,
    cfg: &SimConfig,
    embedder: &EmbedderConfig,
) -> Result<Bank> {
    let mut bank = Bank::new(Some(embedder.dim));
    let mut rng = Rng64::new(seed ^ 0x6261_6e6b);
    for (ti, spec) in specs.iter().enumerate() {
        let mut made = 0usize;
        let mut attempt = 0u64;
        while made < n_per_task {
            let episode_seed = rng.next_u64() ^ attempt;
            attempt += 1;
            if attempt > n_per_task as u64 * 20 {
                return Err(Error::ExpertFailure(format!(
                    "task {ti}: too many rejected expert runs"
                )));
            }
            let (state, instruction) = generate_task(spec, episode_seed);
            let Ok(trace) = run_expert(&state, spec, cfg) else {
                continue; // re-seed on unreachable configurations
            };

            let keyframe_step = contact_step(&trace.states, cfg, spec.task_type);
            let picks = sample_steps(trace.states.len(), keyframe_step);
            if picks.len() < 4 {
                continue;
            }
            let keyframe_index = picks.iter().position(|&s| s == keyframe_step).unwrap();
            // trajectory window: from the keyframe when the tail is long
            // enough for the spline, padded backwards otherwise (contact
            // near the clip end leaves too few post-contact samples)
            let traj_from = keyframe_index.min(picks.len() - 4);

            let (w, h) = (cfg.render_width, cfg.render_height);
            let frames = picks
                .iter()
                .map(|&s| render_hand_view(&trace.states[s], "front", w, h))
                .collect();

            // cursor pixel path over the trajectory window, then smoothed
            let raw_points: Vec<TrajPoint> = picks
                .iter()
                .enumerate()
                .skip(traj_from)
                .map(|(frame, &s)| TrajPoint {
                    frame,
                    x: trace.states[s].effector_x * w as f64,
                    y: trace.states[s].effector_y * h as f64,
                })
                .collect();
            if raw_points.len() < 4 {
                continue;
            }
            let raw = HandTrajectory { points: raw_points, smoothed: false };
            let mut trajectory = smooth_trajectory(&raw, DEFAULT_SMOOTHING_LAMBDA)?;
            // clamp smoothing overshoot into the validation margin
            let margin = 0.05 * w.min(h) as f64;
            for p in &mut trajectory.points {
                p.x = p.x.clamp(-margin, w as f64 + margin);
                p.y = p.y.clamp(-margin, h as f64 + margin);
            }

            let silhouette =
                render_object_silhouette(&trace.states[keyframe_step], 0, w, h);
            if silhouette.iter().all(|&p| p == 0) {
                continue;
            }
            let mask = AffordanceMask::from_bitmap(keyframe_index, w, h, &silhouette);

            let narration = Narration { text: instruction.clone(), indoor: true };
            let embedding: Vec<f32> = embed_text(&narration.text, embedder)?
                .values
                .iter()
                .map(|&v| v as f32)
                .collect();

            let entry_id = format!("t{ti}-{}-{made:03}", spec.task_type.label());
            bank.add_entry(BankEntry {
                entry_id: entry_id.clone(),
                narration,
                clip: VideoClip {
                    clip_id: format!("{entry_id}-clip"),
                    frames,
                    fps: 10.0,
                    view_id: None,
                },
                mask,
                trajectory,
                embedding: Some(embedding),
                frame_features: None,
            })?;
            made += 1;
        }
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::super::world::default_suite;
    use super::*;

    #[test]
    fn synthesized_entries_pass_bank_invariants() {
        let cfg = SimConfig::default();
        let specs = default_suite(&cfg);
        let embedder = EmbedderConfig { dim: 32 };
        let bank = synthesize_human_bank(&specs[..2], 3, 7, &cfg, &embedder).unwrap();
        assert_eq!(bank.len(), 6);
        for entry in bank.entries() {
            // re-validate explicitly (add_entry already did)
            entry.validate(Some(32), 0.05).unwrap();
            assert!(entry.narration.indoor);
            assert!(entry.trajectory.smoothed);
            assert!(entry.mask.keyframe_index < entry.clip.frames.len());
        }
    }

    #[test]
    fn trajectory_starts_inside_mask_bounding_box_neighborhood() {
        // the hand grasps the object at the keyframe, so the trajectory
        // start must fall inside (or within a hand-width of) the mask bbox
        let cfg = SimConfig::default();
        let specs = default_suite(&cfg);
        let embedder = EmbedderConfig { dim: 32 };
        let bank = synthesize_human_bank(&specs[1..2], 4, 11, &cfg, &embedder).unwrap();
        for entry in bank.entries() {
            let bitmap = entry.mask.to_bitmap().unwrap();
            let w = entry.mask.width;
            let mut min_x = usize::MAX;
            let mut max_x = 0usize;
            let mut min_y = usize::MAX;
            let mut max_y = 0usize;
            for (i, &px) in bitmap.iter().enumerate() {
                if px != 0 {
                    let (x, y) = (i % w, i / w);
                    min_x = min_x.min(x);
                    max_x = max_x.max(x);
                    min_y = min_y.min(y);
                    max_y = max_y.max(y);
                }
            }
            let start = &entry.trajectory.points[0];
            let pad = 0.06 * w as f64; // grasp tolerance in pixels
            assert!(
                start.x >= min_x as f64 - pad
                    && start.x <= max_x as f64 + 1.0 + pad
                    && start.y >= min_y as f64 - pad
                    && start.y <= max_y as f64 + 1.0 + pad,
                "trajectory start ({}, {}) outside mask bbox [{min_x},{max_x}]x[{min_y},{max_y}]",
                start.x,
                start.y
            );
        }
    }

    #[test]
    fn entry_count_scales_with_specs_and_per_task() {
        let cfg = SimConfig::default();
        let specs = default_suite(&cfg);
        let embedder = EmbedderConfig { dim: 16 };
        let bank = synthesize_human_bank(&specs, 2, 3, &cfg, &embedder).unwrap();
        assert_eq!(bank.len(), specs.len() * 2);
    }
}
