//! Demo dataset persistence: one JSON file per episode plus frame blobs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bank::Frame;
use crate::blob;
use crate::error::{Error, Result};
use crate::policy::RobotObservation;

use super::Demo;

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeFile {
    instruction: String,
    success: bool,
    width: usize,
    height: usize,
    num_steps: usize,
    proprio: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    /// view id -> relative blob path holding num_steps frames
    views: BTreeMap<String, String>,
}

/// Write episodes as `episode_0000.json` (+ blobs) under `dir`.
pub fn save_demos(demos: &[Demo], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, demo) in demos.iter().enumerate() {
        demo.validate()?;
        let first = demo
            .observations
            .first()
            .ok_or_else(|| Error::invariant("demo-empty", "episode has no steps"))?;
        let (mut width, mut height) = (0usize, 0usize);
        let mut views = BTreeMap::new();
        for view in first.frames.keys() {
            let rel = format!("episode_{i:04}_{view}.frames.bin");
            let mut raw = Vec::new();
            for obs in &demo.observations {
                let frame = obs.frames.get(view).ok_or_else(|| {
                    Error::invariant("demo-views", format!("step missing view {view}"))
                })?;
                width = frame.width;
                height = frame.height;
                raw.extend_from_slice(&frame.data);
            }
            blob::write_u8(&dir.join(&rel), &raw)?;
            views.insert(view.clone(), rel);
        }
        let file = EpisodeFile {
            instruction: demo.instruction.clone(),
            success: demo.success,
            width,
            height,
            num_steps: demo.observations.len(),
            proprio: demo.observations.iter().map(|o| o.proprio.clone()).collect(),
            actions: demo.actions.clone(),
            views,
        };
        let json = serde_json::to_string(&file)
            .map_err(|e| Error::invariant("demo-write", e.to_string()))?;
        fs::write(dir.join(format!("episode_{i:04}.json")), json)?;
    }
    Ok(())
}

/// Load every `episode_*.json` under `dir`, sorted by filename.
pub fn load_demos(dir: &Path) -> Result<Vec<Demo>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().map_or(false, |ext| ext == "json")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .map_or(false, |n| n.starts_with("episode_"))
        })
        .collect();
    paths.sort();
    let mut demos = Vec::with_capacity(paths.len());
    for path in paths {
        let file: EpisodeFile = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| Error::invariant("demo-read", format!("{}: {e}", path.display())))?;
        let frame_len = file.width * file.height * 3;
        let mut per_view: BTreeMap<String, Vec<Frame>> = BTreeMap::new();
        for (view, rel) in &file.views {
            let raw = blob::read_u8(&dir.join(rel))?;
            if frame_len == 0 || raw.len() != frame_len * file.num_steps {
                return Err(Error::invariant(
                    "demo-frames",
                    format!("{rel}: {} bytes for {} steps", raw.len(), file.num_steps),
                ));
            }
            per_view.insert(
                view.clone(),
                raw.chunks_exact(frame_len)
                    .map(|c| Frame::new(file.width, file.height, c.to_vec()))
                    .collect(),
            );
        }
        let mut observations = Vec::with_capacity(file.num_steps);
        for t in 0..file.num_steps {
            let mut frames = BTreeMap::new();
            for (view, list) in &per_view {
                frames.insert(view.clone(), list[t].clone());
            }
            observations.push(RobotObservation {
                frames,
                proprio: file.proprio[t].clone(),
                instruction: file.instruction.clone(),
            });
        }
        let demo = Demo {
            instruction: file.instruction,
            observations,
            actions: file.actions,
            success: file.success,
        };
        demo.validate()?;
        demos.push(demo);
    }
    Ok(demos)
}

#[cfg(test)]
mod tests {
    use super::super::world::{default_suite, generate_task, SimConfig};
    use super::super::scripted_expert;
    use super::*;

    #[test]
    fn demo_dataset_roundtrip() {
        let dir = std::env::temp_dir().join(format!("rfv_demos_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let cfg = SimConfig::default();
        let spec = &default_suite(&cfg)[0];
        let mut demos = Vec::new();
        for seed in 0..3u64 {
            let (state, instruction) = generate_task(spec, seed);
            demos.push(scripted_expert(&state, &instruction, spec, &cfg).unwrap());
        }
        save_demos(&demos, &dir).unwrap();
        let loaded = load_demos(&dir).unwrap();
        assert_eq!(loaded.len(), demos.len());
        for (a, b) in demos.iter().zip(&loaded) {
            assert_eq!(a.instruction, b.instruction);
            assert_eq!(a.actions, b.actions);
            assert_eq!(a.observations.len(), b.observations.len());
            for (oa, ob) in a.observations.iter().zip(&b.observations) {
                assert_eq!(oa.proprio, ob.proprio);
                for (view, frame) in &oa.frames {
                    assert_eq!(frame.data, ob.frames[view].data);
                }
            }
        }
    }
}
