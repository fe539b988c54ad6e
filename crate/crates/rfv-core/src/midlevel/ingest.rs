//! Detector-output ingestion: JSON-lines per clip with per-frame optional
//! hand boxes and a blob of per-frame object bitmaps (same blob container
//! as the bank).
//!
//! `object_bitmaps_blob` holds one `width * height` u8 bitmap for each
//! frame index listed in `bitmap_frames`, concatenated in that order.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bank::{Bank, BankEntry, Frame, Narration, VideoClip};
use crate::blob;
use crate::error::{Error, Result};

use super::{
    build_affordance_mask, detect_contact_keyframe, raw_trajectory, smooth_trajectory,
    BoundingBox, DetectionTrack,
};

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestClip {
    pub clip_id: String,
    pub narration: IngestNarration,
    pub fps: f64,
    #[serde(default)]
    pub view_id: Option<String>,
    pub width: usize,
    pub height: usize,
    pub frames_blob: String,
    /// One entry per frame: [x0, y0, x1, y1] or null.
    pub hand_boxes: Vec<Option<[f64; 4]>>,
    /// Frame indices that have an object bitmap, in blob order.
    #[serde(default)]
    pub bitmap_frames: Vec<usize>,
    #[serde(default)]
    pub object_bitmaps_blob: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestNarration {
    pub text: String,
    pub indoor: bool,
}

/// Parameters for mid-level construction during ingestion.
#[derive(Debug, Clone)]
pub struct IngestParams {
    pub contact_threshold: f64,
    pub smoothing_lambda: f64,
}

impl Default for IngestParams {
    fn default() -> Self {
        IngestParams {
            contact_threshold: super::DEFAULT_CONTACT_THRESHOLD,
            smoothing_lambda: super::DEFAULT_SMOOTHING_LAMBDA,
        }
    }
}

/// Parse one ingestion file (clips.jsonl) and its blobs into clips plus
/// detection tracks.
pub fn load_ingest_file(path: &Path) -> Result<Vec<(IngestClip, VideoClip, DetectionTrack)>> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |detail: String| Error::CorruptManifest { line: line_no, detail };
        let meta: IngestClip = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;

        let raw = blob::read_u8(&dir.join(&meta.frames_blob))
            .map_err(|e| corrupt(format!("frames blob {}: {e}", meta.frames_blob)))?;
        let frame_len = meta.width * meta.height * 3;
        if frame_len == 0 || raw.len() % frame_len != 0 {
            return Err(corrupt(format!(
                "frames blob {} length {} not a multiple of {frame_len}",
                meta.frames_blob,
                raw.len()
            )));
        }
        let num_frames = raw.len() / frame_len;
        if meta.hand_boxes.len() != num_frames {
            return Err(corrupt(format!(
                "{} hand boxes for {num_frames} frames",
                meta.hand_boxes.len()
            )));
        }
        let frames: Vec<Frame> = raw
            .chunks_exact(frame_len)
            .map(|c| Frame::new(meta.width, meta.height, c.to_vec()))
            .collect();

        let mut bitmaps: Vec<Option<Vec<u8>>> = vec![None; num_frames];
        if let Some(rel) = &meta.object_bitmaps_blob {
            let data = blob::read_u8(&dir.join(rel))
                .map_err(|e| corrupt(format!("bitmap blob {rel}: {e}")))?;
            let area = meta.width * meta.height;
            if data.len() != area * meta.bitmap_frames.len() {
                return Err(corrupt(format!(
                    "bitmap blob {rel} length {} for {} listed frames",
                    data.len(),
                    meta.bitmap_frames.len()
                )));
            }
            for (slot, &frame) in meta.bitmap_frames.iter().enumerate() {
                if frame >= num_frames {
                    return Err(corrupt(format!("bitmap frame {frame} out of range")));
                }
                bitmaps[frame] = Some(data[slot * area..(slot + 1) * area].to_vec());
            }
        }

        let hand_boxes: Result<Vec<Option<BoundingBox>>> = meta
            .hand_boxes
            .iter()
            .map(|slot| {
                slot.map(|[x0, y0, x1, y1]| BoundingBox::new(x0, y0, x1, y1)).transpose()
            })
            .collect();

        let track = DetectionTrack {
            width: meta.width,
            height: meta.height,
            hand_boxes: hand_boxes?,
            object_bitmaps: bitmaps,
        };
        track.validate(num_frames)?;
        let clip = VideoClip {
            clip_id: meta.clip_id.clone(),
            frames,
            fps: meta.fps,
            view_id: meta.view_id.clone(),
        };
        out.push((meta, clip, track));
    }
    Ok(out)
}

/// Full mid-level construction for one ingested clip: contact keyframe,
/// smoothed centroid trajectory, affordance mask.
pub fn build_entry(
    meta: &IngestClip,
    clip: VideoClip,
    track: &DetectionTrack,
    params: &IngestParams,
) -> Result<BankEntry> {
    let keyframe = detect_contact_keyframe(track, params.contact_threshold)?;
    let raw = raw_trajectory(track, keyframe)?;
    let trajectory = smooth_trajectory(&raw, params.smoothing_lambda)?;
    let bitmap = track.object_bitmaps[keyframe]
        .as_ref()
        .ok_or(Error::EmptyBitmap)?;
    let hand_box = track.hand_boxes[keyframe]
        .as_ref()
        .ok_or(Error::NoContactFound)?;
    let affordance = build_affordance_mask(bitmap, track.width, track.height, hand_box, keyframe)?;
    Ok(BankEntry {
        entry_id: meta.clip_id.clone(),
        narration: Narration {
            text: meta.narration.text.clone(),
            indoor: meta.narration.indoor,
        },
        clip,
        mask: affordance.mask,
        trajectory,
        embedding: None,
        frame_features: None,
    })
}

/// Ingest a detector-output file into a bank (indoor filtering happens at
/// retrieval time, not here; the bank stores what it is given).
pub fn ingest_bank(path: &Path, params: &IngestParams) -> Result<Bank> {
    let mut bank = Bank::new(None);
    for (meta, clip, track) in load_ingest_file(path)? {
        let entry = build_entry(&meta, clip, &track, params)?;
        bank.add_entry(entry)?;
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_fixture(dir: &Path) -> std::path::PathBuf {
        fs::create_dir_all(dir).unwrap();
        let (w, h, t) = (16usize, 16usize, 8usize);
        // moving hand: frames of flat color; boxes sweep right
        let frames = vec![90u8; w * h * 3 * t];
        blob::write_u8(&dir.join("c0.frames.bin"), &frames).unwrap();

        // object occupies a fixed 6x6 block; bitmaps on every frame
        let mut bitmap = vec![0u8; w * h];
        for y in 5..11 {
            for x in 8..14 {
                bitmap[y * w + x] = 1;
            }
        }
        let mut all = Vec::new();
        for _ in 0..t {
            all.extend_from_slice(&bitmap);
        }
        blob::write_u8(&dir.join("c0.bitmaps.bin"), &all).unwrap();

        // hand box sweeps from x=0 toward the object
        let boxes: Vec<Option<[f64; 4]>> = (0..t)
            .map(|i| Some([i as f64 * 1.5, 6.0, i as f64 * 1.5 + 3.0, 10.0]))
            .collect();
        let meta = IngestClip {
            clip_id: "c0".into(),
            narration: IngestNarration { text: "wipe the table".into(), indoor: true },
            fps: 10.0,
            view_id: None,
            width: w,
            height: h,
            frames_blob: "c0.frames.bin".into(),
            hand_boxes: boxes,
            bitmap_frames: (0..t).collect(),
            object_bitmaps_blob: Some("c0.bitmaps.bin".into()),
        };
        let path = dir.join("clips.jsonl");
        fs::write(&path, format!("{}\n", serde_json::to_string(&meta).unwrap())).unwrap();
        path
    }

    #[test]
    fn ingest_builds_a_valid_bank() {
        let dir = std::env::temp_dir().join(format!("rfv_ingest_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let path = write_fixture(&dir);
        let bank = ingest_bank(&path, &IngestParams::default()).unwrap();
        assert_eq!(bank.len(), 1);
        let entry = bank.get_entry("c0").unwrap();
        assert!(entry.trajectory.smoothed);
        assert!(entry.mask.keyframe_index < entry.clip.frames.len());
        // mask must reproduce the fixture's object block
        let bitmap = entry.mask.to_bitmap().unwrap();
        assert_eq!(bitmap.iter().filter(|&&p| p != 0).count(), 36);
    }

    #[test]
    fn truncated_frames_blob_is_corrupt_manifest() {
        let dir = std::env::temp_dir().join(format!("rfv_ingest_bad_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let path = write_fixture(&dir);
        let blob_path = dir.join("c0.frames.bin");
        let raw = fs::read(&blob_path).unwrap();
        fs::write(&blob_path, &raw[..raw.len() - 7]).unwrap();
        assert!(matches!(
            ingest_bank(&path, &IngestParams::default()),
            Err(Error::CorruptManifest { line: 1, .. })
        ));
    }
}
