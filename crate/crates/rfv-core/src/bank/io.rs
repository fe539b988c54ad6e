//! Bank persistence: a `bank.jsonl` manifest plus binary blobs.
//!
//! One JSON object per line. Blobs live next to the manifest under
//! `blobs/` and are referenced by relative path, so a bank directory can
//! be moved wholesale.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::error::{Error, Result};

use super::{AffordanceMask, Bank, BankEntry, Frame, HandTrajectory, Narration, TrajPoint, VideoClip};

pub const MANIFEST_NAME: &str = "bank.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    entry_id: String,
    narration: ManifestNarration,
    clip: ManifestClip,
    mask: ManifestMask,
    trajectory: ManifestTrajectory,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding_blob: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features_blob: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestNarration {
    text: String,
    indoor: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestClip {
    blob: String,
    fps: f64,
    view_id: Option<String>,
    width: usize,
    height: usize,
    num_frames: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestMask {
    keyframe: usize,
    width: usize,
    height: usize,
    runs: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestTrajectory {
    points: Vec<(usize, f64, f64)>,
    smoothed: bool,
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

impl Bank {
    /// Write the bank to `dir` (created if missing): manifest + blobs.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let blob_dir = dir.join("blobs");
        fs::create_dir_all(&blob_dir)?;
        let mut manifest = File::create(dir.join(MANIFEST_NAME))?;
        for (row, entry) in self.entries().iter().enumerate() {
            let stem = format!("{row:05}_{}", sanitize_id(&entry.entry_id));

            let frames_rel = format!("blobs/{stem}.frames.bin");
            let mut raw = Vec::new();
            for f in &entry.clip.frames {
                raw.extend_from_slice(&f.data);
            }
            blob::write_u8(&dir.join(&frames_rel), &raw)?;

            let embedding_blob = match &entry.embedding {
                Some(emb) => {
                    let rel = format!("blobs/{stem}.emb.bin");
                    blob::write_f32(&dir.join(&rel), emb)?;
                    Some(rel)
                }
                None => None,
            };
            let features_blob = match &entry.frame_features {
                Some(features) => {
                    let rel = format!("blobs/{stem}.feat.bin");
                    let flat: Vec<f32> = features.iter().flatten().copied().collect();
                    blob::write_f32(&dir.join(&rel), &flat)?;
                    Some(rel)
                }
                None => None,
            };

            let line = ManifestEntry {
                entry_id: entry.entry_id.clone(),
                narration: ManifestNarration {
                    text: entry.narration.text.clone(),
                    indoor: entry.narration.indoor,
                },
                clip: ManifestClip {
                    blob: frames_rel,
                    fps: entry.clip.fps,
                    view_id: entry.clip.view_id.clone(),
                    width: entry.clip.width(),
                    height: entry.clip.height(),
                    num_frames: entry.clip.frames.len(),
                },
                mask: ManifestMask {
                    keyframe: entry.mask.keyframe_index,
                    width: entry.mask.width,
                    height: entry.mask.height,
                    runs: entry.mask.runs.clone(),
                },
                trajectory: ManifestTrajectory {
                    points: entry.trajectory.points.iter().map(|p| (p.frame, p.x, p.y)).collect(),
                    smoothed: entry.trajectory.smoothed,
                },
                embedding_blob,
                features_blob,
            };
            serde_json::to_writer(&mut manifest, &line)
                .map_err(|e| Error::invariant("manifest-write", e.to_string()))?;
            manifest.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Load a bank written by [`Bank::save`]. Every entry is re-validated,
    /// so a bank that loads is a bank whose entries all pass insertion
    /// validation.
    pub fn load(dir: &Path) -> Result<Bank> {
        let manifest_path = dir.join(MANIFEST_NAME);
        let reader = BufReader::new(File::open(&manifest_path)?);
        let mut bank = Bank::new(None);
        let mut embedding_dim: Option<usize> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |detail: String| Error::CorruptManifest { line: line_no, detail };
            let m: ManifestEntry =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;

            let raw = blob::read_u8(&dir.join(&m.clip.blob))
                .map_err(|e| corrupt(format!("clip blob {}: {e}", m.clip.blob)))?;
            let frame_len = m.clip.width * m.clip.height * 3;
            if frame_len == 0 || raw.len() != frame_len * m.clip.num_frames {
                return Err(corrupt(format!(
                    "clip blob {} holds {} bytes, expected {}",
                    m.clip.blob,
                    raw.len(),
                    frame_len * m.clip.num_frames
                )));
            }
            let frames = raw
                .chunks_exact(frame_len)
                .map(|c| Frame::new(m.clip.width, m.clip.height, c.to_vec()))
                .collect();

            let embedding = match &m.embedding_blob {
                Some(rel) => {
                    let emb = blob::read_f32(&dir.join(rel))
                        .map_err(|e| corrupt(format!("embedding blob {rel}: {e}")))?;
                    match embedding_dim {
                        None => embedding_dim = Some(emb.len()),
                        Some(dim) if dim != emb.len() => {
                            return Err(corrupt(format!(
                                "embedding dim {} != bank dim {dim}",
                                emb.len()
                            )))
                        }
                        _ => {}
                    }
                    Some(emb)
                }
                None => None,
            };
            let frame_features = match &m.features_blob {
                Some(rel) => {
                    let flat = blob::read_f32(&dir.join(rel))
                        .map_err(|e| corrupt(format!("features blob {rel}: {e}")))?;
                    if m.clip.num_frames == 0 || flat.len() % m.clip.num_frames != 0 {
                        return Err(corrupt(format!(
                            "features blob {rel} length {} not divisible by {} frames",
                            flat.len(),
                            m.clip.num_frames
                        )));
                    }
                    let dim = flat.len() / m.clip.num_frames;
                    Some(flat.chunks_exact(dim).map(|c| c.to_vec()).collect())
                }
                None => None,
            };

            let entry_id = m.entry_id.clone();
            let entry = BankEntry {
                entry_id,
                narration: Narration {
                    text: m.narration.text,
                    indoor: m.narration.indoor,
                },
                clip: VideoClip {
                    clip_id: format!("{}-clip", m.entry_id),
                    frames,
                    fps: m.clip.fps,
                    view_id: m.clip.view_id,
                },
                mask: AffordanceMask {
                    keyframe_index: m.mask.keyframe,
                    width: m.mask.width,
                    height: m.mask.height,
                    runs: m.mask.runs,
                },
                trajectory: HandTrajectory {
                    points: m
                        .trajectory
                        .points
                        .iter()
                        .map(|&(frame, x, y)| TrajPoint { frame, x, y })
                        .collect(),
                    smoothed: m.trajectory.smoothed,
                },
                embedding,
                frame_features,
            };
            bank.embedding_dim = embedding_dim;
            bank.add_entry(entry)
                .map_err(|e| corrupt(format!("entry validation failed: {e}")))?;
        }
        Ok(bank)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::tiny_entry;
    use super::*;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("rfv_bank_io_{tag}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn empty_bank_roundtrip() {
        let dir = tmpdir("empty");
        Bank::new(None).save(&dir).unwrap();
        let bank = Bank::load(&dir).unwrap();
        assert!(bank.is_empty());
    }

    #[test]
    fn five_entry_roundtrip_bit_exact() {
        let dir = tmpdir("five");
        let mut bank = Bank::new(Some(4));
        for i in 0..5 {
            let mut e = tiny_entry(&format!("e{i}"), &format!("move the block {i}"), i % 2 == 0);
            e.embedding = Some(vec![0.1f32 * i as f32, -1.5, 3.25e-7, 0.75]);
            if i == 2 {
                e.frame_features = Some(vec![vec![1.0f32, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
            }
            bank.add_entry(e).unwrap();
        }
        bank.save(&dir).unwrap();
        let loaded = Bank::load(&dir).unwrap();
        assert_eq!(loaded.len(), 5);
        for (a, b) in bank.entries().iter().zip(loaded.entries()) {
            assert_eq!(a.entry_id, b.entry_id);
            assert_eq!(a.narration, b.narration);
            assert_eq!(a.clip.frames, b.clip.frames);
            assert_eq!(a.clip.fps.to_bits(), b.clip.fps.to_bits());
            assert_eq!(a.mask, b.mask);
            assert_eq!(a.trajectory.smoothed, b.trajectory.smoothed);
            for (p, q) in a.trajectory.points.iter().zip(&b.trajectory.points) {
                assert_eq!(p.frame, q.frame);
                assert_eq!(p.x.to_bits(), q.x.to_bits());
                assert_eq!(p.y.to_bits(), q.y.to_bits());
            }
            match (&a.embedding, &b.embedding) {
                (Some(x), Some(y)) => assert_eq!(
                    x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    y.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                ),
                (None, None) => {}
                _ => panic!("embedding presence mismatch"),
            }
            assert_eq!(a.frame_features, b.frame_features);
        }
    }

    #[test]
    fn truncated_blob_reports_corrupt_manifest() {
        let dir = tmpdir("trunc");
        let mut bank = Bank::new(None);
        bank.add_entry(tiny_entry("e0", "slide the tray", true)).unwrap();
        bank.save(&dir).unwrap();
        let blob_path = dir.join("blobs/00000_e0.frames.bin");
        let raw = fs::read(&blob_path).unwrap();
        fs::write(&blob_path, &raw[..raw.len() / 2]).unwrap();
        match Bank::load(&dir) {
            Err(Error::CorruptManifest { line: 1, .. }) => {}
            other => panic!("expected CorruptManifest line 1, got {other:?}"),
        }
    }

    #[test]
    fn garbled_line_reports_line_number() {
        let dir = tmpdir("garble");
        let mut bank = Bank::new(None);
        bank.add_entry(tiny_entry("e0", "slide the tray", true)).unwrap();
        bank.add_entry(tiny_entry("e1", "lift the lid", true)).unwrap();
        bank.save(&dir).unwrap();
        let m = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&m).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1] = "{not json";
        fs::write(&m, lines.join("\n")).unwrap();
        match Bank::load(&dir) {
            Err(Error::CorruptManifest { line: 2, .. }) => {}
            other => panic!("expected CorruptManifest line 2, got {other:?}"),
        }
    }
}
