//! The video bank: clips with narrations and mid-level annotations.
//!
//! A bank is append-only and immutable once built; retrieval runs against a
//! fixed snapshot. Every entry is validated on insertion and re-validated
//! when a saved bank is loaded.

mod io;
mod rle;

pub use rle::{decode_rle, encode_rle, foreground_area};

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const DEFAULT_TRAJECTORY_MARGIN: f64 = 0.05;

/// One raw image, row-major, 3 channels of u8 intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        Frame {
            width,
            height,
            channels: 3,
            data,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invariant("frame-dims", "width and height must be >= 1"));
        }
        let expected = self.width * self.height * self.channels;
        if self.data.len() != expected {
            return Err(Error::invariant(
                "frame-data",
                format!("data length {} != {}", self.data.len(), expected),
            ));
        }
        Ok(())
    }
}

/// An ordered sequence of frames from one camera view.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub clip_id: String,
    pub frames: Vec<Frame>,
    pub fps: f64,
    /// Camera-view label; `None` means the clip matches any view.
    pub view_id: Option<String>,
}

impl VideoClip {
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::invariant(
                "clip-frames",
                format!("clip {} has {} frames, need >= 2", self.clip_id, self.frames.len()),
            ));
        }
        if !(self.fps > 0.0) {
            return Err(Error::invariant("clip-fps", format!("fps {} must be > 0", self.fps)));
        }
        let (w, h) = (self.frames[0].width, self.frames[0].height);
        for f in &self.frames {
            f.validate()?;
            if f.width != w || f.height != h {
                return Err(Error::invariant("clip-dims", "all frames must share dimensions"));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}

/// Language description of a clip plus the ingested indoor/outdoor label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Narration {
    pub text: String,
    pub indoor: bool,
}

impl Narration {
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::invariant("narration-text", "text must be non-empty"));
        }
        Ok(())
    }
}

/// Binary object-affordance region at the contact keyframe, RLE-compressed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffordanceMask {
    pub keyframe_index: usize,
    pub width: usize,
    pub height: usize,
    /// Alternating background/foreground run lengths, starting with a
    /// background run (possibly zero-length).
    pub runs: Vec<usize>,
}

impl AffordanceMask {
    pub fn from_bitmap(keyframe_index: usize, width: usize, height: usize, bitmap: &[u8]) -> Self {
        AffordanceMask {
            keyframe_index,
            width,
            height,
            runs: encode_rle(bitmap),
        }
    }

    pub fn to_bitmap(&self) -> Result<Vec<u8>> {
        decode_rle(&self.runs, self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let total: usize = self.runs.iter().sum();
        if total != self.width * self.height {
            return Err(Error::invariant(
                "mask-area",
                format!("runs sum {} != {}x{}", total, self.width, self.height),
            ));
        }
        if foreground_area(&self.runs) == 0 {
            return Err(Error::invariant("mask-foreground", "mask has no foreground pixels"));
        }
        Ok(())
    }
}

/// One time-stamped point of a hand trajectory, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajPoint {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
}

/// 2D pixel path of the hand from the contact keyframe onward.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTrajectory {
    pub points: Vec<TrajPoint>,
    pub smoothed: bool,
}

impl HandTrajectory {
    /// Validate ordering and (when frame dimensions are known) the bounds
    /// invariant: coordinates within the frame extended by `margin_frac`
    /// of the frame size on each side.
    pub fn validate(&self, frame_dims: Option<(usize, usize)>, margin_frac: f64) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::invariant(
                "traj-points",
                format!("{} points, need >= 2", self.points.len()),
            ));
        }
        for pair in self.points.windows(2) {
            if pair[1].frame <= pair[0].frame {
                return Err(Error::invariant(
                    "traj-monotonic",
                    "frame indices must be strictly increasing",
                ));
            }
        }
        if let Some((w, h)) = frame_dims {
            let (mx, my) = (w as f64 * margin_frac, h as f64 * margin_frac);
            for p in &self.points {
                if p.x < -mx || p.x > w as f64 + mx || p.y < -my || p.y > h as f64 + my {
                    return Err(Error::invariant(
                        "traj-bounds",
                        format!("point ({}, {}) outside {}x{} (+margin)", p.x, p.y, w, h),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The unit of retrieval: narration, clip, mask, trajectory, and optional
/// precomputed vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub entry_id: String,
    pub narration: Narration,
    pub clip: VideoClip,
    pub mask: AffordanceMask,
    pub trajectory: HandTrajectory,
    /// Precomputed narration embedding (stored f32; retrieval math promotes
    /// to f64).
    pub embedding: Option<Vec<f32>>,
    /// Precomputed per-frame feature vectors, one per clip frame.
    pub frame_features: Option<Vec<Vec<f32>>>,
}

impl BankEntry {
    pub fn validate(&self, embedding_dim: Option<usize>, margin_frac: f64) -> Result<()> {
        if self.entry_id.is_empty() {
            return Err(Error::invariant("entry-id", "entry_id must be non-empty"));
        }
        self.narration.validate()?;
        self.clip.validate()?;
        self.mask.validate()?;
        if self.mask.keyframe_index >= self.clip.frames.len() {
            return Err(Error::invariant(
                "mask-keyframe",
                format!(
                    "keyframe {} >= clip frame count {}",
                    self.mask.keyframe_index,
                    self.clip.frames.len()
                ),
            ));
        }
        self.trajectory
            .validate(Some((self.clip.width(), self.clip.height())), margin_frac)?;
        if let Some(emb) = &self.embedding {
            if let Some(dim) = embedding_dim {
                if emb.len() != dim {
                    return Err(Error::DimMismatch {
                        context: "entry embedding vs bank embedding dim",
                        got: emb.len(),
                        expected: dim,
                    });
                }
            }
            if emb.iter().any(|v| !v.is_finite()) {
                return Err(Error::invariant("embedding-finite", "embedding has non-finite values"));
            }
        }
        if let Some(features) = &self.frame_features {
            if features.len() != self.clip.frames.len() {
                return Err(Error::invariant(
                    "features-shape",
                    format!(
                        "{} feature rows for {} frames",
                        features.len(),
                        self.clip.frames.len()
                    ),
                ));
            }
            let dim = features.first().map(Vec::len).unwrap_or(0);
            if dim == 0 || features.iter().any(|f| f.len() != dim) {
                return Err(Error::invariant("features-shape", "feature rows must share a nonzero dim"));
            }
        }
        Ok(())
    }
}

/// Append-only store of validated entries.
#[derive(Debug, Clone, Default)]
pub struct Bank {
    entries: Vec<BankEntry>,
    by_id: HashMap<String, usize>,
    /// Declared embedding dimension; entries with precomputed embeddings
    /// must match it.
    pub embedding_dim: Option<usize>,
    pub trajectory_margin: f64,
}

impl Bank {
    pub fn new(embedding_dim: Option<usize>) -> Self {
        Bank {
            entries: Vec::new(),
            by_id: HashMap::new(),
            embedding_dim,
            trajectory_margin: DEFAULT_TRAJECTORY_MARGIN,
        }
    }

    pub fn add_entry(&mut self, entry: BankEntry) -> Result<String> {
        if self.by_id.contains_key(&entry.entry_id) {
            return Err(Error::DuplicateId(entry.entry_id));
        }
        entry.validate(self.embedding_dim, self.trajectory_margin)?;
        let id = entry.entry_id.clone();
        self.by_id.insert(id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(id)
    }

    pub fn get_entry(&self, id: &str) -> Option<&BankEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    /// Borrowed view containing only indoor entries; the bank itself is
    /// untouched.
    pub fn filter_indoor(&self) -> BankView<'_> {
        BankView {
            entries: self.entries.iter().filter(|e| e.narration.indoor).collect(),
        }
    }
}

/// A borrowed, filtered view over a bank.
#[derive(Debug, Clone)]
pub struct BankView<'a> {
    entries: Vec<&'a BankEntry>,
}

impl<'a> BankView<'a> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &'a BankEntry> + '_ {
        self.entries.iter().copied()
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::tiny_entry;
    use super::*;
    use crate::rng::Rng64;

    #[test]
    fn add_and_get_roundtrip() {
        let mut bank = Bank::new(None);
        bank.add_entry(tiny_entry("e1", "pick the cup", true)).unwrap();
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.get_entry("e1").unwrap().entry_id, "e1");
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut bank = Bank::new(None);
        bank.add_entry(tiny_entry("e1", "pick the cup", true)).unwrap();
        match bank.add_entry(tiny_entry("e1", "pick the cup", true)) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "e1"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn mask_area_violation_named() {
        let mut bank = Bank::new(None);
        let mut entry = tiny_entry("e1", "pick the cup", true);
        entry.mask.runs = vec![10, 4]; // sums to 14, area is 64
        match bank.add_entry(entry) {
            Err(Error::InvariantViolation { name: "mask-area", .. }) => {}
            other => panic!("expected mask-area violation, got {other:?}"),
        }
    }

    #[test]
    fn embedding_dim_checked_against_bank() {
        let mut bank = Bank::new(Some(4));
        let mut entry = tiny_entry("e1", "pick the cup", true);
        entry.embedding = Some(vec![0.5f32; 3]);
        assert!(matches!(bank.add_entry(entry), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn filter_indoor_keeps_flagged_entries() {
        let mut bank = Bank::new(None);
        bank.add_entry(tiny_entry("a", "open the drawer", true)).unwrap();
        bank.add_entry(tiny_entry("b", "water the plants", false)).unwrap();
        bank.add_entry(tiny_entry("c", "close the laptop", true)).unwrap();
        let view = bank.filter_indoor();
        let ids: Vec<_> = view.entries().map(|e| e.entry_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
        assert_eq!(bank.len(), 3);
    }

    #[test]
    fn all_outdoor_gives_empty_view() {
        let mut bank = Bank::new(None);
        bank.add_entry(tiny_entry("a", "mow the lawn", false)).unwrap();
        assert!(bank.filter_indoor().is_empty());
    }

    #[test]
    fn indoor_count_matches_flag_count_seed7() {
        let mut rng = Rng64::new(7);
        let mut bank = Bank::new(None);
        let mut expected = 0usize;
        for i in 0..100 {
            let indoor = rng.next_f64() < 0.5;
            if indoor {
                expected += 1;
            }
            bank.add_entry(tiny_entry(&format!("e{i}"), "stack the plates", indoor))
                .unwrap();
        }
        let view = bank.filter_indoor();
        assert_eq!(view.len(), expected);
        // indoor + outdoor partitions the bank
        assert_eq!(view.len() + (bank.len() - expected), bank.len());
    }

    #[test]
    fn trajectory_bounds_respect_margin() {
        let mut bank = Bank::new(None);
        let mut entry = tiny_entry("e1", "pick the cup", true);
        // 8x8 frame, 5% margin = 0.4px; 8.3 is inside the margin band
        entry.trajectory.points[1].x = 8.3;
        bank.add_entry(entry).unwrap();

        let mut entry2 = tiny_entry("e2", "pick the cup", true);
        entry2.trajectory.points[1].x = 9.0; // beyond margin
        match bank.add_entry(entry2) {
            Err(Error::InvariantViolation { name: "traj-bounds", .. }) => {}
            other => panic!("expected traj-bounds, got {other:?}"),
        }
    }
}
