//! Mid-level annotation construction from ingested detector outputs:
//! contact keyframes, centroid trajectories, spline smoothing, and
//! affordance masks.
//!
//! All operations are pure functions over immutable inputs; running the
//! underlying detectors/segmenters is out of scope — their outputs arrive
//! as files.

pub mod ingest;
mod spline;

pub use spline::SmoothingSpline;

use crate::bank::{encode_rle, AffordanceMask, HandTrajectory, TrajPoint};
use crate::error::{Error, Result};

pub const DEFAULT_CONTACT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_SMOOTHING_LAMBDA: f64 = 1.0;

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::invariant(
                "bbox-order",
                format!("degenerate box [{x_min},{y_min},{x_max},{y_max}]"),
            ));
        }
        Ok(BoundingBox { x_min, y_min, x_max, y_max })
    }

    /// Integer pixel span covered by the box: a pixel belongs to the box
    /// iff its center lies inside [x_min, x_max) x [y_min, y_max).
    pub fn pixel_span(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let clampi = |v: f64, hi: usize| -> usize { (v.max(0.0) as usize).min(hi) };
        let xs = clampi((self.x_min - 0.5).ceil(), width);
        let xe = clampi((self.x_max - 0.5).ceil(), width);
        let ys = clampi((self.y_min - 0.5).ceil(), height);
        let ye = clampi((self.y_max - 0.5).ceil(), height);
        (xs, xe.max(xs), ys, ye.max(ys))
    }
}

/// Centroid of a bounding box.
pub fn bbox_centroid(bb: &BoundingBox) -> (f64, f64) {
    ((bb.x_min + bb.x_max) / 2.0, (bb.y_min + bb.y_max) / 2.0)
}

/// Per-frame detector outputs for one clip: optional hand box and optional
/// object segmentation bitmap (row-major u8, nonzero = object).
#[derive(Debug, Clone)]
pub struct DetectionTrack {
    pub width: usize,
    pub height: usize,
    pub hand_boxes: Vec<Option<BoundingBox>>,
    pub object_bitmaps: Vec<Option<Vec<u8>>>,
}

impl DetectionTrack {
    pub fn validate(&self, clip_frames: usize) -> Result<()> {
        if self.hand_boxes.len() != clip_frames || self.object_bitmaps.len() != clip_frames {
            return Err(Error::invariant(
                "track-length",
                format!(
                    "track has {} boxes / {} bitmaps for {} frames",
                    self.hand_boxes.len(),
                    self.object_bitmaps.len(),
                    clip_frames
                ),
            ));
        }
        let area = self.width * self.height;
        for (i, bm) in self.object_bitmaps.iter().enumerate() {
            if let Some(bm) = bm {
                if bm.len() != area {
                    return Err(Error::invariant(
                        "track-bitmap",
                        format!("frame {i}: bitmap length {} != {area}", bm.len()),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.hand_boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hand_boxes.is_empty()
    }
}

/// Fraction of the hand box covered by object pixels, by pixel counting.
/// Returns `None` when the box covers no whole pixel.
pub fn overlap_fraction(bitmap: &[u8], width: usize, height: usize, bb: &BoundingBox) -> Option<f64> {
    let (xs, xe, ys, ye) = bb.pixel_span(width, height);
    let total = (xe - xs) * (ye - ys);
    if total == 0 {
        return None;
    }
    let mut hit = 0usize;
    for y in ys..ye {
        let row = &bitmap[y * width..y * width + width];
        for x in xs..xe {
            if row[x] != 0 {
                hit += 1;
            }
        }
    }
    Some(hit as f64 / total as f64)
}

/// Smallest frame index where the hand box overlaps the object bitmap by
/// at least `iou_threshold` of the box area.
pub fn detect_contact_keyframe(track: &DetectionTrack, iou_threshold: f64) -> Result<usize> {
    let mut any_pair = false;
    for (frame, (bb, bm)) in track.hand_boxes.iter().zip(&track.object_bitmaps).enumerate() {
        if let (Some(bb), Some(bm)) = (bb, bm) {
            any_pair = true;
            if let Some(frac) = overlap_fraction(bm, track.width, track.height, bb) {
                if frac >= iou_threshold {
                    return Ok(frame);
                }
            }
        }
    }
    if !any_pair {
        return Err(Error::invariant(
            "track-pairs",
            "no frame has both a hand box and an object bitmap",
        ));
    }
    Err(Error::NoContactFound)
}

/// Centroid trajectory from the keyframe to the clip end; frames without a
/// hand box are skipped (gaps remain).
pub fn raw_trajectory(track: &DetectionTrack, keyframe: usize) -> Result<HandTrajectory> {
    let points: Vec<TrajPoint> = track
        .hand_boxes
        .iter()
        .enumerate()
        .skip(keyframe)
        .filter_map(|(frame, bb)| {
            bb.as_ref().map(|bb| {
                let (x, y) = bbox_centroid(bb);
                TrajPoint { frame, x, y }
            })
        })
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientPoints {
            got: points.len(),
            need: 2,
        });
    }
    Ok(HandTrajectory { points, smoothed: false })
}

/// Fit cubic smoothing splines to x(t) and y(t) independently and resample
/// at every integer frame between the first and last input frame.
pub fn smooth_trajectory(traj: &HandTrajectory, lambda: f64) -> Result<HandTrajectory> {
    let n = traj.points.len();
    if n < 4 {
        return Err(Error::TooFewPoints { got: n, need: 4 });
    }
    for pair in traj.points.windows(2) {
        if pair[1].frame <= pair[0].frame {
            return Err(Error::NonMonotonicTime);
        }
    }
    let t: Vec<f64> = traj.points.iter().map(|p| p.frame as f64).collect();
    let xs: Vec<f64> = traj.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = traj.points.iter().map(|p| p.y).collect();
    let sx = SmoothingSpline::fit(&t, &xs, lambda);
    let sy = SmoothingSpline::fit(&t, &ys, lambda);

    let first = traj.points[0].frame;
    let last = traj.points[n - 1].frame;
    let points = (first..=last)
        .map(|frame| TrajPoint {
            frame,
            x: sx.eval(frame as f64),
            y: sy.eval(frame as f64),
        })
        .collect();
    Ok(HandTrajectory { points, smoothed: true })
}

/// Sum of squared second differences of the point sequence, the discrete
/// roughness measure used to judge smoothing.
pub fn trajectory_roughness(traj: &HandTrajectory) -> f64 {
    traj.points
        .windows(3)
        .map(|w| {
            let ddx = w[2].x - 2.0 * w[1].x + w[0].x;
            let ddy = w[2].y - 2.0 * w[1].y + w[0].y;
            ddx * ddx + ddy * ddy
        })
        .sum()
}

/// Result of affordance mask construction.
#[derive(Debug, Clone)]
pub struct AffordanceResult {
    pub mask: AffordanceMask,
    /// True when no component overlapped the hand box and the largest
    /// component was used instead.
    pub used_fallback: bool,
}

/// Select the connected component of the object bitmap with maximal pixel
/// overlap with the hand box (4-connectivity; ties go to the component
/// first reached in row-major scan order).
pub fn build_affordance_mask(
    bitmap: &[u8],
    width: usize,
    height: usize,
    hand_box: &BoundingBox,
    keyframe: usize,
) -> Result<AffordanceResult> {
    if bitmap.len() != width * height {
        return Err(Error::invariant(
            "bitmap-area",
            format!("bitmap length {} != {}x{}", bitmap.len(), width, height),
        ));
    }
    let labels = label_components(bitmap, width, height);
    let num_components = labels.iter().copied().max().map(|m| m as usize).unwrap_or(0);
    if num_components == 0 {
        return Err(Error::EmptyBitmap);
    }

    let mut sizes = vec![0usize; num_components];
    let mut overlaps = vec![0usize; num_components];
    let (xs, xe, ys, ye) = hand_box.pixel_span(width, height);
    for y in 0..height {
        for x in 0..width {
            let label = labels[y * width + x];
            if label == 0 {
                continue;
            }
            let c = label as usize - 1;
            sizes[c] += 1;
            if x >= xs && x < xe && y >= ys && y < ye {
                overlaps[c] += 1;
            }
        }
    }

    let best_overlap = *overlaps.iter().max().unwrap();
    let (chosen, used_fallback) = if best_overlap > 0 {
        (overlaps.iter().position(|&o| o == best_overlap).unwrap(), false)
    } else {
        let best_size = *sizes.iter().max().unwrap();
        (sizes.iter().position(|&s| s == best_size).unwrap(), true)
    };

    let component: Vec<u8> = labels
        .iter()
        .map(|&l| u8::from(l as usize == chosen + 1))
        .collect();
    Ok(AffordanceResult {
        mask: AffordanceMask {
            keyframe_index: keyframe,
            width,
            height,
            runs: encode_rle(&component),
        },
        used_fallback,
    })
}

/// 4-connected component labels, 0 = background, components numbered from
/// 1 in row-major first-pixel order.
pub fn label_components(bitmap: &[u8], width: usize, height: usize) -> Vec<u32> {
    let mut labels = vec![0u32; bitmap.len()];
    let mut next = 1u32;
    let mut queue = Vec::new();
    for start in 0..bitmap.len() {
        if bitmap[start] == 0 || labels[start] != 0 {
            continue;
        }
        labels[start] = next;
        queue.push(start);
        while let Some(idx) = queue.pop() {
            let (x, y) = (idx % width, idx / width);
            let mut visit = |nx: usize, ny: usize| {
                let nidx = ny * width + nx;
                if bitmap[nidx] != 0 && labels[nidx] == 0 {
                    labels[nidx] = next;
                    queue.push(nidx);
                }
            };
            if x > 0 {
                visit(x - 1, y);
            }
            if x + 1 < width {
                visit(x + 1, y);
            }
            if y > 0 {
                visit(x, y - 1);
            }
            if y + 1 < height {
                visit(x, y + 1);
            }
        }
        next += 1;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;
    use proptest::prelude::*;

    fn track_from(boxes: Vec<Option<BoundingBox>>, bitmaps: Vec<Option<Vec<u8>>>, w: usize, h: usize) -> DetectionTrack {
        DetectionTrack {
            width: w,
            height: h,
            hand_boxes: boxes,
            object_bitmaps: bitmaps,
        }
    }

    fn full_bitmap(w: usize, h: usize) -> Vec<u8> {
        vec![1u8; w * h]
    }

    #[test]
    fn centroid_examples() {
        let b = BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        assert_eq!(bbox_centroid(&b), (1.0, 1.0));
        let b = BoundingBox::new(10.0, 20.0, 30.0, 60.0).unwrap();
        assert_eq!(bbox_centroid(&b), (20.0, 40.0));
    }

    proptest! {
        #[test]
        fn centroid_inside_box(x0 in 0.0..50.0f64, y0 in 0.0..50.0f64, w in 0.5..30.0f64, h in 0.5..30.0f64) {
            let b = BoundingBox::new(x0, y0, x0 + w, y0 + h).unwrap();
            let (cx, cy) = bbox_centroid(&b);
            prop_assert!(cx > b.x_min && cx < b.x_max);
            prop_assert!(cy > b.y_min && cy < b.y_max);
        }
    }

    #[test]
    fn contact_at_first_qualifying_frame() {
        let (w, h) = (10usize, 10usize);
        // empty bitmaps before frame 3, full overlap at frame 3
        let bb = BoundingBox::new(2.0, 2.0, 6.0, 6.0).unwrap();
        let empty = vec![0u8; w * h];
        let track = track_from(
            vec![Some(bb); 5],
            vec![
                Some(empty.clone()),
                Some(empty.clone()),
                Some(empty.clone()),
                Some(full_bitmap(w, h)),
                Some(full_bitmap(w, h)),
            ],
            w,
            h,
        );
        assert_eq!(detect_contact_keyframe(&track, 0.1).unwrap(), 3);
    }

    #[test]
    fn no_contact_reported() {
        let (w, h) = (10usize, 10usize);
        let bb = BoundingBox::new(0.0, 0.0, 3.0, 3.0).unwrap();
        // object confined to the bottom-right corner, disjoint from the box
        let mut bm = vec![0u8; w * h];
        bm[9 * w + 9] = 1;
        let track = track_from(vec![Some(bb); 3], vec![Some(bm); 3], w, h);
        assert!(matches!(detect_contact_keyframe(&track, 0.1), Err(Error::NoContactFound)));
    }

    #[test]
    fn contact_with_prescribed_fraction_sequence() {
        // 10x10 box over a 10x10 bitmap; per-frame object pixel counts
        // 0, 5, 20, 90 give overlap fractions 0, 0.05, 0.2, 0.9.
        let (w, h) = (10usize, 10usize);
        let bb = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let frame_with = |count: usize| {
            let mut bm = vec![0u8; w * h];
            for i in 0..count {
                bm[i] = 1;
            }
            Some(bm)
        };
        let track = track_from(
            vec![Some(bb); 4],
            vec![frame_with(0), frame_with(5), frame_with(20), frame_with(90)],
            w,
            h,
        );
        // independently computed fractions: [0.0, 0.05, 0.2, 0.9]
        for (frame, expected) in [(0usize, 0.0), (1, 0.05), (2, 0.2), (3, 0.9)] {
            let frac = overlap_fraction(
                track.object_bitmaps[frame].as_ref().unwrap(),
                w,
                h,
                &bb,
            )
            .unwrap();
            assert!((frac - expected).abs() < 1e-12);
        }
        assert_eq!(detect_contact_keyframe(&track, 0.1).unwrap(), 2);
    }

    #[test]
    fn threshold_monotone_never_earlier() {
        let (w, h) = (10usize, 10usize);
        let bb = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let mut rng = Rng64::new(5);
        for _ in 0..20 {
            let bitmaps: Vec<Option<Vec<u8>>> = (0..6)
                .map(|_| {
                    let mut bm = vec![0u8; w * h];
                    let count = rng.below(101);
                    for i in 0..count {
                        bm[i] = 1;
                    }
                    Some(bm)
                })
                .collect();
            let track = track_from(vec![Some(bb); 6], bitmaps, w, h);
            let lo = detect_contact_keyframe(&track, 0.1);
            let hi = detect_contact_keyframe(&track, 0.5);
            if let (Ok(lo), Ok(hi)) = (lo, hi) {
                assert!(hi >= lo);
            }
        }
    }

    #[test]
    fn raw_trajectory_counts_and_gaps() {
        let (w, h) = (10usize, 10usize);
        let bb = |x: f64| Some(BoundingBox::new(x, 1.0, x + 2.0, 3.0).unwrap());
        // 6-frame clip, boxes at every frame, keyframe 2 -> 4 points
        let track = track_from(
            (0..6).map(|i| bb(i as f64)).collect(),
            vec![None; 6],
            w,
            h,
        );
        let traj = raw_trajectory(&track, 2).unwrap();
        assert_eq!(traj.points.len(), 4);
        assert!(!traj.smoothed);

        // boxes only at frames 2, 4, 5
        let boxes: Vec<Option<BoundingBox>> = (0..6)
            .map(|i| if [2usize, 4, 5].contains(&i) { bb(i as f64) } else { None })
            .collect();
        let track = track_from(boxes, vec![None; 6], w, h);
        let traj = raw_trajectory(&track, 0).unwrap();
        let frames: Vec<usize> = traj.points.iter().map(|p| p.frame).collect();
        assert_eq!(frames, vec![2, 4, 5]);
    }

    #[test]
    fn raw_trajectory_insufficient_points() {
        let (w, h) = (10usize, 10usize);
        let mut boxes = vec![None; 6];
        boxes[3] = Some(BoundingBox::new(1.0, 1.0, 2.0, 2.0).unwrap());
        let track = track_from(boxes, vec![None; 6], w, h);
        assert!(matches!(
            raw_trajectory(&track, 2),
            Err(Error::InsufficientPoints { got: 1, need: 2 })
        ));
    }

    fn line_traj(n: usize) -> HandTrajectory {
        HandTrajectory {
            points: (0..n)
                .map(|i| TrajPoint {
                    frame: i,
                    x: 2.0 * i as f64 + 1.0,
                    y: 30.0 - 1.5 * i as f64,
                })
                .collect(),
            smoothed: false,
        }
    }

    #[test]
    fn collinear_points_stay_on_line() {
        for lambda in [0.0, 1.0, 10.0] {
            let sm = smooth_trajectory(&line_traj(8), lambda).unwrap();
            for p in &sm.points {
                assert!((p.x - (2.0 * p.frame as f64 + 1.0)).abs() < 1e-9);
                assert!((p.y - (30.0 - 1.5 * p.frame as f64)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lambda_zero_interpolates_cubic() {
        let traj = HandTrajectory {
            points: (0..6)
                .map(|i| {
                    let t = i as f64;
                    TrajPoint { frame: i, x: t * t * t, y: 1.0 + t }
                })
                .collect(),
            smoothed: false,
        };
        let sm = smooth_trajectory(&traj, 0.0).unwrap();
        for p0 in &traj.points {
            let p = sm.points.iter().find(|p| p.frame == p0.frame).unwrap();
            assert!((p.x - p0.x).abs() < 1e-9);
            assert!((p.y - p0.y).abs() < 1e-9);
        }
    }

    #[test]
    fn noisy_sine_roughness_drops() {
        let mut rng = Rng64::new(3);
        let points: Vec<TrajPoint> = (0..30)
            .map(|i| {
                let t = i as f64;
                TrajPoint {
                    frame: i,
                    x: t * 3.0 + 2.0 * rng.next_gaussian(),
                    y: 40.0 + 20.0 * (t * 0.4).sin() + 2.0 * rng.next_gaussian(),
                }
            })
            .collect();
        let raw = HandTrajectory { points, smoothed: false };
        let sm = smooth_trajectory(&raw, 10.0).unwrap();
        let before = trajectory_roughness(&raw);
        let after = trajectory_roughness(&sm);
        assert!(after < before, "roughness {after} !< {before}");
    }

    #[test]
    fn resampling_fills_gaps_contiguously() {
        let points: Vec<TrajPoint> = [0usize, 2, 3, 7, 9]
            .iter()
            .map(|&f| TrajPoint { frame: f, x: f as f64, y: (f as f64).sqrt() })
            .collect();
        let sm = smooth_trajectory(&HandTrajectory { points, smoothed: false }, 0.5).unwrap();
        let frames: Vec<usize> = sm.points.iter().map(|p| p.frame).collect();
        assert_eq!(frames, (0..=9).collect::<Vec<_>>());
        assert!(sm.smoothed);
    }

    #[test]
    fn smooth_is_idempotent_ish_at_lambda_zero() {
        let mut rng = Rng64::new(9);
        let points: Vec<TrajPoint> = (0..12)
            .map(|i| TrajPoint {
                frame: i,
                x: rng.range_f64(0.0, 64.0),
                y: rng.range_f64(0.0, 64.0),
            })
            .collect();
        let once = smooth_trajectory(&HandTrajectory { points, smoothed: false }, 0.0).unwrap();
        let twice = smooth_trajectory(&once, 0.0).unwrap();
        assert_eq!(once.points.len(), twice.points.len());
        for (a, b) in once.points.iter().zip(&twice.points) {
            assert!((a.x - b.x).abs() < 1e-6);
            assert!((a.y - b.y).abs() < 1e-6);
        }
    }

    #[test]
    fn smooth_rejects_bad_inputs() {
        let short = HandTrajectory {
            points: (0..3).map(|i| TrajPoint { frame: i, x: 0.0, y: 0.0 }).collect(),
            smoothed: false,
        };
        assert!(matches!(smooth_trajectory(&short, 1.0), Err(Error::TooFewPoints { .. })));
        let mut nonmono = line_traj(5);
        nonmono.points[2].frame = 0;
        assert!(matches!(smooth_trajectory(&nonmono, 1.0), Err(Error::NonMonotonicTime)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]
        #[test]
        fn smoothing_reduces_roughness_on_noisy_inputs(
            seed in 0u64..10_000,
            lambda in 0.5..50.0f64,
            n in 8usize..40,
        ) {
            let mut rng = Rng64::new(seed);
            let points: Vec<TrajPoint> = (0..n)
                .map(|i| {
                    let t = i as f64;
                    TrajPoint {
                        frame: i,
                        x: 10.0 + 2.0 * t + rng.next_gaussian(),
                        y: 30.0 + 8.0 * (0.3 * t).cos() + rng.next_gaussian(),
                    }
                })
                .collect();
            let raw = HandTrajectory { points, smoothed: false };
            let sm = smooth_trajectory(&raw, lambda).unwrap();
            let before = trajectory_roughness(&raw);
            let after = trajectory_roughness(&sm);
            prop_assert!(after <= before + 1e-9 * (1.0 + before));
            prop_assert_eq!(sm.points.len(), n);
        }
    }

    #[test]
    fn affordance_single_component_verbatim() {
        let (w, h) = (8usize, 8usize);
        let mut bm = vec![0u8; w * h];
        for y in 2..5 {
            for x in 2..5 {
                bm[y * w + x] = 1;
            }
        }
        let bb = BoundingBox::new(2.0, 2.0, 4.0, 4.0).unwrap();
        let res = build_affordance_mask(&bm, w, h, &bb, 0).unwrap();
        assert!(!res.used_fallback);
        assert_eq!(res.mask.to_bitmap().unwrap(), bm);
    }

    #[test]
    fn affordance_picks_overlapped_component() {
        let (w, h) = (8usize, 4usize);
        let mut bm = vec![0u8; w * h];
        bm[0] = 1; // first component: single pixel top-left
        for y in 1..3 {
            for x in 5..8 {
                bm[y * w + x] = 1; // second component
            }
        }
        let bb = BoundingBox::new(5.0, 1.0, 8.0, 3.0).unwrap();
        let res = build_affordance_mask(&bm, w, h, &bb, 2).unwrap();
        assert!(!res.used_fallback);
        let got = res.mask.to_bitmap().unwrap();
        assert_eq!(got[0], 0, "non-overlapped component must be dropped");
        assert_eq!(got[1 * w + 5], 1);
        assert_eq!(res.mask.keyframe_index, 2);
    }

    #[test]
    fn affordance_fallback_to_largest() {
        let (w, h) = (8usize, 4usize);
        let mut bm = vec![0u8; w * h];
        bm[0] = 1;
        bm[1] = 1; // component of size 2
        bm[3 * w + 7] = 1; // component of size 1
        let bb = BoundingBox::new(4.0, 0.0, 6.0, 2.0).unwrap(); // overlaps nothing
        let res = build_affordance_mask(&bm, w, h, &bb, 0).unwrap();
        assert!(res.used_fallback);
        let got = res.mask.to_bitmap().unwrap();
        assert_eq!(got[0], 1);
        assert_eq!(got[3 * w + 7], 0);
    }

    #[test]
    fn affordance_empty_bitmap_rejected() {
        let bb = BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        assert!(matches!(
            build_affordance_mask(&[0u8; 16], 4, 4, &bb, 0),
            Err(Error::EmptyBitmap)
        ));
    }

    #[test]
    fn affordance_max_overlap_matches_bruteforce() {
        let (w, h) = (16usize, 16usize);
        let mut rng = Rng64::new(21);
        for _ in 0..50 {
            // scatter a few random rectangles to get multiple components
            let mut bm = vec![0u8; w * h];
            for _ in 0..rng.below(4) + 2 {
                let x0 = rng.below(w - 3);
                let y0 = rng.below(h - 3);
                let bw = rng.below(4) + 1;
                let bh = rng.below(4) + 1;
                for y in y0..(y0 + bh).min(h) {
                    for x in x0..(x0 + bw).min(w) {
                        bm[y * w + x] = 1;
                    }
                }
            }
            if bm.iter().all(|&p| p == 0) {
                continue;
            }
            let bx = rng.below(w - 4) as f64;
            let by = rng.below(h - 4) as f64;
            let bb = BoundingBox::new(bx, by, bx + 4.0, by + 4.0).unwrap();
            let res = build_affordance_mask(&bm, w, h, &bb, 0).unwrap();

            // brute force: per-component overlap counts via labels
            let labels = label_components(&bm, w, h);
            let ncomp = *labels.iter().max().unwrap() as usize;
            let (xs, xe, ys, ye) = bb.pixel_span(w, h);
            let mut overlap = vec![0usize; ncomp];
            for y in ys..ye {
                for x in xs..xe {
                    let l = labels[y * w + x];
                    if l > 0 {
                        overlap[l as usize - 1] += 1;
                    }
                }
            }
            let best = *overlap.iter().max().unwrap();
            let chosen_bitmap = res.mask.to_bitmap().unwrap();
            let chosen_label = labels
                .iter()
                .zip(&chosen_bitmap)
                .find_map(|(&l, &b)| if b != 0 { Some(l) } else { None })
                .unwrap();
            let chosen_overlap = overlap[chosen_label as usize - 1];
            if best > 0 {
                assert!(!res.used_fallback);
                assert_eq!(chosen_overlap, best, "chosen component must have max overlap");
                // tie-break: no smaller-id component may have the same overlap
                for (c, &o) in overlap.iter().enumerate() {
                    if (c as u32) < chosen_label - 1 {
                        assert!(o < best);
                    }
                }
            } else {
                assert!(res.used_fallback);
            }
        }
    }
}
