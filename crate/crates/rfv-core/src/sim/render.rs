//! Deterministic rasterization of world states.

use std::path::Path;

use crate::bank::{Frame, HandTrajectory};
use crate::error::Result;

use super::world::{GoalKind, Shape, WorldState};

/// RGB palette matching [`super::world::COLOR_NAMES`].
pub const PALETTE: [[u8; 3]; 7] = [
    [220, 60, 50],   // red
    [70, 190, 80],   // green
    [70, 100, 230],  // blue
    [230, 210, 60],  // yellow
    [160, 70, 200],  // purple
    [240, 140, 40],  // orange
    [60, 210, 210],  // cyan
];

const BACKGROUND: [u8; 3] = [42, 42, 48];
const GOAL_FILL: [u8; 3] = [92, 92, 100];
const EFFECTOR_COLOR: [u8; 3] = [235, 235, 235];
const HAND_COLOR: [u8; 3] = [224, 172, 105];

struct Canvas {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&fill);
        }
        Canvas { width, height, data }
    }

    fn put(&mut self, x: usize, y: usize, color: [u8; 3]) {
        if x < self.width && y < self.height {
            let base = (y * self.width + x) * 3;
            self.data[base..base + 3].copy_from_slice(&color);
        }
    }

    /// Fill pixels whose centers lie within the disc (world coords in
    /// [0,1], radius in world units).
    fn fill_disc(&mut self, cx: f64, cy: f64, radius: f64, color: [u8; 3]) {
        let (w, h) = (self.width as f64, self.height as f64);
        let (px, py, pr) = (cx * w, cy * h, radius * w.max(h));
        let x0 = ((px - pr).floor().max(0.0)) as usize;
        let x1 = ((px + pr).ceil().min(w)) as usize;
        let y0 = ((py - pr).floor().max(0.0)) as usize;
        let y1 = ((py + pr).ceil().min(h)) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - px;
                let dy = y as f64 + 0.5 - py;
                if dx * dx + dy * dy <= pr * pr {
                    self.put(x, y, color);
                }
            }
        }
    }

    fn fill_rect(&mut self, cx: f64, cy: f64, half: f64, color: [u8; 3]) {
        let (w, h) = (self.width as f64, self.height as f64);
        let x0 = (((cx - half) * w).floor().max(0.0)) as usize;
        let x1 = (((cx + half) * w).ceil().min(w)) as usize;
        let y0 = (((cy - half) * h).floor().max(0.0)) as usize;
        let y1 = (((cy + half) * h).ceil().min(h)) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let in_x = x as f64 + 0.5 >= (cx - half) * w && x as f64 + 0.5 < (cx + half) * w;
                let in_y = y as f64 + 0.5 >= (cy - half) * h && y as f64 + 0.5 < (cy + half) * h;
                if in_x && in_y {
                    self.put(x, y, color);
                }
            }
        }
    }

    fn outline_rect(&mut self, cx: f64, cy: f64, half: f64, color: [u8; 3]) {
        let (w, h) = (self.width as f64, self.height as f64);
        let x0 = (((cx - half) * w).round().max(0.0)) as usize;
        let x1 = (((cx + half) * w).round().min(w - 1.0)) as usize;
        let y0 = (((cy - half) * h).round().max(0.0)) as usize;
        let y1 = (((cy + half) * h).round().min(h - 1.0)) as usize;
        for x in x0..=x1 {
            self.put(x, y0, color);
            self.put(x, y1, color);
        }
        for y in y0..=y1 {
            self.put(x0, y, color);
            self.put(x1, y, color);
        }
    }

    fn into_frame(self) -> Frame {
        Frame::new(self.width, self.height, self.data)
    }
}

fn draw_scene(canvas: &mut Canvas, state: &WorldState, hand: bool) {
    for goal in &state.targets {
        match goal.kind {
            GoalKind::Pad => canvas.fill_disc(goal.x, goal.y, goal.size, GOAL_FILL),
            GoalKind::Zone => canvas.fill_disc(goal.x, goal.y, goal.size, GOAL_FILL),
            GoalKind::Box => {
                canvas.fill_rect(goal.x, goal.y, goal.size, [70, 70, 78]);
                canvas.outline_rect(goal.x, goal.y, goal.size, [150, 150, 160]);
            }
        }
    }
    for obj in &state.objects {
        let color = PALETTE[obj.color % PALETTE.len()];
        match obj.shape {
            Shape::Disc => canvas.fill_disc(obj.x, obj.y, obj.size, color),
            Shape::Rect => canvas.fill_rect(obj.x, obj.y, obj.size, color),
        }
    }
    if hand {
        // human hand cursor: skin-tone disc with a darker tip
        canvas.fill_disc(state.effector_x, state.effector_y, 0.035, HAND_COLOR);
        canvas.fill_disc(state.effector_x, state.effector_y, 0.012, [150, 100, 60]);
    } else {
        canvas.fill_disc(state.effector_x, state.effector_y, 0.028, EFFECTOR_COLOR);
        if state.gripper < 0.5 {
            canvas.fill_disc(state.effector_x, state.effector_y, 0.012, [30, 30, 30]);
        }
    }
}

/// Robot-camera render.
pub fn render(state: &WorldState, width: usize, height: usize) -> Frame {
    let mut canvas = Canvas::new(width, height, BACKGROUND);
    draw_scene(&mut canvas, state, false);
    canvas.into_frame()
}

/// Named view: "front" is the base camera; any other view id renders the
/// scene mirrored horizontally (a cheap second viewpoint).
pub fn render_view(state: &WorldState, view: &str, width: usize, height: usize) -> Frame {
    let frame = render(state, width, height);
    if view == "front" {
        return frame;
    }
    mirror(frame)
}

/// Human-video render with a hand cursor instead of the effector.
pub fn render_hand_view(state: &WorldState, view: &str, width: usize, height: usize) -> Frame {
    let mut canvas = Canvas::new(width, height, BACKGROUND);
    draw_scene(&mut canvas, state, true);
    let frame = canvas.into_frame();
    if view == "front" {
        return frame;
    }
    mirror(frame)
}

fn mirror(frame: Frame) -> Frame {
    let (w, h) = (frame.width, frame.height);
    let mut data = vec![0u8; frame.data.len()];
    for y in 0..h {
        for x in 0..w {
            let src = (y * w + x) * 3;
            let dst = (y * w + (w - 1 - x)) * 3;
            data[dst..dst + 3].copy_from_slice(&frame.data[src..src + 3]);
        }
    }
    Frame::new(w, h, data)
}

/// Binary silhouette of one object, used for affordance masks.
pub fn render_object_silhouette(
    state: &WorldState,
    object_index: usize,
    width: usize,
    height: usize,
) -> Vec<u8> {
    let mut canvas = Canvas::new(width, height, [0, 0, 0]);
    let obj = &state.objects[object_index];
    match obj.shape {
        Shape::Disc => canvas.fill_disc(obj.x, obj.y, obj.size, [255, 255, 255]),
        Shape::Rect => canvas.fill_rect(obj.x, obj.y, obj.size, [255, 255, 255]),
    }
    canvas.data.chunks_exact(3).map(|px| u8::from(px[0] != 0)).collect()
}

/// Tiny SVG polyline plot of a trajectory, for eyeballing results.
pub fn write_trajectory_svg(traj: &HandTrajectory, width: usize, height: usize, path: &Path) -> Result<()> {
    let mut points = String::new();
    for p in &traj.points {
        points.push_str(&format!("{:.2},{:.2} ", p.x, p.y));
    }
    let svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"#2a2a30\"/>\n\
         <polyline points=\"{points}\" fill=\"none\" stroke=\"#e0ac69\" stroke-width=\"1.5\"/>\n\
         </svg>\n"
    );
    std::fs::write(path, svg)?;
    Ok(())
}

/// Convenience for tests: centroid of pixels that differ from background.
pub fn foreground_centroid(frame: &Frame) -> Option<(f64, f64)> {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut n = 0usize;
    for y in 0..frame.height {
        for x in 0..frame.width {
            let base = (y * frame.width + x) * 3;
            let px = &frame.data[base..base + 3];
            if px != BACKGROUND {
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                n += 1;
            }
        }
    }
    if n == 0 {
        None
    } else {
        Some((sx / n as f64, sy / n as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::super::world::{GoalRegion, SimObject};
    use super::*;

    fn empty_state() -> WorldState {
        WorldState {
            effector_x: 2.0, // off-canvas so nothing draws
            effector_y: 2.0,
            gripper: 1.0,
            yaw: 0.0,
            objects: vec![],
            targets: vec![],
            steps: 0,
        }
    }

    #[test]
    fn empty_scene_is_background_only() {
        let frame = render(&empty_state(), 32, 32);
        for px in frame.data.chunks_exact(3) {
            assert_eq!(px, BACKGROUND);
        }
    }

    #[test]
    fn renders_are_byte_identical() {
        let mut state = empty_state();
        state.objects.push(SimObject {
            shape: Shape::Disc,
            x: 0.4,
            y: 0.6,
            size: 0.1,
            color: 2,
            held: false,
        });
        let a = render(&state, 64, 64);
        let b = render(&state, 64, 64);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn centered_object_renders_centered() {
        let mut state = empty_state();
        state.objects.push(SimObject {
            shape: Shape::Disc,
            x: 0.5,
            y: 0.5,
            size: 0.1,
            color: 0,
            held: false,
        });
        let frame = render(&state, 64, 64);
        let (cx, cy) = foreground_centroid(&frame).unwrap();
        assert!((cx - 32.0).abs() <= 1.0, "centroid x {cx}");
        assert!((cy - 32.0).abs() <= 1.0, "centroid y {cy}");
    }

    #[test]
    fn silhouette_matches_rendered_object_pixels() {
        let mut state = empty_state();
        state.objects.push(SimObject {
            shape: Shape::Rect,
            x: 0.3,
            y: 0.7,
            size: 0.08,
            color: 1,
            held: false,
        });
        let sil = render_object_silhouette(&state, 0, 64, 64);
        let frame = render(&state, 64, 64);
        for (i, px) in frame.data.chunks_exact(3).enumerate() {
            let is_object = px == PALETTE[1];
            assert_eq!(sil[i] != 0, is_object, "pixel {i}");
        }
    }

    #[test]
    fn mirrored_view_flips_horizontally() {
        let mut state = empty_state();
        state.objects.push(SimObject {
            shape: Shape::Disc,
            x: 0.25,
            y: 0.5,
            size: 0.08,
            color: 3,
            held: false,
        });
        let front = render_view(&state, "front", 64, 64);
        let side = render_view(&state, "side", 64, 64);
        let (fx, _) = foreground_centroid(&front).unwrap();
        let (sx, _) = foreground_centroid(&side).unwrap();
        assert!((fx + sx - 64.0).abs() < 1.0, "front {fx} side {sx}");
    }

    #[test]
    fn goal_kinds_draw_without_panicking() {
        let mut state = empty_state();
        state.targets = vec![
            GoalRegion { kind: GoalKind::Pad, x: 0.2, y: 0.2, size: 0.1 },
            GoalRegion { kind: GoalKind::Box, x: 0.7, y: 0.7, size: 0.1 },
            GoalRegion { kind: GoalKind::Zone, x: 0.5, y: 0.5, size: 0.12 },
        ];
        let frame = render(&state, 48, 48);
        assert!(frame.data.chunks_exact(3).any(|px| px != BACKGROUND));
    }
}
