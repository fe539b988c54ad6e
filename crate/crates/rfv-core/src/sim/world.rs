//! World state, task generation, kinematic dynamics, success predicates.

use serde::{Deserialize, Serialize};

use crate::rng::Rng64;

/// Color palette indices; rendering maps them to RGB, instructions to
/// names. Index 6 is held out of robot demos by default and exercised by
/// the appearance-generalization probe.
pub const COLOR_NAMES: [&str; 7] = ["red", "green", "blue", "yellow", "purple", "orange", "cyan"];

pub fn color_name(color: usize) -> &'static str {
    COLOR_NAMES[color % COLOR_NAMES.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disc,
    Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub shape: Shape,
    pub x: f64,
    pub y: f64,
    /// Radius (disc) or half-extent (rect).
    pub size: f64,
    pub color: usize,
    pub held: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    Pad,
    Box,
    Zone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub kind: GoalKind,
    pub x: f64,
    pub y: f64,
    /// Radius (pad/zone) or half-extent (box).
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub effector_x: f64,
    pub effector_y: f64,
    /// 1 = open, 0 = closed.
    pub gripper: f64,
    pub yaw: f64,
    pub objects: Vec<SimObject>,
    pub targets: Vec<GoalRegion>,
    pub steps: usize,
}

impl WorldState {
    pub fn held_object(&self) -> Option<usize> {
        self.objects.iter().position(|o| o.held)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Reach,
    PickPlace,
    PlaceInBox,
    Push,
}

impl TaskType {
    pub fn label(self) -> &'static str {
        match self {
            TaskType::Reach => "reach",
            TaskType::PickPlace => "pick_place",
            TaskType::PlaceInBox => "place_in_box",
            TaskType::Push => "push",
        }
    }
}

/// Rectangular spawn window for the task object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnRegion {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_type: TaskType,
    /// Instruction template; `{color}` is replaced by the target color.
    pub template: String,
    /// Colors the target object may take, one drawn per episode.
    pub colors: Vec<usize>,
    pub distractors: usize,
    /// Success tolerance (distance to goal center, or box half-extent).
    pub goal_radius: f64,
    pub spawn: SpawnRegion,
}

impl TaskSpec {
    pub fn instruction(&self, color: usize) -> String {
        self.template.replace("{color}", color_name(color))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub render_width: usize,
    pub render_height: usize,
    pub max_steps: usize,
    /// Max effector displacement per step.
    pub speed: f64,
    pub grasp_radius: f64,
    pub effector_radius: f64,
    pub views: Vec<String>,
    pub distractors: usize,
    pub train_colors: Vec<usize>,
    pub holdout_color: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            render_width: 64,
            render_height: 64,
            max_steps: 40,
            speed: 0.1,
            grasp_radius: 0.12,
            effector_radius: 0.03,
            views: vec!["front".to_string()],
            distractors: 2,
            train_colors: vec![0, 1, 2, 3],
            holdout_color: 6,
        }
    }
}

const TRAIN_SPAWN: SpawnRegion = SpawnRegion { x0: 0.15, x1: 0.85, y0: 0.15, y1: 0.55 };

/// The built-in 4-task suite.
pub fn default_suite(cfg: &SimConfig) -> Vec<TaskSpec> {
    let colors = cfg.train_colors.clone();
    vec![
        TaskSpec {
            task_type: TaskType::Reach,
            template: "touch the {color} marker".into(),
            colors: colors.clone(),
            distractors: cfg.distractors,
            goal_radius: 0.1,
            spawn: TRAIN_SPAWN,
        },
        TaskSpec {
            task_type: TaskType::PickPlace,
            template: "put the {color} cube on the pad".into(),
            colors: colors.clone(),
            distractors: cfg.distractors,
            goal_radius: 0.11,
            spawn: TRAIN_SPAWN,
        },
        TaskSpec {
            task_type: TaskType::PlaceInBox,
            template: "place the {color} ball in the box".into(),
            colors: colors.clone(),
            distractors: cfg.distractors,
            goal_radius: 0.11,
            spawn: TRAIN_SPAWN,
        },
        TaskSpec {
            task_type: TaskType::Push,
            template: "push the {color} block into the zone".into(),
            colors,
            distractors: cfg.distractors,
            goal_radius: 0.13,
            spawn: TRAIN_SPAWN,
        },
    ]
}

const OBJECT_SIZE: f64 = 0.07;
const MIN_SEPARATION: f64 = 0.2;

/// Deterministic task instantiation: target object, distractors (distinct
/// colors), goal region, fixed effector start. Objects spawn without
/// overlap, away from the goal.
pub fn generate_task(spec: &TaskSpec, seed: u64) -> (WorldState, String) {
    let mut rng = Rng64::new(seed ^ 0x5a5a_0001);
    let color = spec.colors[rng.below(spec.colors.len())];
    let instruction = spec.instruction(color);

    let goal_kind = match spec.task_type {
        TaskType::Reach => GoalKind::Pad,
        TaskType::PickPlace => GoalKind::Pad,
        TaskType::PlaceInBox => GoalKind::Box,
        TaskType::Push => GoalKind::Zone,
    };
    // goal sits in the upper band, clear of the spawn window's bottom
    let goal = GoalRegion {
        kind: goal_kind,
        x: rng.range_f64(0.2, 0.8),
        y: rng.range_f64(0.62, 0.82),
        size: spec.goal_radius,
    };

    let target_shape = match spec.task_type {
        TaskType::Reach => Shape::Disc,
        TaskType::PickPlace => Shape::Rect,
        TaskType::PlaceInBox => Shape::Disc,
        TaskType::Push => Shape::Rect,
    };

    let mut objects: Vec<SimObject> = Vec::new();
    let place = |rng: &mut Rng64, shape: Shape, color: usize, objects: &[SimObject]| -> SimObject {
        loop {
            let x = rng.range_f64(spec.spawn.x0, spec.spawn.x1);
            let y = rng.range_f64(spec.spawn.y0, spec.spawn.y1);
            let clear_of_objects = objects
                .iter()
                .all(|o| ((o.x - x).powi(2) + (o.y - y).powi(2)).sqrt() >= MIN_SEPARATION);
            let clear_of_goal =
                ((goal.x - x).powi(2) + (goal.y - y).powi(2)).sqrt() >= goal.size + 0.12;
            if clear_of_objects && clear_of_goal {
                return SimObject { shape, x, y, size: OBJECT_SIZE, color, held: false };
            }
        }
    };

    let target = place(&mut rng, target_shape, color, &objects);
    objects.push(target);
    for _ in 0..spec.distractors {
        // distractor colors differ from the target
        let mut c = spec.colors[rng.below(spec.colors.len())];
        if spec.colors.len() > 1 {
            while c == color {
                c = spec.colors[rng.below(spec.colors.len())];
            }
        } else {
            c = (color + 1) % COLOR_NAMES.len();
        }
        let shape = if rng.next_f64() < 0.5 { Shape::Disc } else { Shape::Rect };
        let obj = place(&mut rng, shape, c, &objects);
        objects.push(obj);
    }

    let state = WorldState {
        effector_x: 0.5,
        effector_y: 0.9,
        gripper: 1.0,
        yaw: 0.0,
        objects,
        targets: vec![goal],
        steps: 0,
    };
    (state, instruction)
}

/// Gripper action bands: below GRIP_GRAB the hand is down and grasping
/// (it grabs the nearest object in range and holds it); between GRIP_GRAB
/// and GRIP_HOVER it acts as a lowered plate that pushes objects without
/// grabbing; above GRIP_HOVER it hovers clear of everything and releases.
pub const GRIP_GRAB: f64 = 0.35;
pub const GRIP_HOVER: f64 = 0.65;

/// Kinematic step: move toward the target pose with clipped velocity,
/// then apply the gripper band semantics. Grasping needs no transition,
/// so a policy that closes early can still recover.
pub fn step_world(state: &mut WorldState, action: &[f64], cfg: &SimConfig) {
    let (ax, ay) = (action[0].clamp(0.0, 1.0), action[1].clamp(0.0, 1.0));
    let a_grip = action.get(2).copied().unwrap_or(1.0).clamp(0.0, 1.0);
    let a_yaw = action.get(3).copied().unwrap_or(0.0);
    let lowered = a_grip < GRIP_HOVER;

    let dx = ax - state.effector_x;
    let dy = ay - state.effector_y;
    let dist = (dx * dx + dy * dy).sqrt();
    let (move_x, move_y) = if dist > cfg.speed {
        (dx / dist * cfg.speed, dy / dist * cfg.speed)
    } else {
        (dx, dy)
    };
    // substep the motion so a pushed object is carried ahead of the plate
    // instead of being jumped over and expelled backwards
    let substeps = ((move_x.hypot(move_y) / 0.02).ceil() as usize).max(1);
    for _ in 0..substeps {
        state.effector_x += move_x / substeps as f64;
        state.effector_y += move_y / substeps as f64;
        if lowered && state.held_object().is_none() {
            push_out(state, cfg);
        }
    }
    state.gripper = a_grip;
    state.yaw = a_yaw;

    if let Some(idx) = state.held_object() {
        if a_grip < GRIP_GRAB {
            state.objects[idx].x = state.effector_x;
            state.objects[idx].y = state.effector_y;
        } else {
            state.objects[idx].held = false;
        }
    } else if a_grip < GRIP_GRAB {
        // grab the nearest object in range (ties: lowest index); the
        // grasp radius exceeds the pushing contact distance, so an early
        // close still captures the object it pressed against
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in state.objects.iter().enumerate() {
            let d = ((o.x - state.effector_x).powi(2) + (o.y - state.effector_y).powi(2)).sqrt();
            if d <= cfg.grasp_radius && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            state.objects[i].held = true;
            state.objects[i].x = state.effector_x;
            state.objects[i].y = state.effector_y;
        }
    }

    state.steps += 1;
}

/// Displace non-held objects out of the effector footprint (radially).
fn push_out(state: &mut WorldState, cfg: &SimConfig) {
    let (ex, ey) = (state.effector_x, state.effector_y);
    for o in &mut state.objects {
        if o.held {
            continue;
        }
        let dx = o.x - ex;
        let dy = o.y - ey;
        let d = (dx * dx + dy * dy).sqrt();
        let contact = o.size + cfg.effector_radius;
        if d < contact {
            if d > 1e-9 {
                o.x = ex + dx / d * contact;
                o.y = ey + dy / d * contact;
            } else {
                o.y = ey + contact;
            }
            o.x = o.x.clamp(0.0, 1.0);
            o.y = o.y.clamp(0.0, 1.0);
        }
    }
}

/// Success predicate: a pure function of the state.
pub fn success(state: &WorldState, spec: &TaskSpec) -> bool {
    let goal = &state.targets[0];
    let target = &state.objects[0];
    match spec.task_type {
        TaskType::Reach => {
            let d = ((state.effector_x - target.x).powi(2) + (state.effector_y - target.y).powi(2))
                .sqrt();
            d <= spec.goal_radius
        }
        TaskType::PickPlace => {
            let d = ((target.x - goal.x).powi(2) + (target.y - goal.y).powi(2)).sqrt();
            !target.held && d <= spec.goal_radius
        }
        TaskType::PlaceInBox => {
            !target.held
                && (target.x - goal.x).abs() <= goal.size
                && (target.y - goal.y).abs() <= goal.size
        }
        TaskType::Push => {
            let d = ((target.x - goal.x).powi(2) + (target.y - goal.y).powi(2)).sqrt();
            d <= spec.goal_radius
        }
    }
}

/// Probe variants used by the generalization harness.
pub fn with_holdout_color(spec: &TaskSpec, holdout: usize) -> TaskSpec {
    TaskSpec { colors: vec![holdout], ..spec.clone() }
}

pub fn with_probe_spawn(spec: &TaskSpec) -> TaskSpec {
    // narrow strip deliberately outside the y-band used at training time
    TaskSpec {
        spawn: SpawnRegion { x0: 0.15, x1: 0.85, y0: 0.56, y1: 0.6 },
        ..spec.clone()
    }
}

pub fn with_extra_distractors(spec: &TaskSpec, extra: usize) -> TaskSpec {
    TaskSpec { distractors: spec.distractors + extra, ..spec.clone() }
}
