//! Scripted waypoint experts: approach, grasp, carry, release (or push),
//! with rejection on the rare unreachable configuration.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::policy::RobotObservation;

use super::render::render_view;
use super::world::{step_world, success, SimConfig, TaskSpec, TaskType, WorldState};
use super::Demo;

/// Raw expert run: the visited states (length steps+1, including the
/// initial state) and the actions taken.
#[derive(Debug, Clone)]
pub struct ExpertTrace {
    pub states: Vec<WorldState>,
    pub actions: Vec<Vec<f64>>,
    pub success: bool,
}

const WAYPOINT_EPS: f64 = 0.012;
const PHASE_CAP: usize = 60;
/// Emitted targets are bounded steps toward the waypoint; the dynamics
/// clip velocity anyway, and bounded targets make a far smoother cloning
/// target than raw far-away waypoints.
const EMIT_STEP: f64 = 0.22;

fn toward(state: &WorldState, target: (f64, f64)) -> (f64, f64) {
    let dx = target.0 - state.effector_x;
    let dy = target.1 - state.effector_y;
    let dist = (dx * dx + dy * dy).sqrt();
    if dist <= EMIT_STEP {
        target
    } else {
        (
            state.effector_x + dx / dist * EMIT_STEP,
            state.effector_y + dy / dist * EMIT_STEP,
        )
    }
}

fn drive_to(
    state: &mut WorldState,
    trace: &mut ExpertTrace,
    target: (f64, f64),
    gripper: f64,
    cfg: &SimConfig,
) -> Result<()> {
    for _ in 0..PHASE_CAP {
        let d = ((state.effector_x - target.0).powi(2) + (state.effector_y - target.1).powi(2))
            .sqrt();
        if d <= WAYPOINT_EPS && (state.gripper - gripper).abs() < 0.25 {
            return Ok(());
        }
        let emit = toward(state, target);
        let action = vec![emit.0, emit.1, gripper, 0.0];
        step_world(state, &action, cfg);
        trace.actions.push(action);
        trace.states.push(state.clone());
    }
    Err(Error::ExpertFailure(format!(
        "waypoint ({:.2}, {:.2}) unreachable",
        target.0, target.1
    )))
}

fn hold_action(state: &mut WorldState, trace: &mut ExpertTrace, gripper: f64, cfg: &SimConfig) {
    let action = vec![state.effector_x, state.effector_y, gripper, 0.0];
    step_world(state, &action, cfg);
    trace.actions.push(action);
    trace.states.push(state.clone());
}

/// Two-step gripper ramp that skips the push band: the first step already
/// lands in the target band so the grasp (or release) fires immediately.
fn ramp_gripper(state: &mut WorldState, trace: &mut ExpertTrace, to: f64, cfg: &SimConfig) {
    let from = state.gripper;
    for frac in [0.7, 1.0] {
        hold_action(state, trace, from + (to - from) * frac, cfg);
    }
}

/// Run the scripted controller; returns the full state/action trace.
pub fn run_expert(initial: &WorldState, spec: &TaskSpec, cfg: &SimConfig) -> Result<ExpertTrace> {
    let mut state = initial.clone();
    let mut trace = ExpertTrace {
        states: vec![state.clone()],
        actions: Vec::new(),
        success: false,
    };
    let goal = state.targets[0].clone();
    let obj = (state.objects[0].x, state.objects[0].y);

    match spec.task_type {
        TaskType::Reach => {
            drive_to(&mut state, &mut trace, obj, 1.0, cfg)?;
        }
        TaskType::PickPlace | TaskType::PlaceInBox => {
            drive_to(&mut state, &mut trace, obj, 1.0, cfg)?;
            ramp_gripper(&mut state, &mut trace, 0.0, cfg); // close
            if state.held_object() != Some(0) {
                return Err(Error::ExpertFailure("grasp missed the target object".into()));
            }
            drive_to(&mut state, &mut trace, (goal.x, goal.y), 0.0, cfg)?;
            ramp_gripper(&mut state, &mut trace, 1.0, cfg); // release
            // retreat so the scene reads as "placed"
            drive_to(&mut state, &mut trace, (goal.x, (goal.y - 0.2).max(0.05)), 1.0, cfg)?;
        }
        TaskType::Push => {
            // line up behind the object relative to the goal, close the
            // fist clear of anything graspable, then shove
            let dir = ((goal.x - obj.0), (goal.y - obj.1));
            let len = (dir.0 * dir.0 + dir.1 * dir.1).sqrt().max(1e-9);
            let behind = (
                (obj.0 - dir.0 / len * 0.13).clamp(0.02, 0.98),
                (obj.1 - dir.1 / len * 0.13).clamp(0.02, 0.98),
            );
            drive_to(&mut state, &mut trace, behind, 1.0, cfg)?;
            hold_action(&mut state, &mut trace, 0.5, cfg); // plate down
            if state.held_object().is_some() {
                return Err(Error::ExpertFailure("push setup grasped an object".into()));
            }
            for _ in 0..PHASE_CAP {
                if success(&state, spec) {
                    break;
                }
                // chase a press point held just behind the object on the
                // object-goal line; the fist can push but never overtake
                let o = &state.objects[0];
                let push_dir = ((goal.x - o.x), (goal.y - o.y));
                let plen = (push_dir.0 * push_dir.0 + push_dir.1 * push_dir.1).sqrt().max(1e-9);
                let press = 0.05;
                let target = (
                    (o.x - push_dir.0 / plen * press).clamp(0.0, 1.0),
                    (o.y - push_dir.1 / plen * press).clamp(0.0, 1.0),
                );
                let emit = toward(&state, target);
                let action = vec![emit.0, emit.1, 0.5, 0.0];
                step_world(&mut state, &action, cfg);
                trace.actions.push(action);
                trace.states.push(state.clone());
            }
            // lift the fist and back off so the final frame is unambiguous
            let retreat = ((goal.x).clamp(0.05, 0.95), (goal.y - 0.22).max(0.05));
            drive_to(&mut state, &mut trace, retreat, 1.0, cfg)?;
        }
    }

    trace.success = success(&state, spec);
    if !trace.success {
        return Err(Error::ExpertFailure(format!(
            "{:?} predicate unsatisfied after {} steps",
            spec.task_type,
            trace.actions.len()
        )));
    }
    Ok(trace)
}

/// Render an expert trace into a recorded demo (robot-camera views).
pub fn scripted_expert(
    initial: &WorldState,
    instruction: &str,
    spec: &TaskSpec,
    cfg: &SimConfig,
) -> Result<Demo> {
    let trace = run_expert(initial, spec, cfg)?;
    let mut observations = Vec::with_capacity(trace.actions.len());
    for state in &trace.states[..trace.actions.len()] {
        observations.push(observe_state(state, instruction, cfg));
    }
    let demo = Demo {
        instruction: instruction.to_string(),
        observations,
        actions: trace.actions,
        success: trace.success,
    };
    demo.validate()?;
    Ok(demo)
}

pub(crate) fn observe_state(state: &WorldState, instruction: &str, cfg: &SimConfig) -> RobotObservation {
    let mut frames = BTreeMap::new();
    for view in &cfg.views {
        frames.insert(
            view.clone(),
            render_view(state, view, cfg.render_width, cfg.render_height),
        );
    }
    RobotObservation {
        frames,
        proprio: vec![state.effector_x, state.effector_y, state.gripper, state.yaw],
        instruction: instruction.to_string(),
    }
}
