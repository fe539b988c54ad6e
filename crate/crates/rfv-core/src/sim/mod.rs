//! Desk-scale 2D tabletop benchmark: task generation, scripted experts,
//! rendering, synthetic human-video bank generation, rollout evaluation,
//! and ablation harnesses.
//!
//! Dynamics are kinematic: the action is a target pose, the effector moves
//! toward it with clipped velocity, a closing gripper grabs the nearest
//! object in range, and a held object tracks the effector. Non-held
//! objects are displaced when the effector presses into them, which is
//! what makes the push task possible.

mod ablate;
mod demos;
mod expert;
mod render;
mod rollout;
mod synth;
mod world;

pub use ablate::{ablation_k, ablation_midlevel, AblationKTable, MidlevelTable};
pub use demos::{load_demos, save_demos};
pub use expert::{run_expert, scripted_expert, ExpertTrace};
pub use render::{
    foreground_centroid, render, render_hand_view, render_object_silhouette, render_view,
    write_trajectory_svg, PALETTE,
};
pub use rollout::{evaluate, observe, rollout, RolloutOutcome};
pub use synth::synthesize_human_bank;
pub use world::{
    color_name, default_suite, generate_task, step_world, success, with_extra_distractors,
    with_holdout_color, with_probe_spawn, GoalKind, GoalRegion, Shape, SimConfig, SimObject,
    TaskSpec, TaskType, WorldState,
};

use serde::{Deserialize, Serialize};

use crate::policy::{ActionChunk, RobotObservation};

/// One expert episode: instruction, per-step observations and actions,
/// and the terminal success flag (recorded demos always succeed).
#[derive(Debug, Clone)]
pub struct Demo {
    pub instruction: String,
    pub observations: Vec<RobotObservation>,
    pub actions: Vec<Vec<f64>>,
    pub success: bool,
}

impl Demo {
    pub fn validate(&self) -> crate::Result<()> {
        if self.observations.len() != self.actions.len() {
            return Err(crate::Error::invariant(
                "demo-lengths",
                format!(
                    "{} observations vs {} actions",
                    self.observations.len(),
                    self.actions.len()
                ),
            ));
        }
        if !self.success {
            return Err(crate::Error::invariant("demo-success", "recorded demos must succeed"));
        }
        Ok(())
    }

    /// Expert chunk starting at t: actions[t..t+H], padded by repeating
    /// the final action.
    pub fn expert_chunk(&self, t: usize, horizon: usize) -> ActionChunk {
        let dof = self.actions[0].len();
        let mut actions = Vec::with_capacity(horizon * dof);
        for i in 0..horizon {
            let idx = (t + i).min(self.actions.len() - 1);
            actions.extend_from_slice(&self.actions[idx]);
        }
        ActionChunk { horizon, dof, actions }
    }
}

/// Success-rate table indexed by task and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessTable {
    pub tasks: Vec<String>,
    pub seeds: Vec<u64>,
    /// rates[task][seed]
    pub rates: Vec<Vec<f64>>,
}

impl SuccessTable {
    pub fn task_mean(&self, task: usize) -> f64 {
        let row = &self.rates[task];
        row.iter().sum::<f64>() / row.len() as f64
    }

    pub fn aggregate(&self) -> f64 {
        if self.rates.is_empty() {
            return 0.0;
        }
        (0..self.tasks.len()).map(|t| self.task_mean(t)).sum::<f64>() / self.tasks.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task");
        for seed in &self.seeds {
            out.push_str(&format!(",seed{seed}"));
        }
        out.push_str(",mean\n");
        for (t, task) in self.tasks.iter().enumerate() {
            out.push_str(task);
            for rate in &self.rates[t] {
                out.push_str(&format!(",{rate:.4}"));
            }
            out.push_str(&format!(",{:.4}\n", self.task_mean(t)));
        }
        out.push_str(&format!(
            "aggregate{},{:.4}\n",
            ",".repeat(self.seeds.len()),
            self.aggregate()
        ));
        out
    }

    pub fn to_text(&self) -> String {
        let name_width = self
            .tasks
            .iter()
            .map(String::len)
            .chain(std::iter::once("aggregate".len()))
            .max()
            .unwrap_or(9)
            + 1;
        let mut out = format!("{:<name_width$}", "task");
        for seed in &self.seeds {
            out.push_str(&format!("  seed{seed:<5}"));
        }
        out.push_str("   mean\n");
        for (t, task) in self.tasks.iter().enumerate() {
            out.push_str(&format!("{task:<name_width$}"));
            for rate in &self.rates[t] {
                out.push_str(&format!("  {rate:>9.3}"));
            }
            out.push_str(&format!("  {:>5.3}\n", self.task_mean(t)));
        }
        out.push_str(&format!(
            "{:<name_width$}{}  {:>5.3}\n",
            "aggregate",
            "  ---------".repeat(self.seeds.len()),
            self.aggregate()
        ));
        out
    }
}
