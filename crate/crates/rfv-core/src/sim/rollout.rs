//! Closed-loop evaluation: observe, retrieve, act, step.

use crate::bank::Bank;
use crate::error::Result;
use crate::policy::{PolicyNet, PolicyRuntime, RobotObservation};
use crate::retriever::{EmbedderConfig, RetrievalIndex};
use crate::rng::Rng64;

use super::expert::observe_state;
use super::world::{generate_task, step_world, success, SimConfig, TaskSpec, WorldState};
use super::SuccessTable;

/// Current observation for the policy (renders every configured view).
pub fn observe(state: &WorldState, instruction: &str, cfg: &SimConfig) -> RobotObservation {
    observe_state(state, instruction, cfg)
}

#[derive(Debug, Clone)]
pub struct RolloutOutcome {
    pub success: bool,
    pub steps: usize,
    pub effector_path: Vec<(f64, f64)>,
}

/// Run one closed-loop episode from the task seed.
pub fn rollout(
    net: &PolicyNet,
    bank: &Bank,
    index: &RetrievalIndex,
    embedder: &EmbedderConfig,
    spec: &TaskSpec,
    seed: u64,
    cfg: &SimConfig,
) -> Result<RolloutOutcome> {
    let mut runtime = PolicyRuntime::new(net, bank, index, embedder);
    rollout_with_runtime(&mut runtime, spec, seed, cfg)
}

/// Same, reusing a runtime (and its memory caches) across episodes.
pub fn rollout_with_runtime(
    runtime: &mut PolicyRuntime<'_>,
    spec: &TaskSpec,
    seed: u64,
    cfg: &SimConfig,
) -> Result<RolloutOutcome> {
    let (mut state, instruction) = generate_task(spec, seed);
    runtime.reset();
    let mut path = vec![(state.effector_x, state.effector_y)];
    for step in 0..cfg.max_steps {
        let obs = observe(&state, &instruction, cfg);
        let action = runtime.act(&obs)?;
        step_world(&mut state, &action, cfg);
        path.push((state.effector_x, state.effector_y));
        if success(&state, spec) {
            return Ok(RolloutOutcome { success: true, steps: step + 1, effector_path: path });
        }
    }
    Ok(RolloutOutcome { success: false, steps: cfg.max_steps, effector_path: path })
}

/// Success rates per task and seed: `episodes` rollouts per (task, seed),
/// episode seeds derived deterministically from the eval seed.
pub fn evaluate(
    net: &PolicyNet,
    bank: &Bank,
    index: &RetrievalIndex,
    embedder: &EmbedderConfig,
    specs: &[TaskSpec],
    seeds: &[u64],
    episodes: usize,
    cfg: &SimConfig,
) -> Result<SuccessTable> {
    let mut rates = Vec::with_capacity(specs.len());
    let mut runtime = PolicyRuntime::new(net, bank, index, embedder);
    for spec in specs {
        let mut row = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut stream = Rng64::new(seed ^ 0x6576_616c);
            let mut wins = 0usize;
            for _ in 0..episodes {
                let episode_seed = stream.next_u64();
                let outcome = rollout_with_runtime(&mut runtime, spec, episode_seed, cfg)?;
                if outcome.success {
                    wins += 1;
                }
            }
            row.push(wins as f64 / episodes as f64);
        }
        rates.push(row);
    }
    Ok(SuccessTable {
        tasks: specs.iter().map(|s| s.task_type.label().to_string()).collect(),
        seeds: seeds.to_vec(),
        rates,
    })
}
