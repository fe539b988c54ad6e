//! Command implementations and the JSON-over-HTTP retrieval service.
//!
//! Everything here is a thin shell over rfv-core; the JSON shaping lives
//! in one place so the CLI and service emit byte-identical results to
//! in-process retrieval.

pub mod service;

use std::path::{Path, PathBuf};

use rfv_core::bank::Bank;
use rfv_core::config::RunConfig;
use rfv_core::error::{Error, Result};
use rfv_core::midlevel::ingest::{ingest_bank, IngestParams};
use rfv_core::policy::{load_checkpoint, save_checkpoint, train, PolicyConfig};
use rfv_core::retriever::{
    build_index, mips_topk, retrieve_per_view, EmbedderConfig, RankedList, RetrievalIndex,
};
use rfv_core::rng::Rng64;
use rfv_core::sim::{
    self, ablation_k, ablation_midlevel, default_suite, evaluate, generate_task, save_demos,
    scripted_expert, synthesize_human_bank,
};

pub const ENV_CONFIG: &str = "RFV_CONFIG";

/// Resolve the run configuration: --config flag, RFV_CONFIG env var, or
/// defaults.
pub fn resolve_config(flag: Option<&Path>) -> Result<RunConfig> {
    if let Some(path) = flag {
        return RunConfig::load(path);
    }
    if let Ok(path) = std::env::var(ENV_CONFIG) {
        if !path.is_empty() {
            return RunConfig::load(Path::new(&path));
        }
    }
    Ok(RunConfig::default())
}

/// Serialize a ranked list exactly as the CLI and service emit it.
pub fn ranked_to_json(list: &RankedList) -> serde_json::Value {
    serde_json::Value::Array(
        list.items
            .iter()
            .map(|(id, score)| serde_json::json!({"id": id, "score": score}))
            .collect(),
    )
}

pub fn load_bank_indexed(bank_dir: &Path, embedder: &EmbedderConfig) -> Result<(Bank, RetrievalIndex)> {
    let bank = Bank::load(bank_dir)?;
    // retrieval runs over indoor entries only
    let view = bank.filter_indoor();
    let index = build_index(view.entries(), embedder)?;
    Ok((bank, index))
}

pub fn cmd_bank_synth(
    out: &Path,
    per_task: Option<usize>,
    seed: u64,
    config: &RunConfig,
) -> Result<String> {
    let mut specs = default_suite(&config.sim);
    // human videos cover the whole palette, including colors never seen
    // in robot demos
    for spec in &mut specs {
        spec.colors = (0..sim::PALETTE.len()).collect();
    }
    let per_task = per_task.unwrap_or(config.bank_entries_per_task);
    let bank = synthesize_human_bank(&specs, per_task, seed, &config.sim, &config.embedder)?;
    bank.save(out)?;
    Ok(format!("{} entries -> {}", bank.len(), manifest_path(out).display()))
}

pub fn cmd_bank_build(ingest: &Path, out: &Path, _config: &RunConfig) -> Result<String> {
    let bank = ingest_bank(ingest, &IngestParams::default())?;
    bank.save(out)?;
    Ok(format!("{} entries -> {}", bank.len(), manifest_path(out).display()))
}

pub fn cmd_demo_synth(
    out: &Path,
    per_task: Option<usize>,
    seed: u64,
    config: &RunConfig,
) -> Result<String> {
    let specs = default_suite(&config.sim);
    let per_task = per_task.unwrap_or(config.demos_per_task);
    let mut demos = Vec::new();
    let mut rng = Rng64::new(seed ^ 0x6465_6d6f);
    for spec in &specs {
        let mut made = 0usize;
        let mut attempts = 0usize;
        while made < per_task {
            attempts += 1;
            if attempts > per_task * 20 {
                return Err(Error::ExpertFailure(format!(
                    "{:?}: too many rejected expert runs",
                    spec.task_type
                )));
            }
            let (state, instruction) = generate_task(spec, rng.next_u64());
            if let Ok(demo) = scripted_expert(&state, &instruction, spec, &config.sim) {
                demos.push(demo);
                made += 1;
            }
        }
    }
    save_demos(&demos, out)?;
    Ok(format!("{} demos -> {}", demos.len(), out.display()))
}

pub fn cmd_retrieve(
    query: &str,
    k: usize,
    bank_dir: &Path,
    view: Option<&str>,
    config: &RunConfig,
) -> Result<serde_json::Value> {
    let (_bank, index) = load_bank_indexed(bank_dir, &config.embedder)?;
    let list = match view {
        Some(view) => {
            let views = vec![view.to_string()];
            retrieve_per_view(&index, query, &views, k, &config.embedder)?
                .remove(view)
                .expect("requested view present")
        }
        None => {
            let q = rfv_core::retriever::embed_text(query, &config.embedder)?;
            mips_topk(&index, &q, k)?
        }
    };
    Ok(ranked_to_json(&list))
}

pub fn cmd_train(
    bank_dir: &Path,
    demos_dir: &Path,
    out: &Path,
    seed: Option<u64>,
    config: &RunConfig,
) -> Result<String> {
    let (bank, index) = load_bank_indexed(bank_dir, &config.embedder)?;
    let demos = sim::load_demos(demos_dir)?;
    let policy_config = PolicyConfig {
        seed: seed.unwrap_or(config.policy.seed),
        ..config.policy.clone()
    };
    let trained = train(&demos, &bank, &index, &config.embedder, &policy_config)?;
    std::fs::create_dir_all(out)?;
    save_checkpoint(&trained.net, out)?;
    let mut loss_csv = String::from("step,loss\n");
    for (i, loss) in trained.report.loss_trace.iter().enumerate() {
        loss_csv.push_str(&format!("{i},{loss}\n"));
    }
    std::fs::write(out.join("loss.csv"), loss_csv)?;
    let first = trained.report.loss_trace.first().copied().unwrap_or(0.0);
    let last = trained.report.loss_trace.last().copied().unwrap_or(0.0);
    Ok(format!(
        "trained {} steps, loss {first:.4} -> {last:.4}; checkpoint in {}",
        trained.report.steps,
        out.display()
    ))
}

pub fn cmd_eval(
    checkpoint: &Path,
    bank_dir: &Path,
    out: &Path,
    seed: Option<u64>,
    config: &RunConfig,
) -> Result<String> {
    let net = load_checkpoint(checkpoint)?;
    let (bank, index) = load_bank_indexed(bank_dir, &config.embedder)?;
    let specs = default_suite(&config.sim);
    let seeds: Vec<u64> = match seed {
        Some(s) => vec![s],
        None => config.eval_seeds.clone(),
    };
    let table = evaluate(
        &net,
        &bank,
        &index,
        &config.embedder,
        &specs,
        &seeds,
        config.eval_episodes,
        &config.sim,
    )?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("eval.csv"), table.to_csv())?;
    std::fs::write(out.join("eval.txt"), table.to_text())?;
    Ok(format!("aggregate success {:.3}\n{}", table.aggregate(), table.to_text()))
}

pub enum AblationChoice {
    K,
    Midlevel,
}

pub fn cmd_ablate(
    which: AblationChoice,
    bank_dir: &Path,
    demos_dir: &Path,
    out: &Path,
    config: &RunConfig,
) -> Result<String> {
    let (bank, index) = load_bank_indexed(bank_dir, &config.embedder)?;
    let demos = sim::load_demos(demos_dir)?;
    let specs = default_suite(&config.sim);
    std::fs::create_dir_all(out)?;
    match which {
        AblationChoice::K => {
            let table = ablation_k(
                &config.policy,
                &[1, 3, 5, 7],
                &demos,
                &bank,
                &index,
                &config.embedder,
                &specs,
                &config.eval_seeds,
                config.eval_episodes,
                &config.sim,
            )?;
            std::fs::write(out.join("ablation_k.csv"), table.to_csv())?;
            std::fs::write(out.join("ablation_k.txt"), table.to_text())?;
            Ok(table.to_text())
        }
        AblationChoice::Midlevel => {
            let table = ablation_midlevel(
                &config.policy,
                &demos,
                &bank,
                &index,
                &config.embedder,
                &specs,
                &config.eval_seeds,
                config.eval_episodes,
                &config.sim,
            )?;
            std::fs::write(out.join("ablation_midlevel.csv"), table.to_csv())?;
            std::fs::write(out.join("ablation_midlevel.txt"), table.to_text())?;
            Ok(table.to_text())
        }
    }
}

pub fn manifest_path(bank_dir: &Path) -> PathBuf {
    bank_dir.join("bank.jsonl")
}
