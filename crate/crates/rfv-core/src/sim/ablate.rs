//! Ablation harnesses: retrieved-video count sweep and mid-level channel
//! removal. Desk-scale success rates are reported as measured; nothing
//! here asserts any particular number.

use serde::{Deserialize, Serialize};

use crate::bank::Bank;
use crate::error::Result;
use crate::policy::{train, PolicyConfig, PolicyRuntime};
use crate::retriever::{EmbedderConfig, RetrievalIndex};

use super::rollout::evaluate;
use super::world::{SimConfig, TaskSpec};
use super::{Demo, SuccessTable};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationKTable {
    pub ks: Vec<usize>,
    /// aggregate success per k, aligned with `ks`
    pub aggregates: Vec<f64>,
    pub tables: Vec<SuccessTable>,
}

impl AblationKTable {
    pub fn to_text(&self) -> String {
        let mut header = String::from("retrieved videos");
        let mut row = String::from("avg success     ");
        for (k, agg) in self.ks.iter().zip(&self.aggregates) {
            header.push_str(&format!("  {k:>6}"));
            row.push_str(&format!("  {agg:>6.3}"));
        }
        format!("{header}\n{row}\n")
    }

    pub fn to_csv(&self) -> String {
        let ks: Vec<String> = self.ks.iter().map(|k| format!("k{k}")).collect();
        let aggs: Vec<String> = self.aggregates.iter().map(|a| format!("{a:.4}")).collect();
        format!("{}\n{}\n", ks.join(","), aggs.join(","))
    }
}

/// Train and evaluate once per k with shared seeds.
#[allow(clippy::too_many_arguments)]
pub fn ablation_k(
    base: &PolicyConfig,
    ks: &[usize],
    demos: &[Demo],
    bank: &Bank,
    index: &RetrievalIndex,
    embedder: &EmbedderConfig,
    specs: &[TaskSpec],
    eval_seeds: &[u64],
    episodes: usize,
    sim: &SimConfig,
) -> Result<AblationKTable> {
    let mut aggregates = Vec::with_capacity(ks.len());
    let mut tables = Vec::with_capacity(ks.len());
    for &k in ks {
        let config = PolicyConfig { k_retrieved: k, ..base.clone() };
        let trained = train(demos, bank, index, embedder, &config)?;

        // the k=1 run must fuse exactly one memory per view
        if k == 1 && config.views.len() == 1 {
            let mut runtime = PolicyRuntime::new(&trained.net, bank, index, embedder);
            let count = runtime.memory_count(&demos[0].instruction)?;
            assert_eq!(count, 1, "k=1 run fused {count} memories");
        }

        let table = evaluate(&trained.net, bank, index, embedder, specs, eval_seeds, episodes, sim)?;
        aggregates.push(table.aggregate());
        tables.push(table);
    }
    Ok(AblationKTable { ks: ks.to_vec(), aggregates, tables })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MidlevelTable {
    /// rows: full, no hand motion trajectory, no object affordance
    pub labels: Vec<String>,
    pub aggregates: Vec<f64>,
    pub tables: Vec<SuccessTable>,
}

impl MidlevelTable {
    pub fn to_text(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(8) + 1;
        let mut out = String::new();
        for (label, agg) in self.labels.iter().zip(&self.aggregates) {
            out.push_str(&format!("{label:<width$}  {agg:>6.3}\n"));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,avg_success\n");
        for (label, agg) in self.labels.iter().zip(&self.aggregates) {
            out.push_str(&format!("{label},{agg:.4}\n"));
        }
        out
    }
}

/// Three runs: full model, trajectory channel zeroed, mask channel zeroed.
#[allow(clippy::too_many_arguments)]
pub fn ablation_midlevel(
    base: &PolicyConfig,
    demos: &[Demo],
    bank: &Bank,
    index: &RetrievalIndex,
    embedder: &EmbedderConfig,
    specs: &[TaskSpec],
    eval_seeds: &[u64],
    episodes: usize,
    sim: &SimConfig,
) -> Result<MidlevelTable> {
    let variants = [
        ("full".to_string(), true, true),
        ("- hand motion trajectory".to_string(), true, false),
        ("- object affordance".to_string(), false, true),
    ];
    let mut labels = Vec::new();
    let mut aggregates = Vec::new();
    let mut tables = Vec::new();
    for (label, use_mask, use_trajectory) in variants {
        let config = PolicyConfig { use_mask, use_trajectory, ..base.clone() };
        let trained = train(demos, bank, index, embedder, &config)?;
        let table = evaluate(&trained.net, bank, index, embedder, specs, eval_seeds, episodes, sim)?;
        labels.push(label);
        aggregates.push(table.aggregate());
        tables.push(table);
    }
    Ok(MidlevelTable { labels, aggregates, tables })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_table_formats_four_columns() {
        let table = AblationKTable {
            ks: vec![1, 3, 5, 7],
            aggregates: vec![0.4, 0.7, 0.65, 0.66],
            tables: vec![],
        };
        let text = table.to_text();
        for k in ["1", "3", "5", "7"] {
            assert!(text.contains(k));
        }
        assert_eq!(table.to_csv().lines().next().unwrap(), "k1,k3,k5,k7");
    }

    #[test]
    fn midlevel_table_has_three_rows() {
        let table = MidlevelTable {
            labels: vec![
                "full".into(),
                "- hand motion trajectory".into(),
                "- object affordance".into(),
            ],
            aggregates: vec![0.7, 0.6, 0.5],
            tables: vec![],
        };
        assert_eq!(table.to_csv().lines().count(), 4);
        assert_eq!(table.to_text().lines().count(), 3);
    }
}
