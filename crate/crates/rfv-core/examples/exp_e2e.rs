use rfv_core::policy::{train, PolicyConfig};
use rfv_core::retriever::{build_index, EmbedderConfig};
use rfv_core::rng::Rng64;
use rfv_core::sim::*;

fn main() {
    let sim = SimConfig::default();
    let suite = default_suite(&sim);
    let embedder = EmbedderConfig::default();
    let mut bank_specs = suite.clone();
    for spec in &mut bank_specs {
        spec.colors = (0..7).collect();
    }
    let bank = synthesize_human_bank(&bank_specs, 25, 99, &sim, &embedder).unwrap();
    let index = build_index(bank.entries().iter(), &embedder).unwrap();

    let mut demos = Vec::new();
    let mut rng = Rng64::new(1234);
    for spec in &suite {
        let mut made = 0;
        while made < 10 {
            let seed = rng.next_u64();
            let (state, instruction) = generate_task(spec, seed);
            if let Ok(demo) = scripted_expert(&state, &instruction, spec, &sim) {
                demos.push(demo);
                made += 1;
            }
        }
    }

    for (label, grid, steps, retr) in [
        ("g6-800-base", 6usize, 800usize, false),
        ("g6-1600-base", 6, 1600, false),
        ("g6-1600-full", 6, 1600, true),
    ] {
        let cfg = PolicyConfig {
            train_steps: steps, batch_size: 8, lr: 2e-3, grid, seed: 7,
            use_retrieval: retr, ..Default::default()
        };
        let t0 = std::time::Instant::now();
        let trained = train(&demos, &bank, &index, &embedder, &cfg).unwrap();
        let tr = &trained.report.loss_trace;
        let lmin = tr.iter().cloned().fold(f64::INFINITY, f64::min);
        let table = evaluate(&trained.net, &bank, &index, &embedder, &suite, &[1], 10, &sim).unwrap();
        println!(
            "{label} loss {:.3}->{:.4} (min {:.4}) | agg {:.2} | per-task {:?} | {:.0?}",
            tr[0], tr[tr.len() - 1], lmin, table.aggregate(),
            (0..4).map(|t| (table.task_mean(t) * 100.0).round()).collect::<Vec<_>>(),
            t0.elapsed()
        );
    }
}
