use rfv_core::policy::{train, PolicyConfig};
use rfv_core::retriever::{build_index, EmbedderConfig};
use rfv_core::sim::*;

fn main() {
    let sim = SimConfig::default();
    let suite = default_suite(&sim);
    let embedder = EmbedderConfig::default();
    let bank = synthesize_human_bank(&suite, 4, 7, &sim, &embedder).unwrap();
    let index = build_index(bank.entries().iter(), &embedder).unwrap();
    let (state, instruction) = generate_task(&suite[1], 3);
    let demo = scripted_expert(&state, &instruction, &suite[1], &sim).unwrap();
    let demos = [demo];

    for lr in [2e-3, 3e-3, 4e-3, 5e-3] {
        for seed in [11u64, 12, 13] {
            let cfg = PolicyConfig { train_steps: 200, lr, seed, ..Default::default() };
            let trained = train(&demos, &bank, &index, &embedder, &cfg).unwrap();
            let tr = &trained.report.loss_trace;
            print!("lr {lr:.0e} seed {seed}: init {:.3} final {:.4} ratio {:.3}  ", tr[0], tr[tr.len()-1], tr[tr.len()-1]/tr[0]);
        }
        println!();
    }
}
