use rfv_core::policy::{train, PolicyConfig};
use rfv_core::retriever::{build_index, EmbedderConfig};
use rfv_core::rng::Rng64;
use rfv_core::sim::*;

fn main() {
    let sim = SimConfig::default();
    let suite = default_suite(&sim);
    let embedder = EmbedderConfig::default();
    let mut bank_specs = vec![suite[1].clone()];
    bank_specs[0].colors = (0..7).collect();
    let bank = synthesize_human_bank(&bank_specs, 25, 99, &sim, &embedder).unwrap();
    let index = build_index(bank.entries().iter(), &embedder).unwrap();
    let spec = &suite[1];
    let mut demos = Vec::new();
    let mut rng = Rng64::new(1234);
    while demos.len() < 100 {
        let seed = rng.next_u64();
        let (state, instruction) = generate_task(spec, seed);
        if let Ok(demo) = scripted_expert(&state, &instruction, spec, &sim) {
            demos.push(demo);
        }
    }
    for (label, n, steps, use_retrieval) in [
        ("100demo-base", 100usize, 4000usize, false),
        ("30demo-base ", 30, 2400, false),
        ("10demo-base ", 10, 2400, false),
        ("10demo-full ", 10, 2400, true),
    ] {
        let cfg = PolicyConfig {
            train_steps: steps, batch_size: 8, lr: 2e-3, grid: 6, seed: 7,
            horizon: 4, ensemble_m: 0.6, use_retrieval, ..Default::default()
        };
        let t0 = std::time::Instant::now();
        let trained = train(&demos[..n], &bank, &index, &embedder, &cfg).unwrap();
        let table = evaluate(&trained.net, &bank, &index, &embedder, &suite[1..2], &[1, 2], 20, &sim).unwrap();
        println!("{label}: success {:.2} ({:.0?})", table.aggregate(), t0.elapsed());
    }
}
