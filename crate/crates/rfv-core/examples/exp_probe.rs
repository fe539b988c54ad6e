use rfv_core::encoders::grid_cell_means;
use rfv_core::sim::*;

// least squares via normal equations with tiny ridge
fn fit(features: &[Vec<f64>], targets: &[f64]) -> Vec<f64> {
    let n = features.len();
    let d = features[0].len();
    let mut ata = vec![0.0f64; d * d];
    let mut atb = vec![0.0f64; d];
    for i in 0..n {
        for a in 0..d {
            atb[a] += features[i][a] * targets[i];
            for b in 0..d {
                ata[a * d + b] += features[i][a] * features[i][b];
            }
        }
    }
    for a in 0..d {
        ata[a * d + a] += 1e-6;
    }
    // gaussian elimination
    let mut m = ata;
    let mut v = atb;
    for col in 0..d {
        let mut piv = col;
        for r in col + 1..d {
            if m[r * d + col].abs() > m[piv * d + col].abs() { piv = r; }
        }
        for k in 0..d { m.swap(col * d + k, piv * d + k); }
        v.swap(col, piv);
        let diag = m[col * d + col];
        for r in col + 1..d {
            let f = m[r * d + col] / diag;
            if f != 0.0 {
                for k in col..d { m[r * d + k] -= f * m[col * d + k]; }
                v[r] -= f * v[col];
            }
        }
    }
    let mut x = vec![0.0f64; d];
    for r in (0..d).rev() {
        let mut acc = v[r];
        for k in r + 1..d { acc -= m[r * d + k] * x[k]; }
        x[r] = acc / m[r * d + r];
    }
    x
}

fn scene_features(state: &WorldState, sim: &SimConfig, grid: usize) -> Vec<f64> {
    let frame = render(state, sim.render_width, sim.render_height);
    let means = grid_cell_means(&frame, grid);
    let mut f: Vec<f64> = means
        .iter()
        .flat_map(|m| m.iter().map(|v| (v / 255.0 - 0.5) * 2.0))
        .collect();
    f.push(1.0);
    f
}

fn main() {
    let sim = SimConfig::default();
    let suite = default_suite(&sim);
    let mut spec = suite[1].clone();
    spec.colors = vec![0]; // fixed color: linear probe is fair
    for grid in [4usize, 6, 8] {
        let mut train_x = Vec::new();
        let mut train_yx = Vec::new();
        let mut train_yy = Vec::new();
        for seed in 0..300u64 {
            let (state, _) = generate_task(&spec, seed);
            train_x.push(scene_features(&state, &sim, grid));
            train_yx.push(state.objects[0].x);
            train_yy.push(state.objects[0].y);
        }
        let wx = fit(&train_x, &train_yx);
        let wy = fit(&train_x, &train_yy);
        let mut err = 0.0;
        for seed in 10_000..10_100u64 {
            let (state, _) = generate_task(&spec, seed);
            let f = scene_features(&state, &sim, grid);
            let px: f64 = f.iter().zip(&wx).map(|(a, b)| a * b).sum();
            let py: f64 = f.iter().zip(&wy).map(|(a, b)| a * b).sum();
            err += ((px - state.objects[0].x).powi(2) + (py - state.objects[0].y).powi(2)).sqrt();
        }
        println!("grid {grid}: linear-probe test position error {:.4} (300 train scenes)", err / 100.0);

        // and with only 200 train scenes like the BC dataset
        let wx = fit(&train_x[..200], &train_yx[..200]);
        let wy = fit(&train_x[..200], &train_yy[..200]);
        let mut err = 0.0;
        for seed in 10_000..10_100u64 {
            let (state, _) = generate_task(&spec, seed);
            let f = scene_features(&state, &sim, grid);
            let px: f64 = f.iter().zip(&wx).map(|(a, b)| a * b).sum();
            let py: f64 = f.iter().zip(&wy).map(|(a, b)| a * b).sum();
            err += ((px - state.objects[0].x).powi(2) + (py - state.objects[0].y).powi(2)).sqrt();
        }
        println!("          with 200 train scenes: {:.4}", err / 100.0);
    }
}
