//! Forward ops and their hand-derived backward passes.
//!
//! Conventions: activations are row-per-token matrices; weights multiply on
//! the right (`Y = X W + b`); every backward takes the upstream gradient
//! and the forward cache and returns gradients for inputs and parameters
//! in one struct.

use super::tensor::Tensor2D;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// linear

pub struct LinearCache {
    input: Tensor2D,
}

pub struct LinearGrads {
    pub d_input: Tensor2D,
    pub d_weight: Tensor2D,
    pub d_bias: Tensor2D,
}

pub fn linear_forward(
    input: &Tensor2D,
    weight: &Tensor2D,
    bias: &Tensor2D,
) -> Result<(Tensor2D, LinearCache)> {
    if input.cols != weight.rows {
        return Err(Error::ShapeMismatch {
            context: "linear input vs weight",
            got_rows: input.rows,
            got_cols: input.cols,
            want_rows: weight.rows,
            want_cols: weight.cols,
        });
    }
    bias.check_shape(1, weight.cols, "linear bias")?;
    let mut out = input.matmul(weight);
    for r in 0..out.rows {
        let row = out.row_mut(r);
        for (o, b) in row.iter_mut().zip(&bias.data) {
            *o += b;
        }
    }
    Ok((out, LinearCache { input: input.clone() }))
}

pub fn linear_backward(grad_out: &Tensor2D, weight: &Tensor2D, cache: &LinearCache) -> LinearGrads {
    let d_input = grad_out.matmul_transpose(weight);
    let d_weight = cache.input.transpose_matmul(grad_out);
    let mut d_bias = Tensor2D::zeros(1, grad_out.cols);
    for r in 0..grad_out.rows {
        for (b, g) in d_bias.data.iter_mut().zip(grad_out.row(r)) {
            *b += g;
        }
    }
    LinearGrads { d_input, d_weight, d_bias }
}

// ---------------------------------------------------------------------------
// tanh

pub struct TanhCache {
    output: Tensor2D,
}

pub fn tanh_forward(input: &Tensor2D) -> (Tensor2D, TanhCache) {
    let mut out = input.clone();
    for v in &mut out.data {
        *v = v.tanh();
    }
    let cache = TanhCache { output: out.clone() };
    (out, cache)
}

pub fn tanh_backward(grad_out: &Tensor2D, cache: &TanhCache) -> Tensor2D {
    let mut d = grad_out.clone();
    for (g, y) in d.data.iter_mut().zip(&cache.output.data) {
        *g *= 1.0 - y * y;
    }
    d
}

// ---------------------------------------------------------------------------
// layer norm

pub const LAYERNORM_EPS: f64 = 1e-5;

pub struct LayerNormCache {
    normalized: Tensor2D,
    inv_std: Vec<f64>,
}

pub struct LayerNormGrads {
    pub d_input: Tensor2D,
    pub d_gain: Tensor2D,
    pub d_bias: Tensor2D,
}

pub fn layernorm_forward(
    input: &Tensor2D,
    gain: &Tensor2D,
    bias: &Tensor2D,
) -> Result<(Tensor2D, LayerNormCache)> {
    gain.check_shape(1, input.cols, "layernorm gain")?;
    bias.check_shape(1, input.cols, "layernorm bias")?;
    let n = input.cols as f64;
    let mut out = Tensor2D::zeros(input.rows, input.cols);
    let mut normalized = Tensor2D::zeros(input.rows, input.cols);
    let mut inv_std = Vec::with_capacity(input.rows);
    for r in 0..input.rows {
        let row = input.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let istd = 1.0 / (var + LAYERNORM_EPS).sqrt();
        inv_std.push(istd);
        for c in 0..input.cols {
            let norm = (row[c] - mean) * istd;
            normalized.set(r, c, norm);
            out.set(r, c, norm * gain.data[c] + bias.data[c]);
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

pub fn layernorm_backward(
    grad_out: &Tensor2D,
    gain: &Tensor2D,
    cache: &LayerNormCache,
) -> LayerNormGrads {
    let n = grad_out.cols as f64;
    let mut d_input = Tensor2D::zeros(grad_out.rows, grad_out.cols);
    let mut d_gain = Tensor2D::zeros(1, grad_out.cols);
    let mut d_bias = Tensor2D::zeros(1, grad_out.cols);
    for r in 0..grad_out.rows {
        let g = grad_out.row(r);
        let xhat = cache.normalized.row(r);
        let istd = cache.inv_std[r];
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for c in 0..grad_out.cols {
            let dxhat = g[c] * gain.data[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat[c];
            d_gain.data[c] += g[c] * xhat[c];
            d_bias.data[c] += g[c];
        }
        for c in 0..grad_out.cols {
            let dxhat = g[c] * gain.data[c];
            d_input.set(
                r,
                c,
                istd * (dxhat - sum_dxhat / n - xhat[c] * sum_dxhat_xhat / n),
            );
        }
    }
    LayerNormGrads { d_input, d_gain, d_bias }
}

// ---------------------------------------------------------------------------
// softmax (row-wise)

pub struct SoftmaxCache {
    pub output: Tensor2D,
}

pub fn softmax_forward(input: &Tensor2D) -> (Tensor2D, SoftmaxCache) {
    let mut out = Tensor2D::zeros(input.rows, input.cols);
    for r in 0..input.rows {
        let row = input.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..input.cols {
            let e = (row[c] - max).exp();
            out.set(r, c, e);
            sum += e;
        }
        for c in 0..input.cols {
            out.set(r, c, out.get(r, c) / sum);
        }
    }
    let cache = SoftmaxCache { output: out.clone() };
    (out, cache)
}

pub fn softmax_backward(grad_out: &Tensor2D, cache: &SoftmaxCache) -> Tensor2D {
    let y = &cache.output;
    let mut d = Tensor2D::zeros(grad_out.rows, grad_out.cols);
    for r in 0..grad_out.rows {
        let g = grad_out.row(r);
        let yr = y.row(r);
        let dot: f64 = g.iter().zip(yr).map(|(a, b)| a * b).sum();
        for c in 0..grad_out.cols {
            d.set(r, c, yr[c] * (g[c] - dot));
        }
    }
    d
}

// ---------------------------------------------------------------------------
// multi-head attention

/// Projection weights for one attention block (no biases).
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub wq: Tensor2D,
    pub wk: Tensor2D,
    pub wv: Tensor2D,
    pub wo: Tensor2D,
}

pub struct MhaCache {
    q_in: Tensor2D,
    k_in: Tensor2D,
    v_in: Tensor2D,
    q: Tensor2D,
    k: Tensor2D,
    v: Tensor2D,
    /// Row-stochastic attention per head, n_q x n_k each.
    attn: Vec<SoftmaxCache>,
    concat: Tensor2D,
}

impl MhaCache {
    /// Attention matrices per head (probability rows).
    pub fn attention(&self) -> Vec<&Tensor2D> {
        self.attn.iter().map(|c| &c.output).collect()
    }
}

pub struct MhaGrads {
    pub d_q_in: Tensor2D,
    pub d_k_in: Tensor2D,
    pub d_v_in: Tensor2D,
    pub d_wq: Tensor2D,
    pub d_wk: Tensor2D,
    pub d_wv: Tensor2D,
    pub d_wo: Tensor2D,
}

fn head_slice(x: &Tensor2D, head: usize, d_head: usize) -> Tensor2D {
    let mut out = Tensor2D::zeros(x.rows, d_head);
    for r in 0..x.rows {
        let src = &x.row(r)[head * d_head..(head + 1) * d_head];
        out.row_mut(r).copy_from_slice(src);
    }
    out
}

fn head_write(dst: &mut Tensor2D, head: usize, d_head: usize, block: &Tensor2D) {
    for r in 0..dst.rows {
        dst.row_mut(r)[head * d_head..(head + 1) * d_head].copy_from_slice(block.row(r));
    }
}

/// Scaled dot-product attention over separate Q/K/V source sequences.
/// K and V sources must have equal length.
pub fn mha_forward(
    q_src: &Tensor2D,
    k_src: &Tensor2D,
    v_src: &Tensor2D,
    weights: &AttentionWeights,
    heads: usize,
) -> Result<(Tensor2D, MhaCache)> {
    let d = weights.wq.rows;
    if d % heads != 0 {
        return Err(Error::invariant("mha-heads", format!("heads {heads} must divide d_model {d}")));
    }
    if q_src.cols != d || k_src.cols != d || v_src.cols != d {
        return Err(Error::ShapeMismatch {
            context: "mha source dims",
            got_rows: q_src.rows,
            got_cols: q_src.cols,
            want_rows: q_src.rows,
            want_cols: d,
        });
    }
    if k_src.rows != v_src.rows {
        return Err(Error::ShapeMismatch {
            context: "mha key/value lengths",
            got_rows: k_src.rows,
            got_cols: k_src.cols,
            want_rows: v_src.rows,
            want_cols: v_src.cols,
        });
    }
    let d_head = d / heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let q = q_src.matmul(&weights.wq);
    let k = k_src.matmul(&weights.wk);
    let v = v_src.matmul(&weights.wv);

    let mut concat = Tensor2D::zeros(q_src.rows, d);
    let mut attn = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = head_slice(&q, h, d_head);
        let kh = head_slice(&k, h, d_head);
        let vh = head_slice(&v, h, d_head);
        let mut scores = qh.matmul_transpose(&kh);
        scores.scale(scale);
        let (a, cache) = softmax_forward(&scores);
        let oh = a.matmul(&vh);
        head_write(&mut concat, h, d_head, &oh);
        attn.push(cache);
    }
    let out = concat.matmul(&weights.wo);
    Ok((
        out,
        MhaCache {
            q_in: q_src.clone(),
            k_in: k_src.clone(),
            v_in: v_src.clone(),
            q,
            k,
            v,
            attn,
            concat,
        },
    ))
}

pub fn mha_backward(grad_out: &Tensor2D, weights: &AttentionWeights, cache: &MhaCache) -> MhaGrads {
    let d = weights.wq.rows;
    let heads = cache.attn.len();
    let d_head = d / heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let d_wo = cache.concat.transpose_matmul(grad_out);
    let d_concat = grad_out.matmul_transpose(&weights.wo);

    let mut dq = Tensor2D::zeros(cache.q.rows, d);
    let mut dk = Tensor2D::zeros(cache.k.rows, d);
    let mut dv = Tensor2D::zeros(cache.v.rows, d);
    for h in 0..heads {
        let a = &cache.attn[h].output;
        let vh = head_slice(&cache.v, h, d_head);
        let qh = head_slice(&cache.q, h, d_head);
        let kh = head_slice(&cache.k, h, d_head);
        let d_oh = head_slice(&d_concat, h, d_head);

        let d_a = d_oh.matmul_transpose(&vh);
        let d_vh = a.transpose_matmul(&d_oh);
        let mut d_scores = softmax_backward(&d_a, &cache.attn[h]);
        d_scores.scale(scale);
        let d_qh = d_scores.matmul(&kh);
        let d_kh = d_scores.transpose_matmul(&qh);

        head_write(&mut dq, h, d_head, &d_qh);
        head_write(&mut dk, h, d_head, &d_kh);
        head_write(&mut dv, h, d_head, &d_vh);
    }

    MhaGrads {
        d_q_in: dq.matmul_transpose(&weights.wq),
        d_k_in: dk.matmul_transpose(&weights.wk),
        d_v_in: dv.matmul_transpose(&weights.wv),
        d_wq: cache.q_in.transpose_matmul(&dq),
        d_wk: cache.k_in.transpose_matmul(&dk),
        d_wv: cache.v_in.transpose_matmul(&dv),
        d_wo,
    }
}

// ---------------------------------------------------------------------------
// two-layer MLP (linear -> tanh -> linear)

pub struct MlpCache {
    lin1: LinearCache,
    tanh: TanhCache,
    lin2: LinearCache,
}

pub struct MlpGrads {
    pub d_input: Tensor2D,
    pub d_w1: Tensor2D,
    pub d_b1: Tensor2D,
    pub d_w2: Tensor2D,
    pub d_b2: Tensor2D,
}

pub fn mlp_forward(
    input: &Tensor2D,
    w1: &Tensor2D,
    b1: &Tensor2D,
    w2: &Tensor2D,
    b2: &Tensor2D,
) -> Result<(Tensor2D, MlpCache)> {
    let (h, lin1) = linear_forward(input, w1, b1)?;
    let (a, tanh) = tanh_forward(&h);
    let (out, lin2) = linear_forward(&a, w2, b2)?;
    Ok((out, MlpCache { lin1, tanh, lin2 }))
}

pub fn mlp_backward(
    grad_out: &Tensor2D,
    w1: &Tensor2D,
    w2: &Tensor2D,
    cache: &MlpCache,
) -> MlpGrads {
    let g2 = linear_backward(grad_out, w2, &cache.lin2);
    let g_act = tanh_backward(&g2.d_input, &cache.tanh);
    let g1 = linear_backward(&g_act, w1, &cache.lin1);
    MlpGrads {
        d_input: g1.d_input,
        d_w1: g1.d_weight,
        d_b1: g1.d_bias,
        d_w2: g2.d_weight,
        d_b2: g2.d_bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::store::InitScheme;
    use crate::nncore::store::ParameterStore;
    use crate::rng::Rng64;

    const EPS: f64 = 1e-4;
    const TOL: f64 = 1e-4;

    fn rand_tensor(rng: &mut Rng64, rows: usize, cols: usize) -> Tensor2D {
        Tensor2D::from_vec(rows, cols, (0..rows * cols).map(|_| rng.next_gaussian() * 0.5).collect())
    }

    // Relative error with a floor: components below the floor are compared
    // absolutely (central differences carry ~1e-8 absolute noise at
    // eps=1e-4, so pure relative error is meaningless for tiny gradients).
    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
    }

    /// Central finite differences of `f` w.r.t. every element of `x`.
    fn finite_diff(x: &mut Tensor2D, mut f: impl FnMut(&Tensor2D) -> f64) -> Tensor2D {
        let mut grad = Tensor2D::zeros(x.rows, x.cols);
        for i in 0..x.data.len() {
            let orig = x.data[i];
            x.data[i] = orig + EPS;
            let plus = f(x);
            x.data[i] = orig - EPS;
            let minus = f(x);
            x.data[i] = orig;
            grad.data[i] = (plus - minus) / (2.0 * EPS);
        }
        grad
    }

    fn assert_close(analytic: &Tensor2D, numeric: &Tensor2D, what: &str) {
        assert!(analytic.same_shape(numeric));
        for (a, n) in analytic.data.iter().zip(&numeric.data) {
            assert!(
                rel_err(*a, *n) < TOL,
                "{what}: analytic {a} vs numeric {n}"
            );
        }
    }

    /// Fixed linear functional so the scalar loss exercises all outputs.
    fn loss_of(out: &Tensor2D, c: &Tensor2D) -> f64 {
        out.data.iter().zip(&c.data).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn identity_linear_passes_input_through() {
        let mut w = Tensor2D::zeros(3, 3);
        for i in 0..3 {
            w.set(i, i, 1.0);
        }
        let b = Tensor2D::zeros(1, 3);
        let x = Tensor2D::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (y, _) = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn softmax_uniform_row_is_uniform() {
        let x = Tensor2D::from_vec(1, 4, vec![0.7; 4]);
        let (y, _) = softmax_forward(&x);
        for v in &y.data {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = Rng64::new(4);
        let x = rand_tensor(&mut rng, 5, 7);
        let (y, _) = softmax_forward(&x);
        for r in 0..y.rows {
            let row = y.row(r);
            assert!(row.iter().all(|v| *v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut rng = Rng64::new(100);
        for _ in 0..20 {
            let mut x = rand_tensor(&mut rng, 3, 4);
            let mut w = rand_tensor(&mut rng, 4, 5);
            let mut b = rand_tensor(&mut rng, 1, 5);
            let c = rand_tensor(&mut rng, 3, 5);

            let (_, cache) = linear_forward(&x, &w, &b).unwrap();
            let grads = linear_backward(&c, &w, &cache);

            let (w2, b2) = (w.clone(), b.clone());
            let num_dx = finite_diff(&mut x, |x| {
                loss_of(&linear_forward(x, &w2, &b2).unwrap().0, &c)
            });
            assert_close(&grads.d_input, &num_dx, "linear d_input");

            let (x2, b2) = (x.clone(), b.clone());
            let num_dw = finite_diff(&mut w, |w| {
                loss_of(&linear_forward(&x2, w, &b2).unwrap().0, &c)
            });
            assert_close(&grads.d_weight, &num_dw, "linear d_weight");

            let (x2, w2) = (x.clone(), w.clone());
            let num_db = finite_diff(&mut b, |b| {
                loss_of(&linear_forward(&x2, &w2, b).unwrap().0, &c)
            });
            assert_close(&grads.d_bias, &num_db, "linear d_bias");
        }
    }

    #[test]
    fn layernorm_backward_matches_finite_differences() {
        let mut rng = Rng64::new(101);
        for _ in 0..20 {
            let mut x = rand_tensor(&mut rng, 3, 6);
            let mut g = rand_tensor(&mut rng, 1, 6);
            let mut b = rand_tensor(&mut rng, 1, 6);
            let c = rand_tensor(&mut rng, 3, 6);

            let (_, cache) = layernorm_forward(&x, &g, &b).unwrap();
            let grads = layernorm_backward(&c, &g, &cache);

            let (g2, b2) = (g.clone(), b.clone());
            let num_dx = finite_diff(&mut x, |x| {
                loss_of(&layernorm_forward(x, &g2, &b2).unwrap().0, &c)
            });
            assert_close(&grads.d_input, &num_dx, "layernorm d_input");

            let (x2, b2) = (x.clone(), b.clone());
            let num_dg = finite_diff(&mut g, |g| {
                loss_of(&layernorm_forward(&x2, g, &b2).unwrap().0, &c)
            });
            assert_close(&grads.d_gain, &num_dg, "layernorm d_gain");

            let (x2, g2) = (x.clone(), g.clone());
            let num_db = finite_diff(&mut b, |b| {
                loss_of(&layernorm_forward(&x2, &g2, b).unwrap().0, &c)
            });
            assert_close(&grads.d_bias, &num_db, "layernorm d_bias");
        }
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let mut rng = Rng64::new(102);
        for _ in 0..20 {
            let mut x = rand_tensor(&mut rng, 4, 5);
            let c = rand_tensor(&mut rng, 4, 5);
            let (_, cache) = softmax_forward(&x);
            let analytic = softmax_backward(&c, &cache);
            let numeric = finite_diff(&mut x, |x| loss_of(&softmax_forward(x).0, &c));
            assert_close(&analytic, &numeric, "softmax d_input");
        }
    }

    fn rand_attention(rng: &mut Rng64, d: usize) -> AttentionWeights {
        AttentionWeights {
            wq: rand_tensor(rng, d, d),
            wk: rand_tensor(rng, d, d),
            wv: rand_tensor(rng, d, d),
            wo: rand_tensor(rng, d, d),
        }
    }

    #[test]
    fn mha_backward_matches_finite_differences() {
        let mut rng = Rng64::new(103);
        let d = 8;
        for trial in 0..10 {
            let heads = if trial % 2 == 0 { 2 } else { 4 };
            let mut q_in = rand_tensor(&mut rng, 3, d);
            let mut k_in = rand_tensor(&mut rng, 5, d);
            let mut v_in = rand_tensor(&mut rng, 5, d);
            let mut w = rand_attention(&mut rng, d);
            let c = rand_tensor(&mut rng, 3, d);

            let (_, cache) = mha_forward(&q_in, &k_in, &v_in, &w, heads).unwrap();
            let grads = mha_backward(&c, &w, &cache);

            let w2 = w.clone();
            let (k2, v2) = (k_in.clone(), v_in.clone());
            let num_dq = finite_diff(&mut q_in, |q| {
                loss_of(&mha_forward(q, &k2, &v2, &w2, heads).unwrap().0, &c)
            });
            assert_close(&grads.d_q_in, &num_dq, "mha d_q_in");

            let (q2, v2) = (q_in.clone(), v_in.clone());
            let num_dk = finite_diff(&mut k_in, |k| {
                loss_of(&mha_forward(&q2, k, &v2, &w2, heads).unwrap().0, &c)
            });
            assert_close(&grads.d_k_in, &num_dk, "mha d_k_in");

            let (q2, k2) = (q_in.clone(), k_in.clone());
            let num_dv = finite_diff(&mut v_in, |v| {
                loss_of(&mha_forward(&q2, &k2, v, &w2, heads).unwrap().0, &c)
            });
            assert_close(&grads.d_v_in, &num_dv, "mha d_v_in");

            let (q2, k2, v2) = (q_in.clone(), k_in.clone(), v_in.clone());
            for which in 0..4 {
                let mut probe = w.clone();
                let target = match which {
                    0 => &mut probe.wq,
                    1 => &mut probe.wk,
                    2 => &mut probe.wv,
                    _ => &mut probe.wo,
                };
                let mut t = target.clone();
                let analytic = match which {
                    0 => &grads.d_wq,
                    1 => &grads.d_wk,
                    2 => &grads.d_wv,
                    _ => &grads.d_wo,
                };
                let base = w.clone();
                let numeric = finite_diff(&mut t, |t| {
                    let mut wt = base.clone();
                    match which {
                        0 => wt.wq = t.clone(),
                        1 => wt.wk = t.clone(),
                        2 => wt.wv = t.clone(),
                        _ => wt.wo = t.clone(),
                    }
                    loss_of(&mha_forward(&q2, &k2, &v2, &wt, heads).unwrap().0, &c)
                });
                assert_close(analytic, &numeric, "mha weight grad");
            }
        }
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut rng = Rng64::new(104);
        for _ in 0..10 {
            let mut x = rand_tensor(&mut rng, 3, 4);
            let w1 = rand_tensor(&mut rng, 4, 6);
            let b1 = rand_tensor(&mut rng, 1, 6);
            let w2 = rand_tensor(&mut rng, 6, 2);
            let b2 = rand_tensor(&mut rng, 1, 2);
            let c = rand_tensor(&mut rng, 3, 2);

            let (_, cache) = mlp_forward(&x, &w1, &b1, &w2, &b2).unwrap();
            let grads = mlp_backward(&c, &w1, &w2, &cache);

            let (w1c, b1c, w2c, b2c) = (w1.clone(), b1.clone(), w2.clone(), b2.clone());
            let num_dx = finite_diff(&mut x, |x| {
                loss_of(&mlp_forward(x, &w1c, &b1c, &w2c, &b2c).unwrap().0, &c)
            });
            assert_close(&grads.d_input, &num_dx, "mlp d_input");

            let mut w1m = w1.clone();
            let xc = x.clone();
            let num_dw1 = finite_diff(&mut w1m, |w| {
                loss_of(&mlp_forward(&xc, w, &b1c, &w2c, &b2c).unwrap().0, &c)
            });
            assert_close(&grads.d_w1, &num_dw1, "mlp d_w1");

            let mut w2m = w2.clone();
            let num_dw2 = finite_diff(&mut w2m, |w| {
                loss_of(&mlp_forward(&xc, &w1c, &b1c, w, &b2c).unwrap().0, &c)
            });
            assert_close(&grads.d_w2, &num_dw2, "mlp d_w2");
        }
    }

    #[test]
    fn attention_single_key_weights_are_one() {
        let mut rng = Rng64::new(105);
        let d = 4;
        let w = rand_attention(&mut rng, d);
        let q_in = rand_tensor(&mut rng, 3, d);
        let kv = rand_tensor(&mut rng, 1, d);
        let (_, cache) = mha_forward(&q_in, &kv, &kv, &w, 2).unwrap();
        for a in cache.attention() {
            for v in &a.data {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_determinism_bit_identical() {
        let mut store = ParameterStore::new();
        store.init("w", 6, 6, InitScheme::UniformScaled, 42);
        let w = store.get("w").clone();
        let x = Tensor2D::from_vec(2, 6, (0..12).map(|i| i as f64 * 0.1).collect());
        let b = Tensor2D::zeros(1, 6);
        let (y1, _) = linear_forward(&x, &w, &b).unwrap();
        let (y2, _) = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(
            y1.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            y2.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
