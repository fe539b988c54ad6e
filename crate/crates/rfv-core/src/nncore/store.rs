//! Named parameters with Adam state and bit-exact checkpointing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::error::{Error, Result};
use crate::rng::Rng64;

use super::tensor::Tensor2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], fan_in = rows.
    UniformScaled,
    Zeros,
}

/// Deterministic parameter init for a given (shape, scheme, seed).
pub fn seeded_init(rows: usize, cols: usize, scheme: InitScheme, seed: u64) -> Tensor2D {
    match scheme {
        InitScheme::Zeros => Tensor2D::zeros(rows, cols),
        InitScheme::UniformScaled => {
            let mut rng = Rng64::new(seed);
            let bound = 1.0 / (rows as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.range_f64(-bound, bound)).collect();
            Tensor2D::from_vec(rows, cols, data)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    value: Tensor2D,
    m: Tensor2D,
    v: Tensor2D,
}

/// Named parameter tensors plus per-parameter Adam moments and a global
/// step counter. Iteration order is the name order (BTreeMap), which keeps
/// gradient application and checkpoints deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    slots: BTreeMap<String, Slot>,
    pub step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        ParameterStore::default()
    }

    pub fn init(&mut self, name: &str, rows: usize, cols: usize, scheme: InitScheme, seed: u64) {
        assert!(
            !self.slots.contains_key(name),
            "parameter {name} initialized twice"
        );
        let value = seeded_init(rows, cols, scheme, seed);
        self.slots.insert(
            name.to_string(),
            Slot {
                m: Tensor2D::zeros(rows, cols),
                v: Tensor2D::zeros(rows, cols),
                value,
            },
        );
    }

    pub fn get(&self, name: &str) -> &Tensor2D {
        &self.slots.get(name).unwrap_or_else(|| panic!("unknown parameter {name}")).value
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.slots.keys().map(String::as_str).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.data.len()).sum()
    }

    /// For gradient checking: mutate a single scalar of a parameter.
    pub fn nudge(&mut self, name: &str, index: usize, delta: f64) {
        let slot = self.slots.get_mut(name).expect("unknown parameter");
        slot.value.data[index] += delta;
    }

    /// One Adam step with bias correction over the supplied gradients.
    /// Parameters without a gradient entry are left untouched.
    pub fn adam_step(&mut self, grads: &BTreeMap<String, Tensor2D>, hp: &AdamParams) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - hp.beta1.powi(t);
        let bc2 = 1.0 - hp.beta2.powi(t);
        for (name, grad) in grads {
            let slot = self
                .slots
                .get_mut(name)
                .ok_or_else(|| Error::invariant("adam-param", format!("unknown parameter {name}")))?;
            if !slot.value.same_shape(grad) {
                return Err(Error::ShapeMismatch {
                    context: "adam gradient",
                    got_rows: grad.rows,
                    got_cols: grad.cols,
                    want_rows: slot.value.rows,
                    want_cols: slot.value.cols,
                });
            }
            for i in 0..grad.data.len() {
                let g = grad.data[i];
                slot.m.data[i] = hp.beta1 * slot.m.data[i] + (1.0 - hp.beta1) * g;
                slot.v.data[i] = hp.beta2 * slot.v.data[i] + (1.0 - hp.beta2) * g * g;
                let m_hat = slot.m.data[i] / bc1;
                let v_hat = slot.v.data[i] / bc2;
                slot.value.data[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
            }
        }
        Ok(())
    }

    /// Save to a directory: JSON listing (names, shapes, step) plus f64
    /// blobs for values and both Adam moments. Bit-exact round trip.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = CheckpointMeta {
            step: self.step,
            params: self
                .slots
                .iter()
                .map(|(name, slot)| ParamMeta {
                    name: name.clone(),
                    rows: slot.value.rows,
                    cols: slot.value.cols,
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::invariant("checkpoint-meta", e.to_string()))?;
        fs::write(dir.join("store.json"), json)?;
        let flat = |f: fn(&Slot) -> &Tensor2D| -> Vec<f64> {
            self.slots.values().flat_map(|s| f(s).data.iter().copied()).collect()
        };
        blob::write_f64(&dir.join("values.bin"), &flat(|s| &s.value))?;
        blob::write_f64(&dir.join("adam_m.bin"), &flat(|s| &s.m))?;
        blob::write_f64(&dir.join("adam_v.bin"), &flat(|s| &s.v))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ParameterStore> {
        let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(dir.join("store.json"))?)
            .map_err(|e| Error::invariant("checkpoint-meta", e.to_string()))?;
        let values = blob::read_f64(&dir.join("values.bin"))?;
        let m = blob::read_f64(&dir.join("adam_m.bin"))?;
        let v = blob::read_f64(&dir.join("adam_v.bin"))?;
        let total: usize = meta.params.iter().map(|p| p.rows * p.cols).sum();
        if values.len() != total || m.len() != total || v.len() != total {
            return Err(Error::invariant(
                "checkpoint-length",
                format!("payload lengths {}/{}/{} != {total}", values.len(), m.len(), v.len()),
            ));
        }
        let mut store = ParameterStore {
            step: meta.step,
            ..Default::default()
        };
        let mut offset = 0usize;
        for p in &meta.params {
            let len = p.rows * p.cols;
            store.slots.insert(
                p.name.clone(),
                Slot {
                    value: Tensor2D::from_vec(p.rows, p.cols, values[offset..offset + len].to_vec()),
                    m: Tensor2D::from_vec(p.rows, p.cols, m[offset..offset + len].to_vec()),
                    v: Tensor2D::from_vec(p.rows, p.cols, v[offset..offset + len].to_vec()),
                },
            );
            offset += len;
        }
        Ok(store)
    }

    /// Bitwise equality of every value, moment, and the step counter.
    pub fn bit_equal(&self, other: &ParameterStore) -> bool {
        if self.step != other.step || self.slots.len() != other.slots.len() {
            return false;
        }
        self.slots.iter().zip(&other.slots).all(|((an, a), (bn, b))| {
            an == bn
                && a.value.same_shape(&b.value)
                && a.value.data.iter().zip(&b.value.data).all(|(x, y)| x.to_bits() == y.to_bits())
                && a.m.data.iter().zip(&b.m.data).all(|(x, y)| x.to_bits() == y.to_bits())
                && a.v.data.iter().zip(&b.v.data).all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    step: u64,
    params: Vec<ParamMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_deterministic() {
        let a = seeded_init(4, 5, InitScheme::UniformScaled, 7);
        let b = seeded_init(4, 5, InitScheme::UniformScaled, 7);
        let c = seeded_init(4, 5, InitScheme::UniformScaled, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(seeded_init(3, 3, InitScheme::Zeros, 0).data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn seeded_init_variance_matches_scheme() {
        // uniform on [-a, a] has variance a^2/3 with a = 1/sqrt(fan_in)
        let fan_in = 100usize;
        let t = seeded_init(fan_in, 10_000, InitScheme::UniformScaled, 3);
        let n = t.data.len() as f64;
        let mean = t.data.iter().sum::<f64>() / n;
        let var = t.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expected = (1.0 / fan_in as f64) / 3.0;
        assert!(
            (var - expected).abs() / expected < 0.05,
            "variance {var} vs expected {expected}"
        );
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut store = ParameterStore::new();
        store.init("w", 3, 3, InitScheme::UniformScaled, 1);
        let before = store.get("w").clone();
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor2D::zeros(3, 3));
        store.adam_step(&grads, &AdamParams::default()).unwrap();
        assert_eq!(store.get("w"), &before);
        assert_eq!(store.step, 1);
    }

    #[test]
    fn single_step_descends_on_quadratic() {
        // f(w) = w^2 at w = 1, grad = 2
        let mut store = ParameterStore::new();
        store.init("w", 1, 1, InitScheme::Zeros, 0);
        store.nudge("w", 0, 1.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor2D::from_vec(1, 1, vec![2.0]));
        store
            .adam_step(&grads, &AdamParams { lr: 0.1, ..Default::default() })
            .unwrap();
        assert!(store.get("w").data[0] < 1.0);
    }

    #[test]
    fn hundred_steps_match_scripted_adam_trace() {
        // minimize sum_i (w_i - target_i)^2; oracle is a scalar re-implementation
        let targets = [0.3f64, -1.2, 2.5];
        let hp = AdamParams { lr: 0.05, ..Default::default() };

        let mut store = ParameterStore::new();
        store.init("w", 1, 3, InitScheme::Zeros, 0);

        // independent scalar Adam
        let mut w = [0.0f64; 3];
        let mut m = [0.0f64; 3];
        let mut v = [0.0f64; 3];

        for t in 1..=100 {
            let grad: Vec<f64> = (0..3).map(|i| 2.0 * (store.get("w").data[i] - targets[i])).collect();
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), Tensor2D::from_vec(1, 3, grad));
            store.adam_step(&grads, &hp).unwrap();

            for i in 0..3 {
                let g = 2.0 * (w[i] - targets[i]);
                m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
                v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
                let mh = m[i] / (1.0 - hp.beta1.powi(t));
                let vh = v[i] / (1.0 - hp.beta2.powi(t));
                w[i] -= hp.lr * mh / (vh.sqrt() + hp.eps);
            }
            for i in 0..3 {
                assert!(
                    (store.get("w").data[i] - w[i]).abs() < 1e-12,
                    "trace diverged at step {t}"
                );
            }
        }
        let loss: f64 = (0..3).map(|i| (w[i] - targets[i]) * (w[i] - targets[i])).sum();
        assert!(loss < 1e-3, "final loss {loss}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut store = ParameterStore::new();
        store.init("w", 2, 2, InitScheme::Zeros, 0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor2D::zeros(2, 3));
        assert!(matches!(
            store.adam_step(&grads, &AdamParams::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let dir = std::env::temp_dir().join(format!("rfv_ckpt_test_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let mut store = ParameterStore::new();
        store.init("alpha", 3, 4, InitScheme::UniformScaled, 11);
        store.init("beta", 1, 7, InitScheme::UniformScaled, 12);
        // run a few noisy steps so moments are nonzero
        let hp = AdamParams::default();
        for s in 0..5 {
            let mut grads = BTreeMap::new();
            grads.insert(
                "alpha".to_string(),
                seeded_init(3, 4, InitScheme::UniformScaled, 100 + s),
            );
            grads.insert(
                "beta".to_string(),
                seeded_init(1, 7, InitScheme::UniformScaled, 200 + s),
            );
            store.adam_step(&grads, &hp).unwrap();
        }
        store.save(&dir).unwrap();
        let loaded = ParameterStore::load(&dir).unwrap();
        assert!(store.bit_equal(&loaded));
    }
}
